"""Texture segmentation of estimated-fluorescence channels.

Each channel passes through a spatial bandpass, a complex Gabor filter
bank, a PCA projection to one channel, and a global threshold. The three
binary maps merge into a background/nucleus/neurite label map, and
nuclei are counted by 8-connected component analysis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from ._kernels import label_components_8
from .core import Image2D, ValidationError

# FWHM of a Gaussian in units of sigma; spatial cuts are quoted as FWHM
FWHM_PER_SIGMA = 2.355

BACKGROUND = 0
NUCLEUS = 1
NEURITE = 2
LABEL_NAMES = {BACKGROUND: "background", NUCLEUS: "nucleus", NEURITE: "neurite"}
LABEL_IDS = {v: k for k, v in LABEL_NAMES.items()}


@dataclass(frozen=True)
class GaborBankConfig:
    """Gabor filter bank: orientations in degrees, wavelengths in um."""

    orientations_deg: tuple = (0.0, 45.0, 90.0, 135.0)
    wavelengths_um: tuple = (2.0, 4.0, 8.0)
    sigma_factor: float = 0.5
    aspect_ratio: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "orientations_deg", tuple(float(o) for o in self.orientations_deg))
        object.__setattr__(self, "wavelengths_um", tuple(float(w) for w in self.wavelengths_um))
        if not self.orientations_deg or not self.wavelengths_um:
            raise ValidationError("GaborBankConfig: need at least one orientation and wavelength")
        reduced = [o % 180.0 for o in self.orientations_deg]
        if len(set(reduced)) < len(reduced):
            raise ValidationError("GaborBankConfig: orientations must be distinct modulo 180 degrees")
        if any(w <= 0 for w in self.wavelengths_um):
            raise ValidationError("GaborBankConfig: wavelengths must be positive")
        if self.sigma_factor <= 0 or self.aspect_ratio <= 0:
            raise ValidationError("GaborBankConfig: sigma_factor and aspect_ratio must be positive")

    @property
    def n_filters(self) -> int:
        return len(self.orientations_deg) * len(self.wavelengths_um)


@dataclass(frozen=True, eq=False)
class FeatureStack:
    """Per-pixel features: band-passed intensity plus Gabor magnitudes."""

    features: np.ndarray  # (n_features, H, W)
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError("FeatureStack.features must be (n_features, H, W)")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("FeatureStack: non-finite features")
        object.__setattr__(self, "features", arr)

    @property
    def n_features(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryMap:
    data: np.ndarray
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool)
        if arr.ndim != 2:
            raise ValidationError("BinaryMap.data must be 2-D")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel categories: 0 background, 1 nucleus, 2 neurite."""

    data: np.ndarray
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError("LabelMap.data must be 2-D")
        arr = arr.astype(np.uint8, copy=True)
        if arr.max(initial=0) > NEURITE:
            raise ValidationError("LabelMap: values must be in {0, 1, 2}")
        object.__setattr__(self, "data", arr)


def bandpass(img: Image2D, low_cut_um: float, high_cut_um: float) -> Image2D:
    """Difference-of-Gaussians bandpass.

    Removes structures larger than ``low_cut_um`` and smaller than
    ``high_cut_um`` (both FWHM scales in um). Requires
    low_cut_um > high_cut_um >= 2 * pixel_size.
    """
    if not (high_cut_um >= 2.0 * img.pixel_size):
        raise ValidationError(
            f"bandpass: high_cut_um={high_cut_um} below the Nyquist scale "
            f"{2.0 * img.pixel_size}"
        )
    if not (low_cut_um > high_cut_um):
        raise ValidationError("bandpass: low_cut_um must exceed high_cut_um")
    sigma_hi = (high_cut_um / FWHM_PER_SIGMA) / img.pixel_size
    sigma_lo = (low_cut_um / FWHM_PER_SIGMA) / img.pixel_size
    fine = ndimage.gaussian_filter(img.data, sigma_hi, mode="reflect")
    coarse = ndimage.gaussian_filter(img.data, sigma_lo, mode="reflect")
    return img.with_data(fine - coarse)


def _gabor_kernel(wavelength_px: float, theta_deg: float, sigma_px: float,
                  aspect_ratio: float) -> np.ndarray:
    half = max(1, int(math.ceil(3.0 * sigma_px)))
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    theta = math.radians(theta_deg)
    xr = x * math.cos(theta) + y * math.sin(theta)
    yr = -x * math.sin(theta) + y * math.cos(theta)
    envelope = np.exp(-(xr ** 2 + (aspect_ratio * yr) ** 2) / (2.0 * sigma_px ** 2))
    kernel = envelope * np.exp(1j * 2.0 * np.pi * xr / wavelength_px)
    # remove the envelope-weighted mean so the carrier is exactly zero-mean
    kernel -= envelope * (kernel.sum() / envelope.sum())
    return kernel


def _convolve_reflect(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    pad_y = kernel.shape[0] // 2
    pad_x = kernel.shape[1] // 2
    if pad_y >= data.shape[0] or pad_x >= data.shape[1]:
        raise ValidationError("gabor_features: kernel larger than image")
    padded = np.pad(data, ((pad_y, pad_y), (pad_x, pad_x)), mode="reflect")
    out = fftconvolve(padded, kernel, mode="same")
    return out[pad_y:padded.shape[0] - pad_y, pad_x:padded.shape[1] - pad_x]


def gabor_features(img: Image2D, cfg: GaborBankConfig = GaborBankConfig()) -> FeatureStack:
    """Complex Gabor response magnitudes plus the input as feature 0.

    Convolution uses a reflected boundary. Kernels are zero-mean, so all
    Gabor features vanish on constant images.
    """
    for w in cfg.wavelengths_um:
        if w <= 2.0 * img.pixel_size:
            raise ValidationError(
                f"gabor_features: wavelength {w} um is not resolvable at "
                f"pixel size {img.pixel_size} um"
            )
    features = [img.data.copy()]
    for wavelength in cfg.wavelengths_um:
        sigma_px = (cfg.sigma_factor * wavelength) / img.pixel_size
        wavelength_px = wavelength / img.pixel_size
        for theta in cfg.orientations_deg:
            kernel = _gabor_kernel(wavelength_px, theta, sigma_px, cfg.aspect_ratio)
            response = _convolve_reflect(img.data, kernel)
            features.append(np.abs(response))
    return FeatureStack(np.stack(features), img.pixel_size)


def pca_project(features: FeatureStack, max_cov_pixels: int = 200_000) -> Image2D:
    """Project each pixel onto the leading principal component.

    Feature means are taken over all pixels; the covariance may be
    estimated on a uniformly strided subsample of at most
    ``max_cov_pixels`` pixels for throughput. The sign is chosen so the
    projection correlates non-negatively with feature 0.
    """
    n_feat = features.n_features
    if n_feat < 2:
        raise ValidationError("pca_project: need at least 2 features")
    h, w = features.features.shape[1:]
    flat = features.features.reshape(n_feat, h * w)
    if flat.shape[1] < 2:
        raise ValidationError("pca_project: need at least 2 pixels")
    mean = flat.mean(axis=1)
    centered_mean = flat - mean[:, None]
    stride = max(1, -(-flat.shape[1] // max_cov_pixels))
    sub = centered_mean[:, ::stride]
    cov = sub @ sub.T / max(1, sub.shape[1] - 1)
    if not np.any(np.abs(cov) > 0):
        raise ValidationError("pca_project: zero-variance feature stack")
    _, vecs = np.linalg.eigh(cov)
    leading = vecs[:, -1]
    proj = leading @ centered_mean
    alignment = float(proj @ centered_mean[0])
    if alignment < 0:
        proj = -proj
    return Image2D(proj.reshape(h, w), features.pixel_size)


def otsu_threshold_index(values: np.ndarray, n_bins: int = 256) -> int:
    """Bin index t maximizing between-class variance; classes are
    bins <= t versus bins > t."""
    counts = np.bincount(values, minlength=n_bins).astype(np.float64)
    total = counts.sum()
    centers = np.arange(n_bins, dtype=np.float64)
    w0 = np.cumsum(counts)
    sum0 = np.cumsum(counts * centers)
    w1 = total - w0
    mu0 = np.divide(sum0, w0, out=np.zeros(n_bins), where=w0 > 0)
    mu1 = np.divide(sum0[-1] - sum0, w1, out=np.zeros(n_bins), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    between[-1] = -np.inf  # class 1 must be non-empty
    return int(np.argmax(between[:-1]))


def binarize(img: Image2D, method: str = "otsu", threshold: float = None) -> BinaryMap:
    """Threshold an image to a boolean map.

    method "otsu": maximize between-class variance over a 256-bin
    histogram of min-max normalized values; constant images yield an
    all-false map with a warning. method "fixed": pixels strictly above
    ``threshold`` are true.
    """
    if method == "fixed":
        if threshold is None:
            raise ValidationError("binarize: fixed method requires a threshold")
        return BinaryMap(img.data > float(threshold), img.pixel_size)
    if method != "otsu":
        raise ValidationError(f"binarize: unknown method {method!r}")
    lo = float(img.data.min())
    hi = float(img.data.max())
    if hi == lo:
        warnings.warn("binarize: constant image has no separating threshold; all false",
                      RuntimeWarning, stacklevel=2)
        return BinaryMap(np.zeros_like(img.data, dtype=bool), img.pixel_size)
    norm = (img.data - lo) / (hi - lo)
    bins = np.clip((norm * 256.0).astype(np.int64), 0, 255)
    t = otsu_threshold_index(bins.ravel())
    return BinaryMap(bins > t, img.pixel_size)


def merge_channels(nucleus: BinaryMap, tau: BinaryMap, map2: BinaryMap) -> LabelMap:
    """Merge binary channels; nucleus strictly dominates neurite."""
    shape = nucleus.data.shape
    if tau.data.shape != shape or map2.data.shape != shape:
        raise ValidationError("merge_channels: geometry mismatch")
    if tau.pixel_size != nucleus.pixel_size or map2.pixel_size != nucleus.pixel_size:
        raise ValidationError("merge_channels: pixel size mismatch")
    labels = np.where(nucleus.data, NUCLEUS,
                      np.where(tau.data | map2.data, NEURITE, BACKGROUND))
    return LabelMap(labels.astype(np.uint8), nucleus.pixel_size)


def count_nuclei(labels: LabelMap, min_area_um2: float = 20.0):
    """Count 8-connected nucleus components above a minimum area.

    Components smaller than ``min_area_um2`` get instance id 0. Surviving
    ids run 1..count in raster-scan discovery order.

    Returns
    -------
    (count, instances) : (int, ndarray of int32)
    """
    mask = labels.data == NUCLEUS
    components = label_components_8(mask)
    n_comp = int(components.max())
    if n_comp == 0:
        return 0, components
    areas_px = np.bincount(components.ravel(), minlength=n_comp + 1)
    area_um2 = areas_px * labels.pixel_size ** 2
    keep = area_um2 >= min_area_um2
    keep[0] = False
    mapping = np.zeros(n_comp + 1, dtype=np.int32)
    mapping[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
    return int(keep.sum()), mapping[components]
