"""Dry-mass density maps, per-label mass series, and growth rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import segment
from .core import Image2D, ValidationError
from .segment import LabelMap
from .stats import linear_fit


@dataclass(frozen=True)
class OpticalConstants:
    """Illumination wavelength (um) and refraction increment (um^3/pg)."""

    wavelength: float = 0.623
    refraction_increment: float = 0.2

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise ValidationError("OpticalConstants.wavelength must be positive")
        if not (self.refraction_increment > 0 and math.isfinite(self.refraction_increment)):
            raise ValidationError("OpticalConstants.refraction_increment must be positive")


@dataclass(frozen=True, eq=False)
class MassSeries:
    """Per-label dry-mass totals (pg) over time (hours) for one tile."""

    timestamps: np.ndarray
    nucleus_pg: np.ndarray
    neurite_pg: np.ndarray
    tile_id: str = ""

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        nuc = np.asarray(self.nucleus_pg, dtype=np.float64)
        neu = np.asarray(self.neurite_pg, dtype=np.float64)
        if t.ndim != 1 or nuc.shape != t.shape or neu.shape != t.shape:
            raise ValidationError("MassSeries: series must be 1-D and equal length")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("MassSeries: timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "nucleus_pg", nuc)
        object.__setattr__(self, "neurite_pg", neu)


@dataclass(frozen=True, eq=False)
class GrowthReport:
    """Normalized series, growth rates, and per-tile scalars."""

    timestamps: np.ndarray
    norm_nucleus: np.ndarray
    norm_neurite: np.ndarray
    savgol_rate_nucleus: np.ndarray  # 1/hour, edges omitted
    savgol_rate_neurite: np.ndarray
    slope_nucleus_per_h: float
    slope_neurite_per_h: float
    confluency_t0: float
    nucleus_count_t0: int
    mean_nuclear_mass_pg: float
    mean_neurite_mass_pg: float
    savgol_edge: int


def phase_to_density(phi: Image2D, constants: OpticalConstants) -> Image2D:
    """Areal dry-mass density sigma = wavelength / (2*pi*alpha) * phi.

    phi is in radians and sigma in pg/um^2. Negative phase maps to
    negative density; values are not clipped so that mass sums stay
    linear in phase.
    """
    factor = constants.wavelength / (2.0 * math.pi * constants.refraction_increment)
    return phi.with_data(factor * phi.data)


def masked_mass(sigma: Image2D, labels: LabelMap, label, clamp_negative: bool = False) -> float:
    """Total mass (pg) of pixels carrying ``label`` (id or name)."""
    if sigma.data.shape != labels.data.shape:
        raise ValidationError("masked_mass: geometry mismatch")
    label_id = segment.LABEL_IDS[label] if isinstance(label, str) else int(label)
    values = sigma.data[labels.data == label_id]
    if clamp_negative:
        values = np.maximum(values, 0.0)
    return float(values.sum() * sigma.pixel_size ** 2)


def normalize_series(series: MassSeries, window_hours: float = 5.0) -> MassSeries:
    """Divide each label series by its own mean over t < window_hours."""
    in_window = series.timestamps < window_hours
    if not np.any(in_window):
        raise ValidationError("normalize_series: no timestamps inside the window")
    out = {}
    for name, values in (("nucleus_pg", series.nucleus_pg), ("neurite_pg", series.neurite_pg)):
        baseline = float(values[in_window].mean())
        if baseline == 0.0:
            raise ValidationError(f"normalize_series: zero window mean for {name}")
        out[name] = values / baseline
    return MassSeries(series.timestamps, out["nucleus_pg"], out["neurite_pg"], series.tile_id)


def savgol_derivative_coeffs(window: int, order: int) -> np.ndarray:
    """First-derivative filter taps from a local polynomial fit.

    Applying the taps to a centered window (np.correlate, 'valid') yields
    the derivative per sample step at the window center.
    """
    if window % 2 == 0 or window < 3:
        raise ValidationError("savgol: window must be odd and >= 3")
    if not (0 < order < window):
        raise ValidationError("savgol: order must satisfy 0 < order < window")
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    design = np.vander(offsets, order + 1, increasing=True)
    # row 1 of the pseudo-inverse evaluates the fitted polynomial's slope at 0
    return np.linalg.pinv(design)[1]


def growth_rate_savgol(values, window: int = 7, order: int = 2, dt: float = 1.0) -> np.ndarray:
    """Savitzky-Golay first-derivative series with edge points omitted.

    The output is shorter than the input by window - 1 samples; dt is the
    sample spacing in hours, so rates are per hour.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValidationError("growth_rate_savgol: expected a 1-D series")
    if values.size < window:
        raise ValidationError(
            f"growth_rate_savgol: series length {values.size} shorter than window {window}"
        )
    if dt <= 0:
        raise ValidationError("growth_rate_savgol: dt must be positive")
    coeffs = savgol_derivative_coeffs(window, order)
    return np.correlate(values, coeffs, mode="valid") / dt


def growth_rate_linear(values, t) -> float:
    """Ordinary least-squares slope of values against time in hours."""
    slope, _, _ = linear_fit(np.asarray(t, dtype=np.float64),
                             np.asarray(values, dtype=np.float64))
    return slope


def confluency(labels: LabelMap) -> float:
    """Fraction of pixels occupied by non-background labels."""
    return float(np.count_nonzero(labels.data)) / labels.data.size
