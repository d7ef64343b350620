"""Shared image containers, units, and spectral primitives.

All spatial fields are stored as 64-bit floats in row-major (row, col)
order with an isotropic pixel size in micrometers. Spectra keep the DC
bin at index (0, 0); wrap-around frequencies are handled through the
``qx``/``qy`` grid helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class NumericalError(RuntimeError):
    """A computation could not produce a meaningful result."""


def _as_float2d(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite values present")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True, eq=False)
class Image2D:
    """A 2-D real scalar field with pixel size in micrometers per pixel."""

    data: np.ndarray
    pixel_size: float

    def __post_init__(self):
        object.__setattr__(self, "data", _as_float2d(self.data, "Image2D.data"))
        ps = float(self.pixel_size)
        if not np.isfinite(ps) or ps <= 0:
            raise ValidationError(f"Image2D.pixel_size must be positive and finite, got {ps}")
        object.__setattr__(self, "pixel_size", ps)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Image2D":
        """New image with the same geometry and different values."""
        return Image2D(data, self.pixel_size)


@dataclass(frozen=True, eq=False)
class TimeLapse:
    """An ordered stack of co-registered frames at a fixed interval.

    Parameters
    ----------
    data : ndarray, shape (T, H, W)
        Frame values, float64.
    pixel_size : float
        Micrometers per pixel, isotropic.
    frame_interval : float
        Seconds between consecutive frames.
    """

    data: np.ndarray
    pixel_size: float
    frame_interval: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(f"TimeLapse.data: expected (T, H, W), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("TimeLapse.data: non-finite values present")
        object.__setattr__(self, "data", np.ascontiguousarray(arr))
        ps = float(self.pixel_size)
        if not np.isfinite(ps) or ps <= 0:
            raise ValidationError(f"TimeLapse.pixel_size must be positive, got {ps}")
        object.__setattr__(self, "pixel_size", ps)
        dt = float(self.frame_interval)
        if not np.isfinite(dt) or dt <= 0:
            raise ValidationError(f"TimeLapse.frame_interval must be positive, got {dt}")
        object.__setattr__(self, "frame_interval", dt)

    @classmethod
    def from_frames(cls, frames, frame_interval: float) -> "TimeLapse":
        frames = list(frames)
        if not frames:
            raise ValidationError("TimeLapse.from_frames: no frames given")
        ps = frames[0].pixel_size
        shape = frames[0].data.shape
        for i, f in enumerate(frames):
            if f.data.shape != shape or f.pixel_size != ps:
                raise ValidationError(f"TimeLapse.from_frames: frame {i} geometry mismatch")
        return cls(np.stack([f.data for f in frames]), ps, frame_interval)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def frame(self, i: int) -> Image2D:
        return Image2D(self.data[i], self.pixel_size)


@dataclass(frozen=True, eq=False)
class ComplexField2D:
    """A 2-D spectrum with DC at index (0, 0).

    ``q_spacing`` is the frequency-bin spacing in rad/um along (row, col),
    equal to 2*pi divided by the spatial extent along each axis.
    """

    data: np.ndarray
    pixel_size: float
    q_spacing: tuple = field(default=None)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2:
            raise ValidationError("ComplexField2D.data: expected a 2-D array")
        object.__setattr__(self, "data", np.ascontiguousarray(arr))
        ps = float(self.pixel_size)
        if not np.isfinite(ps) or ps <= 0:
            raise ValidationError("ComplexField2D.pixel_size must be positive")
        object.__setattr__(self, "pixel_size", ps)
        h, w = arr.shape
        spacing = (2.0 * np.pi / (h * ps), 2.0 * np.pi / (w * ps))
        if self.q_spacing is not None:
            given = tuple(float(s) for s in self.q_spacing)
            if not np.allclose(given, spacing, rtol=1e-12):
                raise ValidationError("ComplexField2D.q_spacing inconsistent with geometry")
        object.__setattr__(self, "q_spacing", spacing)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def qy(self) -> np.ndarray:
        """Row-axis frequencies in rad/um, wrap-aware (DC first)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.height, d=self.pixel_size)

    def qx(self) -> np.ndarray:
        """Column-axis frequencies in rad/um, wrap-aware (DC first)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.width, d=self.pixel_size)


def q_grids(height: int, width: int, pixel_size: float):
    """Wrap-aware (qy, qx) frequency vectors in rad/um for an H x W grid."""
    qy = 2.0 * np.pi * np.fft.fftfreq(height, d=pixel_size)
    qx = 2.0 * np.pi * np.fft.fftfreq(width, d=pixel_size)
    return qy, qx


def fft2(img: Image2D) -> ComplexField2D:
    """Unnormalized forward 2-D DFT of an image.

    DC lands in bin (0, 0). Frequencies are in rad/um with per-axis
    spacing 2*pi / extent.
    """
    if img.height < 2 or img.width < 2:
        raise ValidationError("fft2: image must be at least 2x2")
    if not np.all(np.isfinite(img.data)):
        raise ValidationError("fft2: non-finite input values")
    return ComplexField2D(np.fft.fft2(img.data), img.pixel_size)


def ifft2(f: ComplexField2D, part: str) -> Image2D:
    """Inverse 2-D DFT normalized by 1/(H*W).

    ``part`` selects the component to keep and must be ``"real"`` or
    ``"imag"``; the choice is explicit because callers rely on one or the
    other depending on the filter applied in the spectral domain.
    """
    if part not in ("real", "imag"):
        raise ValidationError(f"ifft2: part must be 'real' or 'imag', got {part!r}")
    out = np.fft.ifft2(f.data)
    values = out.real if part == "real" else out.imag
    return Image2D(values.copy(), f.pixel_size)
