"""Phase reconstruction from 4-frame phase-shifted DIC intensity stacks.

The chain is: modulator calibration (analytic-signal phase of the
modulation curve), per-pixel gradient reconstruction from four frames,
temporal background subtraction, division by the shear distance, and
half-plane spectral integration with an exhaustive shear-angle search.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares
from scipy.signal import hilbert

from .core import (
    ComplexField2D,
    Image2D,
    NumericalError,
    TimeLapse,
    ValidationError,
    q_grids,
)

logger = logging.getLogger(__name__)

QUADRATURE_OFFSETS = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)

#: circular tolerance (rad) for a gray level to count as realizing a target offset
TARGET_MATCH_TOL = 0.1


class CalibrationError(ValidationError):
    """The modulation curve does not support a 4-offset calibration."""


@dataclass(frozen=True, eq=False)
class ModulationCurve:
    """Spatial-mean intensity versus modulator gray level."""

    gray_levels: np.ndarray
    mean_intensity: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gray_levels, dtype=np.int64)
        v = np.asarray(self.mean_intensity, dtype=np.float64)
        if g.ndim != 1 or v.shape != g.shape:
            raise ValidationError("ModulationCurve: gray_levels and mean_intensity must be 1-D and equal length")
        if g.size < 8:
            raise ValidationError("ModulationCurve: too few samples")
        if np.any(np.diff(g) <= 0):
            raise ValidationError("ModulationCurve: gray levels must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValidationError("ModulationCurve: non-finite intensities")
        object.__setattr__(self, "gray_levels", g)
        object.__setattr__(self, "mean_intensity", v)


@dataclass(frozen=True)
class CalibrationResult:
    """Unwrapped modulator phase and the four selected gray levels.

    ``selected_grays`` realize offsets {0, pi/2, pi, 3pi/2} (mod 2pi)
    relative to the intensity peak; ``selected_offsets`` are the offsets
    actually realized and ``offset_errors`` their circular deviations
    from the targets.
    """

    phase_at_gray: np.ndarray
    peak_gray: int
    selected_grays: tuple
    selected_offsets: tuple
    offset_errors: tuple


@dataclass(frozen=True)
class ShearConfig:
    """DIC shear geometry: distance in um and angle in degrees [0, 360).

    The angle is measured from the +x (column) axis toward the +y (row)
    axis.
    """

    shear_distance: float = 0.3
    shear_angle: float = 315.0

    def __post_init__(self):
        if not (self.shear_distance > 0 and math.isfinite(self.shear_distance)):
            raise ValidationError("ShearConfig.shear_distance must be positive")
        if not (0.0 <= self.shear_angle < 360.0):
            raise ValidationError("ShearConfig.shear_angle must be in [0, 360)")


@dataclass(frozen=True, eq=False)
class FrameSet4:
    """Four co-registered intensity frames at known modulation offsets."""

    frames: tuple
    offsets: tuple = QUADRATURE_OFFSETS

    def __post_init__(self):
        if len(self.frames) != 4 or len(self.offsets) != 4:
            raise ValidationError("FrameSet4: exactly four frames and four offsets required")
        ref = self.frames[0]
        for i, f in enumerate(self.frames):
            if f.data.shape != ref.data.shape or f.pixel_size != ref.pixel_size:
                raise ValidationError(f"FrameSet4: frame {i} geometry mismatch")
            if np.any(f.data < 0):
                raise ValidationError(f"FrameSet4: frame {i} has negative intensities")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))


def _analytic_phase(intensity: np.ndarray) -> np.ndarray:
    """Unwrapped argument of the discrete analytic signal (zero-mean input)."""
    x = intensity - intensity.mean()
    return np.unwrap(np.angle(hilbert(x)))


def _refine_phase(intensity: np.ndarray, phase0: np.ndarray, n_knots: int = 16) -> np.ndarray:
    """Least-squares fit of a + b*cos(psi(g)) with a cubic-spline psi.

    The raw analytic-signal argument carries a finite-segment bias when
    the curve spans less than about one period; refining against the
    cosine model removes it while staying model-free about the phase law.
    """
    n = intensity.size
    g = np.arange(n, dtype=np.float64)
    knots = np.linspace(0.0, n - 1.0, n_knots)
    a0 = float(intensity.mean())
    b0 = 0.5 * float(intensity.max() - intensity.min())
    if b0 <= 0:
        return phase0
    k0 = np.interp(knots, g, phase0)

    def residual(params):
        a, b = params[0], params[1]
        psi = CubicSpline(knots, params[2:])(g)
        return a + b * np.cos(psi) - intensity

    try:
        sol = least_squares(
            residual, np.concatenate([[a0, b0], k0]),
            method="lm", xtol=1e-14, ftol=1e-14, max_nfev=20000,
        )
    except Exception:
        return phase0
    rms0 = math.sqrt(float(np.mean(residual(np.concatenate([[a0, b0], k0])) ** 2)))
    rms1 = math.sqrt(float(np.mean(sol.fun ** 2)))
    if not np.all(np.isfinite(sol.x)) or rms1 >= rms0:
        return phase0
    return CubicSpline(knots, sol.x[2:])(g)


def _circular_distance(delta: np.ndarray) -> np.ndarray:
    return np.abs((delta + math.pi) % (2.0 * math.pi) - math.pi)


def calibrate_modulator(curve: ModulationCurve, refine: bool = True) -> CalibrationResult:
    """Recover the modulator phase law and pick 4 quadrature gray levels.

    The instantaneous phase is the unwrapped argument of the analytic
    signal of the zero-mean modulation curve (optionally refined against
    the cosine model). The gray level at the global intensity maximum is
    the phase reference; the returned grays realize offsets
    {0, pi/2, pi, 3pi/2} (mod 2pi) relative to it.

    Raises
    ------
    CalibrationError
        If the curve is monotonic or any target offset has no gray level
        within ``TARGET_MATCH_TOL`` radians.
    """
    v = curve.mean_intensity
    dv = np.diff(v)
    if np.all(dv >= 0) or np.all(dv <= 0):
        raise CalibrationError("modulation curve is monotonic: no oscillation to calibrate on")

    phase = _analytic_phase(v)
    if refine:
        phase = _refine_phase(v, phase)

    peak_idx = int(np.argmax(v - v.mean()))
    rel = phase - phase[peak_idx]

    grays = curve.gray_levels
    selected = []
    realized = []
    errors = []
    targets = QUADRATURE_OFFSETS
    for target in targets:
        dist = _circular_distance(rel - target)
        # prefer exact circular matches, then proximity to the peak,
        # then the increasing-gray side
        key = (
            np.round(dist * 1e9).astype(np.int64),
            np.abs(np.arange(grays.size) - peak_idx),
            (np.arange(grays.size) < peak_idx).astype(np.int64),
        )
        idx = int(np.lexsort(key[::-1])[0])
        err = float(dist[idx])
        if err > TARGET_MATCH_TOL:
            raise CalibrationError(
                f"target offset {target:.4f} rad not realized by any gray level "
                f"(best deviation {err:.4f} rad)"
            )
        selected.append(int(grays[idx]))
        realized.append(float(rel[idx] % (2.0 * math.pi)))
        errors.append(err)

    if len(set(selected)) < 4:
        raise CalibrationError("fewer than 4 distinct gray levels realize the target offsets")

    return CalibrationResult(
        phase_at_gray=phase,
        peak_gray=int(grays[peak_idx]),
        selected_grays=tuple(selected),
        selected_offsets=tuple(realized),
        offset_errors=tuple(errors),
    )


def _offsets_increasing_mod_2pi(offsets) -> bool:
    rel = (np.asarray(offsets, dtype=np.float64) - offsets[0]) % (2.0 * math.pi)
    return bool(np.all(np.diff(rel) > 0))


def reconstruct_gradient(frames: FrameSet4, offsets=None) -> Image2D:
    """Per-pixel phase difference between the two sheared beams, in rad.

    Exact quarter-wave offsets use the 4-frame arctangent; calibrated
    off-quadrature offsets use a per-pixel least-squares fit of
    I_k = a + b*cos(dphi + delta_k). Output lies in (-pi, pi].
    """
    if offsets is None:
        offsets = frames.offsets
    offsets = tuple(float(o) for o in offsets)
    if not _offsets_increasing_mod_2pi(offsets):
        raise ValidationError("reconstruct_gradient: offsets must be strictly increasing modulo 2*pi")

    i0, i1, i2, i3 = (f.data for f in frames.frames)
    pixel_size = frames.frames[0].pixel_size

    if np.allclose(offsets, QUADRATURE_OFFSETS, rtol=0.0, atol=1e-12):
        dphi = np.arctan2(i3 - i1, i0 - i2)
        return Image2D(dphi, pixel_size)

    # I_k = a + c*cos(delta_k) - s*sin(delta_k) with c = b*cos(dphi), s = b*sin(dphi)
    delta = np.asarray(offsets)
    design = np.column_stack([np.ones(4), np.cos(delta), -np.sin(delta)])
    proj = np.linalg.pinv(design)
    stack = np.stack([i0, i1, i2, i3])
    a = np.tensordot(proj[0], stack, axes=1)
    c = np.tensordot(proj[1], stack, axes=1)
    s = np.tensordot(proj[2], stack, axes=1)
    amplitude = np.hypot(c, s)
    degenerate = amplitude < 1e-12 * np.abs(a)
    dphi = np.arctan2(s, c)
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        dphi = np.where(degenerate, 0.0, dphi)
        logger.warning("reconstruct_gradient: %d degenerate pixels (b ~ 0) set to 0", n_degenerate)
    return Image2D(dphi, pixel_size)


def subtract_background(gradients: TimeLapse) -> TimeLapse:
    """Remove the per-pixel temporal mean from every frame."""
    if gradients.n_frames < 2:
        raise ValidationError("subtract_background: need at least 2 frames")
    background = gradients.data.mean(axis=0)
    return TimeLapse(gradients.data - background, gradients.pixel_size, gradients.frame_interval)


def gradient_to_derivative(g: Image2D, cfg: ShearConfig) -> Image2D:
    """Convert a phase difference (rad) to a directional derivative (rad/um)."""
    return Image2D(g.data / cfg.shear_distance, g.pixel_size)


def _direction_field(height: int, width: int, pixel_size: float, angle_deg: float) -> np.ndarray:
    """q . s over the frequency grid, canonicalized so that the field for
    angle + 180 is the exact negation of the field for angle."""
    qy, qx = q_grids(height, width, pixel_size)
    a = angle_deg % 360.0
    flip = a >= 180.0
    theta = math.radians(a - 180.0 if flip else a)
    u = qx[None, :] * math.cos(theta) + qy[:, None] * math.sin(theta)
    return -u if flip else u


def _halfplane_mask_from_u(u: np.ndarray) -> np.ndarray:
    """2 on the q.s > 0 half plane, 0 on q.s < 0, 1 on q.s = 0, 0 at DC."""
    mask = np.where(u > 0.0, 2.0, np.where(u < 0.0, 0.0, 1.0))
    mask[0, 0] = 0.0
    return mask


def _halfplane_mask(height: int, width: int, pixel_size: float, angle_deg: float) -> np.ndarray:
    return _halfplane_mask_from_u(_direction_field(height, width, pixel_size, angle_deg))


def integrate_hilbert(deriv: Image2D, cfg: ShearConfig) -> Image2D:
    """Spectral half-plane integration of a directional phase derivative.

    Multiplies the spectrum by the half-plane mask along the shear
    direction, takes the imaginary part of the inverse transform, and
    rescales by the shear distance. The result approximates the phase in
    rad up to low-frequency components (each mode is weighted by
    |q.s| * shear_distance).
    """
    spectrum = np.fft.fft2(deriv.data)
    mask = _halfplane_mask(deriv.height, deriv.width, deriv.pixel_size, cfg.shear_angle)
    phi = np.fft.ifft2(spectrum * mask).imag * cfg.shear_distance
    return Image2D(phi, deriv.pixel_size)


@dataclass(frozen=True)
class AngleSearchResult:
    """Best integration angle and the full 360-entry score vector."""

    angle_deg: int
    scores: np.ndarray


def positivity_score(phi: np.ndarray, foreground=None) -> float:
    """Cubed signed sum sum(phi^+ ** 3) - sum(phi^- ** 3).

    An odd functional of the integrated image: positive when positive
    structures dominate in magnitude, and exactly sign-flipped when the
    integration direction is reversed.
    """
    if foreground is not None:
        phi = phi[foreground]
    return float(np.sum(phi ** 3))


def search_shear_angle(deriv: Image2D, foreground=None,
                       shear_distance: float = 0.3) -> AngleSearchResult:
    """Exhaustive 1-degree search for the integration angle.

    Each candidate angle is scored with ``positivity_score`` of the
    integrated image over the foreground (whole image when no mask is
    given); cellular structures carry positive phase, so the true shear
    angle maximizes the score. Opposite angles have exactly opposite
    scores, so only 180 candidates need evaluation. Ties resolve to the
    lowest angle.
    """
    if foreground is not None:
        foreground = np.asarray(foreground, dtype=bool)
        if foreground.shape != deriv.data.shape:
            raise ValidationError("search_shear_angle: foreground mask geometry mismatch")
    spectrum = np.fft.fft2(deriv.data)
    h, w, ps = deriv.height, deriv.width, deriv.pixel_size
    scores = np.empty(360, dtype=np.float64)
    for angle in range(180):
        u = _direction_field(h, w, ps, float(angle))
        mask = _halfplane_mask_from_u(u)
        phi = np.fft.ifft2(spectrum * mask).imag * shear_distance
        scores[angle] = positivity_score(phi, foreground)
        scores[angle + 180] = -scores[angle]
    spread = float(np.max(scores) - np.min(scores))
    scale = float(np.max(np.abs(scores)))
    if scale == 0.0 or spread <= 1e-12 * scale:
        raise NumericalError("search_shear_angle: score is flat (constant or structureless input)")
    best = int(np.argmax(scores))
    return AngleSearchResult(best, scores)
