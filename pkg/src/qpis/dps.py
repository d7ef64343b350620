"""Dispersion-relation transport spectra of masked density movies.

For each spatial mode q the temporal bandwidth Gamma(q) is estimated as
the finite-difference ratio

    Gamma^2(q) = sum_t |rho(q, t+dt) - rho(q, t)|^2 / dt^2
                 / sum_t |rho(q, t)|^2

with the sums running over consecutive frame pairs (the denominator over
the left frame of each pair). Radial averaging and a per-band linear fit
Gamma = dv * q + c yield the advection velocity spread dv.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import radial_bin_accumulate
from .core import Image2D, NumericalError, TimeLapse, ValidationError, q_grids
from .segment import LABEL_IDS, LabelMap
from .stats import linear_fit


@dataclass(frozen=True)
class BandDefinition:
    """A direct-space scale band in um; q bounds follow from q = 2*pi/lambda."""

    name: str
    lambda_min_um: float
    lambda_max_um: float

    def __post_init__(self):
        if not (0 < self.lambda_min_um < self.lambda_max_um):
            raise ValidationError("BandDefinition: need 0 < lambda_min < lambda_max")


DEFAULT_BANDS = (
    BandDefinition("small", 1.1, 2.1),
    BandDefinition("medium", 2.1, 4.2),
    BandDefinition("large", 4.2, 500.0),
)


@dataclass(frozen=True, eq=False)
class Gamma2Map:
    """Per-(qx, qy) squared temporal bandwidth in 1/s^2.

    ``valid`` flags bins whose denominator energy supports the estimate;
    bins with identically zero numerator are valid with Gamma^2 = 0 (no
    observed dynamics).
    """

    gamma2: np.ndarray
    valid: np.ndarray
    pixel_size: float

    def q_radius(self) -> np.ndarray:
        qy, qx = q_grids(*self.gamma2.shape, self.pixel_size)
        return np.hypot(qx[None, :], qy[:, None])


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Gamma (1/s) against radial spatial frequency q (rad/um)."""

    q: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        g = np.asarray(self.gamma, dtype=np.float64)
        if q.ndim != 1 or g.shape != q.shape:
            raise ValidationError("RadialProfile: q and gamma must be 1-D, equal length")
        if np.any(np.diff(q) <= 0) or (q.size and q[0] <= 0):
            raise ValidationError("RadialProfile: q must be strictly increasing and positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class TransportFit:
    """Per-band advection spread with fit quality and inclusion flag."""

    band: str
    dv_um_per_s: float
    intercept_per_s: float
    r_squared: float
    included: bool
    n_samples: int

    @property
    def dv_um_per_min(self) -> float:
        return self.dv_um_per_s * 60.0


def mask_density(movie: TimeLapse, labels: LabelMap, label) -> TimeLapse:
    """Zero every pixel whose label does not match, in all frames."""
    if labels.data.shape != movie.data.shape[1:]:
        raise ValidationError("mask_density: label map geometry mismatch")
    label_id = LABEL_IDS[label] if isinstance(label, str) else int(label)
    mask = labels.data == label_id
    return TimeLapse(movie.data * mask, movie.pixel_size, movie.frame_interval)


def gamma_map(movie: TimeLapse, subtract_temporal_mean: bool = True,
              energy_rel_tol: float = 1e-12) -> Gamma2Map:
    """Finite-difference temporal bandwidth at every spatial mode.

    When ``subtract_temporal_mean`` is set, the per-q temporal mean
    spectrum is removed first so immobile mass does not dilute the
    estimate; frame differences are unaffected by this choice.
    """
    n = movie.n_frames
    if n < 3:
        raise ValidationError("gamma_map: need at least 3 frames")
    dt = movie.frame_interval

    mean_spec = None
    if subtract_temporal_mean:
        mean_spec = np.zeros(movie.data.shape[1:], dtype=np.complex128)
        for t in range(n):
            mean_spec += np.fft.fft2(movie.data[t])
        mean_spec /= n

    num = np.zeros(movie.data.shape[1:], dtype=np.float64)
    den = np.zeros(movie.data.shape[1:], dtype=np.float64)
    prev = np.fft.fft2(movie.data[0])
    if mean_spec is not None:
        prev = prev - mean_spec
    for t in range(1, n):
        cur = np.fft.fft2(movie.data[t])
        if mean_spec is not None:
            cur = cur - mean_spec
        diff = cur - prev
        num += diff.real ** 2 + diff.imag ** 2
        den += prev.real ** 2 + prev.imag ** 2
        prev = cur
    num /= dt * dt

    den_max = float(den.max())
    supported = den > energy_rel_tol * den_max if den_max > 0 else np.zeros_like(den, dtype=bool)
    quiet = num == 0.0
    valid = supported | quiet
    gamma2 = np.zeros_like(num)
    np.divide(num, den, out=gamma2, where=supported)
    return Gamma2Map(gamma2, valid, movie.pixel_size)


def radial_average(g: Gamma2Map, n_samples: int = 1000) -> RadialProfile:
    """Resample Gamma = sqrt(Gamma^2) onto ~uniform radial-frequency bins.

    Valid bins with 0 < q <= pi/pixel_size are sorted by q and averaged
    within n_samples equal-width bins; a bin's q coordinate is the mean
    radial frequency of its members. Empty bins sit at their midpoint and
    are filled by linear interpolation.
    """
    q_max = math.pi / g.pixel_size
    q_all = g.q_radius()
    sel = g.valid & (q_all > 0.0) & (q_all <= q_max)
    n_valid = int(sel.sum())
    if n_valid < n_samples:
        raise ValidationError(
            f"radial_average: only {n_valid} valid bins for {n_samples} samples"
        )
    gamma = np.sqrt(g.gamma2[sel])
    sums, qsums, counts = radial_bin_accumulate(q_all[sel], gamma, q_max, n_samples)
    step = q_max / n_samples
    nonempty = counts > 0
    q_out = (np.arange(n_samples) + 0.5) * step
    np.divide(qsums, counts, out=q_out, where=nonempty)
    gamma_mean = np.divide(sums, counts, out=np.zeros(n_samples), where=nonempty)
    if not np.all(nonempty):
        gamma_out = np.interp(q_out, q_out[nonempty], gamma_mean[nonempty])
    else:
        gamma_out = gamma_mean
    return RadialProfile(q_out, gamma_out)


def lambda_to_q(lambda_um: float) -> float:
    """Direct-space scale (um) to radial frequency (rad/um)."""
    if lambda_um <= 0:
        raise ValidationError("lambda_to_q: lambda must be positive")
    return 2.0 * math.pi / lambda_um


def q_to_lambda(q: float) -> float:
    """Radial frequency (rad/um) to direct-space scale (um)."""
    if q <= 0:
        raise ValidationError("q_to_lambda: q must be positive")
    return 2.0 * math.pi / q


def _band_selection(profile: RadialProfile, band: BandDefinition,
                    field_extent_um: float = None):
    lambda_max = band.lambda_max_um
    if field_extent_um is not None:
        lambda_max = min(lambda_max, field_extent_um)
    q_lo = lambda_to_q(lambda_max)
    q_hi = lambda_to_q(band.lambda_min_um)
    sel = (profile.q >= q_lo) & (profile.q <= q_hi)
    if int(sel.sum()) < 5:
        raise ValidationError(
            f"band {band.name}: only {int(sel.sum())} profile samples inside "
            f"[{q_lo:.4f}, {q_hi:.4f}] rad/um"
        )
    return profile.q[sel], profile.gamma[sel]


def fit_band(profile: RadialProfile, band: BandDefinition,
             r2_threshold: float = 0.8, field_extent_um: float = None) -> TransportFit:
    """Linear fit Gamma = dv * q + c over one band.

    ``included`` is true when r^2 meets the threshold and the slope is
    positive; all fields are reported regardless. The band's upper scale
    is clipped to ``field_extent_um`` when given.
    """
    q, gamma = _band_selection(profile, band, field_extent_um)
    slope, intercept, r2 = linear_fit(q, gamma)
    included = bool(r2 >= r2_threshold and slope > 0.0)
    return TransportFit(band.name, slope, intercept, r2, included, q.size)


def fit_diffusion(profile: RadialProfile, band: BandDefinition,
                  field_extent_um: float = None):
    """Two-term fit Gamma = dv * q + D * q^2 (no intercept).

    Intended for synthetic validation rather than default reporting.
    Returns (D, dv, r_squared).
    """
    q, gamma = _band_selection(profile, band, field_extent_um)
    design = np.column_stack([q, q * q])
    coef, _, _, _ = np.linalg.lstsq(design, gamma, rcond=None)
    dv, diffusion = float(coef[0]), float(coef[1])
    fitted = design @ coef
    residual = gamma - fitted
    ss_res = float(residual @ residual)
    centered = gamma - gamma.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-300 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return diffusion, dv, r2
