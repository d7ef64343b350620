"""Deterministic synthetic-data generators used as ground-truth oracles.

All randomness flows through numpy's PCG64 generator seeded from the
spec, so identical specs reproduce identical stacks bit for bit (within
one kernel path; see ``_kernels``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import accumulate_moving_sources
from .core import Image2D, NumericalError, TimeLapse, ValidationError, q_grids
from .glim import QUADRATURE_OFFSETS, FrameSet4, ModulationCurve, ShearConfig
from .segment import NEURITE, NUCLEUS, LabelMap


@dataclass(frozen=True)
class SynthSpec:
    """Seed and geometry shared by all generators."""

    seed: int
    width: int = 256
    height: int = 256
    pixel_size: float = 0.5
    n_frames: int = 50
    frame_interval: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValidationError("SynthSpec: width and height must be >= 2")
        if self.pixel_size <= 0 or self.frame_interval <= 0:
            raise ValidationError("SynthSpec: pixel_size and frame_interval must be positive")
        if self.n_frames < 1:
            raise ValidationError("SynthSpec: n_frames must be >= 1")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


def gen_advection_stack(spec: SynthSpec, n_particles: int = 200, dv_true: float = 0.02,
                        blob_sigma_um: float = 1.5, amplitude: float = 1.0,
                        noise_sigma: float = 0.0):
    """Gaussian blobs drifting at constant per-particle velocities.

    Velocities are drawn from an isotropic zero-mean normal distribution
    with per-component standard deviation ``dv_true`` (um/s). Frames are
    synthesized in the spectral domain, which realizes periodic wrap
    exactly and conserves total intensity per frame.

    Returns (TimeLapse, truth) where truth records the drawn positions
    and velocities.
    """
    if dv_true < 0:
        raise ValidationError("gen_advection_stack: dv_true must be >= 0")
    rng = spec.rng()
    extent_x = spec.width * spec.pixel_size
    extent_y = spec.height * spec.pixel_size
    xy0 = np.column_stack([
        rng.uniform(0.0, extent_x, n_particles),
        rng.uniform(0.0, extent_y, n_particles),
    ])
    if dv_true > 0:
        velocities = rng.normal(0.0, dv_true, (n_particles, 2))
    else:
        velocities = np.zeros((n_particles, 2))

    qy, qx = q_grids(spec.height, spec.width, spec.pixel_size)
    q2 = qx[None, :] ** 2 + qy[:, None] ** 2
    # spectral envelope of a unit-amplitude Gaussian blob sampled on the grid
    envelope = (amplitude * 2.0 * math.pi * blob_sigma_um ** 2 / spec.pixel_size ** 2
                * np.exp(-0.5 * blob_sigma_um ** 2 * q2))
    spectra = accumulate_moving_sources(qy, qx, envelope, xy0, velocities,
                                        spec.frame_interval, spec.n_frames)
    frames = np.fft.ifft2(spectra, axes=(1, 2)).real
    if noise_sigma > 0:
        frames = frames + rng.normal(0.0, noise_sigma, frames.shape)
    movie = TimeLapse(frames, spec.pixel_size, spec.frame_interval)
    truth = {
        "scenario": "advection",
        "dv_true_um_per_s": float(dv_true),
        "n_particles": int(n_particles),
        "blob_sigma_um": float(blob_sigma_um),
        "component_std_um_per_s": float(velocities.std()),
        "positions_um": xy0.tolist(),
        "velocities_um_per_s": velocities.tolist(),
    }
    return movie, truth


def gen_diffusion_stack(spec: SynthSpec, diffusion: float = 0.05):
    """Exact spectral realization of pure diffusion.

    A seeded white-noise field evolves by multiplying each mode by
    exp(-D q^2 dt) per frame, so per-mode amplitude ratios equal the
    propagator exactly.
    """
    if diffusion < 0:
        raise ValidationError("gen_diffusion_stack: diffusion must be >= 0")
    rng = spec.rng()
    field = rng.normal(0.0, 1.0, (spec.height, spec.width))
    qy, qx = q_grids(spec.height, spec.width, spec.pixel_size)
    q2 = qx[None, :] ** 2 + qy[:, None] ** 2
    decay = np.exp(-diffusion * q2 * spec.frame_interval)
    spectrum = np.fft.fft2(field)
    frames = np.empty((spec.n_frames, spec.height, spec.width))
    for t in range(spec.n_frames):
        frames[t] = np.fft.ifft2(spectrum).real
        spectrum = spectrum * decay
    return TimeLapse(frames, spec.pixel_size, spec.frame_interval)


def directional_difference(phi: Image2D, angle_deg: float, step_um: float = None) -> Image2D:
    """Periodic directional finite difference via a spectral shift.

    Returns (phi(r + h*s) - phi(r)) / h in rad/um, where s is the unit
    vector at ``angle_deg`` and h defaults to one pixel.
    """
    h = phi.pixel_size if step_um is None else float(step_um)
    theta = math.radians(angle_deg)
    qy, qx = q_grids(phi.height, phi.width, phi.pixel_size)
    shift = np.exp(1j * (qx[None, :] * math.cos(theta) * h
                         + qy[:, None] * math.sin(theta) * h))
    shifted = np.fft.ifft2(np.fft.fft2(phi.data) * shift).real
    return phi.with_data((shifted - phi.data) / h)


def gen_glim_frames(phi_truth: Image2D, cfg: ShearConfig,
                    offsets=QUADRATURE_OFFSETS, a: float = 2.0, b: float = 0.5) -> FrameSet4:
    """Forward model of the 4-frame acquisition for a known phase map.

    The measured beam phase difference is the shear distance times the
    directional derivative of the phase along the shear angle; frames
    are I_k = a + b*cos(dphi + delta_k).
    """
    if b <= 0:
        raise ValidationError("gen_glim_frames: b must be positive")
    deriv = directional_difference(phi_truth, cfg.shear_angle)
    dphi = cfg.shear_distance * deriv.data
    frames = tuple(
        Image2D(a + b * np.cos(dphi + delta), phi_truth.pixel_size) for delta in offsets
    )
    return FrameSet4(frames, tuple(float(o) for o in offsets))


def gen_glim_movie(phi_frames, cfg: ShearConfig, offsets=QUADRATURE_OFFSETS,
                   a: float = 2.0, b: float = 0.5):
    """Apply the 4-frame forward model to every frame of a phase movie."""
    return [gen_glim_frames(phi, cfg, offsets, a, b) for phi in phi_frames]


def gaussian_bumps(spec: SynthSpec, n_bumps: int = 12, amplitude: float = 1.5,
                   sigma_px: float = 8.0, margin_px: int = 30) -> Image2D:
    """A positive phase map made of seeded Gaussian bumps."""
    rng = spec.rng()
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    phi = np.zeros((spec.height, spec.width))
    for _ in range(n_bumps):
        cy = rng.uniform(margin_px, spec.height - margin_px)
        cx = rng.uniform(margin_px, spec.width - margin_px)
        phi += amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma_px ** 2))
    return Image2D(phi, spec.pixel_size)


def gen_blob_labels(spec: SynthSpec, n_nuclei: int, n_neurite_strokes: int,
                    nucleus_radius_px: int = 3, min_separation_px: int = 2,
                    stroke_width_px: int = 2, max_rejections: int = 10_000):
    """Disk nuclei and polyline neurite strokes on a background canvas.

    Nuclei are placed by seeded rejection sampling with a guaranteed
    edge-to-edge gap of ``min_separation_px``, so their 8-connected
    components are exactly the planted disks. Strokes never overwrite
    nucleus pixels.

    Returns (LabelMap, truth counts).
    """
    rng = spec.rng()
    h, w = spec.height, spec.width
    labels = np.zeros((h, w), dtype=np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    centers = []
    margin = nucleus_radius_px + 1
    if n_nuclei > 0 and (h <= 2 * margin or w <= 2 * margin):
        raise ValidationError("gen_blob_labels: image too small for the nucleus radius")
    min_center_dist = 2 * nucleus_radius_px + min_separation_px
    rejections = 0
    while len(centers) < n_nuclei:
        cy = int(rng.integers(margin, h - margin))
        cx = int(rng.integers(margin, w - margin))
        if any((cy - py) ** 2 + (cx - px) ** 2 < min_center_dist ** 2 for py, px in centers):
            rejections += 1
            if rejections > max_rejections:
                raise NumericalError(
                    f"gen_blob_labels: placement failed after {max_rejections} rejections"
                )
            continue
        centers.append((cy, cx))
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= nucleus_radius_px ** 2
        labels[disk] = NUCLEUS

    half = max(1, stroke_width_px // 2)
    for _ in range(n_neurite_strokes):
        y = float(rng.uniform(margin, h - margin))
        x = float(rng.uniform(margin, w - margin))
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        for _segment in range(int(rng.integers(2, 5))):
            length = float(rng.uniform(15.0, 60.0))
            steps = max(2, int(length * 2))
            for k in range(steps):
                py = int(round(y + math.sin(angle) * length * k / steps))
                px = int(round(x + math.cos(angle) * length * k / steps))
                if 0 <= py < h and 0 <= px < w:
                    y0, y1 = max(0, py - half), min(h, py + half + 1)
                    x0, x1 = max(0, px - half), min(w, px + half + 1)
                    block = labels[y0:y1, x0:x1]
                    block[block == 0] = NEURITE
            y += math.sin(angle) * length
            x += math.cos(angle) * length
            angle += float(rng.uniform(-0.9, 0.9))

    truth = {
        "scenario": "blobs",
        "n_nuclei": int(n_nuclei),
        "n_neurite_strokes": int(n_neurite_strokes),
        "nucleus_radius_px": int(nucleus_radius_px),
        "nucleus_centers": [[int(cy), int(cx)] for cy, cx in centers],
    }
    return LabelMap(labels, spec.pixel_size), truth


def gen_modulation_curve(spec: SynthSpec, phase_law, a: float = 2.0, b: float = 1.0,
                         n_levels: int = 512):
    """Modulation curve I(g) = a + b*cos(phase_law(g)) over gray levels.

    ``phase_law`` maps a float array of gray levels to phase in rad.
    Returns (ModulationCurve, truth) with the sampled law in the truth.
    """
    grays = np.arange(n_levels, dtype=np.int64)
    law = np.asarray(phase_law(grays.astype(np.float64)), dtype=np.float64)
    if law.shape != grays.shape:
        raise ValidationError("gen_modulation_curve: phase_law must map gray levels elementwise")
    intensity = a + b * np.cos(law)
    curve = ModulationCurve(grays, intensity)
    truth = {
        "scenario": "modulation",
        "a": float(a),
        "b": float(b),
        "phase_law": law.tolist(),
    }
    return curve, truth
