"""In-silico execution of an exposure plan against a mask.

Frames are produced in plan order. Each frame may suffer stage jitter,
shutter-time jitter, ring-current drift (optionally flux corrected in real
time), Poisson counting noise, and fixed hot/dead detector pixels. Every
noise source draws from its own seeded stream.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import pnm
from .ensemble import REFERENCE_RING_MA, BeamModel, flux_correct
from .errors import ValidationError
from .rng import stream


@dataclass(frozen=True)
class NoiseConfig:
    """Noise and error sources for one simulated run.

    ``photon_budget_per_ms_per_pixel`` is the mean photon rate at full
    transmission; 0 disables counting noise and uses the beam's own rate as a
    noiseless expectation. ``flux_drift_amplitude`` is the relative wander of
    the ring current; with ``flux_correction`` on, every frame is rescaled to
    the reference current as it is recorded.
    """

    photon_budget_per_ms_per_pixel: float = 0.0
    position_jitter_sigma_px: float = 0.0
    exposure_jitter_frac: float = 0.0
    hot_pixel_frac: float = 0.0
    dead_pixel_frac: float = 0.0
    flux_drift_amplitude: float = 0.0
    flux_correction: bool = True
    saturation_count: float = 65535.0
    seed: int = 0

    def __post_init__(self):
        for name in (
            "photon_budget_per_ms_per_pixel",
            "position_jitter_sigma_px",
            "exposure_jitter_frac",
            "flux_drift_amplitude",
        ):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be a finite real >= 0, got {v}", name)
        for name in ("hot_pixel_frac", "dead_pixel_frac"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValidationError(f"{name} must lie in [0, 1), got {v}", name)
        if self.hot_pixel_frac + self.dead_pixel_frac >= 1:
            raise ValidationError("hot_pixel_frac + dead_pixel_frac must be below 1", "hot_pixel_frac")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer", "seed")

    @property
    def noiseless(self):
        return (
            self.photon_budget_per_ms_per_pixel == 0
            and self.position_jitter_sigma_px == 0
            and self.exposure_jitter_frac == 0
            and self.hot_pixel_frac == 0
            and self.dead_pixel_frac == 0
            and self.flux_drift_amplitude == 0
        )


@dataclass(frozen=True)
class AppliedFrame:
    index: int
    k: int
    dx: int
    dy: int
    exposure_ms: float
    applied_exposure_ms: float
    ring_current_ma: float


@dataclass(eq=False)
class ProjectionResult:
    accumulated: np.ndarray
    frames_applied: int
    noise: NoiseConfig
    plan_ref: str = ""
    frames: Optional[List[np.ndarray]] = None
    applied: List[AppliedFrame] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def _drift_currents(n, amplitude, rng):
    if amplitude == 0 or n == 0:
        return np.full(n, REFERENCE_RING_MA)
    walk = np.cumsum(rng.standard_normal(n)) / math.sqrt(n)
    currents = REFERENCE_RING_MA * (1.0 + amplitude * walk)
    return np.maximum(currents, 1e-3 * REFERENCE_RING_MA)


def _defect_masks(shape, noise):
    npix = shape[0] * shape[1]
    n_hot = int(round(noise.hot_pixel_frac * npix))
    n_dead = int(round(noise.dead_pixel_frac * npix))
    hot = np.zeros(npix, dtype=bool)
    dead = np.zeros(npix, dtype=bool)
    if n_hot or n_dead:
        perm = stream(noise.seed, "sim:defects").permutation(npix)
        hot[perm[:n_hot]] = True
        dead[perm[n_hot : n_hot + n_dead]] = True
    return hot.reshape(shape), dead.reshape(shape)


def simulate_exposure(mask, plan, noise=None, beam=None, keep_frames=False, plan_ref=""):
    """Accumulate the plan's exposures on a detector the size of the plan window."""
    noise = noise or NoiseConfig()
    beam = beam or BeamModel()
    if not plan.entries:
        raise ValidationError("cannot simulate an empty plan", "plan")
    h, w = plan.window_height, plan.window_width
    if w > mask.width or h > mask.height:
        raise ValidationError("plan window is larger than the mask", "plan")
    max_dx, max_dy = mask.width - w, mask.height - h
    for i, e in enumerate(plan.entries):
        if not (0 <= e.dx <= max_dx and 0 <= e.dy <= max_dy):
            raise ValidationError(f"plan entry {i} offset ({e.dx}, {e.dy}) is outside the mask", "plan")

    n = len(plan.entries)
    jitter_rng = stream(noise.seed, "sim:jitter")
    time_rng = stream(noise.seed, "sim:exposure")
    poisson_rng = stream(noise.seed, "sim:poisson")
    currents = _drift_currents(n, noise.flux_drift_amplitude, stream(noise.seed, "sim:drift"))
    hot, dead = _defect_masks((h, w), noise)

    budget = noise.photon_budget_per_ms_per_pixel
    rate = budget if budget > 0 else beam.counts_per_ms
    profile = beam.profile_grid(h, w) * rate
    accumulated = np.zeros((h, w))
    frames = [] if keep_frames else None
    applied = []
    warnings = []

    for i, e in enumerate(plan.entries):
        dx, dy = e.dx, e.dy
        if noise.position_jitter_sigma_px > 0:
            jx, jy = jitter_rng.normal(0.0, noise.position_jitter_sigma_px, size=2)
            dx, dy = dx + int(round(jx)), dy + int(round(jy))
            cx, cy = min(max(dx, 0), max_dx), min(max(dy, 0), max_dy)
            if (cx, cy) != (dx, dy):
                warnings.append(f"frame {i}: jittered offset ({dx}, {dy}) clamped to ({cx}, {cy})")
            dx, dy = cx, cy
        t = e.exposure_ms
        if noise.exposure_jitter_frac > 0:
            t = max(t * (1.0 + time_rng.standard_normal() * noise.exposure_jitter_frac), 0.0)

        current = float(currents[i])
        expected = mask.values[dy : dy + h, dx : dx + w] * profile * t
        if current != REFERENCE_RING_MA:
            expected = expected * (current / REFERENCE_RING_MA)
        frame = poisson_rng.poisson(expected).astype(np.float64) if budget > 0 else expected
        if noise.flux_correction and current != REFERENCE_RING_MA:
            frame = flux_correct(frame, current, REFERENCE_RING_MA)
        if hot.any() or dead.any():
            frame = np.where(hot, noise.saturation_count, frame)
            frame[dead] = 0.0

        accumulated += frame
        if keep_frames:
            frames.append(frame)
        applied.append(AppliedFrame(i, e.k, dx, dy, e.exposure_ms, t, current))

    return ProjectionResult(accumulated, n, noise, plan_ref, frames, applied, warnings)


def accumulate_sequence(result, checkpoints):
    """Partial sums of the retained frames after each checkpoint count."""
    if result.frames is None:
        raise ValidationError("frames were not retained; simulate with keep_frames=True", "checkpoints")
    cps = [int(c) for c in checkpoints]
    if cps != sorted(cps):
        raise ValidationError("checkpoints must be sorted ascending", "checkpoints")
    for c in cps:
        if not 0 <= c <= result.frames_applied:
            raise ValidationError(f"checkpoint {c} outside [0, {result.frames_applied}]", "checkpoints")
    out = []
    running = np.zeros_like(result.accumulated)
    done = 0
    for c in cps:
        for f in result.frames[done:c]:
            running = running + f
        done = max(done, c)
        out.append(running.copy())
    return out


def buildup_checkpoints(n_frames, panels=6):
    """First frame, then evenly spaced fractions up to all frames."""
    if n_frames <= 0:
        return []
    cps = [1] + [int(round(n_frames * j / (panels - 1))) for j in range(1, panels)]
    return sorted(set(max(1, c) for c in cps))


# --------------------------------------------------------------------------
# export


def save_image(path, image):
    """Write counts as a 16-bit graymap; returns counts per gray level."""
    image = np.asarray(image, dtype=np.float64)
    peak = float(image.max(initial=0.0))
    scale = peak / 65535.0 if peak > 0 else 1.0
    pnm.write_pgm16(path, np.rint(np.clip(image, 0, None) / scale).astype(np.uint16))
    return scale


def save_accumulated(result, directory, name="accumulated"):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scale = save_image(d / f"{name}.pgm", result.accumulated)
    (d / "scale.txt").write_text(f"countsPerGraylevel={scale!r}\n")
    return d / f"{name}.pgm"


def load_accumulated(path):
    path = Path(path)
    raw, _ = pnm.read_pnm(path)
    scale = 1.0
    side = path.parent / "scale.txt"
    if side.exists():
        for line in side.read_text().splitlines():
            if line.startswith("countsPerGraylevel="):
                scale = float(line.split("=", 1)[1])
    return raw.astype(np.float64) * scale


def save_frames(result, directory):
    """Numbered frame graymaps plus manifest.csv; one shared gray scale."""
    if result.frames is None:
        raise ValidationError("frames were not retained", "frames")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    peak = max((float(f.max()) for f in result.frames), default=0.0)
    scale = peak / 65535.0 if peak > 0 else 1.0
    width = max(4, len(str(len(result.frames))))
    for i, f in enumerate(result.frames, start=1):
        pnm.write_pgm16(d / f"frame_{i:0{width}d}.pgm", np.rint(np.clip(f, 0, None) / scale).astype(np.uint16))
    rows = ["frameIndex,k,dx,dy,exposureMs,appliedExposureMs"]
    for a in result.applied:
        rows.append(f"{a.index + 1},{a.k},{a.dx},{a.dy},{a.exposure_ms!r},{a.applied_exposure_ms!r}")
    (d / "manifest.csv").write_text("\n".join(rows) + "\n")
    (d / "scale.txt").write_text(f"countsPerGraylevel={scale!r}\n")
    return d
