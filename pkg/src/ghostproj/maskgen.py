"""Procedural generation of binary ghost-projection masks.

Five mask classes are supported: i.i.d. random binary, binarized
Gaussian-smoothed noise, binarized Lorentzian-smoothed noise, binarized
power-law ("random fractal") noise, and a deterministic Legendre-symbol
array whose mean-corrected cyclic translates are nearly orthogonal.

Smoothing and fractal filtering act on the plaquette grid (one sample per
logical feature) with periodic boundaries; kernel widths are in plaquette
units, which coincide with pixels when ``feature_size_px == 1``.
"""

import enum
import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import pnm
from .errors import ValidationError
from .rng import stream

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class MaskClass(str, enum.Enum):
    RANDOM_BINARY = "RandomBinary"
    GAUSSIAN_SMOOTHED = "GaussianSmoothed"
    LORENTZIAN_SMOOTHED = "LorentzianSmoothed"
    RANDOM_FRACTAL = "RandomFractal"
    LEGENDRE = "Legendre"


def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class MaskSpec:
    """Parameters that fully determine a generated mask."""

    mask_class: MaskClass
    width: int
    height: int
    feature_size_px: int = 1
    sigma: Optional[float] = None
    gamma: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    p: Optional[int] = None
    transmission_low: float = 0.08
    transmission_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask_class", MaskClass(self.mask_class))
        self.validate()

    @classmethod
    def legendre(cls, p, feature_size_px=1, **kwargs):
        side = p * feature_size_px
        return cls(MaskClass.LEGENDRE, side, side, feature_size_px, p=p, **kwargs)

    def validate(self):
        f = self.feature_size_px
        if not isinstance(f, (int, np.integer)) or f <= 0:
            raise ValidationError(f"feature_size_px must be a positive integer, got {f!r}", "feature_size_px")
        for name in ("width", "height"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}", name)
            if v % f:
                raise ValidationError(f"{name}={v} is not a multiple of feature_size_px={f}", name)
        lo, hi = self.transmission_low, self.transmission_high
        if not (0.0 <= lo <= 1.0):
            raise ValidationError(f"transmission_low must lie in [0, 1], got {lo}", "transmission_low")
        if not (0.0 <= hi <= 1.0):
            raise ValidationError(f"transmission_high must lie in [0, 1], got {hi}", "transmission_high")
        if lo >= hi:
            raise ValidationError(f"transmission_low ({lo}) must be below transmission_high ({hi})", "transmission_low")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}", "seed")

        cls = self.mask_class
        if cls is MaskClass.GAUSSIAN_SMOOTHED:
            _require_positive(self.sigma, "sigma")
        elif cls is MaskClass.LORENTZIAN_SMOOTHED:
            _require_positive(self.gamma, "gamma")
        elif cls is MaskClass.RANDOM_FRACTAL:
            for name in ("alpha", "beta"):
                v = getattr(self, name)
                if v is None or not math.isfinite(v) or v < 0:
                    raise ValidationError(f"{name} must be a finite real >= 0, got {v!r}", name)
        elif cls is MaskClass.LEGENDRE:
            if self.p is None or not is_prime(self.p) or self.p == 2:
                raise ValidationError(f"p must be an odd prime, got {self.p!r}", "p")
            side = self.p * f
            if self.width != side or self.height != side:
                raise ValidationError(
                    f"Legendre mask must be {side}x{side} (p * feature_size_px), got {self.width}x{self.height}",
                    "width",
                )

    @property
    def plaquette_shape(self):
        return (self.height // self.feature_size_px, self.width // self.feature_size_px)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, MaskClass):
                v = v.value
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = _parse_kv(text)
        kwargs = {}
        for f in fields(cls):
            if f.name not in kv:
                continue
            raw = kv[f.name]
            if f.name == "mask_class":
                kwargs[f.name] = MaskClass(raw)
            elif f.name in ("width", "height", "feature_size_px", "p", "seed"):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        return cls(**kwargs)


def _require_positive(v, name):
    if v is None or not math.isfinite(v) or v <= 0:
        raise ValidationError(f"{name} must be a positive real, got {v!r}", name)


def _parse_kv(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed key=value line: {line!r}")
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True, eq=False)
class MaskField:
    """A full transmission map, row-major ``values[row, col]`` in [0, 1]."""

    values: np.ndarray
    pixel_pitch_um: float = 20.0
    spec: Optional[MaskSpec] = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValidationError("mask values must be a nonempty 2D grid", "values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("mask transmission must lie in [0, 1]", "values")
        if not self.pixel_pitch_um > 0:
            raise ValidationError("pixel_pitch_um must be positive", "pixel_pitch_um")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def digest(self):
        return hashlib.sha256(self.values.tobytes()).hexdigest()


# --------------------------------------------------------------------------
# kernels


def _wrapped_radius2(shape):
    h, w = shape
    dy = np.minimum(np.arange(h), h - np.arange(h)).astype(np.float64)
    dx = np.minimum(np.arange(w), w - np.arange(w)).astype(np.float64)
    return dy[:, None] ** 2 + dx[None, :] ** 2


def gaussian_kernel(shape, sigma):
    """Periodic 2D Gaussian centred on index (0, 0), unit sum."""
    k = np.exp(-_wrapped_radius2(shape) / (2.0 * sigma * sigma))
    return k / k.sum()


def lorentzian_kernel(shape, gamma):
    """Periodic 2D Lorentzian ``1 / (1 + r^2 / gamma^2)``, FWHM ``2 gamma``, unit sum."""
    k = 1.0 / (1.0 + _wrapped_radius2(shape) / (gamma * gamma))
    return k / k.sum()


def fractal_kernel(width, height, alpha, beta):
    """Power-law filter ``1 / ((kx^2 + ky^2)^(alpha/2) + beta)`` on the DFT grid.

    Frequencies are integer cycles per grid in numpy's ``fftfreq`` layout, so
    the result has shape ``(height, width)`` and index ``[0, 0]`` is DC. The DC
    bin is ``1/beta`` for ``beta > 0`` and 0 for ``beta == 0``.
    """
    if alpha < 0 or beta < 0:
        raise ValidationError("alpha and beta must be >= 0", "alpha" if alpha < 0 else "beta")
    ky = np.fft.fftfreq(height) * height
    kx = np.fft.fftfreq(width) * width
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    with np.errstate(divide="ignore"):
        denom = np.power(k2, alpha / 2.0) + beta
        h = np.where(k2 > 0, 1.0 / np.where(k2 > 0, denom, 1.0), 0.0)
    h[0, 0] = 1.0 / beta if beta > 0 else 0.0
    return h


def circular_convolve(a, kernel):
    """Periodic convolution of two same-shape real grids via the FFT."""
    shape = a.shape
    return np.fft.irfft2(np.fft.rfft2(a) * np.fft.rfft2(kernel), s=shape)


# --------------------------------------------------------------------------
# binarization and expansion


def binarize(grid, threshold, low=0.0, high=1.0):
    """Two-level threshold; values strictly above ``threshold`` map to ``high``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValidationError("cannot binarize an empty grid", "grid")
    if not math.isfinite(threshold):
        raise ValidationError("threshold must be finite", "threshold")
    return np.where(grid > threshold, high, low)


def expand_plaquettes(grid, feature_size_px):
    f = feature_size_px
    return np.repeat(np.repeat(grid, f, axis=0), f, axis=1)


def legendre_symbols(p):
    """Legendre symbol ``(x | p)`` for x = 0..p-1 as an int array in {-1, 0, 1}."""
    chi = np.full(p, -1, dtype=np.int64)
    chi[0] = 0
    chi[(np.arange(1, p) ** 2) % p] = 1
    return chi


def legendre_pattern(p):
    """p x p 0/1 array with near-orthogonal mean-corrected cyclic translates.

    Entry ``[i, j]`` is 1 when ``(i^2 - d j^2 | p) = +1`` with ``d`` the
    smallest quadratic non-residue mod p. ``i^2 - d j^2`` is the field norm of
    ``i + j sqrt(d)`` in GF(p^2), so the pattern is the indicator of the
    nonzero squares of GF(p^2) laid out on its additive group Z_p x Z_p. That
    set is a Paley partial difference set, so every nontrivial translate
    overlaps the pattern in one of two nearly equal counts.
    """
    chi = legendre_symbols(p)
    d = int(np.flatnonzero(chi == -1)[0])
    i = np.arange(p)[:, None]
    j = np.arange(p)[None, :]
    return (chi[(i * i - d * j * j) % p] == 1).astype(np.float64)


# --------------------------------------------------------------------------
# generation


def random_plaquettes(spec):
    """Fair-coin 0/1 plaquette grid drawn from the ``(seed, class)`` stream."""
    rng = stream(spec.seed, "maskgen:" + spec.mask_class.value)
    return rng.integers(0, 2, size=spec.plaquette_shape).astype(np.float64)


def smoothed_field(spec):
    """Pre-binarization field on the plaquette grid.

    For ``RandomBinary`` this is the raw coin grid; for ``Legendre`` the 0/1
    pattern itself.
    """
    cls = spec.mask_class
    if cls is MaskClass.LEGENDRE:
        return legendre_pattern(spec.p)
    coins = random_plaquettes(spec)
    if cls is MaskClass.RANDOM_BINARY:
        return coins
    if cls is MaskClass.GAUSSIAN_SMOOTHED:
        return circular_convolve(coins, gaussian_kernel(coins.shape, spec.sigma))
    if cls is MaskClass.LORENTZIAN_SMOOTHED:
        return circular_convolve(coins, lorentzian_kernel(coins.shape, spec.gamma))
    h, w = coins.shape
    kernel = fractal_kernel(w, h, spec.alpha, spec.beta)
    return np.real(np.fft.ifft2(np.fft.fft2(coins) * kernel))


def generate_mask(spec, pixel_pitch_um=20.0):
    """Generate the mask described by ``spec``; deterministic in the spec."""
    spec.validate()
    lo, hi = spec.transmission_low, spec.transmission_high
    grid = smoothed_field(spec)
    if spec.mask_class in (MaskClass.RANDOM_BINARY, MaskClass.LEGENDRE):
        plaq = np.where(grid > 0.5, hi, lo)
    else:
        plaq = binarize(grid, float(np.median(grid)), lo, hi)
    return MaskField(expand_plaquettes(plaq, spec.feature_size_px), pixel_pitch_um, spec)


# --------------------------------------------------------------------------
# file export


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta")


def save_mask(mask, path):
    """Write ``mask`` as a 16-bit graymap plus a ``.meta`` key=value sidecar."""
    path = Path(path)
    pnm.write_pgm16(path, pnm.quantize_unit(mask.values))
    meta = f"pixel_pitch_um={mask.pixel_pitch_um!r}\n"
    if mask.spec is not None:
        meta += mask.spec.to_text()
    sidecar_path(path).write_text(meta)
    return path


def load_mask(path):
    """Read a mask graymap; the sidecar is optional."""
    path = Path(path)
    raw, maxval = pnm.read_pnm(path)
    values = raw.astype(np.float64) / float(maxval)
    pitch, spec = 20.0, None
    side = sidecar_path(path)
    if side.exists():
        kv = _parse_kv(side.read_text())
        pitch = float(kv.pop("pixel_pitch_um", pitch))
        if "mask_class" in kv:
            spec = MaskSpec.from_text("\n".join(f"{k}={v}" for k, v in kv.items()))
    return MaskField(values, pitch, spec)


def spec_dict(spec):
    d = asdict(spec)
    d["mask_class"] = spec.mask_class.value
    return d
