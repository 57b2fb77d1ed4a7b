"""Projection quality scoring.

The projection ``P`` is pedestal-subtracted to ``P' = P - mean(P)``, rescaled
so that ``E[P'^2]`` matches ``E[I^2]`` of the target, and compared to the
target pixel by pixel:

    Var[P'] = E[(P' sqrt(E[I^2] / E[P'^2]) - I)^2]
    SNR     = sqrt(E[I^2] / Var[P'])

All expectations are uniform averages over the window pixels. The score is
invariant to positive rescaling and to constant offsets of ``P``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

UNBOUNDED = math.inf
# Var[P'] below this fraction of E[I^2] is rounding noise: report Unbounded
_ZERO_VAR_REL = 1e-26


@dataclass(frozen=True)
class QualityReport:
    snr: float
    pedestal_measured: float
    variance: float
    contrast: float
    residual_norm: Optional[float] = None

    @property
    def unbounded(self):
        return math.isinf(self.snr)

    def to_text(self):
        lines = [
            f"snr={_fmt(self.snr)}",
            f"pedestal={_fmt(self.pedestal_measured)}",
            f"contrast={_fmt(self.contrast)}",
            f"variance={_fmt(self.variance)}",
        ]
        if self.residual_norm is not None:
            lines.append(f"residual={_fmt(self.residual_norm)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            if "=" in line:
                k, _, v = line.partition("=")
                kv[k.strip()] = float(v)
        return cls(kv["snr"], kv["pedestal"], kv["variance"], kv["contrast"], kv.get("residual"))


def _fmt(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _target_vector(target):
    values = getattr(target, "values", target)
    return np.asarray(values, dtype=np.float64).ravel()


def measure_pedestal(projection):
    """Spatial mean of the projection, in its own units (counts)."""
    p = np.asarray(projection, dtype=np.float64)
    if p.size == 0:
        raise ValidationError("projection is empty", "projection")
    return float(p.mean())


def score_projection(projection, target, residual_norm=None):
    """Score ``projection`` against a zero-mean target (array or TargetPattern)."""
    p = np.asarray(projection, dtype=np.float64)
    i = _target_vector(target)
    shape = getattr(target, "window_shape", None)
    if shape is not None and p.ndim == 2 and p.shape != tuple(shape):
        raise ValidationError(f"projection shape {p.shape} does not match target window {tuple(shape)}", "projection")
    p = p.ravel()
    if p.size != i.size or p.size == 0:
        raise ValidationError(f"projection has {p.size} pixels, target has {i.size}", "projection")

    pedestal = float(p.mean())
    pp = p - pedestal
    pp -= pp.mean()
    ei2 = float(np.mean(i * i))
    ep2 = float(np.mean(pp * pp))

    if ei2 == 0.0:
        if ep2 > 0.0:
            raise ValidationError("SNR undefined for zero target", "target")
        return QualityReport(0.0, pedestal, 0.0, michelson_contrast(p), residual_norm)
    if ep2 == 0.0:
        # flat projection: no signal survives pedestal removal
        return QualityReport(0.0, pedestal, ei2, michelson_contrast(p), residual_norm)

    rescaled = pp * math.sqrt(ei2 / ep2)
    var = float(np.mean((rescaled - i) ** 2))
    snr = UNBOUNDED if var <= _ZERO_VAR_REL * ei2 else math.sqrt(ei2 / var)

    return QualityReport(snr, pedestal, var, michelson_contrast(p), residual_norm)


def michelson_contrast(projection):
    """``(max - min) / (max + min)`` of the raw projection."""
    p = np.asarray(projection, dtype=np.float64)
    hi, lo = float(p.max()), float(p.min())
    if hi + lo == 0.0:
        return 0.0 if hi == lo else math.inf
    return (hi - lo) / (hi + lo)
