"""Exposure planning: which mask translations to expose, and for how long.

The planner solves ``min ||M w - I||  s.t.  w >= 0`` over the mean-corrected
illumination matrix, keeps the patterns with positive weight, converts weights
to exposure times, and predicts the pedestal and noiseless SNR of the result.
"""

import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from .errors import PlanningError, ValidationError
from .metrics import score_projection
from .nnls import solve_nnls


@dataclass(frozen=True, eq=False)
class TargetPattern:
    """Zero-mean, max-abs-normalized, row-major vectorized target exposure."""

    window_width: int
    window_height: int
    values: np.ndarray
    contrast_scale: float = 1.0
    requested_pedestal: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel().copy()
        if v.size != self.window_width * self.window_height:
            raise ValidationError("target length must equal window pixel count", "values")
        if self.requested_pedestal is not None and not self.requested_pedestal >= 0:
            raise ValidationError("requested pedestal must be nonnegative", "requested_pedestal")
        if not self.contrast_scale > 0:
            raise ValidationError("contrast_scale must be positive", "contrast_scale")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def window_shape(self):
        return (self.window_height, self.window_width)

    @property
    def is_zero(self):
        return not np.any(self.values)

    def image(self):
        return self.values.reshape(self.window_shape)

    @classmethod
    def from_image(cls, image, pedestal=None):
        """Mean-correct an exposure image and scale it so ``max|I| = 1``.

        ``image`` holds desired relative exposure (larger = more dose).
        """
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 2 or img.size == 0:
            raise ValidationError("target image must be a nonempty 2D array", "image")
        centered = img - img.mean()
        peak = float(np.abs(centered).max())
        if peak == 0.0:
            return cls(img.shape[1], img.shape[0], np.zeros(img.size), 1.0, pedestal)
        values = centered / peak
        values -= values.mean()
        values /= np.abs(values).max()
        return cls(img.shape[1], img.shape[0], values.ravel(), 1.0 / peak, pedestal)


@dataclass(frozen=True)
class DetectorMargin:
    """Scale so the brightest predicted pixel reaches ``margin * max_count``."""

    max_count: float = 1000.0
    margin: float = 0.8

    def __post_init__(self):
        if not self.max_count > 0:
            raise ValidationError("max_count must be positive", "max_count")
        if not 0 < self.margin < 1:
            raise ValidationError("margin must lie in (0, 1)", "margin")

    def to_text(self):
        return f"DetectorMargin(maxCount={self.max_count!r},margin={self.margin!r})"


@dataclass(frozen=True)
class FixedIntegratedMs:
    """Scale so the exposure times sum to ``total`` milliseconds."""

    total: float = 1000.0

    def __post_init__(self):
        if not self.total > 0:
            raise ValidationError("total exposure must be positive", "total")

    def to_text(self):
        return f"FixedIntegratedMs(total={self.total!r})"


ScalingMode = Union[DetectorMargin, FixedIntegratedMs]

_MODE_RE = re.compile(r"^(\w+)\((.*)\)$")


def parse_scaling_mode(text):
    m = _MODE_RE.match(text.strip())
    if not m:
        raise ValidationError(f"unrecognized scaling mode {text!r}", "scalingMode")
    name, args = m.groups()
    kv = dict(part.split("=", 1) for part in args.split(",") if part)
    if name == "DetectorMargin":
        return DetectorMargin(float(kv["maxCount"]), float(kv["margin"]))
    if name == "FixedIntegratedMs":
        return FixedIntegratedMs(float(kv["total"]))
    raise ValidationError(f"unrecognized scaling mode {name!r}", "scalingMode")


@dataclass(frozen=True)
class PlanEntry:
    k: int
    dx: int
    dy: int
    weight: float
    exposure_ms: float


@dataclass(frozen=True)
class ExposureStats:
    mean: float
    std: float
    min: float
    max: float


@dataclass(frozen=True)
class ExposurePlan:
    """Ordered exposures plus the planner's predictions.

    ``counts_per_unit`` converts the contrast units of ``predicted_pedestal``
    into detector counts for a noiseless exposure with the capture beam.
    ``weighted_pedestal`` is ``sum(w_k * mean_k)``, the exact mean level of the
    predicted exposure in contrast units.
    """

    entries: Tuple[PlanEntry, ...]
    scaling_mode: ScalingMode
    window_width: int
    window_height: int
    predicted_pedestal: float
    weighted_pedestal: float
    residual_norm: float
    predicted_snr: float
    counts_per_unit: float
    requested_pedestal: Optional[float] = None

    @property
    def n_selected(self):
        return len(self.entries)

    @property
    def weights(self):
        return np.array([e.weight for e in self.entries])

    @property
    def exposure_times(self):
        return np.array([e.exposure_ms for e in self.entries])

    @property
    def offsets(self):
        return [(e.dx, e.dy) for e in self.entries]

    @property
    def exposure_stats(self):
        t = self.exposure_times
        if t.size == 0:
            return ExposureStats(0.0, 0.0, 0.0, 0.0)
        return ExposureStats(float(t.mean()), float(t.std()), float(t.min()), float(t.max()))

    @property
    def total_exposure_ms(self):
        return float(self.exposure_times.sum())


def enforce_pedestal(ensemble, target, pedestal):
    """Un-mean-corrected system with ``pedestal`` added to the right-hand side."""
    if not pedestal >= 0:
        raise ValidationError(f"pedestal must be nonnegative, got {pedestal}", "pedestal")
    _check_dims(ensemble, target)
    return ensemble.restored_matrix(), target.values + pedestal


def _check_dims(ensemble, target):
    if (target.window_width, target.window_height) != (
        ensemble.geometry.window_width,
        ensemble.geometry.window_height,
    ):
        raise ValidationError(
            f"target window {target.window_width}x{target.window_height} does not match ensemble window "
            f"{ensemble.geometry.window_width}x{ensemble.geometry.window_height}",
            "target",
        )


def make_plan(ensemble, target, scaling=None, tol=1e-10, max_iter=None, min_exposure_ms=None):
    """Solve for nonnegative pattern weights and convert them to exposure times.

    ``min_exposure_ms`` raises any shorter exposure to that floor (weights are
    left as solved); by default no floor applies.
    """
    scaling = scaling or DetectorMargin()
    _check_dims(ensemble, target)
    pedestal_req = target.requested_pedestal

    if target.is_zero and not pedestal_req:
        return ExposurePlan((), scaling, target.window_width, target.window_height, 0.0, 0.0, 0.0, 0.0, 0.0, pedestal_req)

    if pedestal_req is not None:
        A, b = enforce_pedestal(ensemble, target, pedestal_req)
    else:
        A, b = ensemble.matrix, target.values
    w, rnorm = solve_nnls(A, b, tol=tol, max_iter=max_iter)

    sel = np.flatnonzero(w > 0)
    if sel.size == 0:
        raise PlanningError("target orthogonal to ensemble span: every weight is zero")
    ws = w[sel]
    means = ensemble.pattern_means[sel]
    prediction = ensemble.matrix[:, sel] @ ws + float(ws @ means)

    if isinstance(scaling, DetectorMargin):
        peak = float(prediction.max())
        if not peak > 0:
            raise PlanningError("predicted exposure has no positive pixel to scale against the detector margin")
        ms_per_unit = scaling.margin * scaling.max_count / (ensemble.normalization_max * peak)
    elif isinstance(scaling, FixedIntegratedMs):
        ms_per_unit = scaling.total / float(ws.sum())
    else:
        raise ValidationError(f"unknown scaling mode {scaling!r}", "scaling")

    times = ms_per_unit * ws
    if min_exposure_ms is not None:
        times = np.maximum(times, min_exposure_ms)

    offsets = ensemble.geometry.offsets
    entries = tuple(
        PlanEntry(int(k), offsets[k][0], offsets[k][1], float(wk), float(tk)) for k, wk, tk in zip(sel, ws, times)
    )
    report = score_projection(prediction, target.values)
    return ExposurePlan(
        entries=entries,
        scaling_mode=scaling,
        window_width=target.window_width,
        window_height=target.window_height,
        predicted_pedestal=pedestal_formula(ws, means),
        weighted_pedestal=float(ws @ means),
        residual_norm=rnorm,
        predicted_snr=report.snr,
        counts_per_unit=ms_per_unit * ensemble.normalization_max,
        requested_pedestal=pedestal_req,
    )


def pedestal_formula(weights, means):
    """``N' * mean(w) * mean(pattern means)`` over the selected patterns."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        return 0.0
    return float(weights.size * weights.mean() * np.mean(means))


# --------------------------------------------------------------------------
# stage travel


def path_length(points):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def nearest_neighbor_order(points):
    """Greedy tour over ``points`` starting at the one closest to the origin.

    Ties (equal distances) go to the lowest index.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    left = np.ones(n, dtype=bool)
    cur = int(np.argmin(np.hypot(pts[:, 0], pts[:, 1])))
    order = [cur]
    left[cur] = False
    for _ in range(n - 1):
        d = np.hypot(*(pts - pts[cur]).T)
        d[~left] = np.inf
        cur = int(np.argmin(d))
        order.append(cur)
        left[cur] = False
    return order


def order_exposures(plan):
    """Reorder entries to shorten stage travel between consecutive exposures.

    Uses the nearest-neighbor tour; if that is longer than the current order,
    the current order is kept.
    """
    if not plan.entries:
        raise ValidationError("cannot order an empty plan", "entries")
    pts = plan.offsets
    order = nearest_neighbor_order(pts)
    if path_length([pts[i] for i in order]) > path_length(pts):
        return plan
    return replace(plan, entries=tuple(plan.entries[i] for i in order))


# --------------------------------------------------------------------------
# plan files


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return repr(float(v))


def _parse_float(s):
    return math.inf if s == "inf" else float(s)


def plan_to_text(plan):
    lines = [
        "version=1",
        f"scalingMode={plan.scaling_mode.to_text()}",
        f"pedestal={_fmt(plan.predicted_pedestal)}",
        f"residual={_fmt(plan.residual_norm)}",
        f"snrPredicted={_fmt(plan.predicted_snr)}",
        f"window={plan.window_width}x{plan.window_height}",
        f"weightedPedestal={_fmt(plan.weighted_pedestal)}",
        f"countsPerUnit={_fmt(plan.counts_per_unit)}",
        f"requestedPedestal={_fmt(plan.requested_pedestal)}",
    ]
    for e in plan.entries:
        lines.append(f"{e.k},{e.dx},{e.dy},{e.weight!r},{e.exposure_ms!r}")
    return "\n".join(lines) + "\n"


_REQUIRED_HEADERS = ("scalingMode", "pedestal", "residual", "snrPredicted", "window", "weightedPedestal", "countsPerUnit")


def plan_from_text(text):
    header = {}
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            header[key] = value
        else:
            k, dx, dy, w, t = line.split(",")
            entries.append(PlanEntry(int(k), int(dx), int(dy), float(w), float(t)))
    if header.get("version") != "1":
        raise ValidationError(f"unsupported plan file version {header.get('version')!r}", "version")
    missing = [k for k in _REQUIRED_HEADERS if k not in header]
    if missing:
        raise ValidationError(f"plan file lacks header fields {missing}", missing[0])
    ww, wh = (int(v) for v in header["window"].split("x"))
    req = header.get("requestedPedestal", "none")
    return ExposurePlan(
        entries=tuple(entries),
        scaling_mode=parse_scaling_mode(header["scalingMode"]),
        window_width=ww,
        window_height=wh,
        predicted_pedestal=_parse_float(header["pedestal"]),
        weighted_pedestal=_parse_float(header["weightedPedestal"]),
        residual_norm=_parse_float(header["residual"]),
        predicted_snr=_parse_float(header["snrPredicted"]),
        counts_per_unit=_parse_float(header["countsPerUnit"]),
        requested_pedestal=None if req == "none" else _parse_float(req),
    )


def save_plan(plan, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan_to_text(plan))


def load_plan(path):
    with open(path, encoding="utf-8") as fh:
        return plan_from_text(fh.read())
