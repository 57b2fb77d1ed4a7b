"""Assembly of the mean-corrected illumination matrix from translated mask views.

Each ensemble member is the view of the mask through a fixed detector window
at one integer translation, multiplied by the beam profile. Views are flux
corrected to a reference ring current, divided by the global maximum count,
vectorized row-major, and stored as columns with their spatial means removed.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GeometryError, ValidationError

REFERENCE_RING_MA = 200.0


def flux_correct(counts, ring_current_ma, reference_ma=REFERENCE_RING_MA):
    """Rescale counts recorded at ``ring_current_ma`` to ``reference_ma``."""
    if not ring_current_ma > 0:
        raise ValidationError(f"ring current must be positive, got {ring_current_ma}", "ring_current_ma")
    return np.asarray(counts, dtype=np.float64) * (reference_ma / ring_current_ma)


@dataclass(frozen=True)
class BeamModel:
    """Illumination incident on the mask, as seen through the detector window.

    ``counts_per_ms`` is the photon rate per pixel at full transmission and
    reference current. ``profile`` holds polynomial coefficients
    ``profile[a][b]`` multiplying ``x**a * y**b`` with x, y spanning [-1, 1]
    across the window; ``None`` means flat. ``ring_current_ma`` is either a
    constant or one value per captured frame.
    """

    counts_per_ms: float = 1.0
    profile: Optional[Tuple[Tuple[float, ...], ...]] = None
    ring_current_ma: Union[float, Sequence[float]] = REFERENCE_RING_MA

    def __post_init__(self):
        if not (self.counts_per_ms > 0 and math.isfinite(self.counts_per_ms)):
            raise ValidationError("beam intensity must be positive", "counts_per_ms")
        currents = np.atleast_1d(np.asarray(self.ring_current_ma, dtype=np.float64))
        if currents.size == 0 or not np.all(currents > 0):
            raise ValidationError("ring current must be positive", "ring_current_ma")

    def profile_grid(self, height, width):
        if self.profile is None:
            return np.ones((height, width))
        x = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
        y = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
        grid = np.zeros((height, width))
        for a, row in enumerate(self.profile):
            for b, c in enumerate(row):
                grid += c * x[None, :] ** a * y[:, None] ** b
        if not np.all(grid > 0):
            raise ValidationError("beam profile must be strictly positive over the window", "profile")
        return grid

    def ring_current(self, k):
        if np.ndim(self.ring_current_ma) == 0:
            return float(self.ring_current_ma)
        seq = self.ring_current_ma
        return float(seq[k % len(seq)])


@dataclass(frozen=True)
class WindowGeometry:
    """Detector window size plus one ``(dx, dy)`` mask translation per member."""

    window_width: int
    window_height: int
    offsets: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if self.window_width <= 0 or self.window_height <= 0:
            raise ValidationError("window dimensions must be positive", "window_width")
        offs = tuple((int(dx), int(dy)) for dx, dy in self.offsets)
        object.__setattr__(self, "offsets", offs)
        if len(set(offs)) != len(offs):
            seen = set()
            for i, o in enumerate(offs):
                if o in seen:
                    raise GeometryError(f"offset {i} {o} duplicates an earlier offset", index=i)
                seen.add(o)

    @property
    def n_pixels(self):
        return self.window_width * self.window_height

    def check_bounds(self, mask_width, mask_height):
        for i, (dx, dy) in enumerate(self.offsets):
            if dx < 0 or dy < 0 or dx + self.window_width > mask_width or dy + self.window_height > mask_height:
                raise GeometryError(
                    f"offset {i} ({dx}, {dy}) puts the {self.window_width}x{self.window_height} window "
                    f"outside the {mask_width}x{mask_height} mask",
                    index=i,
                )

    @classmethod
    def raster(cls, mask_width, mask_height, window_width, window_height, step=1, max_offsets=None):
        """Row-by-row raster of every in-bounds translation on a ``step`` lattice."""
        if step <= 0:
            raise ValidationError("raster step must be positive", "step")
        offs = [
            (dx, dy)
            for dy in range(0, mask_height - window_height + 1, step)
            for dx in range(0, mask_width - window_width + 1, step)
        ]
        if max_offsets is not None:
            offs = offs[:max_offsets]
        if not offs:
            raise GeometryError("window does not fit inside the mask")
        return cls(window_width, window_height, tuple(offs))


@dataclass(frozen=True, eq=False)
class IlluminationEnsemble:
    """Mean-corrected pattern matrix (pixels x patterns) and its bookkeeping."""

    matrix: np.ndarray
    pattern_means: np.ndarray
    geometry: WindowGeometry
    normalization_max: float
    flux_reference_ma: float = REFERENCE_RING_MA

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        means = np.asarray(self.pattern_means, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != self.geometry.n_pixels:
            raise ValidationError("matrix rows must equal window pixel count", "matrix")
        if m.shape[1] != len(self.geometry.offsets) or means.shape != (m.shape[1],):
            raise ValidationError("column count must equal offset count", "matrix")
        m.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "pattern_means", means)

    @property
    def n_patterns(self):
        return self.matrix.shape[1]

    @property
    def window_shape(self):
        return (self.geometry.window_height, self.geometry.window_width)

    def restored_matrix(self):
        """Columns with their means added back (the normalized patterns)."""
        return self.matrix + self.pattern_means[None, :]

    def pattern(self, k):
        return (self.matrix[:, k] + self.pattern_means[k]).reshape(self.window_shape)


def window_views(values, geometry):
    """Stack of raw mask views, shape ``(N, window_height, window_width)``."""
    views = sliding_window_view(values, (geometry.window_height, geometry.window_width))
    offs = np.asarray(geometry.offsets, dtype=np.int64).reshape(-1, 2)
    return views[offs[:, 1], offs[:, 0]]


def capture_ensemble(mask, geometry, beam=None, flux_reference_ma=REFERENCE_RING_MA):
    """Build the illumination ensemble for ``mask`` seen through ``geometry``.

    The mask is treated as a pure absorber: each raw frame is transmission
    times beam profile times ``beam.counts_per_ms``, scaled by the ring
    current at capture time and then flux corrected back to
    ``flux_reference_ma``.
    """
    beam = beam or BeamModel()
    geometry.check_bounds(mask.width, mask.height)
    h, w = geometry.window_height, geometry.window_width
    profile = beam.profile_grid(h, w) * beam.counts_per_ms
    views = window_views(mask.values, geometry) * profile[None, :, :]

    currents = np.array([beam.ring_current(k) for k in range(len(geometry.offsets))])
    raw = views * (currents / REFERENCE_RING_MA)[:, None, None]
    corrected = raw * (flux_reference_ma / currents)[:, None, None]

    norm_max = float(corrected.max())
    if not norm_max > 0:
        raise ValidationError("all captured frames are dark; cannot normalize", "mask")
    patterns = corrected.reshape(len(geometry.offsets), h * w) / norm_max
    means = patterns.mean(axis=1)
    matrix = (patterns - means[:, None]).T
    # second pass removes the rounding residue of the first mean
    matrix = matrix - matrix.mean(axis=0)[None, :]
    return IlluminationEnsemble(np.ascontiguousarray(matrix), means, geometry, norm_max, flux_reference_ma)


# --------------------------------------------------------------------------
# archive


def save_ensemble(ensemble, directory):
    """Write the ensemble archive (meta.txt, offsets.csv, means.csv, matrix.bin)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = ensemble.geometry
    (d / "meta.txt").write_text(
        f"windowWidth={g.window_width}\n"
        f"windowHeight={g.window_height}\n"
        f"N={ensemble.n_patterns}\n"
        f"normalizationMax={ensemble.normalization_max!r}\n"
        f"fluxReferenceMa={ensemble.flux_reference_ma!r}\n"
    )
    (d / "offsets.csv").write_text("".join(f"{k},{dx},{dy}\n" for k, (dx, dy) in enumerate(g.offsets)))
    (d / "means.csv").write_text("".join(f"{k},{float(m)!r}\n" for k, m in enumerate(ensemble.pattern_means)))
    rows, cols = ensemble.matrix.shape
    with open(d / "matrix.bin", "wb") as fh:
        fh.write(np.array([rows, cols], dtype="<u8").tobytes())
        fh.write(np.asfortranarray(ensemble.matrix).astype("<f8").tobytes(order="F"))
    return d


def load_ensemble(directory):
    d = Path(directory)
    meta = {}
    for line in (d / "meta.txt").read_text().splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    offsets = []
    for line in (d / "offsets.csv").read_text().splitlines():
        if line.strip():
            k, dx, dy = line.split(",")
            offsets.append((int(dx), int(dy)))
    means = [float(line.split(",")[1]) for line in (d / "means.csv").read_text().splitlines() if line.strip()]
    raw = (d / "matrix.bin").read_bytes()
    rows, cols = (int(v) for v in np.frombuffer(raw[:16], dtype="<u8"))
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != rows * cols:
        raise ValidationError("matrix.bin size does not match its header", "matrix")
    matrix = data.reshape((rows, cols), order="F")
    geometry = WindowGeometry(int(meta["windowWidth"]), int(meta["windowHeight"]), tuple(offsets))
    if int(meta["N"]) != cols:
        raise ValidationError("meta.txt N disagrees with matrix.bin", "N")
    return IlluminationEnsemble(
        np.ascontiguousarray(matrix),
        np.array(means),
        geometry,
        float(meta["normalizationMax"]),
        float(meta["fluxReferenceMa"]),
    )
