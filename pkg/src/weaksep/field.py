"""The observed-data model and its covariance estimators.

A FunctionalField is an N-location by T-timepoint value table on a
SpatialGrid with a uniform time grid. The estimators here are the pooled
sample mean, the sample covariance, the lag covariance over an ordered
PairSet, and a kernel-smoothed lag covariance for off-lattice lags.
"""

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .grid import PairSet, SpatialGrid, _offset_pair_indices

__all__ = [
    "FunctionalField",
    "Kernel",
    "load_field",
    "write_field",
    "sample_mean",
    "sample_covariance",
    "lag_covariance",
    "smoothed_lag_covariance",
]

_TIME_UNIFORMITY_RTOL = 1e-9
_KERNEL_SYMMETRY_RTOL = 1e-10


@dataclass
class FunctionalField:
    """Observed field values[i][j] = X(s_i, t_j) on a lattice of locations."""

    grid: SpatialGrid
    time_points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.time_points = np.asarray(self.time_points, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        t = self.time_points
        if t.ndim != 1 or t.size < 2:
            raise DomainError("time grid must hold at least two points")
        steps = np.diff(t)
        if np.any(steps <= 0.0):
            raise DomainError("time points must be strictly increasing")
        dt = float(np.mean(steps))
        if np.max(np.abs(steps - dt)) > _TIME_UNIFORMITY_RTOL * abs(dt):
            raise DomainError("time grid is not uniform")
        if self.values.shape != (self.grid.n_locations, t.size):
            raise DomainError(
                f"value table shape {self.values.shape} does not match "
                f"{self.grid.n_locations} locations x {t.size} time points"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("field values must all be finite")

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float(self.time_points[1] - self.time_points[0])


@dataclass
class Kernel:
    """A symmetric T-by-T discretized covariance surface with its time step."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DomainError(f"kernel must be square, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("kernel entries must all be finite")
        scale = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        asym = float(np.max(np.abs(self.values - self.values.T))) if self.values.size else 0.0
        if asym > _KERNEL_SYMMETRY_RTOL * max(scale, 1e-300):
            raise DomainError("kernel is asymmetric beyond tolerance")
        if not np.isfinite(self.dt) or self.dt <= 0.0:
            raise DomainError(f"kernel time step must be positive, got {self.dt!r}")

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _parse_float(cell: str, line: int, column: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"cannot parse {cell!r} as a number", line=line, column=column) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite entry {cell!r}", line=line, column=column)
    return v


def _lattice_axis(values: np.ndarray, name: str) -> tuple[np.ndarray, float | None]:
    """Sorted unique axis coordinates and their common step (None if single)."""
    axis = np.unique(values)
    if axis.size == 1:
        return axis, None
    steps = np.diff(axis)
    step = float(np.min(steps))
    if step <= 0.0 or np.max(np.abs(steps - step)) > 1e-9 * step:
        raise ParseError(f"{name}-coordinates do not form a uniformly spaced lattice")
    return axis, step


def load_field(source) -> FunctionalField:
    """Load a FunctionalField from the CSV field file format.

    The first row is ``x,y,<t_1>,...,<t_T>``; each following row is
    ``x,y,v_1,...,v_T``. Rows may appear in any order but must enumerate a
    complete lattice exactly once; the grid is rebuilt from the
    coordinates (any lattice origin is accepted and normalized away).
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_field(fh)
    if isinstance(source, (bytes, bytearray)):
        return load_field(io.StringIO(source.decode("utf-8")))

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty field file", line=1) from None
    header = [c.strip() for c in header]
    if len(header) < 3:
        raise ParseError("header needs x, y and at least one time column", line=1)
    if header[0] != "x" or header[1] != "y":
        raise ParseError(f"header must start with 'x,y', got {header[:2]!r}", line=1, column=1)
    times = np.array([_parse_float(c, 1, k + 3) for k, c in enumerate(header[2:])])
    if times.size >= 2:
        steps = np.diff(times)
        bad = np.where(steps <= 0.0)[0]
        if bad.size:
            raise ParseError("time points must be strictly increasing", line=1, column=int(bad[0]) + 4)
        dt = float(np.mean(steps))
        off = np.abs(steps - dt)
        if np.max(off) > _TIME_UNIFORMITY_RTOL * abs(dt):
            raise ParseError("time grid is not uniform", line=1, column=int(np.argmax(off)) + 4)

    xs, ys, rows = [], [], []
    width = len(header)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} cells, got {len(row)}", line=lineno)
        xs.append(_parse_float(row[0], lineno, 1))
        ys.append(_parse_float(row[1], lineno, 2))
        rows.append([_parse_float(c, lineno, k + 3) for k, c in enumerate(row[2:])])
    if not rows:
        raise ParseError("field file holds no data rows", line=2)

    xs = np.asarray(xs)
    ys = np.asarray(ys)
    x_axis, x_step = _lattice_axis(xs, "x")
    y_axis, y_step = _lattice_axis(ys, "y")
    if x_step is None and y_step is None:
        raise ParseError("cannot infer grid spacing from a single location")
    if x_step is not None and y_step is not None and abs(x_step - y_step) > 1e-9 * x_step:
        raise ParseError(f"x spacing {x_step} and y spacing {y_step} differ")
    spacing = x_step if x_step is not None else y_step
    nx, ny = x_axis.size, y_axis.size
    if len(rows) != nx * ny:
        raise ParseError(f"lattice is incomplete: {len(rows)} rows for a {nx}x{ny} grid")

    grid = SpatialGrid(nx=nx, ny=ny, spacing=float(spacing))
    ix = np.searchsorted(x_axis, xs)
    iy = np.searchsorted(y_axis, ys)
    slot = ix * ny + iy
    if np.unique(slot).size != nx * ny:
        raise ParseError("duplicate lattice locations in field file")
    values = np.empty((nx * ny, times.size))
    values[slot] = np.asarray(rows)
    return FunctionalField(grid=grid, time_points=times, values=values)


def write_field(field: FunctionalField, dest) -> None:
    """Write a field in the CSV format accepted by load_field.

    Floats are written with repr so identical fields produce
    byte-identical files.
    """
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_field(field, fh)
        return
    header = "x,y," + ",".join(repr(float(t)) for t in field.time_points)
    dest.write(header + "\n")
    locs = field.grid.locations
    for i in range(field.n_locations):
        row = [repr(float(locs[i, 0])), repr(float(locs[i, 1]))]
        row.extend(repr(float(v)) for v in field.values[i])
        dest.write(",".join(row) + "\n")


def sample_mean(field: FunctionalField) -> np.ndarray:
    """Pooled sample mean curve over all locations."""
    return field.values.mean(axis=0)


def sample_covariance(field: FunctionalField) -> Kernel:
    """Sample covariance kernel of the pooled, mean-centered curves."""
    if field.n_locations < 2:
        raise DomainError("sample covariance needs at least two locations")
    centered = field.values - sample_mean(field)
    k = centered.T @ centered / field.n_locations
    return Kernel(values=0.5 * (k + k.T), dt=field.dt)


def lag_covariance(field: FunctionalField, pairs: PairSet) -> Kernel:
    """Lag covariance kernel averaged over an ordered pair set.

    With both orientations of every pair present the result is symmetric;
    it is symmetrized anyway to cancel summation-order rounding.
    """
    if pairs.count == 0:
        raise DomainError(f"no pairs at lag {pairs.lag}")
    centered = field.values - sample_mean(field)
    left = centered[pairs.pairs[:, 0]]
    right = centered[pairs.pairs[:, 1]]
    k = left.T @ right / pairs.count
    return Kernel(values=0.5 * (k + k.T), dt=field.dt)


def _epanechnikov(u: np.ndarray | float, bandwidth: float):
    z = np.asarray(u, dtype=float) / bandwidth
    return np.where(np.abs(z) < 1.0, 0.75 * (1.0 - z * z) / bandwidth, 0.0)


def smoothed_lag_covariance(field: FunctionalField, h: float, bandwidth: float) -> Kernel:
    """Kernel-smoothed lag covariance using Epanechnikov distance weights.

    Ordered pairs at every lattice distance within the bandwidth of h
    contribute with weight kappa(h - d); the weighted average is then
    symmetrized. Intended for lags that match no lattice distance exactly.
    """
    if not np.isfinite(h) or h <= 0.0:
        raise DomainError(f"lag must be positive, got {h!r}")
    if not np.isfinite(bandwidth) or bandwidth <= 0.0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth!r}")
    grid = field.grid
    centered = field.values - sample_mean(field)
    acc = np.zeros((field.n_times, field.n_times))
    total_weight = 0.0
    for di in range(-(grid.nx - 1), grid.nx):
        for dj in range(-(grid.ny - 1), grid.ny):
            if di == 0 and dj == 0:
                continue
            d = grid.spacing * float(np.hypot(di, dj))
            w = float(_epanechnikov(h - d, bandwidth))
            if w <= 0.0:
                continue
            left, right = _offset_pair_indices(grid, di, dj)
            acc += w * (centered[left].T @ centered[right])
            total_weight += w * left.size
    if total_weight <= 0.0:
        raise DomainError(f"no pairs carry positive weight at lag {h} with bandwidth {bandwidth}")
    k = acc / total_weight
    return Kernel(values=0.5 * (k + k.T), dt=field.dt)


def pair_product_sums(grid: SpatialGrid, values: np.ndarray) -> dict[int, float]:
    """Sum of values[i]*values[i'] over ordered pairs, keyed by squared offset.

    Used by the correlogram; complements squared_distance_multiset, which
    carries the matching pair counts.
    """
    z = np.asarray(values, dtype=float).reshape(grid.nx, grid.ny)
    sums: dict[int, float] = {}
    for di in range(grid.nx):
        for dj in range(-(grid.ny - 1), grid.ny):
            if di == 0 and dj <= 0:
                continue  # canonical half; (di,dj) and (-di,-dj) carry equal sums
            c0, c1 = max(0, -dj), grid.ny - max(0, dj)
            s = 2.0 * float(np.sum(z[0 : grid.nx - di, c0:c1] * z[di : grid.nx, c0 + dj : c1 + dj]))
            d2 = di * di + dj * dj
            sums[d2] = sums.get(d2, 0.0) + s
    return sums
