"""Regular-lattice geometry: locations, lag pairs, and distance multisets.

Locations live on an nx-by-ny lattice with a common spacing. All pair
machinery is ORDERED: a matched unordered pair {i, i'} contributes both
(i, i') and (i', i). Distances are handled through integer squared lattice
offsets, which makes distance matching and merging exact.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

__all__ = ["SpatialGrid", "PairSet", "build_regular_grid", "lag_pairs", "distance_multiset"]


@dataclass(frozen=True)
class SpatialGrid:
    """An nx-by-ny lattice with coordinates (i*spacing, j*spacing), row-major."""

    nx: int
    ny: int
    spacing: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise DomainError(f"grid dimensions must be positive, got ({self.nx}, {self.ny})")
        if not np.isfinite(self.spacing) or self.spacing <= 0.0:
            raise DomainError(f"grid spacing must be positive, got {self.spacing!r}")

    @property
    def n_locations(self) -> int:
        return self.nx * self.ny

    @cached_property
    def lattice_coords(self) -> np.ndarray:
        """Integer (i, j) lattice coordinates, shape (N, 2), row-major order."""
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        return np.column_stack([ii.ravel(), jj.ravel()]).astype(np.int64)

    @cached_property
    def locations(self) -> np.ndarray:
        """Physical (x, y) coordinates, shape (N, 2)."""
        return self.lattice_coords * self.spacing

    @property
    def diameter(self) -> float:
        """Largest pairwise distance on the lattice."""
        return self.spacing * float(np.hypot(self.nx - 1, self.ny - 1))


@dataclass
class PairSet:
    """Ordered location-index pairs at a common lag distance.

    ``pairs`` has shape (count, 2); for every matched unordered pair both
    orientations appear, and (i, i) never does.
    """

    lag: float
    pairs: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    @property
    def count(self) -> int:
        return self.pairs.shape[0]


def build_regular_grid(nx: int, ny: int, spacing: float) -> SpatialGrid:
    """Build the nx-by-ny lattice with the given spacing."""
    return SpatialGrid(nx=nx, ny=ny, spacing=spacing)


def _matching_offsets(grid: SpatialGrid, h: float, tol: float) -> list[tuple[int, int]]:
    """All integer offsets (di, dj) whose lattice distance is within tol of h."""
    out = []
    for di in range(-(grid.nx - 1), grid.nx):
        for dj in range(-(grid.ny - 1), grid.ny):
            if di == 0 and dj == 0:
                continue
            d = grid.spacing * float(np.hypot(di, dj))
            if abs(d - h) <= tol:
                out.append((di, dj))
    return out


def _offset_pair_indices(grid: SpatialGrid, di: int, dj: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major indices (i, i') of every pair with s_{i'} - s_i = (di, dj)*spacing."""
    i0 = np.arange(max(0, -di), grid.nx - max(0, di))
    j0 = np.arange(max(0, -dj), grid.ny - max(0, dj))
    ii, jj = np.meshgrid(i0, j0, indexing="ij")
    left = ii.ravel() * grid.ny + jj.ravel()
    right = (ii.ravel() + di) * grid.ny + (jj.ravel() + dj)
    return left, right


def lag_pairs(grid: SpatialGrid, h: float, tol: float | None = None) -> PairSet:
    """Enumerate all ordered pairs separated by distance h (within tol).

    Ordering is lexicographic by (i, i') so pair indices are reproducible.
    An empty PairSet is a valid result.
    """
    if not np.isfinite(h) or h <= 0.0:
        raise DomainError(f"lag distance must be positive, got {h!r}")
    if tol is None:
        tol = 1e-9 * grid.spacing
    if tol < 0.0:
        raise DomainError(f"tolerance must be nonnegative, got {tol!r}")
    lefts, rights = [], []
    for di, dj in _matching_offsets(grid, h, tol):
        left, right = _offset_pair_indices(grid, di, dj)
        lefts.append(left)
        rights.append(right)
    if not lefts:
        return PairSet(lag=h, pairs=np.empty((0, 2), dtype=np.int64))
    i = np.concatenate(lefts)
    ip = np.concatenate(rights)
    order = np.lexsort((ip, i))
    return PairSet(lag=h, pairs=np.column_stack([i[order], ip[order]]))


def squared_distance_multiset(grid: SpatialGrid) -> dict[int, int]:
    """Ordered-pair counts keyed by integer squared lattice offset di^2+dj^2."""
    counts: dict[int, int] = {}
    for di in range(-(grid.nx - 1), grid.nx):
        n_i = grid.nx - abs(di)
        for dj in range(-(grid.ny - 1), grid.ny):
            if di == 0 and dj == 0:
                continue
            d2 = di * di + dj * dj
            counts[d2] = counts.get(d2, 0) + n_i * (grid.ny - abs(dj))
    return counts


def distance_multiset(grid: SpatialGrid) -> dict[float, int]:
    """Map each distinct pairwise distance to its ordered-pair count.

    Distances are exact on the lattice (keyed by integer squared offsets,
    so merging needs no floating-point tolerance); the counts sum to
    N(N-1) over all keys.
    """
    sq = squared_distance_multiset(grid)
    return {grid.spacing * float(np.sqrt(d2)): n for d2, n in sorted(sq.items())}
