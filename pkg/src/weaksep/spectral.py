"""Discretized eigenanalysis of covariance kernels and score projection.

Kernels are treated as integral operators f -> dt * K f on the uniform
time grid, so eigenfunctions are normalized to dt * ||psi||^2 = 1 and
eigenvalues carry the dt weight. The two eigen-systems of interest (plain
and lag covariance) are aligned by greedy matching on absolute
eigenfunction inner products.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .field import FunctionalField, Kernel

__all__ = [
    "EigenSystem",
    "Matching",
    "eigen_decompose",
    "select_truncation",
    "match_eigenpairs",
    "project_scores",
]


@dataclass
class EigenSystem:
    """Descending eigenvalues and dt-orthonormal eigenfunctions of a kernel."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # shape (n_components, T)
    dt: float

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.eigenvalues > 0.0))


@dataclass
class Matching:
    """Injective assignment from lag-system indices to plain-system indices."""

    assignment: np.ndarray  # assignment[r] = matched plain index
    inner_products: np.ndarray  # |dt <psi_r^(h), psi_{r'}>| achieved


def eigen_decompose(kernel: Kernel, max_components: int | None = None) -> EigenSystem:
    """Eigenpairs of the operator f -> dt * K f, sorted descending.

    Negative eigenvalues are retained at the tail. Each eigenfunction is
    normalized to dt * ||psi||^2 = 1 with its largest-magnitude entry made
    positive, so repeated runs produce identical signs.
    """
    t = kernel.size
    if max_components is None:
        max_components = t
    if not (1 <= max_components <= t):
        raise DomainError(f"max_components must lie in [1, {t}], got {max_components}")
    a = kernel.dt * 0.5 * (kernel.values + kernel.values.T)
    eigvals, eigvecs = np.linalg.eigh(a)
    order = np.argsort(eigvals)[::-1][:max_components]
    values = eigvals[order]
    funcs = eigvecs[:, order].T / np.sqrt(kernel.dt)
    flip = funcs[np.arange(funcs.shape[0]), np.argmax(np.abs(funcs), axis=1)] < 0.0
    funcs[flip] *= -1.0
    return EigenSystem(eigenvalues=values, eigenfunctions=funcs, dt=kernel.dt)


def select_truncation(eigs: EigenSystem, fve: float) -> int:
    """Smallest R whose positive eigenvalues explain the requested variance.

    Negative empirical eigenvalues are excluded from both the numerator
    and the denominator. R is floored at 2 since a single component
    admits no component pair.
    """
    if not (0.0 < fve <= 1.0):
        raise DomainError(f"fve must lie in (0, 1], got {fve!r}")
    values = eigs.eigenvalues
    positive = values[values > 0.0]
    if positive.size == 0:
        raise DomainError("no positive eigenvalue to truncate on")
    share = np.cumsum(positive) / np.sum(positive)
    r = int(np.searchsorted(share, fve - 1e-12) + 1)
    r = max(r, 2)
    if eigs.n_components < 2:
        raise DomainError("eigen-system holds fewer than two components")
    return min(r, eigs.n_components)


def achieved_fve(eigs: EigenSystem, r: int) -> float:
    """Positive-part variance share of the leading r components."""
    values = eigs.eigenvalues
    positive = values[values > 0.0]
    if positive.size == 0:
        return 0.0
    return float(np.sum(values[:r][values[:r] > 0.0]) / np.sum(positive))


def match_eigenpairs(lag_sys: EigenSystem, plain_sys: EigenSystem, r: int) -> Matching:
    """Greedily pair each lag component with its closest plain component.

    In descending lag-eigenvalue order, component r takes the not yet
    matched plain component maximizing |dt <psi_r^(h), psi_{r'}>|, searched
    over all plain components. Greedy exclusion keeps the assignment
    injective when two lag components prefer the same plain component.
    """
    if lag_sys.n_components < r or plain_sys.n_components < r:
        raise DomainError(
            f"matching {r} components needs at least {r} on both sides, "
            f"got {lag_sys.n_components} (lag) and {plain_sys.n_components} (plain)"
        )
    cross = np.abs(lag_sys.dt * (lag_sys.eigenfunctions[:r] @ plain_sys.eigenfunctions.T))
    assignment = np.full(r, -1, dtype=np.int64)
    achieved = np.zeros(r)
    taken = np.zeros(plain_sys.n_components, dtype=bool)
    for i in range(r):
        scores = np.where(taken, -np.inf, cross[i])
        j = int(np.argmax(scores))
        assignment[i] = j
        achieved[i] = cross[i, j]
        taken[j] = True
    return Matching(assignment=assignment, inner_products=achieved)


def project_scores(field: FunctionalField, mean: np.ndarray, eigenfunctions: np.ndarray) -> np.ndarray:
    """Project centered curves on eigenfunctions: dt * <X_i - mean, psi_r>.

    Returns the N-by-R score table.
    """
    funcs = np.atleast_2d(np.asarray(eigenfunctions, dtype=float))
    mean = np.asarray(mean, dtype=float)
    if funcs.shape[1] != field.n_times or mean.size != field.n_times:
        raise DomainError(
            f"eigenfunction/mean length must equal {field.n_times} time points"
        )
    return field.dt * (field.values - mean) @ funcs.T
