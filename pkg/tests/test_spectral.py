"""Eigenanalysis, truncation, matching, and score projection."""

import numpy as np
import pytest

from weaksep.errors import DomainError
from weaksep.field import FunctionalField, Kernel, sample_covariance, sample_mean
from weaksep.grid import build_regular_grid
from weaksep.numerics import SeededRng
from weaksep.spectral import (
    EigenSystem,
    eigen_decompose,
    match_eigenpairs,
    project_scores,
    select_truncation,
)


def jacobi_eigenvalues(a: np.ndarray, sweeps: int = 50) -> np.ndarray:
    """Classical Jacobi rotations, an eigensolver independent of LAPACK."""
    a = a.copy().astype(float)
    n = a.shape[0]
    for _ in range(sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max()
        if off < 1e-14:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def random_kernel(t, dt, seed=0):
    rng = SeededRng(seed)
    m = rng.standard_normal((t, t))
    return Kernel(values=(m + m.T) / 2.0, dt=dt)


class TestEigenDecompose:
    def test_zero_kernel(self):
        eigs = eigen_decompose(Kernel(values=np.zeros((4, 4)), dt=0.25))
        assert np.allclose(eigs.eigenvalues, 0.0)

    def test_rank_one_kernel(self):
        dt = 0.2
        psi = np.array([1.0, -1.0, 1.0, -1.0, 1.0]) / np.sqrt(5 * dt)  # dt-orthonormal
        eigs = eigen_decompose(Kernel(values=np.outer(psi, psi), dt=dt))
        assert eigs.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(eigs.eigenvalues[1:], 0.0, atol=1e-12)
        assert np.allclose(np.abs(eigs.eigenfunctions[0]), np.abs(psi), atol=1e-10)

    def test_jacobi_oracle(self):
        kernel = random_kernel(8, 0.1, seed=21)
        eigs = eigen_decompose(kernel)
        oracle = jacobi_eigenvalues(0.1 * kernel.values)
        assert np.allclose(eigs.eigenvalues, oracle, atol=1e-10)

    def test_orthonormality_and_residual(self):
        kernel = random_kernel(10, 0.05, seed=3)
        eigs = eigen_decompose(kernel)
        gram = kernel.dt * eigs.eigenfunctions @ eigs.eigenfunctions.T
        assert np.allclose(gram, np.eye(10), atol=1e-8)
        for lam, psi in zip(eigs.eigenvalues, eigs.eigenfunctions):
            resid = np.linalg.norm(kernel.dt * kernel.values @ psi - lam * psi)
            assert resid <= 1e-8 * (abs(eigs.eigenvalues[0]) + 1.0)

    def test_descending_with_negatives_at_tail(self):
        kernel = random_kernel(6, 0.3, seed=5)
        eigs = eigen_decompose(kernel)
        assert np.all(np.diff(eigs.eigenvalues) <= 1e-14)

    def test_sign_convention(self):
        kernel = random_kernel(7, 0.2, seed=6)
        eigs = eigen_decompose(kernel)
        for psi in eigs.eigenfunctions:
            assert psi[np.argmax(np.abs(psi))] > 0.0

    def test_eigenvalue_sum_equals_weighted_trace(self):
        kernel = random_kernel(9, 0.11, seed=7)
        eigs = eigen_decompose(kernel)
        total = float(np.sum(eigs.eigenvalues))
        trace = kernel.dt * float(np.trace(kernel.values))
        assert total == pytest.approx(trace, rel=1e-10)

    def test_max_components_truncates(self):
        kernel = random_kernel(6, 0.5, seed=8)
        eigs = eigen_decompose(kernel, max_components=3)
        assert eigs.n_components == 3
        with pytest.raises(DomainError):
            eigen_decompose(kernel, max_components=7)


class TestSelectTruncation:
    def make(self, values):
        vals = np.asarray(values, dtype=float)
        funcs = np.eye(vals.size)
        return EigenSystem(eigenvalues=vals, eigenfunctions=funcs, dt=1.0)

    def test_cumulative_shares(self):
        assert select_truncation(self.make([4, 3, 2, 1]), 0.8) == 3

    def test_full_variance(self):
        assert select_truncation(self.make([4, 3, 2, 1]), 1.0) == 4
        assert select_truncation(self.make([4, 3, -1, -2]), 1.0) == 2

    def test_floor_at_two(self):
        assert select_truncation(self.make([5.0, 5e-12]), 0.5) == 2

    def test_no_positive_eigenvalue(self):
        with pytest.raises(DomainError):
            select_truncation(self.make([-1.0, -2.0]), 0.9)

    def test_monotone_in_fve(self):
        eigs = self.make([5, 4, 3, 2, 1, 0.5])
        previous = 0
        for fve in [0.2, 0.4, 0.6, 0.8, 0.9, 0.99, 1.0]:
            r = select_truncation(eigs, fve)
            assert r >= previous
            previous = r

    def test_invalid_fve(self):
        with pytest.raises(DomainError):
            select_truncation(self.make([1.0, 1.0]), 0.0)


class TestMatchEigenpairs:
    def orthonormal_system(self, t, dt, seed, values):
        rng = SeededRng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((t, t)))
        funcs = q.T / np.sqrt(dt)
        return EigenSystem(eigenvalues=np.asarray(values, dtype=float), eigenfunctions=funcs, dt=dt)

    def test_self_match_is_identity(self):
        sys = self.orthonormal_system(6, 0.2, 1, [6, 5, 4, 3, 2, 1])
        matching = match_eigenpairs(sys, sys, 4)
        assert np.array_equal(matching.assignment, [0, 1, 2, 3])
        assert np.allclose(matching.inner_products, 1.0, atol=1e-10)

    def test_recovers_permutation(self):
        sys = self.orthonormal_system(5, 0.25, 2, [5, 4, 3, 2, 1])
        permuted = EigenSystem(
            eigenvalues=sys.eigenvalues[[1, 0, 2, 3, 4]],
            eigenfunctions=sys.eigenfunctions[[1, 0, 2, 3, 4]],
            dt=sys.dt,
        )
        matching = match_eigenpairs(sys, permuted, 2)
        assert np.array_equal(matching.assignment, [1, 0])

    def test_sign_flip_invariance(self):
        sys = self.orthonormal_system(5, 0.25, 3, [5, 4, 3, 2, 1])
        flipped = EigenSystem(
            eigenvalues=sys.eigenvalues, eigenfunctions=-sys.eigenfunctions, dt=sys.dt
        )
        matching = match_eigenpairs(sys, flipped, 3)
        assert np.array_equal(matching.assignment, [0, 1, 2])
        assert np.allclose(matching.inner_products, 1.0, atol=1e-10)

    def test_greedy_exclusion_keeps_injectivity(self):
        # two lag components closest to the same plain component
        dt = 1.0
        plain = EigenSystem(
            eigenvalues=np.array([2.0, 1.0]),
            eigenfunctions=np.eye(2),
            dt=dt,
        )
        tilted = np.array([[0.9, np.sqrt(1 - 0.81)], [0.8, np.sqrt(1 - 0.64)]])
        lag = EigenSystem(eigenvalues=np.array([3.0, 2.0]), eigenfunctions=tilted, dt=dt)
        matching = match_eigenpairs(lag, plain, 2)
        assert sorted(matching.assignment.tolist()) == [0, 1]

    def test_needs_enough_components(self):
        sys = self.orthonormal_system(4, 0.25, 4, [4, 3, 2, 1])
        with pytest.raises(DomainError):
            match_eigenpairs(sys, sys, 5)


class TestProjectScores:
    def test_recovers_coefficients(self):
        grid = build_regular_grid(1, 4, 1.0)
        dt = 0.25
        t = np.arange(4) * dt
        psi = np.array([1.0, 1.0, -1.0, -1.0]) / np.sqrt(4 * dt)
        mu = np.array([0.3, -0.1, 0.2, 0.0])
        c = np.array([1.0, -2.0, 0.5, 0.5])
        values = mu + np.outer(c, psi)
        field = FunctionalField(grid=grid, time_points=t, values=values)
        scores = project_scores(field, mu, psi[None, :])
        assert np.allclose(scores[:, 0], c, atol=1e-12)

    def test_orthogonal_direction_gives_zero(self):
        grid = build_regular_grid(1, 4, 1.0)
        dt = 0.25
        t = np.arange(4) * dt
        psi = np.array([1.0, 1.0, -1.0, -1.0]) / np.sqrt(4 * dt)
        other = np.array([1.0, -1.0, 1.0, -1.0]) / np.sqrt(4 * dt)
        mu = np.zeros(4)
        field = FunctionalField(grid=grid, time_points=t, values=np.outer([1.0, 2.0, 3.0, 4.0], psi))
        scores = project_scores(field, mu, other[None, :])
        assert np.allclose(scores, 0.0, atol=1e-12)

    def test_sign_flip_linearity(self):
        field_rng = SeededRng(9)
        grid = build_regular_grid(2, 2, 1.0)
        t = np.arange(5) * 0.2
        field = FunctionalField(grid=grid, time_points=t, values=field_rng.standard_normal((4, 5)))
        psi = field_rng.standard_normal(5)
        base = project_scores(field, np.zeros(5), psi[None, :])
        flipped = project_scores(field, np.zeros(5), -psi[None, :])
        assert np.allclose(flipped, -base, atol=1e-14)

    def test_length_mismatch(self):
        field = FunctionalField(
            grid=build_regular_grid(1, 2, 1.0),
            time_points=[0.0, 0.5, 1.0],
            values=np.zeros((2, 3)),
        )
        with pytest.raises(DomainError):
            project_scores(field, np.zeros(3), np.zeros((1, 4)))


class TestKlReconstruction:
    def test_smooth_field_reconstructs(self):
        grid = build_regular_grid(4, 4, 0.5)
        t = (np.arange(30) + 0.5) / 30.0
        rng = SeededRng(31)
        coef = rng.standard_normal((grid.n_locations, 3))
        basis = np.stack([np.sqrt(2) * np.cos(np.pi * t), np.sqrt(2) * np.sin(np.pi * t), np.ones_like(t)])
        values = 1.0 + t**2 + coef @ basis
        field = FunctionalField(grid=grid, time_points=t, values=values)
        mu = sample_mean(field)
        eigs = eigen_decompose(sample_covariance(field))
        keep = eigs.eigenvalues > 0.0
        funcs = eigs.eigenfunctions[keep]
        scores = project_scores(field, mu, funcs)
        recon = mu + scores @ funcs
        scale = np.max(np.abs(field.values))
        assert np.allclose(recon, field.values, atol=1e-6 * scale)
