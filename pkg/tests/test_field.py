"""Field file I/O and the covariance estimators vs brute-force oracles."""

import io

import numpy as np
import pytest

from weaksep.errors import DomainError, ParseError
from weaksep.field import (
    FunctionalField,
    Kernel,
    lag_covariance,
    load_field,
    sample_covariance,
    sample_mean,
    smoothed_lag_covariance,
    write_field,
)
from weaksep.grid import PairSet, build_regular_grid, lag_pairs
from weaksep.numerics import SeededRng


def make_field(nx, ny, n_times, seed=0, spacing=1.0):
    rng = SeededRng(seed)
    grid = build_regular_grid(nx, ny, spacing)
    t = np.linspace(0.0, 1.0, n_times)
    values = rng.standard_normal((grid.n_locations, n_times))
    return FunctionalField(grid=grid, time_points=t, values=values)


MINIMAL_FILE = "x,y,0.0,0.5,1.0\n0.0,0.0,1.0,2.0,3.0\n0.0,1.0,4.0,5.0,6.0\n"


class TestLoadField:
    def test_minimal_file(self):
        field = load_field(io.StringIO(MINIMAL_FILE))
        assert field.n_locations == 2
        assert field.n_times == 3
        assert field.grid.nx == 1 and field.grid.ny == 2
        assert np.allclose(field.values, [[1, 2, 3], [4, 5, 6]])

    def test_nan_entry_names_cell(self):
        text = MINIMAL_FILE.replace("5.0", "nan")
        with pytest.raises(ParseError, match=r"line 3.*column 4"):
            load_field(io.StringIO(text))

    def test_round_trip(self):
        field = make_field(3, 4, 5, seed=11, spacing=0.25)
        buf = io.StringIO()
        write_field(field, buf)
        again = load_field(io.StringIO(buf.getvalue()))
        assert np.array_equal(again.values, field.values)
        assert np.array_equal(again.time_points, field.time_points)
        assert again.grid == field.grid

    def test_write_is_deterministic(self, tmp_path):
        field = make_field(2, 3, 4, seed=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_field(field, p1)
        write_field(field, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header(self):
        with pytest.raises(ParseError, match="line 1"):
            load_field(io.StringIO("lon,lat,0.0\n0.0,0.0,1.0\n"))

    def test_ragged_row(self):
        text = "x,y,0.0,1.0\n0.0,0.0,1.0,2.0\n0.0,1.0,3.0\n"
        with pytest.raises(ParseError, match="line 3"):
            load_field(io.StringIO(text))

    def test_non_uniform_times(self):
        text = "x,y,0.0,0.5,2.0\n0.0,0.0,1.0,2.0,3.0\n0.0,1.0,4.0,5.0,6.0\n"
        with pytest.raises(ParseError, match="uniform"):
            load_field(io.StringIO(text))

    def test_incomplete_lattice(self):
        text = "x,y,0.0,1.0\n0.0,0.0,1.0,2.0\n1.0,0.0,3.0,4.0\n1.0,1.0,5.0,6.0\n"
        with pytest.raises(ParseError, match="incomplete"):
            load_field(io.StringIO(text))

    def test_rows_in_any_order(self):
        shuffled = "x,y,0.0,1.0\n1.0,0.0,3.0,4.0\n0.0,0.0,1.0,2.0\n"
        field = load_field(io.StringIO(shuffled))
        assert np.allclose(field.values, [[1, 2], [3, 4]])

    def test_nonzero_origin_accepted(self):
        text = "x,y,0.0,1.0\n5.0,7.0,1.0,2.0\n5.5,7.0,3.0,4.0\n"
        field = load_field(io.StringIO(text))
        assert field.grid.spacing == pytest.approx(0.5)


class TestKernelInvariants:
    def test_rejects_asymmetric(self):
        with pytest.raises(DomainError, match="asymmetric"):
            Kernel(values=np.array([[1.0, 2.0], [0.0, 1.0]]), dt=0.1)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            Kernel(values=np.array([[np.inf, 0.0], [0.0, 1.0]]), dt=0.1)

    def test_field_rejects_non_uniform_times(self):
        grid = build_regular_grid(1, 2, 1.0)
        with pytest.raises(DomainError):
            FunctionalField(grid=grid, time_points=[0.0, 0.5, 2.0], values=np.zeros((2, 3)))


class TestSampleMean:
    def test_identical_curves(self):
        grid = build_regular_grid(2, 2, 1.0)
        g = np.array([1.0, -2.0, 0.5])
        field = FunctionalField(grid=grid, time_points=[0, 0.5, 1.0], values=np.tile(g, (4, 1)))
        assert np.allclose(sample_mean(field), g)

    def test_midpoint(self):
        grid = build_regular_grid(1, 2, 1.0)
        values = np.array([[0.0, 0.0], [2.0, 2.0]])
        field = FunctionalField(grid=grid, time_points=[0.0, 1.0], values=values)
        assert np.allclose(sample_mean(field), [1.0, 1.0])

    def test_double_loop_oracle(self):
        field = make_field(1, 5, 4, seed=2)
        expected = np.array(
            [sum(field.values[i][j] for i in range(5)) / 5.0 for j in range(4)]
        )
        assert np.allclose(sample_mean(field), expected, atol=1e-14)


class TestSampleCovariance:
    def test_identical_curves_give_zero(self):
        grid = build_regular_grid(2, 2, 1.0)
        field = FunctionalField(
            grid=grid, time_points=[0, 0.5, 1.0], values=np.tile([1.0, 2.0, 3.0], (4, 1))
        )
        assert np.allclose(sample_covariance(field).values, 0.0, atol=1e-14)

    def test_rank_one(self):
        grid = build_regular_grid(1, 4, 1.0)
        psi = np.array([0.5, -0.5, 0.5, -0.5]) * 2.0  # dt-orthonormal for dt=0.25
        c = np.array([1.0, -1.0, 2.0, -2.0])
        t = np.arange(4) * 0.25
        field = FunctionalField(grid=grid, time_points=t, values=np.outer(c, psi))
        expected = float(np.mean(c**2)) * np.outer(psi, psi)
        assert np.allclose(sample_covariance(field).values, expected, atol=1e-12)

    def test_double_loop_oracle(self):
        field = make_field(2, 3, 5, seed=9)
        mu = sample_mean(field)
        n = field.n_locations
        expected = np.zeros((5, 5))
        for a in range(5):
            for b in range(5):
                expected[a, b] = (
                    sum((field.values[i, a] - mu[a]) * (field.values[i, b] - mu[b]) for i in range(n)) / n
                )
        assert np.allclose(sample_covariance(field).values, expected, atol=1e-12)

    def test_needs_two_locations(self):
        with pytest.raises(DomainError):
            sample_covariance(make_field(1, 1, 3))

    def test_positive_semidefinite(self):
        field = make_field(3, 3, 6, seed=4)
        eigs = np.linalg.eigvalsh(sample_covariance(field).values)
        assert eigs.min() >= -1e-10 * eigs.max()


class TestLagCovariance:
    def test_identical_curves_give_zero(self):
        grid = build_regular_grid(1, 3, 1.0)
        field = FunctionalField(
            grid=grid, time_points=[0.0, 1.0], values=np.tile([1.0, 2.0], (3, 1))
        )
        pairs = lag_pairs(grid, 1.0)
        assert np.allclose(lag_covariance(field, pairs).values, 0.0, atol=1e-14)

    def test_two_location_hand_computation(self):
        grid = build_regular_grid(1, 2, 1.0)
        f, g = np.array([1.0, 3.0]), np.array([2.0, -1.0])
        field = FunctionalField(grid=grid, time_points=[0.0, 1.0], values=np.stack([f, g]))
        mu = (f + g) / 2.0
        fc, gc = f - mu, g - mu
        expected = 0.5 * (np.outer(fc, gc) + np.outer(gc, fc))
        pairs = lag_pairs(grid, 1.0)
        assert np.allclose(lag_covariance(field, pairs).values, expected, atol=1e-14)

    def test_brute_force_oracle(self):
        field = make_field(3, 3, 4, seed=5)
        pairs = lag_pairs(field.grid, 1.0)
        mu = sample_mean(field)
        expected = np.zeros((4, 4))
        for i, ip in pairs.pairs:
            expected += np.outer(field.values[i] - mu, field.values[ip] - mu)
        expected /= pairs.count
        assert np.allclose(lag_covariance(field, pairs).values, expected, atol=1e-12)

    def test_empty_pairs(self):
        field = make_field(2, 2, 3)
        empty = PairSet(lag=9.0, pairs=np.empty((0, 2), dtype=np.int64))
        with pytest.raises(DomainError, match="no pairs"):
            lag_covariance(field, empty)

    def test_self_pairs_recover_sample_covariance(self):
        field = make_field(3, 2, 4, seed=6)
        n = field.n_locations
        self_pairs = PairSet(lag=1.0, pairs=np.column_stack([np.arange(n), np.arange(n)]))
        got = lag_covariance(field, self_pairs).values
        assert np.allclose(got, sample_covariance(field).values, atol=1e-12)


class TestEstimatorInvariances:
    def test_translation_invariance(self):
        field = make_field(3, 3, 5, seed=7)
        shift = np.sin(np.linspace(0, 2, 5)) * 10.0
        shifted = FunctionalField(
            grid=field.grid, time_points=field.time_points, values=field.values + shift
        )
        pairs = lag_pairs(field.grid, 1.0)
        scale = np.max(np.abs(sample_covariance(field).values))
        assert np.allclose(
            sample_covariance(field).values, sample_covariance(shifted).values,
            atol=1e-10 * scale,
        )
        assert np.allclose(
            lag_covariance(field, pairs).values, lag_covariance(shifted, pairs).values,
            atol=1e-10 * scale,
        )

    def test_scale_equivariance(self):
        field = make_field(2, 3, 4, seed=8)
        c = 3.7
        scaled = FunctionalField(
            grid=field.grid, time_points=field.time_points, values=c * field.values
        )
        pairs = lag_pairs(field.grid, 1.0)
        assert np.allclose(
            sample_covariance(scaled).values, c**2 * sample_covariance(field).values, rtol=1e-12
        )
        assert np.allclose(
            lag_covariance(scaled, pairs).values, c**2 * lag_covariance(field, pairs).values,
            rtol=1e-12,
        )


class TestSmoothedLagCovariance:
    def test_small_bandwidth_matches_exact_estimator(self):
        field = make_field(3, 3, 4, seed=10)
        pairs = lag_pairs(field.grid, 1.0)
        exact = lag_covariance(field, pairs).values
        smoothed = smoothed_lag_covariance(field, 1.0, bandwidth=0.2).values
        assert np.allclose(smoothed, exact, atol=1e-12)

    def test_single_distance_class_hand_computation(self):
        grid = build_regular_grid(1, 2, 1.0)
        f, g = np.array([2.0, 0.0]), np.array([0.0, 4.0])
        field = FunctionalField(grid=grid, time_points=[0.0, 1.0], values=np.stack([f, g]))
        mu = (f + g) / 2.0
        fc, gc = f - mu, g - mu
        expected = 0.5 * (np.outer(fc, gc) + np.outer(gc, fc))
        got = smoothed_lag_covariance(field, 1.05, bandwidth=0.5).values
        assert np.allclose(got, expected, atol=1e-12)

    def test_all_weights_zero(self):
        field = make_field(2, 2, 3)
        with pytest.raises(DomainError, match="weight"):
            smoothed_lag_covariance(field, 17.0, bandwidth=0.1)

    def test_wider_bandwidth_blends_distances(self):
        field = make_field(3, 3, 4, seed=12)
        # bandwidth covering lags 1 and sqrt(2): weighted blend of the exact kernels
        k1 = lag_covariance(field, lag_pairs(field.grid, 1.0)).values
        k2 = lag_covariance(field, lag_pairs(field.grid, np.sqrt(2.0))).values
        h, bw = 1.2, 0.5
        w1 = 0.75 * (1.0 - ((h - 1.0) / bw) ** 2) / bw
        w2 = 0.75 * (1.0 - ((h - np.sqrt(2.0)) / bw) ** 2) / bw
        expected = (w1 * 24 * k1 + w2 * 16 * k2) / (w1 * 24 + w2 * 16)
        blended = smoothed_lag_covariance(field, h, bandwidth=bw).values
        assert np.allclose(blended, 0.5 * (expected + expected.T), atol=1e-10)
