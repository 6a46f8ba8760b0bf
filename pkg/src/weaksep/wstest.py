"""The weak-separability test: pair statistics, variances, and the chi-squared combination.

Given one observed field and a spatial lag, the pipeline estimates the
plain and lag covariance kernels, eigen-decomposes both, truncates on the
lag spectrum, matches the two eigen-systems, projects scores on the lag
eigenfunctions, fits a spatial correlation model per component, and
standardizes every pairwise statistic T_h(j,k) by a trace-product
variance. The sum of squared standardized statistics is referred to a
chi-squared law with R(R-1)/2 degrees of freedom.
"""

import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field as dataclass_field
from typing import NamedTuple

import numpy as np

from .errors import (
    DomainError,
    DroppedLagWarning,
    RhoHatRangeWarning,
    SigmaFloorWarning,
    WeakSepWarning,
)
from .field import FunctionalField, lag_covariance, sample_covariance, sample_mean
from .grid import PairSet, SpatialGrid, lag_pairs, squared_distance_multiset
from .numerics import chi_squared_sf
from .spatialcorr import (
    CorrelationModel,
    empirical_correlation,
    eval_correlation_many,
    fit_exponential_wls,
    fit_local_linear,
)
from .spectral import (
    achieved_fve,
    eigen_decompose,
    match_eigenpairs,
    project_scores,
    select_truncation,
)

__all__ = [
    "PairStat",
    "TestReport",
    "MultiLagReport",
    "ScoreCovarianceMachinery",
    "TraceProducts",
    "naive_statistic",
    "pair_statistic",
    "rho_hat",
    "trace_products",
    "sigma_squared",
    "test_statistic",
    "run_test",
    "multi_lag_test",
]

_PARAMETRIC = ("para", "parametric")
_NONPARAMETRIC = ("nonp", "nonparametric")
_TRACE_BLOCK = 256


@dataclass
class PairStat:
    """One component pair's statistic and its standardization."""

    j: int  # 0-based component indices within the truncated system
    k: int
    T: float
    rho_hat: float
    sigma: float

    @property
    def standardized(self) -> float:
        return self.T / self.sigma


@dataclass
class TestReport:
    """Full outcome of one weak-separability test at one lag."""

    lag: float
    R: int
    fve_requested: float
    fve_achieved: float
    pair_stats: list[PairStat]
    S: float
    df: int
    p_value: float
    diagnostics: dict

    def to_dict(self) -> dict:
        """JSON-shaped document with the stable field names."""
        return {
            "lag": self.lag,
            "R": self.R,
            "fve-requested": self.fve_requested,
            "fve-achieved": self.fve_achieved,
            "pair-stats": [
                {
                    "j": ps.j + 1,
                    "k": ps.k + 1,
                    "T": ps.T,
                    "rho_hat": ps.rho_hat,
                    "sigma": ps.sigma,
                    "standardized": ps.standardized,
                }
                for ps in self.pair_stats
            ],
            "S": self.S,
            "df": self.df,
            "p-value": self.p_value,
            "diagnostics": self.diagnostics,
        }


@dataclass
class MultiLagReport:
    """Per-lag reports plus the Bonferroni-combined decision."""

    reports: list[TestReport]
    dropped_lags: list[float]
    combined_p_value: float

    @property
    def n_lags(self) -> int:
        return len(self.reports)

    def to_dict(self) -> dict:
        return {
            "lags": [r.to_dict() for r in self.reports],
            "dropped-lags": self.dropped_lags,
            "n-lags": self.n_lags,
            "combined-p-value": self.combined_p_value,
        }


class TraceProducts(NamedTuple):
    tr_UU: float
    tr_U1U2: float
    tr_V1V2t: float


@dataclass
class ScoreCovarianceMachinery:
    """Implied score-covariance structure backing the trace products.

    Holds, for the truncated components, the matched variances omega and
    fitted correlation models; the implied matrices U_r[i,i'] =
    omega_r * rho_r(|s_i - s_i'|) are never materialized. Correlations
    are precomputed per squared lattice offset for O(1) lookups.
    """

    omega: np.ndarray
    models: list[CorrelationModel]
    pair_set: PairSet
    grid: SpatialGrid
    _lookups: np.ndarray = dataclass_field(init=False, repr=False)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.size != len(self.models):
            raise DomainError("one correlation model is needed per component")
        g = self.grid
        d2_max = (g.nx - 1) ** 2 + (g.ny - 1) ** 2
        dists = g.spacing * np.sqrt(np.arange(d2_max + 1, dtype=float))
        self._lookups = np.stack([eval_correlation_many(m, dists) for m in self.models])

    def correlation_lookup(self, r: int) -> np.ndarray:
        """rho_r indexed by integer squared lattice offset."""
        return self._lookups[r]


def naive_statistic(scores: np.ndarray, j: int, k: int) -> float:
    """N^{-1/2} sum_i xi_ij xi_ik for scores from the plain eigenfunctions.

    Kept only to verify its degeneracy: with scores projected on the
    sample covariance's own eigenfunctions this vanishes identically.
    """
    return pair_statistic(scores, j, k)


def pair_statistic(scores: np.ndarray, j: int, k: int) -> float:
    """T_h(j,k) = N^{-1/2} sum_i xi_ij^(h) xi_ik^(h) for lag-eigenfunction scores."""
    scores = np.asarray(scores, dtype=float)
    if j == k:
        raise DomainError("pair statistic needs two distinct components")
    n = scores.shape[0]
    return float(scores[:, j] @ scores[:, k] / np.sqrt(n))


def rho_hat(
    omega_j: float,
    omega_k: float,
    eta_j: float,
    eta_k: float,
    eps_omega: float | None = None,
) -> float:
    """Eigenvalue ratio rho_jk = (eta_j - eta_k) / (omega_j - omega_k).

    Near-tied plain eigenvalues make the ratio unstable, so the
    denominator is guarded; values far outside [0.01, 100] draw a warning.
    """
    if eps_omega is None:
        eps_omega = 1e-8 * max(abs(omega_j), abs(omega_k))
    if abs(omega_j - omega_k) <= eps_omega:
        raise DomainError(
            f"near-tied plain eigenvalues: |{omega_j:g} - {omega_k:g}| <= {eps_omega:g}"
        )
    value = (eta_j - eta_k) / (omega_j - omega_k)
    if not (0.01 <= value <= 100.0):
        warnings.warn(
            f"rho_hat={value:g} outside the plausible band [0.01, 100]",
            RhoHatRangeWarning,
            stacklevel=2,
        )
    return value


def _blocked_lookup_sum(
    ax: np.ndarray, ay: np.ndarray, bx: np.ndarray, by: np.ndarray,
    cx: np.ndarray, cy: np.ndarray, dx: np.ndarray, dy: np.ndarray,
    lookup_j: np.ndarray, lookup_k: np.ndarray,
) -> float:
    """sum over (p, q) of lookup_j[d2(a_p, b_q)] * lookup_k[d2(c_p, d_q)]."""
    total = 0.0
    for start in range(0, ax.size, _TRACE_BLOCK):
        sl = slice(start, start + _TRACE_BLOCK)
        d2_left = (ax[sl, None] - bx[None, :]) ** 2 + (ay[sl, None] - by[None, :]) ** 2
        d2_right = (cx[sl, None] - dx[None, :]) ** 2 + (cy[sl, None] - dy[None, :]) ** 2
        total += float(np.sum(lookup_j[d2_left] * lookup_k[d2_right]))
    return total


def trace_products(machinery: ScoreCovarianceMachinery, j: int, k: int) -> TraceProducts:
    """The three trace products entering sigma^2, without materializing U or V.

    tr(U_j U_k) groups ordered pairs by distance; the A_h-indexed traces
    stream over pair blocks with per-squared-distance correlation lookups.
    """
    omega_jk = float(machinery.omega[j] * machinery.omega[k])
    lj = machinery.correlation_lookup(j)
    lk = machinery.correlation_lookup(k)
    grid = machinery.grid
    n = grid.n_locations

    d2_counts = squared_distance_multiset(grid)
    d2 = np.asarray(sorted(d2_counts), dtype=np.int64)
    counts = np.asarray([d2_counts[key] for key in sorted(d2_counts)], dtype=float)
    tr_uu = omega_jk * (float(np.sum(counts * lj[d2] * lk[d2])) + n)

    coords = grid.lattice_coords
    left = machinery.pair_set.pairs[:, 0]
    right = machinery.pair_set.pairs[:, 1]
    lx, ly = coords[left, 0], coords[left, 1]
    rx, ry = coords[right, 0], coords[right, 1]
    tr_u1u2 = omega_jk * _blocked_lookup_sum(lx, ly, lx, ly, rx, ry, rx, ry, lj, lk)

    gx, gy = coords[:, 0], coords[:, 1]
    tr_v1v2t = omega_jk * _blocked_lookup_sum(gx, gy, lx, ly, gx, gy, rx, ry, lj, lk)
    return TraceProducts(tr_UU=tr_uu, tr_U1U2=tr_u1u2, tr_V1V2t=tr_v1v2t)


def sigma_squared(
    traces: TraceProducts,
    rho_hat_jk: float,
    n_locations: int,
    n_pairs: int,
    omega_j: float,
    omega_k: float,
) -> float:
    """Variance of T_h(j,k) from the trace products.

    sigma^2 = tr(U_j U_k)/N + N tr(U_{j,1} U_{k,2})/(rho N_h)^2
              - 2 tr(V_{j,1} V_{k,2}^T)/(rho N_h).
    Estimation noise can push the estimate nonpositive; such values are
    floored at 1e-12 * omega_j * omega_k with a warning.
    """
    if rho_hat_jk == 0.0:
        raise DomainError("sigma_squared needs a nonzero rho_hat")
    if n_locations < 1 or n_pairs < 1:
        raise DomainError("sigma_squared needs at least one location and one pair")
    denom = rho_hat_jk * n_pairs
    value = traces.tr_UU / n_locations + n_locations / denom**2 * traces.tr_U1U2 - 2.0 / denom * traces.tr_V1V2t
    if value <= 0.0:
        floor = 1e-12 * abs(omega_j * omega_k)
        warnings.warn(
            f"nonpositive variance estimate {value:g} floored at {floor:g}",
            SigmaFloorWarning,
            stacklevel=2,
        )
        return floor
    return float(value)


def test_statistic(pair_stats: list[PairStat], r: int) -> tuple[float, int]:
    """Chi-squared statistic S = sum (T/sigma)^2 and its degrees of freedom."""
    if r < 2:
        raise DomainError("test statistic needs R >= 2")
    if any(ps.sigma <= 0.0 for ps in pair_stats):
        raise DomainError("all pair variances must be positive")
    s = float(sum(ps.standardized**2 for ps in pair_stats))
    return s, r * (r - 1) // 2


@contextmanager
def _stage(name: str):
    try:
        yield
    except DomainError as exc:
        raise DomainError(f"{name}: {exc}") from exc


def _fit_models(scores, grid, omega, method, d_max, ll_bandwidth):
    models = []
    for r in range(omega.size):
        correlogram = empirical_correlation(scores[:, r], grid, float(omega[r]), d_max)
        if method in _PARAMETRIC:
            models.append(fit_exponential_wls(correlogram))
        elif method in _NONPARAMETRIC:
            models.append(fit_local_linear(correlogram, ll_bandwidth))
        else:
            raise DomainError(f"unknown correlation method {method!r}")
    return models


def _correlogram_diagnostics(scores, grid, omega, models, d_max):
    out = []
    for r, model in enumerate(models):
        cg = empirical_correlation(scores[:, r], grid, float(omega[r]), d_max)
        out.append(
            {
                "component": r + 1,
                "distances": [float(v) for v in cg.distances],
                "rho": [float(v) for v in cg.rho],
                "fitted": [float(v) for v in eval_correlation_many(model, cg.distances)],
            }
        )
    return out


def run_test(
    field: FunctionalField,
    lag: float,
    fve: float = 0.9,
    corr_method: str = "para",
    *,
    d_max: float | None = None,
    ll_bandwidth: float | None = None,
    with_correlogram_diagnostics: bool = True,
) -> TestReport:
    """Run the weak-separability test at one lag.

    Truncation is selected from the lag-covariance spectrum; matched
    plain eigenvalues provide the omega scale; scores come from the lag
    eigenfunctions. d_max defaults to 0.35 times the grid diameter; the
    local-linear bandwidth defaults to twice the grid spacing.
    """
    reports = run_test_grid(
        field,
        [lag],
        [fve],
        [corr_method],
        d_max=d_max,
        ll_bandwidth=ll_bandwidth,
        with_correlogram_diagnostics=with_correlogram_diagnostics,
    )
    outcome = reports[(lag, fve, corr_method)]
    if isinstance(outcome, Exception):
        raise outcome
    return outcome


def run_test_grid(
    field: FunctionalField,
    lags: list[float],
    fve_levels: list[float],
    corr_methods: list[str],
    *,
    d_max: float | None = None,
    ll_bandwidth: float | None = None,
    with_correlogram_diagnostics: bool = False,
) -> dict:
    """Run tests for every (lag, fve, method) cell, sharing computation.

    Returns a dict mapping each cell to its TestReport, or to the
    DomainError that prevented it (callers decide how to surface
    failures; the power study records and excludes them).
    """
    grid = field.grid
    if d_max is None:
        # long-distance bins carry pooled-centering bias and sampling noise;
        # restricting the correlogram keeps the fits (and the implied score
        # covariances) well behaved
        d_max = 0.35 * grid.diameter
    if ll_bandwidth is None:
        ll_bandwidth = 2.0 * grid.spacing

    results: dict = {}

    def fail(err, lag, fves=None, methods=None):
        for f in fves or fve_levels:
            for m in methods or corr_methods:
                results[(lag, f, m)] = err

    mean = sample_mean(field)
    with _stage("sample covariance"):
        plain_kernel = sample_covariance(field)
    eig_plain = eigen_decompose(plain_kernel)

    for lag in lags:
        try:
            with _stage("lag pairs"):
                pairs = lag_pairs(grid, lag)
                if pairs.count == 0:
                    raise DomainError(f"no pairs at lag {lag}")
            with _stage("lag covariance"):
                lag_kernel = lag_covariance(field, pairs)
            with _stage("eigen decomposition"):
                eig_lag = eigen_decompose(lag_kernel)
                if eig_lag.n_positive < 2:
                    raise DomainError("fewer than two positive lag eigenvalues")
        except DomainError as err:
            fail(err, lag)
            continue

        for fve in fve_levels:
            try:
                with _stage("truncation"):
                    r = select_truncation(eig_lag, fve)
                    r = max(2, min(r, eig_lag.n_positive, field.n_times))
                with _stage("eigen matching"):
                    matching = match_eigenpairs(eig_lag, eig_plain, r)
                omega = eig_plain.eigenvalues[matching.assignment]
                eta = eig_lag.eigenvalues[:r]
                with _stage("score projection"):
                    scores = project_scores(field, mean, eig_lag.eigenfunctions[:r])
            except DomainError as err:
                fail(err, lag, fves=[fve])
                continue

            for method in corr_methods:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    try:
                        with _stage("correlation fit"):
                            models = _fit_models(scores, grid, omega, method, d_max, ll_bandwidth)
                        machinery = ScoreCovarianceMachinery(
                            omega=omega, models=models, pair_set=pairs, grid=grid
                        )
                        pair_stats = []
                        with _stage("pair statistics"):
                            for j in range(r):
                                for k in range(j + 1, r):
                                    t_jk = pair_statistic(scores, j, k)
                                    rho_jk = rho_hat(
                                        float(omega[j]), float(omega[k]),
                                        float(eta[j]), float(eta[k]),
                                        eps_omega=1e-8 * abs(float(omega[0])),
                                    )
                                    traces = trace_products(machinery, j, k)
                                    var_jk = sigma_squared(
                                        traces, rho_jk, grid.n_locations, pairs.count,
                                        float(omega[j]), float(omega[k]),
                                    )
                                    pair_stats.append(
                                        PairStat(j=j, k=k, T=t_jk, rho_hat=rho_jk,
                                                 sigma=float(np.sqrt(var_jk)))
                                    )
                        s, df = test_statistic(pair_stats, r)
                        p = chi_squared_sf(s, df)
                    except DomainError as err:
                        fail(err, lag, fves=[fve], methods=[method])
                        continue

                warning_messages = [
                    str(w.message) for w in caught if issubclass(w.category, WeakSepWarning)
                ]
                for w in caught:
                    if not issubclass(w.category, WeakSepWarning):
                        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)

                diagnostics = {
                    "method": "parametric" if method in _PARAMETRIC else "nonparametric",
                    "matching": [
                        {
                            "lag-component": int(i + 1),
                            "plain-component": int(matching.assignment[i] + 1),
                            "inner-product": float(matching.inner_products[i]),
                        }
                        for i in range(r)
                    ],
                    "lag-eigenvalues": [float(v) for v in eig_lag.eigenvalues],
                    "matched-plain-eigenvalues": [float(v) for v in omega],
                    "n-pairs": int(pairs.count),
                    "warnings": warning_messages,
                }
                if with_correlogram_diagnostics:
                    diagnostics["correlograms"] = _correlogram_diagnostics(
                        scores, grid, omega, models, d_max
                    )
                results[(lag, fve, method)] = TestReport(
                    lag=float(lag),
                    R=int(r),
                    fve_requested=float(fve),
                    fve_achieved=achieved_fve(eig_lag, r),
                    pair_stats=pair_stats,
                    S=s,
                    df=df,
                    p_value=p,
                    diagnostics=diagnostics,
                )
    return results


def multi_lag_test(
    field: FunctionalField,
    lags: list[float],
    fve: float = 0.9,
    corr_method: str = "para",
    **options,
) -> MultiLagReport:
    """Run per-lag tests and combine them with a Bonferroni correction.

    Lags admitting no pairs are dropped (with a warning) and the
    correction factor shrinks accordingly.
    """
    if not lags:
        raise DomainError("multi_lag_test needs at least one lag")
    reports, dropped = [], []
    for lag in lags:
        if lag_pairs(field.grid, lag).count == 0:
            warnings.warn(f"dropping lag {lag}: no pairs", DroppedLagWarning, stacklevel=2)
            dropped.append(float(lag))
            continue
        reports.append(run_test(field, lag, fve, corr_method, **options))
    if not reports:
        raise DomainError("no requested lag admits any pair")
    n_lags = len(reports)
    combined = min(1.0, n_lags * min(r.p_value for r in reports))
    return MultiLagReport(reports=reports, dropped_lags=dropped, combined_p_value=combined)
