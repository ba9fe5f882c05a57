"""Symmetrized scatter estimation over all pairwise differences.

The symmetrized estimator fits the scatter target to the distribution of
the N = n(n-1)/2 differences x_i - x_j, which removes the location
nuisance entirely and gives the estimator a block-independence property.
Two evaluation strategies compute identical sums: ALL materializes the
N x q difference matrix and reuses the standard solver; SEQ streams the
pairs block by block and never allocates the big matrix.  AUTO picks ALL
while the difference matrix fits a byte budget.  A cheap start comes from
estimating scatter on the n cyclic differences of a random permutation.
"""

from __future__ import annotations

import enum
from dataclasses import replace

import numpy as np

from .objective import WeightedSample
from .rho import RhoFamily
from .solver import (
    Algorithm,
    FitResult,
    SolverConfig,
    StepKind,
    estimate_scatter,
)
from .symcone import spd_sqrt, spectral, symmetrize

__all__ = [
    "PAIR_BYTE_BUDGET",
    "PairMode",
    "estimate_symmetrized",
    "pairwise_dl",
    "pairwise_h",
    "pairwise_psi",
    "prewhiten_start",
    "resolve_mode",
]


class PairMode(str, enum.Enum):
    ALL = "all"
    SEQ = "seq"
    AUTO = "auto"


PAIR_BYTE_BUDGET = 256 * 1024 * 1024

_BLOCK = 256


def resolve_mode(mode: PairMode | str, n: int, q: int,
                 byte_budget: int = PAIR_BYTE_BUDGET) -> PairMode:
    """Pick ALL while the N x q float64 difference matrix fits the budget."""
    mode = PairMode(mode)
    if mode is not PairMode.AUTO:
        return mode
    n_pairs = n * (n - 1) // 2
    return PairMode.ALL if n_pairs * q * 8 <= byte_budget else PairMode.SEQ


def _pair_windows(n: int, block: int = _BLOCK):
    """Index windows covering every pair i < j exactly once, fixed order."""
    for bi in range(0, n, block):
        ei = min(bi + block, n)
        yield bi, ei, bi, ei
        for bj in range(ei, n, block):
            yield bi, ei, bj, min(bj + block, n)


def _window_diffs(Y: np.ndarray, i0: int, i1: int, j0: int, j1: int):
    """Differences y_i - y_j for the window, with their (i, j) indices."""
    if i0 == j0:
        ii, jj = np.triu_indices(i1 - i0, 1)
        return Y[i0 + ii] - Y[i0 + jj], i0 + ii, i0 + jj
    d = (Y[i0:i1, None, :] - Y[None, j0:j1, :]).reshape(-1, Y.shape[1])
    ii = np.repeat(np.arange(i0, i1), j1 - j0)
    jj = np.tile(np.arange(j0, j1), i1 - i0)
    return d, ii, jj


def _check_zero_pairs(s: np.ndarray, ii: np.ndarray, jj: np.ndarray,
                      family: RhoFamily) -> None:
    if family.scale_free and np.any(s == 0.0):
        k = int(np.flatnonzero(s == 0.0)[0])
        raise ValueError(
            f"duplicate rows {int(ii[k])} and {int(jj[k])}: a zero "
            "difference is outside the scale-free domain"
        )


def _n_pairs(n: int) -> int:
    if n < 2:
        raise ValueError("pairwise statistics need at least 2 rows")
    return n * (n - 1) // 2


def pairwise_psi(Y: np.ndarray, family: RhoFamily,
                 mode: PairMode | str = PairMode.AUTO) -> np.ndarray:
    """Average of rho'(||d||^2) d d^T over all pairwise differences d."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, q = Y.shape
    big_n = _n_pairs(n)
    mode = resolve_mode(mode, n, q)
    acc = np.zeros((q, q))
    for i0, i1, j0, j1 in _pair_windows(n):
        d, ii, jj = _window_diffs(Y, i0, i1, j0, j1)
        s = np.einsum("ij,ij->i", d, d)
        _check_zero_pairs(s, ii, jj, family)
        acc += (d * family.rho_prime(s)[:, None]).T @ d
        del d
    return symmetrize(acc / big_n)


def pairwise_h(phi: np.ndarray, Y: np.ndarray, family: RhoFamily,
               mode: PairMode | str = PairMode.AUTO) -> np.ndarray:
    """diag(phi) plus the pairwise average of rho''(||d||^2) s(d) s(d)^T,
    where s(d) squares d componentwise.  The scale-free rank-one shift is
    the solver's business, not applied here.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, q = Y.shape
    big_n = _n_pairs(n)
    acc = np.zeros((q, q))
    for i0, i1, j0, j1 in _pair_windows(n):
        d, ii, jj = _window_diffs(Y, i0, i1, j0, j1)
        s = np.einsum("ij,ij->i", d, d)
        _check_zero_pairs(s, ii, jj, family)
        sq = d**2
        acc += (sq * family.rho_second(s)[:, None]).T @ sq
        del d, sq
    return symmetrize(np.diag(np.asarray(phi, dtype=float)) + acc / big_n)


def pairwise_dl(Y: np.ndarray, Z: np.ndarray, a: np.ndarray,
                family: RhoFamily,
                mode: PairMode | str = PairMode.AUTO) -> float:
    """Target change of the diagonal trial step over the pair distribution.

    Z must hold the trial rows Y * exp(-a/2) columnwise; the value is the
    pairwise average of rho(||z_i - z_j||^2) - rho(||y_i - y_j||^2) plus
    sum(a).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    a = np.asarray(a, dtype=float)
    n = Y.shape[0]
    big_n = _n_pairs(n)
    acc = 0.0
    for i0, i1, j0, j1 in _pair_windows(n):
        dy, ii, jj = _window_diffs(Y, i0, i1, j0, j1)
        dz, _, _ = _window_diffs(Z, i0, i1, j0, j1)
        s_y = np.einsum("ij,ij->i", dy, dy)
        s_z = np.einsum("ij,ij->i", dz, dz)
        _check_zero_pairs(s_y, ii, jj, family)
        acc += float(np.sum(family.rho(s_z) - family.rho(s_y)))
        del dy, dz
    return acc / big_n + float(a.sum())


def _difference_second_moment(X: np.ndarray) -> np.ndarray:
    """Second moment of the pair distribution, in O(n q^2) without pairs."""
    n = X.shape[0]
    centered = X - X.mean(axis=0)
    return symmetrize(centered.T @ centered * (2.0 / (n - 1)))


def prewhiten_start(X: np.ndarray, family: RhoFamily,
                    config: SolverConfig | None = None,
                    rng: np.random.Generator | int | None = None,
                    retries: int = 5) -> np.ndarray:
    """Cheap start: scatter estimate on n cyclic differences.

    Draws a random permutation pi, forms x_pi(i) - x_pi(i+1) with the cycle
    closed at the end, and fits those n differences with uniform weights.
    Degenerate draws (duplicate adjacent points in the scale-free case, or
    rank-deficient differences) retry with a fresh permutation; after
    ``retries`` failures the pair second moment is returned instead.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 3:
        raise ValueError("prewhitening needs at least 3 rows")
    if config is None:
        config = SolverConfig(algorithm=Algorithm.PN)
    inner = replace(config, algorithm=Algorithm.PN, start="second_moment")
    rng = np.random.default_rng(rng)
    for _ in range(retries):
        perm = rng.permutation(n)
        diffs = X[perm] - X[np.roll(perm, -1)]
        if family.scale_free and np.any(
            np.einsum("ij,ij->i", diffs, diffs) == 0.0
        ):
            continue
        try:
            fit = estimate_scatter(WeightedSample.uniform(diffs), family, inner)
        except ValueError:
            continue
        return fit.sigma
    return _difference_second_moment(X)


def estimate_symmetrized(X: np.ndarray, family: RhoFamily,
                         config: SolverConfig | None = None,
                         mode: PairMode | str = PairMode.AUTO,
                         prewhiten: bool = True,
                         rng: np.random.Generator | int | None = None,
                         inner_delta: float | None = None) -> FitResult:
    """Scatter of the pairwise-difference distribution.

    Runs the restricted Newton iteration with fixed-point fallback on
    Q = all differences x_i - x_j, started from the prewhitening estimate
    (or the pair second moment when disabled).  ALL mode materializes the
    differences and reuses `estimate_scatter`; SEQ streams every pair sum.
    Both minimize the identical objective.  ``inner_delta`` overrides the
    tolerance of the prewhitening run only.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, q = X.shape
    if n < 3:
        raise ValueError("symmetrized estimation needs at least 3 rows")
    if config is None:
        config = SolverConfig(algorithm=Algorithm.PN)
    mode = resolve_mode(mode, n, q)
    if prewhiten:
        inner_cfg = config if inner_delta is None else replace(
            config, delta=inner_delta
        )
        sigma0 = prewhiten_start(X, family, inner_cfg, rng)
    else:
        sigma0 = _difference_second_moment(X)

    if mode is PairMode.ALL:
        ii, jj = np.triu_indices(n, 1)
        diffs = X[ii] - X[jj]
        _check_zero_pairs(
            np.einsum("ij,ij->i", diffs, diffs), ii, jj, family
        )
        cfg = replace(config, algorithm=Algorithm.PN, start=sigma0)
        return estimate_scatter(WeightedSample.uniform(diffs), family, cfg)

    return _estimate_symmetrized_seq(X, family, config, sigma0)


def _estimate_symmetrized_seq(X: np.ndarray, family: RhoFamily,
                              config: SolverConfig,
                              sigma0: np.ndarray) -> FitResult:
    q = X.shape[1]
    B = spd_sqrt(symmetrize(np.asarray(sigma0, dtype=float)))
    Y = np.linalg.solve(B, X.T).T
    max_iter = config.resolved_max_iter()
    step_log: list[StepKind] = []
    l_trace: list[float] = []
    while True:
        psi = pairwise_psi(Y, family, PairMode.SEQ)
        dec = spectral(psi)
        phi = dec.eigenvalues
        if not np.all(np.isfinite(phi)) or phi[-1] <= 0:
            raise ValueError(
                "pairwise psi is not positive definite; the differences "
                "violate the support conditions"
            )
        residual = float(np.linalg.norm(1.0 - phi))
        if residual < config.delta:
            converged = True
            break
        if len(step_log) >= max_iter:
            converged = False
            break
        B = B @ dec.u
        Y = Y @ dec.u
        gt = 1.0 - phi
        ht = pairwise_h(phi, Y, family, PairMode.SEQ)
        if family.scale_free:
            ht = ht + config.scale_free_shift
        accepted = False
        try:
            a = np.linalg.solve(ht, -gt)
        except np.linalg.LinAlgError:
            a = None
        if a is not None:
            with np.errstate(over="ignore", under="ignore"):
                Z = Y * np.exp(-a / 2.0)
            bound = float(a @ gt) / config.accept_factor
            # a trial that overflows (or collapses rows to duplicates in the
            # scale-free family) is rejected like any failed decrease check
            try:
                dl = (pairwise_dl(Y, Z, a, family, PairMode.SEQ)
                      if np.all(np.isfinite(Z)) else np.inf)
            except ValueError:
                dl = np.inf
            if dl <= bound:
                B = B * np.exp(a / 2.0)
                Y = Z
                accepted = True
        if accepted:
            step_log.append(StepKind.PN_ACCEPTED)
            l_trace.append(dl)
        else:
            dl = pairwise_dl(Y, Y / np.sqrt(phi), np.log(phi), family,
                             PairMode.SEQ)
            B = B * np.sqrt(phi)
            Y = Y / np.sqrt(phi)
            step_log.append(StepKind.FP_FALLBACK)
            l_trace.append(dl)
    sigma = symmetrize(B @ B.T)
    if family.scale_free:
        sign, logdet = np.linalg.slogdet(sigma)
        sigma = sigma * np.exp(-logdet / q)
    return FitResult(
        sigma=sigma,
        mu=None,
        iterations=len(step_log),
        step_log=tuple(step_log),
        l_trace=tuple(l_trace),
        final_residual=residual,
        converged=converged,
    )
