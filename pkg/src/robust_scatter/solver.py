"""Iterative scatter and location-scatter estimators.

Four interchangeable step rules drive the same outer loop: the classical
fixed-point reweighting (fp), a gradient step with approximately optimal
length (g), a Newton step restricted to the eigen-coordinate subspace of
psi (pn), and an unrestricted Newton oracle over the whole perturbation
space (newton).  The gradient/Newton trials are guarded by a sufficient
decrease check and fall back to a fixed-point step when it fails, so every
logged step decreases the target.  Location-scatter problems reduce to
scatter-only ones in dimension q+1 by augmenting each row with a constant
coordinate; fp3 is the classical joint update that renormalizes that
augmented candidate every iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .objective import (
    WeightedSample,
    WhitenedState,
    check_support,
    h_form,
    h_operator_matrix,
    h_tilde,
    l_value,
    psi_matrix,
    sym_basis,
    whiten,
)
from .rho import RhoFamily
from .symcone import (
    DEFAULT_EXP_BOUND,
    spd_sqrt,
    spectral,
    symmetrize,
)

__all__ = [
    "Algorithm",
    "FitResult",
    "SolverConfig",
    "StepKind",
    "StepReport",
    "estimate_location_scatter",
    "estimate_scatter",
    "fp3_estimate",
    "fp_step",
    "full_newton_step",
    "gradient_step",
    "pn_step",
]


class Algorithm(str, enum.Enum):
    FP = "fp"
    G = "g"
    PN = "pn"
    FULL_NEWTON = "newton"
    FP3 = "fp3"


class StepKind(str, enum.Enum):
    FP = "fp"
    FP_FALLBACK = "fp_fallback"
    GRAD_ACCEPTED = "grad_accepted"
    PN_ACCEPTED = "pn_accepted"
    NEWTON_ACCEPTED = "newton_accepted"


_MAX_ITER_DEFAULT = {
    Algorithm.FP: 10000,
    Algorithm.FP3: 10000,
    Algorithm.G: 500,
    Algorithm.PN: 500,
    Algorithm.FULL_NEWTON: 500,
}


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all estimators.

    delta is the stopping tolerance on ||1_q - phi||, i.e. the Frobenius
    norm of the whitened gradient.  accept_factor is the divisor in the
    sufficient-decrease checks of the gradient/Newton trials; any value
    above 2 is admissible.  scale_free_shift is the constant c of the
    rank-one shift that makes the restricted Hessian invertible in the
    scale-free case (any c > 0 works; 1 keeps it well conditioned at the
    natural scale where trace(psi) = q).
    """

    delta: float = 1e-7
    max_iter: int | None = None
    accept_factor: float = 4.0
    scale_free_shift: float = 1.0
    algorithm: Algorithm = Algorithm.PN
    deterministic_reduction: bool = False
    start: object = "second_moment"  # "second_moment" | "identity" | SPD array

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.accept_factor > 2:
            raise ValueError("accept_factor must exceed 2")
        if not self.scale_free_shift > 0:
            raise ValueError("scale_free_shift must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if isinstance(self.start, str) and self.start not in (
            "second_moment",
            "identity",
        ):
            raise ValueError(f"unknown start {self.start!r}")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))

    def resolved_max_iter(self) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return _MAX_ITER_DEFAULT[self.algorithm]


@dataclass(frozen=True)
class StepReport:
    """What one step did: branch taken, realized decrease, check threshold."""

    kind: StepKind
    dl: float
    dl_bound: float | None
    a: np.ndarray | None
    residual: float


@dataclass(frozen=True)
class FitResult:
    """Estimate plus the iteration log of the run that produced it."""

    sigma: np.ndarray
    mu: np.ndarray | None
    iterations: int
    step_log: tuple[StepKind, ...]
    l_trace: tuple[float, ...]
    final_residual: float
    converged: bool
    diagnostics: object = field(default=None, repr=False)

    def step_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for kind in self.step_log:
            counts[kind.value] = counts.get(kind.value, 0) + 1
        return counts


@dataclass(frozen=True)
class _IterStats:
    """Per-iteration quantities every step rule needs."""

    s: np.ndarray
    rho_y: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    residual: float


def _iter_stats(state: WhitenedState) -> _IterStats:
    s = state.row_sq_norms()
    rho_y = state.family.rho(s)
    psi = psi_matrix(state, s=s)
    dec = spectral(psi)
    phi = dec.eigenvalues
    if not np.all(np.isfinite(phi)) or phi[-1] <= 0:
        raise ValueError(
            "psi is not positive definite; the data violate the "
            "support conditions"
        )
    residual = float(np.linalg.norm(1.0 - phi))
    return _IterStats(s=s, rho_y=rho_y, psi=psi, u=dec.u, phi=phi,
                      residual=residual)


def _dl_from_increments(family: RhoFamily, w: np.ndarray, s: np.ndarray,
                        delta_s: np.ndarray, log_det: float) -> float:
    """Target change from per-row squared-norm increments, or +inf.

    Evaluates sum_i w_i [rho(s_i + delta_s_i) - rho(s_i)] + log_det as
    (nu+q) * log1p(delta_s / (nu+s)), which keeps the rounding error
    proportional to the change itself instead of to |rho|.  Near the
    optimum the true decrease shrinks like residual^2, so the naive
    rho(new)-rho(old) difference would drown in cancellation noise and the
    logged descent trace could not be certified.  Increments that are
    non-finite or push a row out of the domain mark a diverging trial and
    return +inf, which every acceptance check rejects.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = delta_s / (family.nu + s)
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= -1.0):
        return np.inf
    c = family.nu + family.q
    return float(w @ (c * np.log1p(ratio)) + log_det)


def _fp_dl(state: WhitenedState, stats: _IterStats) -> float:
    """Change of the target under the reweighting update, difference form.

    Call with the state already rotated into psi's eigenbasis and not yet
    rescaled: the new squared norms are sum_j v_j^2 / phi_j.
    """
    v2 = state.Y**2
    delta_s = v2 @ ((1.0 - stats.phi) / stats.phi)
    log_det = float(np.log1p(stats.phi - 1.0).sum())
    return _dl_from_increments(state.family, state.sample.w, stats.s,
                               delta_s, log_det)


def _sym_trial(state: WhitenedState, stats: _IterStats, a: np.ndarray):
    """Evaluate the perturbation trial B exp(a) B^T for symmetric a.

    Returns the target change (+inf for a diverging trial) and a callable
    that applies the accepted step using the already-transformed rows.
    """
    dec = spectral(a)
    lam = dec.eigenvalues
    if np.abs(lam).max() > DEFAULT_EXP_BOUND:
        return np.inf, None
    v = state.Y @ dec.u
    with np.errstate(over="ignore"):
        delta_s = v**2 @ np.expm1(-lam)
    dl = _dl_from_increments(state.family, state.sample.w, stats.s, delta_s,
                             float(lam.sum()))

    def apply() -> None:
        half = np.exp(lam / 2.0)
        c = symmetrize((dec.u * half) @ dec.u.T)
        state.push_factor(c, y_new=(v / half) @ dec.u.T)

    return dl, apply


def fp_step(state: WhitenedState, stats: _IterStats | None = None,
            kind: StepKind = StepKind.FP) -> StepReport:
    """Classical reweighting update B <- B u diag(phi)^{1/2}.

    Always decreases the target unless psi is already the identity.
    """
    if stats is None:
        stats = _iter_stats(state)
    state.rotate(stats.u)
    dl = _fp_dl(state, stats)
    state.rescale(np.sqrt(stats.phi))
    return StepReport(kind=kind, dl=dl, dl_bound=None, a=None,
                      residual=stats.residual)


def gradient_step(state: WhitenedState, config: SolverConfig,
                  stats: _IterStats | None = None) -> StepReport:
    """Gradient trial with step length ||g||^2 / h_form(g), fp fallback.

    The trial is accepted when its realized decrease clears
    -||g||^2 / accept_factor, which the local expansion guarantees once
    the candidate is close enough to the minimizer.
    """
    if stats is None:
        stats = _iter_stats(state)
    g = np.eye(state.q) - stats.psi
    gnorm2 = float(np.sum(g * g))
    h = h_form(state, g, psi=stats.psi, s=stats.s)
    if h <= 0:
        raise ValueError(
            "curvature along the gradient is not positive; the data "
            "violate the support conditions"
        )
    t = gnorm2 / h
    a = -t * g
    bound = -gnorm2 / config.accept_factor
    dl, apply = _sym_trial(state, stats, a)
    if dl <= bound:
        apply()
        return StepReport(kind=StepKind.GRAD_ACCEPTED, dl=dl, dl_bound=bound,
                          a=None, residual=stats.residual)
    return fp_step(state, stats=stats, kind=StepKind.FP_FALLBACK)


def pn_step(state: WhitenedState, config: SolverConfig,
            stats: _IterStats | None = None) -> StepReport:
    """Newton step restricted to the eigen-coordinate subspace of psi.

    After rotating into psi's eigenbasis the perturbation is a diagonal
    exp(diag(a)); the restricted Hessian is a q x q matrix, so the solve
    costs O(q^3) instead of O(q^6).  In the scale-free case the rank-one
    shift c*11^T removes the known null direction, which also makes the
    solution trace-free.  Rejected trials fall back to the reweighting
    update reusing the already-applied rotation.
    """
    if stats is None:
        stats = _iter_stats(state)
    state.rotate(stats.u)
    phi = stats.phi
    gt = 1.0 - phi
    ht = h_tilde(state, phi, s=stats.s)
    if state.family.scale_free:
        ht = ht + config.scale_free_shift
    try:
        a = np.linalg.solve(ht, -gt)
    except np.linalg.LinAlgError:
        dl = _fp_dl(state, stats)
        state.rescale(np.sqrt(phi))
        return StepReport(kind=StepKind.FP_FALLBACK, dl=dl, dl_bound=None,
                          a=None, residual=stats.residual)
    if np.abs(a).max() > DEFAULT_EXP_BOUND:
        dl = np.inf
    else:
        with np.errstate(over="ignore"):
            delta_s = state.Y**2 @ np.expm1(-a)
        dl = _dl_from_increments(state.family, state.sample.w, stats.s,
                                 delta_s, float(a.sum()))
    bound = float(a @ gt) / config.accept_factor
    if dl <= bound:
        state.rescale(np.exp(a / 2.0))
        return StepReport(kind=StepKind.PN_ACCEPTED, dl=dl, dl_bound=bound,
                          a=a, residual=stats.residual)
    dl = _fp_dl(state, stats)
    state.rescale(np.sqrt(phi))
    return StepReport(kind=StepKind.FP_FALLBACK, dl=dl, dl_bound=bound, a=a,
                      residual=stats.residual)


def full_newton_step(state: WhitenedState, config: SolverConfig | None = None,
                     stats: _IterStats | None = None) -> StepReport:
    """Unrestricted Newton trial over the whole perturbation space.

    Oracle-grade: assembling and factorizing the operator matrix costs
    O(n q^4 + q^6) per iteration, so this is for cross-validation and
    small problems, not production runs.  Far from the minimizer the trial
    may fail the sufficient-decrease check, in which case a fixed-point
    step runs instead.
    """
    if config is None:
        config = SolverConfig(algorithm=Algorithm.FULL_NEWTON)
    if stats is None:
        stats = _iter_stats(state)
    basis = sym_basis(state.q, trace_free=state.family.scale_free)
    g = np.eye(state.q) - stats.psi
    gvec = np.einsum("kij,ij->k", basis, g)
    hmat = h_operator_matrix(state, basis=basis, psi=stats.psi, s=stats.s)
    try:
        chol = np.linalg.cholesky(hmat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Hessian operator is not positive definite") from exc
    coeffs = -_chol_solve(chol, gvec)
    a = np.einsum("k,kij->ij", coeffs, basis)
    bound = float(coeffs @ gvec) / config.accept_factor
    dl, apply = _sym_trial(state, stats, a)
    if dl <= bound:
        apply()
        return StepReport(kind=StepKind.NEWTON_ACCEPTED, dl=dl,
                          dl_bound=bound, a=None, residual=stats.residual)
    return fp_step(state, stats=stats, kind=StepKind.FP_FALLBACK)


def _chol_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def _resolve_start(sample: WeightedSample, config: SolverConfig) -> np.ndarray:
    if isinstance(config.start, str):
        if config.start == "second_moment":
            return sample.second_moment()
        return np.eye(sample.q)
    return np.asarray(config.start, dtype=float)


def _unit_det(sigma: np.ndarray) -> np.ndarray:
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise ValueError("cannot normalize a non-SPD matrix to unit determinant")
    return sigma * np.exp(-logdet / sigma.shape[0])


def estimate_scatter(sample: WeightedSample, family: RhoFamily,
                     config: SolverConfig | None = None) -> FitResult:
    """Minimize the scatter target with the configured step rule.

    Iterates until ||1_q - phi|| < delta or max_iter steps ran; exhaustion
    is reported through ``converged=False`` rather than an exception, since
    the subspace-mass conditions cannot be certified up front.  Scale-free
    results are normalized to unit determinant.
    """
    if config is None:
        config = SolverConfig()
    if config.algorithm is Algorithm.FP3:
        raise ValueError(
            "fp3 estimates location and scatter jointly; use fp3_estimate "
            "or estimate_location_scatter"
        )
    diagnostics = check_support(sample, family)
    if not diagnostics.passed:
        raise ValueError(
            f"data rank {diagnostics.rank} is below the dimension "
            f"{sample.q}; the target has no minimizer"
        )
    state = whiten(sample, family, _resolve_start(sample, config))
    max_iter = config.resolved_max_iter()
    algorithm = config.algorithm
    step_log: list[StepKind] = []
    l_trace: list[float] = []
    while True:
        stats = _iter_stats(state)
        if stats.residual < config.delta:
            converged = True
            break
        if len(step_log) >= max_iter:
            converged = False
            break
        if algorithm is Algorithm.FP:
            report = fp_step(state, stats=stats)
        elif algorithm is Algorithm.G:
            report = gradient_step(state, config, stats=stats)
        elif algorithm is Algorithm.PN:
            report = pn_step(state, config, stats=stats)
        else:
            report = full_newton_step(state, config, stats=stats)
        step_log.append(report.kind)
        l_trace.append(report.dl)
    sigma = state.sigma()
    if family.scale_free:
        sigma = _unit_det(sigma)
    return FitResult(
        sigma=sigma,
        mu=None,
        iterations=len(step_log),
        step_log=tuple(step_log),
        l_trace=tuple(l_trace),
        final_residual=stats.residual,
        converged=converged,
        diagnostics=diagnostics,
    )


def _augmented(sample: WeightedSample) -> WeightedSample:
    return WeightedSample(
        np.hstack([sample.X, np.ones((sample.n, 1))]), sample.w
    )


def estimate_location_scatter(sample: WeightedSample, family: RhoFamily,
                              config: SolverConfig | None = None) -> FitResult:
    """Joint location-scatter fit via the augmentation reduction.

    Rows are augmented with a constant 1 and the scatter-only solver runs
    in dimension q+1 with the shifted family (nu-1, q+1).  For nu > 1 the
    minimizer automatically has a unit corner entry; for nu = 1 the
    scale-free result is rescaled so it does.  The location is the last
    column of the augmented estimate, the scatter its Schur complement.
    """
    if config is None:
        config = SolverConfig()
    if family.nu < 1:
        raise ValueError("joint location-scatter estimation requires nu >= 1")
    if config.algorithm is Algorithm.FP3:
        return fp3_estimate(sample, family, config)
    if not isinstance(config.start, str):
        # an explicit q x q start describes the scatter block; embed it in
        # the augmented dimension around the weighted mean
        start = np.asarray(config.start, dtype=float)
        config = replace(config, start=_gamma_of(sample.w @ sample.X, start))
    inner = estimate_scatter(_augmented(sample), family.shifted(), config)
    gamma = inner.sigma
    if family.nu == 1:
        gamma = gamma / gamma[-1, -1]
    mu = gamma[:-1, -1].copy()
    sigma = symmetrize(gamma[:-1, :-1] - np.outer(mu, mu))
    return replace(inner, sigma=sigma, mu=mu)


def _gamma_of(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    q = mu.shape[0]
    g = np.empty((q + 1, q + 1))
    g[:q, :q] = sigma + np.outer(mu, mu)
    g[:q, q] = mu
    g[q, :q] = mu
    g[q, q] = 1.0
    return symmetrize(g)


def fp3_estimate(sample: WeightedSample, family: RhoFamily,
                 config: SolverConfig | None = None) -> FitResult:
    """Joint fixed-point update of location and scatter factor.

    Each iteration standardizes the rows with the current (mu, B), augments
    them with a constant 1, forms the reweighted second moment psi of the
    augmented rows, and reads the next candidate off its block
    decomposition psi = lambda * Gamma(d, C C^T):
    mu <- mu + B d and B <- B C.  Stops on ||I_{q+1} - psi|| < delta.
    Equivalent to a fixed-point step on the augmented problem followed by
    rescaling the candidate to a unit corner entry.
    """
    if config is None:
        config = SolverConfig(algorithm=Algorithm.FP3)
    if family.nu < 1:
        raise ValueError("fp3 requires nu >= 1")
    X, w = sample.X, sample.w
    q = sample.q
    mu = w @ X
    if isinstance(config.start, str) and config.start == "identity":
        mu = np.zeros(q)
        sigma = np.eye(q)
    elif isinstance(config.start, str):
        centered = X - mu
        sigma = symmetrize((centered * w[:, None]).T @ centered)
    else:
        sigma = np.asarray(config.start, dtype=float)
    B = spd_sqrt(symmetrize(sigma))

    inner_fam = family.shifted()
    aug = _augmented(sample)
    eye_q = np.eye(q)
    max_iter = config.resolved_max_iter()
    step_log: list[StepKind] = []
    l_trace: list[float] = []
    l_prev = l_value(_gamma_of(mu, symmetrize(B @ B.T)), aug, inner_fam)
    while True:
        Z = np.linalg.solve(B, (X - mu).T).T
        s = np.einsum("ij,ij->i", Z, Z) + 1.0
        wp = w * inner_fam.rho_prime(s)
        lam = float(wp.sum())
        top = Z.T @ wp
        block = symmetrize((Z * wp[:, None]).T @ Z)
        residual = float(
            np.sqrt(
                np.sum((block - eye_q) ** 2)
                + 2.0 * np.sum(top**2)
                + (lam - 1.0) ** 2
            )
        )
        if residual < config.delta:
            converged = True
            break
        if len(step_log) >= max_iter:
            converged = False
            break
        d = top / lam
        cc = symmetrize(block / lam - np.outer(d, d))
        try:
            C = spd_sqrt(cc)
        except ValueError as exc:
            raise ValueError(
                "degenerate configuration: the scatter block of psi is "
                "not positive definite"
            ) from exc
        mu = mu + B @ d
        B = B @ C
        l_now = l_value(_gamma_of(mu, symmetrize(B @ B.T)), aug, inner_fam)
        step_log.append(StepKind.FP)
        l_trace.append(l_now - l_prev)
        l_prev = l_now
    return FitResult(
        sigma=symmetrize(B @ B.T),
        mu=mu,
        iterations=len(step_log),
        step_log=tuple(step_log),
        l_trace=tuple(l_trace),
        final_residual=residual,
        converged=converged,
    )
