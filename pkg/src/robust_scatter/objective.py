"""The scatter target, its gradient and Hessian forms.

The target L(Sigma, Q) is evaluated for a discrete distribution Q given by
a weighted sample.  Its local geometry is always analyzed at the whitened
identity: for Sigma = B B^T the perturbation Sigma -> B exp(A) B^T with
symmetric A turns L into a smooth convex function of A whose gradient is
``I - Psi`` and whose second derivative is the quadratic form ``h_form``.
All weighted sums are plain fixed-order numpy reductions, so results are
reproducible bit-for-bit across runs.
"""

from __future__ import annotations

import warnings
from dataclasses import InitVar, dataclass

import numpy as np

from .rho import RhoFamily
from .symcone import frobenius_inner, spd_sqrt, spectral, sym_exp, symmetrize

__all__ = [
    "REFRESH_INTERVAL",
    "SupportDiagnostics",
    "WeightedSample",
    "WhitenedState",
    "check_support",
    "drop_zero_rows",
    "gradient",
    "h_form",
    "h_operator_matrix",
    "h_tilde",
    "l_delta_exp",
    "l_value",
    "psi_matrix",
    "sym_basis",
    "whiten",
]

# multiplicative updates between re-solves of Y from the raw data
REFRESH_INTERVAL = 50

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightedSample:
    """Data matrix with positive row weights summing to one.

    This is the discrete distribution the estimators minimize over: row
    ``X[i]`` carries probability mass ``w[i]``.

    Parameters
    ----------
    X : (n, q) array
        Data rows.
    w : (n,) array
        Strictly positive weights with ``sum(w) == 1`` within 1e-12.
    forbid_zero_rows : bool, optional
        Reject rows of exact zero norm at construction.  Scale-free
        estimation cannot place mass at the origin; `whiten` enforces the
        same restriction at solve time regardless.
    """

    X: np.ndarray
    w: np.ndarray
    forbid_zero_rows: InitVar[bool] = False

    def __post_init__(self, forbid_zero_rows: bool):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        w = np.asarray(self.w, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array of data rows")
        if w.shape[0] != X.shape[0]:
            raise ValueError(
                f"weight length {w.shape[0]} does not match {X.shape[0]} rows"
            )
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(w)):
            raise ValueError("data and weights must be finite")
        if np.any(w <= 0):
            raise ValueError("all weights must be strictly positive")
        if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(
                f"weights must sum to 1 within {_WEIGHT_SUM_TOL}; "
                f"got {w.sum()!r}"
            )
        if forbid_zero_rows and self._zero_rows(X).size:
            raise ValueError(
                "zero rows are not allowed here; drop_zero_rows() can "
                "filter them"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "w", w)

    @staticmethod
    def _zero_rows(X: np.ndarray) -> np.ndarray:
        return np.flatnonzero(np.einsum("ij,ij->i", X, X) == 0.0)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @classmethod
    def uniform(cls, X) -> "WeightedSample":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return cls(X, np.full(X.shape[0], 1.0 / X.shape[0]))

    def zero_rows(self) -> np.ndarray:
        """Indices of rows with exactly zero norm."""
        return self._zero_rows(self.X)

    def second_moment(self) -> np.ndarray:
        """Weighted second moment sum_i w_i x_i x_i^T."""
        return symmetrize((self.X * self.w[:, None]).T @ self.X)


def drop_zero_rows(sample: WeightedSample) -> WeightedSample:
    """Remove zero rows, renormalize the weights, warn if anything changed."""
    idx = sample.zero_rows()
    if idx.size == 0:
        return sample
    warnings.warn(
        f"dropping {idx.size} zero row(s) and renormalizing weights",
        stacklevel=2,
    )
    keep = np.ones(sample.n, dtype=bool)
    keep[idx] = False
    w = sample.w[keep]
    return WeightedSample(sample.X[keep], w / w.sum())


class WhitenedState:
    """Current candidate factor B with cached whitened rows y_i = B^{-1} x_i.

    A state is owned by exactly one solver run.  Updates are multiplicative
    (rotations, diagonal rescalings, symmetric factors); the cache is
    re-solved from the raw data every REFRESH_INTERVAL updates to bound
    numerical drift.
    """

    __slots__ = ("B", "Y", "family", "sample", "_updates")

    def __init__(self, B: np.ndarray, Y: np.ndarray, family: RhoFamily,
                 sample: WeightedSample):
        self.B = B
        self.Y = Y
        self.family = family
        self.sample = sample
        self._updates = 0

    @property
    def q(self) -> int:
        return self.B.shape[0]

    def sigma(self) -> np.ndarray:
        """The candidate scatter matrix B B^T."""
        return symmetrize(self.B @ self.B.T)

    def row_sq_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.Y, self.Y)

    def rotate(self, u: np.ndarray) -> None:
        """B <- B u, Y <- Y u for orthogonal u."""
        self.B = self.B @ u
        self.Y = self.Y @ u
        self._bump()

    def rescale(self, d: np.ndarray) -> None:
        """B <- B diag(d), Y <- Y diag(1/d) for positive scales d."""
        self.B = self.B * d
        self.Y = self.Y / d
        self._bump()

    def push_factor(self, c: np.ndarray, y_new: np.ndarray | None = None) -> None:
        """B <- B c; rows of Y become c^{-1} y_i (precomputed rows welcome)."""
        self.B = self.B @ c
        if y_new is None:
            y_new = np.linalg.solve(c, self.Y.T).T
        self.Y = y_new
        self._bump()

    def refresh(self) -> None:
        """Re-solve Y from the raw data against the current B."""
        self.Y = np.linalg.solve(self.B, self.sample.X.T).T

    def _bump(self) -> None:
        self._updates += 1
        if self._updates % REFRESH_INTERVAL == 0:
            self.refresh()


def whiten(sample: WeightedSample, family: RhoFamily,
           sigma0: np.ndarray | None = None) -> WhitenedState:
    """Build the solver state for a starting scatter matrix.

    ``sigma0`` defaults to the weighted second moment.  The initial factor
    is the symmetric square root, so Y starts as X sigma0^{-1/2}.
    """
    if family.scale_free and sample.zero_rows().size:
        raise ValueError(
            "scale-free estimation requires data without zero rows; "
            "drop_zero_rows() can filter them"
        )
    if sigma0 is None:
        sigma0 = sample.second_moment()
    B = spd_sqrt(symmetrize(np.asarray(sigma0, dtype=float)))
    Y = np.linalg.solve(B, sample.X.T).T
    return WhitenedState(B, Y, family, sample)


def psi_matrix(state: WhitenedState, s: np.ndarray | None = None) -> np.ndarray:
    """Weighted second moment of the whitened rows, weights rho'(||y||^2).

    At a minimizer this equals the identity; its deviation from I is the
    gradient of the whitened target.
    """
    if s is None:
        s = state.row_sq_norms()
    wp = state.sample.w * state.family.rho_prime(s)
    psi = symmetrize((state.Y * wp[:, None]).T @ state.Y)
    if not np.all(np.isfinite(psi)):
        raise ValueError("non-finite accumulation in psi_matrix")
    return psi


def gradient(state: WhitenedState, psi: np.ndarray | None = None) -> np.ndarray:
    """I - psi_matrix(state): the gradient at the whitened identity."""
    if psi is None:
        psi = psi_matrix(state)
    return np.eye(state.q) - psi


def l_value(sigma, sample: WeightedSample | None = None,
            family: RhoFamily | None = None) -> float:
    """The target L(sigma, Q); normalized so that L(I, Q) = 0.

    Accepts either an explicit SPD matrix plus (sample, family), or a
    WhitenedState, in which case its candidate B B^T is evaluated.
    """
    if isinstance(sigma, WhitenedState):
        state = sigma
        return l_value(state.sigma(), state.sample, state.family)
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise ValueError("sigma must be positive definite")
    try:
        m = np.linalg.solve(sigma, sample.X.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma is singular") from exc
    d1 = np.einsum("ij,ji->i", sample.X, m)
    d0 = np.einsum("ij,ij->i", sample.X, sample.X)
    return float(sample.w @ (family.rho(d1) - family.rho(d0)) + logdet)


def l_delta_exp(state: WhitenedState, a: np.ndarray) -> float:
    """Change of L under sigma -> B exp(a) B^T, from whitened rows only.

    Equal to ``l_value(B exp(a) B^T) - l_value(B B^T)`` but never forms
    sigma or its inverse: the perturbed rows are exp(-a/2) y_i and the
    log-determinant term is trace(a).
    """
    a = symmetrize(a)
    z = state.Y @ sym_exp(-a / 2.0)
    s_y = state.row_sq_norms()
    s_z = np.einsum("ij,ij->i", z, z)
    fam = state.family
    return float(state.sample.w @ (fam.rho(s_z) - fam.rho(s_y)) + np.trace(a))


def h_form(state: WhitenedState, a: np.ndarray,
           psi: np.ndarray | None = None,
           s: np.ndarray | None = None) -> float:
    """Second-derivative quadratic form of the whitened target at a.

    ``<a^2, psi> + sum_i w_i rho''(||y_i||^2) (y_i^T a y_i)^2``; nonnegative,
    and zero only along the scale direction a = t*I in the scale-free case.
    """
    a = symmetrize(a)
    if s is None:
        s = state.row_sq_norms()
    if psi is None:
        psi = psi_matrix(state, s=s)
    quad = np.einsum("ij,jk,ik->i", state.Y, a, state.Y)
    curvature = (state.sample.w * state.family.rho_second(s)) @ quad**2
    return float(frobenius_inner(a @ a, psi) + curvature)


def h_tilde(state: WhitenedState, phi: np.ndarray,
            s: np.ndarray | None = None) -> np.ndarray:
    """Restricted Hessian on the eigen-coordinate subspace.

    Requires the state already rotated so that psi_matrix(state) is
    diag(phi).  With s(y) = (y_j^2)_j this is
    ``diag(phi) + sum_i w_i rho''(||y_i||^2) s(y_i) s(y_i)^T``.
    In the scale-free case its rows sum to zero.
    """
    phi = np.asarray(phi, dtype=float)
    if s is None:
        s = state.row_sq_norms()
    sq = state.Y**2
    wpp = state.sample.w * state.family.rho_second(s)
    return symmetrize(np.diag(phi) + (sq * wpp[:, None]).T @ sq)


def sym_basis(q: int, trace_free: bool) -> np.ndarray:
    """Orthonormal basis of the perturbation space, shape (m, q, q).

    Ordering: diagonal directions first, then off-diagonal units
    ``(e_i e_j^T + e_j e_i^T)/sqrt(2)`` for i < j in row-major order.
    The diagonal directions are the unit diagonals ``e_j e_j^T``
    (m = q(q+1)/2), or, for the trace-free space, the q-1 matrices
    ``diag(1, .., 1, -k, 0, .., 0)/sqrt(k(k+1))`` with k leading ones
    (m = q(q+1)/2 - 1).
    """
    mats = []
    if trace_free:
        for k in range(1, q):
            d = np.zeros(q)
            d[:k] = 1.0
            d[k] = -k
            mats.append(np.diag(d / np.sqrt(k * (k + 1))))
    else:
        for j in range(q):
            m = np.zeros((q, q))
            m[j, j] = 1.0
            mats.append(m)
    for i in range(q):
        for j in range(i + 1, q):
            m = np.zeros((q, q))
            m[i, j] = m[j, i] = 1.0 / np.sqrt(2.0)
            mats.append(m)
    return np.array(mats)


def h_operator_matrix(state: WhitenedState,
                      basis: np.ndarray | None = None,
                      psi: np.ndarray | None = None,
                      s: np.ndarray | None = None) -> np.ndarray:
    """Matrix of the Hessian operator in an orthonormal perturbation basis.

    The operator maps a to ``(psi a + a psi)/2 +
    sum_i w_i rho''(||y_i||^2) (y_i^T a y_i) y_i y_i^T``; its matrix in the
    basis from `sym_basis` is symmetric and positive definite whenever the
    support conditions hold.
    """
    if basis is None:
        basis = sym_basis(state.q, trace_free=state.family.scale_free)
    if s is None:
        s = state.row_sq_norms()
    if psi is None:
        psi = psi_matrix(state, s=s)
    # tr(A_k A_l psi) via P_l = A_l psi, then contract
    p = basis @ psi
    tr_kl = np.einsum("kab,lba->kl", basis, p)
    first = 0.5 * (tr_kl + tr_kl.T)
    t = np.einsum("ia,kab,ib->ik", state.Y, basis, state.Y)
    wpp = state.sample.w * state.family.rho_second(s)
    second = t.T @ (t * wpp[:, None])
    return symmetrize(first + second)


@dataclass(frozen=True)
class SupportDiagnostics:
    """Screening results for the subspace-mass conditions.

    ``passed`` requires full data rank; ``warn`` flags a single direction
    carrying at least the critical mass for a one-dimensional subspace.
    These are necessary-condition probes, not a certification: checking
    every subspace is combinatorially infeasible, and solver
    non-convergence within max_iter is the practical failure signal.
    """

    rank: int
    min_singular_value: float
    max_direction_mass: float
    direction_mass_bound: float
    passed: bool
    warn: bool


def check_support(sample: WeightedSample, family: RhoFamily) -> SupportDiagnostics:
    """Rank screen plus direction-mass probes along second-moment eigenvectors."""
    Xw = np.sqrt(sample.w)[:, None] * sample.X
    svals = np.linalg.svd(Xw, compute_uv=False)
    top = float(svals[0]) if svals.size else 0.0
    tol = top * max(sample.n, sample.q) * np.finfo(float).eps
    rank = int(np.sum(svals > tol))
    min_sv = float(svals[min(sample.q, svals.size) - 1]) if svals.size else 0.0

    norms = np.sqrt(np.einsum("ij,ij->i", sample.X, sample.X))
    nonzero = norms > 0
    dec = spectral(sample.second_moment())
    # mass of rows aligned (up to sign) with each probe direction
    if np.any(nonzero):
        cos = np.abs(sample.X[nonzero] @ dec.u)
        aligned = cos >= (1.0 - 1e-8) * norms[nonzero, None]
        direction_mass = aligned.T @ sample.w[nonzero]
        max_mass = float(direction_mass.max())
    else:
        max_mass = 0.0

    if family.scale_free:
        bound = 1.0 / family.q
    else:
        psi_inf = family.psi_infinity()
        bound = (psi_inf - family.q + 1.0) / psi_inf
    passed = rank == sample.q
    warn = max_mass >= bound
    return SupportDiagnostics(
        rank=rank,
        min_singular_value=min_sv,
        max_direction_mass=max_mass,
        direction_mass_bound=bound,
        passed=passed,
        warn=warn,
    )
