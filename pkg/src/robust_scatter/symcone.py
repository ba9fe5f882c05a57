"""Spectral calculus on symmetric matrices.

Everything here works through the eigendecomposition of a symmetric
matrix: matrix exponential/logarithm, SPD square root, and the Frobenius
inner product.  Dense storage only; the target dimensions are small
(q up to ~100).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_EXP_BOUND",
    "SpectralDecomp",
    "check_spd",
    "frobenius_inner",
    "frobenius_norm",
    "spd_sqrt",
    "spectral",
    "sym_exp",
    "sym_log",
    "symmetrize",
]

# exp overflows float64 slightly above 709; a diverging solver step is the
# only realistic way to get here
DEFAULT_EXP_BOUND = 700.0

_SPD_RTOL = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Symmetric part (a + a.T) / 2, as a new float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigendecomposition ``u @ diag(eigenvalues) @ u.T``.

    Eigenvalues are sorted descending.  Each eigenvector column is signed
    so that its largest-magnitude component is positive, which makes
    repeated calls on identical input bit-identical.  For repeated
    eigenvalues only the reconstruction is canonical, not the columns.
    """

    u: np.ndarray
    eigenvalues: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return symmetrize((self.u * self.eigenvalues) @ self.u.T)


def spectral(a: np.ndarray) -> SpectralDecomp:
    """Spectral decomposition of a symmetric matrix, deterministic form."""
    a = symmetrize(a)
    lam, u = np.linalg.eigh(a)
    lam = lam[::-1].copy()
    u = u[:, ::-1]
    anchors = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[anchors, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return SpectralDecomp(u=np.ascontiguousarray(u * signs), eigenvalues=lam)


def _positive_eigenvalues(dec: SpectralDecomp, what: str) -> np.ndarray:
    lam = dec.eigenvalues
    scale = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
    if lam[-1] <= _SPD_RTOL * scale:
        raise ValueError(
            f"{what} requires a positive definite matrix; smallest "
            f"eigenvalue {lam[-1]:.3e} (scale {scale:.3e})"
        )
    return lam


def sym_exp(a: np.ndarray, max_eigenvalue: float = DEFAULT_EXP_BOUND) -> np.ndarray:
    """Matrix exponential of a symmetric matrix; the result is SPD.

    Raises OverflowError when the top eigenvalue exceeds ``max_eigenvalue``,
    which signals a diverging step rather than a representable result.
    """
    dec = spectral(a)
    if dec.eigenvalues[0] > max_eigenvalue:
        raise OverflowError(
            f"sym_exp: eigenvalue {dec.eigenvalues[0]:.3e} exceeds the "
            f"bound {max_eigenvalue:.3e}"
        )
    return symmetrize((dec.u * np.exp(dec.eigenvalues)) @ dec.u.T)


def sym_log(a: np.ndarray) -> np.ndarray:
    """Matrix logarithm of an SPD matrix; inverse of sym_exp on the cone."""
    dec = spectral(a)
    lam = _positive_eigenvalues(dec, "matrix logarithm")
    return symmetrize((dec.u * np.log(lam)) @ dec.u.T)


def spd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix."""
    dec = spectral(a)
    lam = _positive_eigenvalues(dec, "matrix square root")
    return symmetrize((dec.u * np.sqrt(lam)) @ dec.u.T)


def check_spd(a: np.ndarray, rtol: float = _SPD_RTOL) -> np.ndarray:
    """Validate positive definiteness; return the symmetric-canonical copy."""
    a = symmetrize(a)
    lam = np.linalg.eigvalsh(a)
    scale = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
    if lam[0] <= rtol * scale:
        raise ValueError(
            f"matrix is not positive definite: smallest eigenvalue "
            f"{lam[0]:.3e} at scale {scale:.3e}"
        )
    return a


def frobenius_inner(m: np.ndarray, n: np.ndarray) -> float:
    """tr(m.T @ n) = elementwise dot product."""
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    if m.shape != n.shape:
        raise ValueError(f"dimension mismatch: {m.shape} vs {n.shape}")
    return float(np.sum(m * n))


def frobenius_norm(m: np.ndarray) -> float:
    return float(np.sqrt(frobenius_inner(m, m)))
