"""Loss families acting on squared norms for scatter M-estimation.

Two regimes share one parametrization: ``nu > 0`` gives the multivariate-t
loss ``(nu + q) * log(nu + s)``, and ``nu = 0`` gives the scale-free loss
``q * log(s)`` underlying Tyler's shape estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RhoFamily"]


@dataclass(frozen=True)
class RhoFamily:
    """The loss family rho_{nu,q} and its derivatives.

    Parameters
    ----------
    nu : float
        Degrees of freedom, >= 0.  ``nu == 0`` selects the scale-free
        family; positive values give the t-type family, which is strictly
        convex in the relevant sense (rho' > 0 >= rho'').
    q : int
        Dimension of the data the family targets, >= 1.
    """

    nu: float
    q: int

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu!r}")
        if not self.q >= 1:
            raise ValueError(f"q must be a positive integer, got {self.q!r}")

    @property
    def scale_free(self) -> bool:
        """True for nu = 0, where rho(t*s) - rho(s) does not depend on s."""
        return self.nu == 0

    def psi_infinity(self) -> float:
        """Limit of psi(s) = s * rho'(s) as s -> infinity; equals nu + q.

        For ``nu = 0`` the value q is attained at every s: psi is constant,
        which is exactly what makes the family scale-free.
        """
        return self.nu + self.q

    def shifted(self) -> "RhoFamily":
        """The family (nu - 1, q + 1), which satisfies
        ``rho_{nu,q}(s - 1) == rho_{nu-1,q+1}(s)`` up to an additive
        constant of zero.  Used by the location-scatter reduction.
        """
        if self.nu < 1:
            raise ValueError("shifting requires nu >= 1")
        return RhoFamily(self.nu - 1, self.q + 1)

    def _validated(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("squared norms must be nonnegative")
        if self.nu == 0 and np.any(s == 0):
            raise ValueError(
                "rho_{0,q} is undefined at s = 0: a zero vector reached "
                "the scale-free family"
            )
        return s

    def rho(self, s):
        """(nu + q) * log(nu + s), or q * log(s) when nu = 0."""
        s = self._validated(s)
        if self.nu == 0:
            return self.q * np.log(s)
        return (self.nu + self.q) * np.log(self.nu + s)

    def rho_prime(self, s):
        """First derivative; strictly positive."""
        s = self._validated(s)
        if self.nu == 0:
            return self.q / s
        return (self.nu + self.q) / (self.nu + s)

    def rho_second(self, s):
        """Second derivative; nonpositive everywhere."""
        s = self._validated(s)
        if self.nu == 0:
            return -self.q / s**2
        return -(self.nu + self.q) / (self.nu + s) ** 2

    def psi(self, s):
        """s * rho'(s); increasing for nu > 0 and constantly q for nu = 0."""
        s = self._validated(s)
        if self.nu == 0:
            return np.full_like(s, float(self.q))
        return (self.nu + self.q) * s / (self.nu + s)
