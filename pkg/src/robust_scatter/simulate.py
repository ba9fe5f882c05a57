"""Seeded data generators for the benchmark experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimSpec", "simulate"]

_MODELS = ("gaussian", "cauchy", "outlier")


@dataclass(frozen=True)
class SimSpec:
    """One simulated dataset: shape, distribution model, seed.

    Models: ``gaussian`` draws i.i.d. standard normal entries; ``cauchy``
    divides each row of standard normals by an independent standard normal
    shared across the row; ``outlier`` is gaussian except the first n//10
    rows get their first coordinate shifted by ``outlier_delta``.
    """

    n: int
    q: int
    model: str = "gaussian"
    seed: int = 0
    outlier_delta: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.q < 1:
            raise ValueError("n and q must be positive")
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "outlier":
            if self.outlier_delta is None or self.outlier_delta < 0:
                raise ValueError("the outlier model needs outlier_delta >= 0")
        elif self.outlier_delta is not None:
            raise ValueError("outlier_delta only applies to the outlier model")


def simulate(spec: SimSpec) -> np.ndarray:
    """Draw the dataset; identical specs produce bit-identical matrices."""
    rng = np.random.default_rng(spec.seed)
    if spec.model == "cauchy":
        z = rng.standard_normal((spec.n, spec.q + 1))
        return z[:, 1:] / z[:, :1]
    x = rng.standard_normal((spec.n, spec.q))
    if spec.model == "outlier":
        x[: spec.n // 10, 0] += spec.outlier_delta
    return x
