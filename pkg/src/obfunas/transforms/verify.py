"""Numerical equivalence check between two networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from obfunas.errors import ShapeError
from obfunas.tensor_core.network import ConcreteNetwork, forward


@dataclass(frozen=True)
class EquivalenceReport:
    max_abs_diff: float
    passed: bool
    samples: int
    tol: float

    def __str__(self) -> str:
        return f"max_diff={self.max_abs_diff:g} {'pass' if self.passed else 'FAIL'}"


def check_function_preserving(
    f: ConcreteNetwork, g: ConcreteNetwork, n: int = 100, seed: int = 0, tol: float = 0.0
) -> EquivalenceReport:
    """Compare logits on ``n`` seeded standard-normal inputs."""
    if f.input_shape != g.input_shape:
        raise ShapeError("input", f"input shapes differ: {f.input_shape} vs {g.input_shape}")
    if n <= 0:
        raise ValueError("need at least one sample")
    x = np.random.default_rng(seed).standard_normal((n, *f.input_shape))
    a, b = forward(f, x), forward(g, x)
    if a.shape != b.shape:
        raise ShapeError("output", f"output shapes differ: {a.shape} vs {b.shape}")
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    if np.isnan(diff):
        diff = float("inf")
    return EquivalenceReport(diff, diff <= tol, n, tol)
