"""Random SPD obstacle instances shared by solver tests and acceptance checks."""

from __future__ import annotations

import numpy as np

from junctionlab.vi_solver import DiscreteVI


def random_instance(rng: np.random.Generator, n_max: int = 60, k_max: int = 15) -> DiscreteVI:
    n = int(rng.integers(2, n_max + 1))
    k = int(rng.integers(0, min(k_max, n) + 1))
    B = rng.standard_normal((n, n))
    A = B @ B.T / n + rng.uniform(0.1, 1.0) * np.eye(n)
    b = rng.standard_normal(n)
    idx = np.sort(rng.choice(n, size=k, replace=False))
    # bounds spread around the unconstrained solution so both sets occur
    free = np.linalg.solve(A, b)
    c = free[idx] + rng.normal(0.0, 1.0, k) * (np.abs(free[idx]).mean() if k else 1.0)
    return DiscreteVI(A, b, idx, c)
