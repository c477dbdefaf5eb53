"""Regularized solvers for the (often singular) metric equation g x = b."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """method:
      diag_shift:            solve (g + delta I) x = b
      normalized_diag_shift: solve ((g + delta I) / (1 + delta)) x = b
      stable_subspace:       eigendecompose g, invert only eigenvalues
                             >= delta (or >= delta * lambda_max with
                             relative=True), zero the rest
    """

    method: str = "stable_subspace"
    delta: float = 1e-2
    relative: bool = False

    def __post_init__(self):
        if self.method not in ("diag_shift", "normalized_diag_shift",
                               "stable_subspace"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.delta <= 0:
            raise ValueError("need delta > 0")


def solve_regularized(g: np.ndarray, b: np.ndarray,
                      config: SolverConfig | None = None) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    if config is None:
        config = SolverConfig()
    d = len(b)
    if g.shape != (d, d):
        raise ValueError("shape mismatch")
    if np.max(np.abs(g - g.T)) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    if config.method == "diag_shift":
        return np.linalg.solve(g + config.delta * np.eye(d), b)
    if config.method == "normalized_diag_shift":
        lhs = (g + config.delta * np.eye(d)) / (1.0 + config.delta)
        return np.linalg.solve(lhs, b)
    evals, vecs = np.linalg.eigh(g)
    cut = config.delta * evals.max() if config.relative else config.delta
    brot = vecs.T @ b
    xrot = np.where(evals >= cut, brot / np.where(evals >= cut, evals, 1.0), 0.0)
    return vecs @ xrot
