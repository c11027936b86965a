"""Linear solver interface used by the Newton-Raphson loop, and the classical
dense LU backend."""
from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

PIVOT_RTOL = 1e-13


class SingularMatrixError(ArithmeticError):
    """The matrix is numerically singular."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass
class LinearSolution:
    x: np.ndarray
    diagnostics: dict = field(default_factory=dict)


class LinearSolver(abc.ABC):
    """Solves ``a @ x = b`` for real square ``a``."""

    name: str = "abstract"

    @abc.abstractmethod
    def solve(self, a: np.ndarray, b: np.ndarray) -> LinearSolution:
        ...

    def __call__(self, a, b) -> np.ndarray:
        return self.solve(a, b).x


def lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Doolittle LU with partial pivoting, ``a[perm] = L @ U``.

    Returns the packed factors (unit-lower L below the diagonal, U on and
    above) and the row permutation.
    """
    lu = np.array(a, dtype=float, copy=True)
    if lu.ndim != 2 or lu.shape[0] != lu.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {lu.shape}")
    n = lu.shape[0]
    perm = np.arange(n)
    threshold = PIVOT_RTOL * max(np.abs(lu).sum(axis=1).max(initial=0.0), np.finfo(float).tiny)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= threshold:
            raise SingularMatrixError(f"zero pivot at column {k}", pivot=k)
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` by LU factorisation with partial pivoting."""
    b = np.asarray(b, dtype=float)
    lu, perm = lu_factor(a)
    if b.shape[0] != lu.shape[0]:
        raise ValueError(f"dimension mismatch: a is {lu.shape}, b has length {b.shape[0]}")
    n = lu.shape[0]
    y = b[perm].copy()
    for i in range(n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def condition_estimate(a: np.ndarray) -> float:
    """2-norm condition number from the singular values; ``inf`` if singular."""
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    if s.size == 0 or s[-1] <= np.finfo(float).eps * s[0] or s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])


class LUSolver(LinearSolver):
    name = "lu"

    def solve(self, a, b) -> LinearSolution:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        x = lu_solve(a, b)
        bnorm = np.linalg.norm(b)
        residual = np.linalg.norm(a @ x - b)
        return LinearSolution(
            x,
            {
                "condition": condition_estimate(a),
                "residual": float(residual / bnorm) if bnorm else float(residual),
            },
        )
