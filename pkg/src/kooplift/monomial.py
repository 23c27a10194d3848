"""Monomial lifting of a latent linear system.

Enumerates multi-indices alpha with 1 <= |alpha| <= p_bar, evaluates the
monomial lift rho(y), its Jacobian, and the block-diagonal lifted transition
matrix that carries the latent linear dynamics to the lifted coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

__all__ = [
    "MultiIndexBasis",
    "enumerate_basis",
    "lift",
    "lift_generic",
    "lift_jacobian",
    "build_lifted_matrix",
    "build_lifted_matrix_generic",
    "lifted_spectrum",
]

_MAX_D = 10**6


@dataclass(frozen=True)
class MultiIndexBasis:
    """Ordered multi-indices grouped by total order, lexicographic descending
    within each order, so the first d entries are the unit indices."""

    d: int
    p_bar: int
    indices: tuple

    @property
    def D(self):
        return len(self.indices)

    def position(self, alpha):
        return self.indices.index(tuple(alpha))


def enumerate_basis(d: int, p_bar: int) -> MultiIndexBasis:
    if d < 1 or p_bar < 1:
        raise ValueError("require d >= 1 and p_bar >= 1")
    total = comb(d + p_bar, d) - 1
    if total > _MAX_D:
        raise ValueError(f"lifted dimension {total} exceeds limit {_MAX_D}")
    indices = []
    for p in range(1, p_bar + 1):
        block = []
        for combo in combinations_with_replacement(range(d), p):
            alpha = [0] * d
            for i in combo:
                alpha[i] += 1
            block.append(tuple(alpha))
        block.sort(reverse=True)
        indices.extend(block)
    basis = MultiIndexBasis(d=d, p_bar=p_bar, indices=tuple(indices))
    assert basis.D == total
    return basis


def lift_generic(y, basis: MultiIndexBasis):
    """rho(y) for scalars of any supported type (list in, list out)."""
    if len(y) != basis.d:
        raise ValueError(f"expected length {basis.d}, got {len(y)}")
    out = []
    for alpha in basis.indices:
        term = 1.0
        for yi, ai in zip(y, alpha):
            for _ in range(ai):
                term = term * yi
        out.append(term)
    return out


def lift(y, basis: MultiIndexBasis) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    alphas = np.array(basis.indices)
    return np.prod(y[None, :] ** alphas, axis=1)


def lift_jacobian(y, basis: MultiIndexBasis) -> np.ndarray:
    """J_rho(y), shape (D, d); the top d x d block is the identity."""
    y = np.asarray(y, dtype=float)
    J = np.zeros((basis.D, basis.d))
    for k, alpha in enumerate(basis.indices):
        for i, ai in enumerate(alpha):
            if ai == 0:
                continue
            term = float(ai)
            for j, aj in enumerate(alpha):
                power = aj - 1 if j == i else aj
                term *= y[j] ** power
            J[k, i] = term
    return J


def _lifted_entries(basis: MultiIndexBasis):
    """Sparse pattern of the lifted matrix: (row, col, i, j, weight) with
    entry += weight * A[i, j]."""
    pos = {alpha: k for k, alpha in enumerate(basis.indices)}
    entries = []
    for row, alpha in enumerate(basis.indices):
        for i, ai in enumerate(alpha):
            if ai == 0:
                continue
            for j in range(basis.d):
                beta = list(alpha)
                beta[i] -= 1
                beta[j] += 1
                entries.append((row, pos[tuple(beta)], i, j, float(ai)))
    return entries


def build_lifted_matrix(A: np.ndarray, basis: MultiIndexBasis) -> np.ndarray:
    """Lifted transition matrix: d/dt y^alpha = sum_ij alpha_i A_ij y^(alpha-e_i+e_j).

    Block-diagonal by total order; the leading d x d block equals A.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (basis.d, basis.d):
        raise ValueError("matrix dimension does not match basis")
    out = np.zeros((basis.D, basis.D))
    for row, col, i, j, w in _lifted_entries(basis):
        out[row, col] += w * A[i, j]
    return out


def build_lifted_matrix_generic(A, basis: MultiIndexBasis):
    """Same construction with graph-valued entries (list-of-list matrix)."""
    out = [[0.0] * basis.D for _ in range(basis.D)]
    for row, col, i, j, w in _lifted_entries(basis):
        cur = out[row][col]
        term = A[i][j] * w
        out[row][col] = term if isinstance(cur, float) and cur == 0.0 else cur + term
    return out


def lifted_spectrum(eigs, basis: MultiIndexBasis):
    """Eigenvalue multiset of the lifted matrix: {sum_i alpha_i lambda_i}."""
    eigs = [complex(e) for e in eigs]
    if len(eigs) != basis.d:
        raise ValueError(f"expected {basis.d} eigenvalues, got {len(eigs)}")
    return [sum(ai * li for ai, li in zip(alpha, eigs)) for alpha in basis.indices]
