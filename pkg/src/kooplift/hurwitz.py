"""Unconstrained parameterization of Hurwitz matrices.

The latent transition matrix is generated from free square factors N, Q, R
and a positive shift epsilon as

    A = (N N' + eps I)^-1 (-Q Q' - eps I + (R - R')/2)

which is Hurwitz for every finite choice of the factors.  The assembly is
written with generic scalar arithmetic so it can run on the autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la

__all__ = ["HurwitzFactors", "assemble", "assemble_generic", "spectrum", "random_factors"]


@dataclass
class HurwitzFactors:
    """Free parameters generating a d x d Hurwitz matrix."""

    N: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        d = self.N.shape[0]
        if self.N.shape != (d, d) or self.Q.shape != (d, d) or self.R.shape != (d, d):
            raise ValueError("N, Q, R must be square matrices of equal size")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def d(self):
        return self.N.shape[0]


def assemble_generic(N, Q, R, epsilon):
    """Assemble the stable matrix from list-of-list factors of any scalar type."""
    d = len(N)
    eye = la.identity(d)
    X = la.mat_add(la.mat_mul(N, la.transpose(N)), la.mat_scale(eye, epsilon))
    QQ = la.mat_mul(Q, la.transpose(Q))
    skew = la.mat_scale(la.mat_add(R, la.mat_scale(la.transpose(R), -1.0)), 0.5)
    right = la.mat_add(la.mat_add(la.mat_scale(QQ, -1.0), la.mat_scale(eye, -epsilon)), skew)
    return la.mat_mul(la.inverse(X), right)


def assemble(factors: HurwitzFactors) -> np.ndarray:
    """Numeric assembly; every finite input yields a Hurwitz matrix."""
    A = assemble_generic(
        factors.N.tolist(), factors.Q.tolist(), factors.R.tolist(), factors.epsilon
    )
    return np.array(A, dtype=float)


def spectrum(M: np.ndarray):
    """Eigenvalues of a small matrix via its analytic characteristic polynomial.

    Supports d <= 3; larger matrices are handled through the lifted-spectrum
    identity in the monomial module.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError("spectrum expects a square matrix")
    if d > 3:
        raise ValueError("spectrum supports d <= 3; use monomial.lifted_spectrum")
    if d == 1:
        return [complex(M[0, 0])]
    if d == 2:
        tr = M[0, 0] + M[1, 1]
        dt = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = complex(tr * tr - 4.0 * dt) ** 0.5
        return [0.5 * (tr + disc), 0.5 * (tr - disc)]
    # d == 3: char poly lambda^3 - tr lambda^2 + c2 lambda - det
    tr = np.trace(M)
    c2 = 0.5 * (tr * tr - np.trace(M @ M))
    dt = np.linalg.det(M)
    roots = np.roots([1.0, -tr, c2, -dt])
    return [complex(r) for r in roots]


def random_factors(d, rng, epsilon=1e-6) -> HurwitzFactors:
    """Standard-normal factors; handy for property tests and init."""
    return HurwitzFactors(
        N=rng.standard_normal((d, d)),
        Q=rng.standard_normal((d, d)),
        R=rng.standard_normal((d, d)),
        epsilon=epsilon,
    )
