"""Small dense matrix helpers generic over the scalar type.

Matrices are lists of lists (row-major); entries may be floats, numpy
arrays (batched scalars), ``Node`` or ``Tangent`` objects.  Inverses are
analytic cofactor formulas for sizes 1..3 so that exact partials are
recorded when entries live on the autodiff tape.
"""

from __future__ import annotations

__all__ = [
    "mat_vec",
    "mat_mul",
    "mat_add",
    "mat_scale",
    "transpose",
    "identity",
    "det",
    "inverse",
]


def mat_vec(M, v):
    return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]


def mat_mul(A, B):
    n, k, m = len(A), len(B), len(B[0])
    return [[sum(A[i][p] * B[p][j] for p in range(k)) for j in range(m)] for i in range(n)]


def mat_add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def mat_scale(A, c):
    return [[a * c for a in row] for row in A]


def transpose(A):
    return [list(col) for col in zip(*A)]


def identity(n):
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if n == 3:
        return (
            M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
        )
    raise ValueError(f"analytic determinant limited to n<=3, got {n}")


def inverse(M, det_value=None):
    n = len(M)
    d = det(M) if det_value is None else det_value
    if n == 1:
        return [[1.0 / d]]
    if n == 2:
        inv = 1.0 / d
        return [
            [M[1][1] * inv, -M[0][1] * inv],
            [-M[1][0] * inv, M[0][0] * inv],
        ]
    if n == 3:
        inv = 1.0 / d
        c = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != i]
                s = [k for k in range(3) if k != j]
                minor = M[r[0]][s[0]] * M[r[1]][s[1]] - M[r[0]][s[1]] * M[r[1]][s[0]]
                sign = 1.0 if (i + j) % 2 == 0 else -1.0
                c[j][i] = sign * minor * inv  # adjugate transpose
        return c
    raise ValueError(f"analytic inverse limited to n<=3, got {n}")
