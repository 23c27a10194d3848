"""The assembled linear predictor and its simulation.

A trained model is the triple (psi = rho o d, A_lift, C) plus the domain
scaling.  Simulation uses the latent shortcut: evolve the d-dimensional
latent state with exp(A t) and lift per query; the equivalence with the full
D-dimensional exponential is covered by tests, not assumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import ScalingRecord
from .flow import CouplingFlow, flow_forward
from .hurwitz import HurwitzFactors, assemble
from .monomial import MultiIndexBasis, build_lifted_matrix, enumerate_basis, lift

__all__ = [
    "LinearPredictor",
    "DomainError",
    "matrix_exp",
    "lift_state",
    "simulate",
    "vector_field",
    "save",
    "load",
]

MODEL_VERSION = 1
_DOMAIN_SLACK = 1e-9


class DomainError(ValueError):
    pass


@dataclass
class LinearPredictor:
    flow: CouplingFlow
    factors: HurwitzFactors
    basis: MultiIndexBasis
    C: np.ndarray  # (d, D)
    scaling: ScalingRecord

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if self.C.shape != (self.basis.d, self.basis.D):
            raise ValueError(f"C must be {(self.basis.d, self.basis.D)}, got {self.C.shape}")
        self.A = assemble(self.factors)
        self.A_lift = build_lifted_matrix(self.A, self.basis)

    @property
    def d(self):
        return self.basis.d

    def to_scaled(self, x):
        xs = self.scaling.transform(x)
        if np.any(np.abs(xs) > 1.0 + _DOMAIN_SLACK):
            raise DomainError(f"state {np.asarray(x)} outside the training domain")
        return xs

    def latent(self, x, scaled=False):
        xs = np.asarray(x, dtype=float) if scaled else self.to_scaled(x)
        return np.array(flow_forward(self.flow, list(xs)), dtype=float)

    def reconstruct(self, z):
        """Scaled-space reconstruction C z of a lifted state."""
        return self.C @ np.asarray(z, dtype=float)


def matrix_exp(M, t=1.0) -> np.ndarray:
    """exp(M t) by scaling-and-squaring with the degree-13 Pade approximant."""
    M = np.asarray(M, dtype=float)
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    A = M * t
    n = A.shape[0]
    b = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
    theta13 = 5.371920351148152
    norm = np.linalg.norm(A, 1)
    if norm == 0.0:
        return np.eye(n)
    s = max(0, int(math.ceil(math.log2(norm / theta13)))) if norm > theta13 else 0
    A = A / (2.0**s)
    I = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6
        + b[5] * A4
        + b[3] * A2
        + b[1] * I
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6
        + b[4] * A4
        + b[2] * A2
        + b[0] * I
    )
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def lift_state(model: LinearPredictor, x) -> np.ndarray:
    """z0 = rho(d(x)) for a raw-coordinate state."""
    return lift(model.latent(x), model.basis)


def simulate(model: LinearPredictor, x0, times, scaled=False) -> np.ndarray:
    """Rollout x_hat(t_i) = C rho(exp(A t_i) d(x0)), mapped back to raw
    coordinates unless ``scaled`` is set."""
    times = np.asarray(times, dtype=float)
    if len(times) and times[0] < 0.0:
        raise ValueError("times must be nonnegative")
    y0 = model.latent(x0, scaled=scaled)
    out = np.empty((len(times), model.d))
    uniform = len(times) > 1 and np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9)
    if uniform:
        E0 = matrix_exp(model.A, times[0])
        Eh = matrix_exp(model.A, times[1] - times[0])
        y = E0 @ y0
        for k in range(len(times)):
            out[k] = model.reconstruct(lift(y, model.basis))
            y = Eh @ y
    else:
        for k, t in enumerate(times):
            y = matrix_exp(model.A, t) @ y0
            out[k] = model.reconstruct(lift(y, model.basis))
    if scaled:
        return out
    return model.scaling.invert(out)


def vector_field(model: LinearPredictor, x, scaled=False) -> np.ndarray:
    """Predicted state derivative C A_lift psi(x)."""
    xs = np.asarray(x, dtype=float) if scaled else model.to_scaled(x)
    z = lift(model.latent(xs, scaled=True), model.basis)
    dx = model.C @ (model.A_lift @ z)
    return dx if scaled else model.scaling.invert_vel(dx)


def save(model: LinearPredictor, path):
    doc = {
        "version": MODEL_VERSION,
        "d": model.d,
        "p_bar": model.basis.p_bar,
        "D": model.basis.D,
        "flow": model.flow.to_dict(),
        "N": model.factors.N.tolist(),
        "Q": model.factors.Q.tolist(),
        "R": model.factors.R.tolist(),
        "epsilon": model.factors.epsilon,
        "C": model.C.tolist(),
        "scaling": model.scaling.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load(path) -> LinearPredictor:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model file {path}: {exc}") from exc
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(
            f"model version mismatch: file has {doc.get('version')}, expected {MODEL_VERSION}"
        )
    basis = enumerate_basis(doc["d"], doc["p_bar"])
    if basis.D != doc["D"]:
        raise ValueError("inconsistent lifted dimension in model file")
    return LinearPredictor(
        flow=CouplingFlow.from_dict(doc["flow"]),
        factors=HurwitzFactors(
            N=np.array(doc["N"]),
            Q=np.array(doc["Q"]),
            R=np.array(doc["R"]),
            epsilon=doc["epsilon"],
        ),
        basis=basis,
        C=np.array(doc["C"]),
        scaling=ScalingRecord.from_dict(doc["scaling"]),
    )
