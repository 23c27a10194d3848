"""Joint training of the flow, the stable latent matrix and the
reconstruction map.

The objective has three parts: the stacked prediction/reconstruction error
of the lifted linear model, the smooth-equivalence (Koopman-invariance)
residual evaluated in state space through the inverse flow Jacobian, and a
data-independent near-identity penalty at the origin.  Gradients are exact,
computed on the scalar autodiff tape with forward tangents nested inside
for the Jacobian entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .autodiff import Node, NonFiniteError, Tape, backward, batch_sum, fused_dot
from .data import Dataset
from .flow import CouplingFlow, FlowArchitecture, flow_forward, flow_jacobian_generic, init_flow
from .hurwitz import HurwitzFactors, assemble_generic
from .monomial import MultiIndexBasis, _lifted_entries, enumerate_basis, lift_generic
from .predictor import LinearPredictor, simulate

__all__ = [
    "TrainConfig",
    "LossBreakdown",
    "AdamState",
    "Objective",
    "adam_step",
    "train",
    "rollout_rmse",
    "invariance_residuals",
    "TrainingDiverged",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    p_bar: int = 8
    arch: FlowArchitecture = None
    epochs: int = 3000
    batch_size: int | None = None  # None: full batch up to 6300 samples
    learning_rate: float = 1e-3
    w_pred: float = 1.0
    w_inv: float = 1.0
    w_id: float = 1.0
    epsilon: float = 1e-6
    seed: int = 0
    rmse_every: int = 50
    det_guard: float = 1e-12

    def __post_init__(self):
        for name in ("epochs", "learning_rate", "w_pred", "w_inv", "w_id", "epsilon", "p_bar"):
            if getattr(self, name) is not None and not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class LossBreakdown:
    total: float
    prediction: float
    invariance: float
    near_identity: float
    skipped: int = 0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n):
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params, grad, state: AdamState, lr):
    """Standard bias-corrected ADAM update; returns the new parameter vector."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("parameter/gradient/state shape mismatch")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def _chunks(it, shape):
    """Pull shape[0]*shape[1] scalars from an iterator into a nested list."""
    return [[next(it) for _ in range(shape[1])] for _ in range(shape[0])]


class Objective:
    """Loss/gradient over the flat parameter vector
    [flow weights | N | Q | R | C] for a fixed architecture and basis."""

    def __init__(self, flow_template: CouplingFlow, basis: MultiIndexBasis, epsilon,
                 weights=(1.0, 1.0, 1.0), det_guard=1e-12):
        self.template = flow_template
        self.basis = basis
        self.epsilon = float(epsilon)
        self.weights = weights
        self.det_guard = det_guard
        self.d = basis.d
        self.n_flow = flow_template.n_params()
        self.entries = _lifted_entries(basis)
        self.n_params = self.n_flow + 3 * self.d * self.d + self.d * basis.D

    def pack(self, flow: CouplingFlow, factors: HurwitzFactors, C) -> np.ndarray:
        parts = [np.fromiter(flow.parameters(), dtype=float)]
        parts += [factors.N.ravel(), factors.Q.ravel(), factors.R.ravel(), np.ravel(C)]
        flat = np.concatenate(parts)
        assert flat.size == self.n_params
        return flat

    def unpack(self, flat):
        """Numeric views: (CouplingFlow, HurwitzFactors, C array)."""
        it = iter(flat.tolist())
        flow = self.template.map_parameters(it)
        d, D = self.d, self.basis.D
        N = np.array(_chunks(it, (d, d)))
        Q = np.array(_chunks(it, (d, d)))
        R = np.array(_chunks(it, (d, d)))
        C = np.array(_chunks(it, (d, D)))
        return flow, HurwitzFactors(N=N, Q=Q, R=R, epsilon=self.epsilon), C

    def _views(self, scalars):
        it = iter(scalars)
        flow = self.template.map_parameters(it)
        d, D = self.d, self.basis.D
        N = _chunks(it, (d, d))
        Q = _chunks(it, (d, d))
        R = _chunks(it, (d, d))
        C = _chunks(it, (d, D))
        return flow, N, Q, R, C

    def _terms(self, flow, N, Q, R, C, X, Xi):
        """Loss terms with generic scalars; X is (B, d), Xi is (B, 2d)."""
        d, D = self.d, self.basis.D
        A = assemble_generic(N, Q, R, self.epsilon)
        x_cols = [np.ascontiguousarray(X[:, i]) for i in range(d)]
        y = flow_forward(flow, x_cols)
        z = lift_generic(y, self.basis)

        # A_lift @ z through the sparse entry pattern
        Az = [0.0] * D
        for row, col, i, j, w in self.entries:
            term = (A[i][j] * w) * z[col]
            Az[row] = term if isinstance(Az[row], float) and Az[row] == 0.0 else Az[row] + term

        pred = 0.0
        for r in range(d):
            CAz = fused_dot(C[r], Az)
            Cz = fused_dot(C[r], z)
            res1 = Xi[:, r] - CAz
            res2 = Xi[:, d + r] - Cz
            pred = pred + batch_sum(res1 * res1) + batch_sum(res2 * res2)

        # invariance: xi_1 - J_d(x)^-1 A d(x), with a determinant guard
        J = flow_jacobian_generic(flow, x_cols)
        detJ = la.det(J)
        det_val = detJ.value if isinstance(detJ, Node) else detJ
        mask = None
        skipped = 0
        bad = np.abs(np.asarray(det_val)) < self.det_guard
        if np.any(bad):
            mask = np.where(bad, 0.0, 1.0)
            skipped = int(np.sum(bad))
            # replace guarded determinants with 1 so the masked samples do
            # not inject inf/nan through the division
            detJ = detJ * mask + (1.0 - mask)
        Jinv = la.inverse(J, det_value=detJ)
        Ay = la.mat_vec(A, y)
        pred1 = la.mat_vec(Jinv, Ay)
        inv = 0.0
        for r in range(d):
            res = Xi[:, r] - pred1[r]
            sq = res * res
            if mask is not None:
                sq = sq * mask
            inv = inv + batch_sum(sq)

        # near-identity at the origin (data independent)
        zero = [0.0] * d
        y0 = flow_forward(flow, zero)
        J0 = flow_jacobian_generic(flow, zero)
        ident = 0.0
        for i in range(d):
            ident = ident + y0[i] * y0[i]
            for j in range(d):
                delta = J0[i][j] - (1.0 if i == j else 0.0)
                ident = ident + delta * delta
        return pred, inv, ident, skipped

    def loss(self, X, Xi, flat) -> LossBreakdown:
        flow, N, Q, R, C = self._views(list(flat.tolist()))
        return self._breakdown(*self._terms(flow, N, Q, R, C, X, Xi), numeric=True)

    def _breakdown(self, pred, inv, ident, skipped, numeric=False):
        value = (lambda x: float(x)) if numeric else (lambda x: float(x.value))
        wp, wi, wn = self.weights
        p, i, n = value(pred), value(inv), value(ident)
        return LossBreakdown(
            total=wp * p + wi * i + wn * n,
            prediction=p,
            invariance=i,
            near_identity=n,
            skipped=skipped,
        )

    def loss_and_grad(self, X, Xi, flat):
        if X.shape[0] == 0:
            raise ValueError("empty batch")
        wp, wi, wn = self.weights
        with Tape() as tape:
            leaves = [Node(v, "param") for v in flat.tolist()]
            flow, N, Q, R, C = self._views(leaves)
            pred, inv, ident, skipped = self._terms(flow, N, Q, R, C, X, Xi)
            total = pred * wp + inv * wi + ident * wn
            backward(total, tape)
        grad = np.array([leaf.grad if leaf.grad is not None else 0.0 for leaf in leaves])
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("gradient", "non-finite parameter gradient")
        return self._breakdown(pred, inv, ident, skipped), grad


def rollout_rmse(model: LinearPredictor, dataset: Dataset) -> float:
    """Mean over demos of the rollout RMSE from each demo's start, in scaled
    units at the demo timestamps."""
    errs = []
    for demo in dataset.demonstrations:
        times = demo.t - demo.t[0]
        traj = simulate(model, demo.pos[0], times, scaled=True)
        errs.append(float(np.sqrt(np.mean(np.sum((traj - demo.pos) ** 2, axis=1)))))
    return float(np.mean(errs))


def invariance_residuals(model: LinearPredictor, X, V) -> np.ndarray:
    """Per-sample squared smooth-equivalence residual |v - J^-1 A d(x)|^2,
    evaluated numerically on scaled data."""
    d = model.d
    x_cols = [np.ascontiguousarray(X[:, i]) for i in range(d)]
    y = flow_forward(model.flow, x_cols)
    J = flow_jacobian_generic(model.flow, x_cols)
    Jinv = la.inverse(J)
    Ay = la.mat_vec([list(row) for row in model.A], y)
    pred1 = la.mat_vec(Jinv, Ay)
    res = np.stack([V[:, r] - pred1[r] for r in range(d)], axis=1)
    return np.sum(res * res, axis=1)


def _init_params(obj: Objective, config: TrainConfig):
    d, D = obj.d, obj.basis.D
    rng = np.random.default_rng(config.seed + 1)
    eye = np.eye(d)
    factors = HurwitzFactors(
        N=eye + 0.1 * rng.standard_normal((d, d)),
        Q=eye + 0.1 * rng.standard_normal((d, d)),
        R=0.1 * rng.standard_normal((d, d)),
        epsilon=config.epsilon,
    )
    C = np.hstack([eye, np.zeros((d, D - d))])
    return obj.pack(obj.template, factors, C)


def train(dataset: Dataset, config: TrainConfig):
    """Minimize the objective with ADAM; returns the best-by-training-RMSE
    model and the per-epoch history."""
    if dataset.scaling is None:
        raise ValueError("dataset must be preprocessed before training")
    basis = enumerate_basis(dataset.d, config.p_bar)
    arch = config.arch
    if arch is None:
        raise ValueError("config.arch is required")
    template = init_flow(arch, config.seed)
    obj = Objective(
        template,
        basis,
        config.epsilon,
        weights=(config.w_pred, config.w_inv, config.w_id),
        det_guard=config.det_guard,
    )
    X, V = dataset.stacked()
    Xi = np.hstack([V, X])
    n = X.shape[0]
    batch = config.batch_size
    if batch is None:
        batch = n if n <= 6300 else 1024
    rng = np.random.default_rng(config.seed + 2)

    flat = _init_params(obj, config)
    state = AdamState.zeros(flat.size)

    def make_model(vec):
        flow, factors, C = obj.unpack(vec)
        return LinearPredictor(
            flow=flow, factors=factors, basis=basis, C=C, scaling=dataset.scaling
        )

    history = []
    best_rmse = np.inf
    best_flat = flat.copy()
    for epoch in range(1, config.epochs + 1):
        if batch >= n:
            breakdown, grad = obj.loss_and_grad(X, Xi, flat)
            flat = adam_step(flat, grad, state, config.learning_rate)
            totals = [breakdown]
        else:
            perm = rng.permutation(n)
            totals = []
            for start in range(0, n, batch):
                idx = perm[start : start + batch]
                bd, grad = obj.loss_and_grad(X[idx], Xi[idx], flat)
                flat = adam_step(flat, grad, state, config.learning_rate)
                totals.append(bd)
        rec = {
            "epoch": epoch,
            "total": float(np.mean([b.total for b in totals])),
            "prediction": float(np.mean([b.prediction for b in totals])),
            "invariance": float(np.mean([b.invariance for b in totals])),
            "near_identity": float(np.mean([b.near_identity for b in totals])),
            "skipped": int(sum(b.skipped for b in totals)),
            "rmse": None,
        }
        if not np.isfinite(rec["total"]) or rec["total"] > 1e6:
            raise TrainingDiverged(f"loss diverged at epoch {epoch}", history)
        if epoch % config.rmse_every == 0 or epoch == config.epochs:
            r = rollout_rmse(make_model(flat), dataset)
            rec["rmse"] = r
            if r < best_rmse:
                best_rmse = r
                best_flat = flat.copy()
        history.append(rec)
    return make_model(best_flat), history
