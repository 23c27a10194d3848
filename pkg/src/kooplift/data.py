"""Dataset ingestion and preprocessing.

CSV schema: header ``demo,t,x1,...,xd,v1,...,vd``; velocity columns are
optional and reconstructed by finite differences when absent.  Preprocessing
translates the common demo endpoint to the origin and scales every dimension
into [-1, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import flow as flowmod
from . import hurwitz

__all__ = [
    "Demonstration",
    "ScalingRecord",
    "Dataset",
    "load_csv",
    "save_csv",
    "resample",
    "preprocess",
    "finite_diff_velocities",
    "split_train_val",
    "synthetic_system",
]


class SchemaError(ValueError):
    pass


@dataclass
class Demonstration:
    t: np.ndarray
    pos: np.ndarray  # (n, d)
    vel: np.ndarray  # (n, d)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.pos = np.atleast_2d(np.asarray(self.pos, dtype=float))
        self.vel = np.atleast_2d(np.asarray(self.vel, dtype=float))
        if not (len(self.t) == len(self.pos) == len(self.vel)):
            raise SchemaError("t, pos, vel must have equal length")
        if np.any(np.diff(self.t) <= 0.0):
            raise SchemaError("time stamps must be strictly increasing")
        for arr in (self.t, self.pos, self.vel):
            if not np.all(np.isfinite(arr)):
                raise SchemaError("non-finite entries in demonstration")

    @property
    def d(self):
        return self.pos.shape[1]

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])


@dataclass
class ScalingRecord:
    """Affine map to the training domain: x_scaled = (x - offset) / scale."""

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0.0):
            raise ValueError("scale entries must be positive")

    @classmethod
    def identity(cls, d):
        return cls(offset=np.zeros(d), scale=np.ones(d))

    def transform(self, pos):
        return (np.asarray(pos, dtype=float) - self.offset) / self.scale

    def invert(self, pos):
        return np.asarray(pos, dtype=float) * self.scale + self.offset

    def transform_vel(self, vel):
        return np.asarray(vel, dtype=float) / self.scale

    def invert_vel(self, vel):
        return np.asarray(vel, dtype=float) * self.scale

    def to_dict(self):
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(offset=d["offset"], scale=d["scale"])


@dataclass
class Dataset:
    name: str
    demonstrations: list
    scaling: ScalingRecord | None = None

    @property
    def d(self):
        return self.demonstrations[0].d

    @property
    def n_samples(self):
        return sum(len(demo.t) for demo in self.demonstrations)

    def stacked(self):
        """All samples as (X, V) arrays, shape (N, d) each."""
        X = np.vstack([demo.pos for demo in self.demonstrations])
        V = np.vstack([demo.vel for demo in self.demonstrations])
        return X, V


def finite_diff_velocities(pos, t) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    t = np.asarray(t, dtype=float)
    if len(t) < 3:
        raise ValueError("finite differences need at least 3 samples")
    vel = np.empty_like(pos)
    vel[1:-1] = (pos[2:] - pos[:-2]) / (t[2:] - t[:-2])[:, None]
    vel[0] = (pos[1] - pos[0]) / (t[1] - t[0])
    vel[-1] = (pos[-1] - pos[-2]) / (t[-1] - t[-2])
    return vel


def load_csv(path, name=None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        rows = list(reader)
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0] != "demo" or header[1] != "t":
        raise SchemaError(f"{path}: header must start with 'demo,t,x1,...'")
    x_cols = [h for h in header if h.startswith("x")]
    v_cols = [h for h in header if h.startswith("v")]
    d = len(x_cols)
    if d == 0 or x_cols != [f"x{i+1}" for i in range(d)]:
        raise SchemaError(f"{path}: position columns must be x1..x{d}")
    if v_cols and v_cols != [f"v{i+1}" for i in range(d)]:
        raise SchemaError(f"{path}: velocity columns must be v1..v{d}")
    has_vel = bool(v_cols)
    groups = {}
    order = []
    for row in rows:
        if not row:
            continue
        demo_id = row[0]
        if demo_id not in groups:
            groups[demo_id] = []
            order.append(demo_id)
        groups[demo_id].append([float(v) for v in row[1:]])
    demos = []
    for demo_id in order:
        arr = np.array(groups[demo_id], dtype=float)
        t = arr[:, 0]
        pos = arr[:, 1 : 1 + d]
        if has_vel:
            vel = arr[:, 1 + d : 1 + 2 * d]
        else:
            vel = finite_diff_velocities(pos, t)
        demos.append(Demonstration(t=t, pos=pos, vel=vel))
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(name=name, demonstrations=demos)


def save_csv(dataset: Dataset, path):
    d = dataset.d
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["demo", "t"] + [f"x{i+1}" for i in range(d)] + [f"v{i+1}" for i in range(d)]
        )
        for k, demo in enumerate(dataset.demonstrations):
            for t, p, v in zip(demo.t, demo.pos, demo.vel):
                writer.writerow(
                    [k, repr(float(t))]
                    + [repr(float(x)) for x in p]
                    + [repr(float(x)) for x in v]
                )


def resample(demo: Demonstration, n=900) -> Demonstration:
    if len(demo.t) < 2:
        raise ValueError("resample needs at least 2 samples")
    t_new = np.linspace(demo.t[0], demo.t[-1], n)
    pos = np.column_stack([np.interp(t_new, demo.t, demo.pos[:, i]) for i in range(demo.d)])
    vel = np.column_stack([np.interp(t_new, demo.t, demo.vel[:, i]) for i in range(demo.d)])
    return Demonstration(t=t_new, pos=pos, vel=vel)


def preprocess(dataset: Dataset):
    """Translate the mean demo endpoint to the origin, scale to [-1, 1]^d.

    Returns the transformed dataset (with the scaling attached) and the
    scaling record.
    """
    endpoints = np.array([demo.pos[-1] for demo in dataset.demonstrations])
    offset = endpoints.mean(axis=0)
    extent = np.max(
        [np.max(np.abs(demo.pos - offset), axis=0) for demo in dataset.demonstrations], axis=0
    )
    if np.any(extent <= 0.0):
        raise ValueError("degenerate dimension: zero extent after centering")
    scaling = ScalingRecord(offset=offset, scale=extent)
    demos = [
        Demonstration(
            t=demo.t,
            pos=scaling.transform(demo.pos),
            vel=scaling.transform_vel(demo.vel),
        )
        for demo in dataset.demonstrations
    ]
    out = Dataset(name=dataset.name, demonstrations=demos, scaling=scaling)
    return out, scaling


def split_train_val(dataset: Dataset, n_train=None):
    n = len(dataset.demonstrations)
    if n_train is None:
        if n != 7:
            raise ValueError(f"default 4/3 split expects 7 demos, got {n}; pass n_train")
        n_train = 4
    train = Dataset(
        name=dataset.name,
        demonstrations=dataset.demonstrations[:n_train],
        scaling=dataset.scaling,
    )
    val = Dataset(
        name=dataset.name,
        demonstrations=dataset.demonstrations[n_train:],
        scaling=dataset.scaling,
    )
    return train, val


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def synthetic_system(seed, d=2, n_traj=3, n_samples=600, duration=6.0):
    """Trajectories of a system that is exactly a coupling flow away from
    linear: f(x) = J_g(x)^-1 A g(x) with known g and Hurwitz A.

    Velocities are the exact vector field at the samples, so a perfect model
    exists inside the hypothesis class.  Returns (dataset, ground_truth).
    """
    rng = np.random.default_rng(seed)
    # visible curvature, but biases stay zero so g(0) = 0 exactly
    g = flowmod.init_flow(
        flowmod.FlowArchitecture(
            d=d, n_layers=2, hidden_layers=1, hidden_width=8, final_tanh=False
        ),
        seed=int(rng.integers(2**31)),
        final_std=0.5,
    )

    A = hurwitz.assemble(hurwitz.random_factors(d, rng, epsilon=1.0))
    max_re = max(ev.real for ev in hurwitz.spectrum(A))
    A = A * (0.9 / abs(max_re))  # normalize decay rate to ~0.9

    def f(X):
        # batched vector field over rows of X (n, d): the flow evaluates
        # per-coordinate arrays, so all trajectories advance in one pass
        cols = [np.ascontiguousarray(X[:, i]) for i in range(d)]
        J = np.stack(
            [np.stack([np.broadcast_to(e, X.shape[0]) for e in row], axis=-1)
             for row in flowmod.flow_jacobian_generic(g, cols)],
            axis=-2,
        )
        gy = np.stack(flowmod.flow_forward(g, cols), axis=-1)
        return np.linalg.solve(J, (gy @ A.T)[..., None])[..., 0]

    h = 1e-3
    dt = duration / (n_samples - 1)
    steps = max(1, int(round(dt / h)))
    h = dt / steps
    X = rng.uniform(-1.0, 1.0, size=(n_traj, d))
    t = np.arange(n_samples) * dt
    pos = np.empty((n_samples, n_traj, d))
    vel = np.empty((n_samples, n_traj, d))
    for k in range(n_samples):
        pos[k] = X
        vel[k] = f(X)
        for _ in range(steps):
            X = _rk4_step(f, X, h)
    demos = [
        Demonstration(t=t, pos=pos[:, j], vel=vel[:, j]) for j in range(n_traj)
    ]
    dataset = Dataset(name=f"synthetic-{seed}", demonstrations=demos)
    ground_truth = {"A": A, "flow": g}
    return dataset, ground_truth
