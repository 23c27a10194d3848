"""Affine coupling flow: the learnable diffeomorphism.

Each layer passes one index set through untouched and transforms the other
as x_b * exp(s(x_a)) + t(x_a); an optional dimension-wise tanh closes the
stack, mapping into the open unit box.  Forward, inverse and input-Jacobian
are exact.  All evaluation code is generic over the scalar type (floats,
batched numpy arrays, autodiff nodes, dual numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import elu, exp, forward_tangent, fused_dot, tanh

__all__ = [
    "MLP",
    "ACFLayer",
    "CouplingFlow",
    "FlowArchitecture",
    "init_flow",
    "layer_forward",
    "layer_inverse",
    "flow_forward",
    "flow_inverse",
    "flow_jacobian",
    "flow_jacobian_generic",
]

_S_CLAMP = 5.0


@dataclass
class MLP:
    """Fully connected net, ELU hidden activations, linear output.

    Weights are stored as nested Python lists so a structural copy with
    graph-valued entries evaluates through the same code path.
    """

    widths: tuple
    W: list = field(repr=False)  # per layer: [out][in]
    b: list = field(repr=False)  # per layer: [out]

    def apply(self, x):
        h = x
        last = len(self.W) - 1
        for k, (Wk, bk) in enumerate(zip(self.W, self.b)):
            out = [fused_dot(wi, h, bi) for wi, bi in zip(Wk, bk)]
            h = out if k == last else [elu(o) for o in out]
        return h

    def parameters(self):
        for Wk, bk in zip(self.W, self.b):
            for row in Wk:
                yield from row
            yield from bk

    def n_params(self):
        return sum(1 for _ in self.parameters())

    def map_parameters(self, it):
        """Structural copy with each scalar replaced by next(it)."""
        W = [[[next(it) for _ in row] for row in Wk] for Wk in self.W]
        b = [[next(it) for _ in bk] for bk in self.b]
        return MLP(widths=self.widths, W=W, b=b)

    def to_dict(self):
        return {"widths": list(self.widths), "W": self.W, "b": self.b}

    @classmethod
    def from_dict(cls, d):
        return cls(widths=tuple(d["widths"]), W=d["W"], b=d["b"])


@dataclass
class ACFLayer:
    a: tuple  # untouched indices
    b: tuple  # transformed indices
    s_net: MLP
    t_net: MLP

    def __post_init__(self):
        overlap = set(self.a) & set(self.b)
        if overlap or not self.a or not self.b:
            raise ValueError("partition must be two nonempty disjoint index sets")


@dataclass
class CouplingFlow:
    d: int
    layers: list
    final_tanh: bool = True

    def parameters(self):
        for layer in self.layers:
            yield from layer.s_net.parameters()
            yield from layer.t_net.parameters()

    def n_params(self):
        return sum(1 for _ in self.parameters())

    def map_parameters(self, it):
        layers = [
            ACFLayer(layer.a, layer.b, layer.s_net.map_parameters(it), layer.t_net.map_parameters(it))
            for layer in self.layers
        ]
        return CouplingFlow(d=self.d, layers=layers, final_tanh=self.final_tanh)

    def to_dict(self):
        return {
            "d": self.d,
            "final_tanh": self.final_tanh,
            "layers": [
                {
                    "a": list(layer.a),
                    "b": list(layer.b),
                    "s_net": layer.s_net.to_dict(),
                    "t_net": layer.t_net.to_dict(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        layers = [
            ACFLayer(
                tuple(rec["a"]),
                tuple(rec["b"]),
                MLP.from_dict(rec["s_net"]),
                MLP.from_dict(rec["t_net"]),
            )
            for rec in d["layers"]
        ]
        return cls(d=d["d"], layers=layers, final_tanh=d["final_tanh"])


def _clamped_scale(layer, xa):
    # soft clamp keeps exp(s) in [e^-5, e^5]; still smooth and invertible
    return [tanh(s * (1.0 / _S_CLAMP)) * _S_CLAMP for s in layer.s_net.apply(xa)]


def layer_forward(layer: ACFLayer, x):
    xa = [x[i] for i in layer.a]
    s = _clamped_scale(layer, xa)
    t = layer.t_net.apply(xa)
    out = list(x)
    for k, i in enumerate(layer.b):
        out[i] = x[i] * exp(s[k]) + t[k]
    return out


def layer_inverse(layer: ACFLayer, y):
    ya = [y[i] for i in layer.a]
    s = _clamped_scale(layer, ya)
    t = layer.t_net.apply(ya)
    out = list(y)
    for k, i in enumerate(layer.b):
        out[i] = (y[i] - t[k]) * exp(-s[k])
    return out


def flow_forward(flow: CouplingFlow, x):
    h = list(x)
    for layer in flow.layers:
        h = layer_forward(layer, h)
    if flow.final_tanh:
        h = [tanh(v) for v in h]
    return h


def flow_inverse(flow: CouplingFlow, y):
    h = list(y)
    if flow.final_tanh:
        vals = np.asarray([np.max(np.abs(v)) for v in h])
        if np.any(vals >= 1.0):
            raise ValueError("flow_inverse: inputs must lie in the open unit box")
        h = [np.arctanh(v) for v in h]
    for layer in reversed(flow.layers):
        h = layer_inverse(layer, h)
    return h


def flow_jacobian_generic(flow: CouplingFlow, x):
    """Input Jacobian via one forward-tangent pass per coordinate.

    Returns a list-of-lists J with J[i][k] = d out_i / d x_k; entries are
    graph values when the flow parameters are graph values.
    """
    d = flow.d
    cols = []
    for k in range(d):
        direction = [1.0 if i == k else 0.0 for i in range(d)]
        _, jvp = forward_tangent(lambda duals: flow_forward(flow, duals), x, direction)
        cols.append(jvp)
    return [[cols[k][i] for k in range(d)] for i in range(d)]


def flow_jacobian(flow: CouplingFlow, x) -> np.ndarray:
    return np.array(flow_jacobian_generic(flow, [float(v) for v in x]), dtype=float)


@dataclass
class FlowArchitecture:
    d: int
    n_layers: int
    hidden_layers: int
    hidden_width: int
    final_tanh: bool = True


def _init_mlp(widths, rng, final_std=1e-2):
    W, b = [], []
    for k in range(len(widths) - 1):
        fan_in = widths[k]
        std = final_std if k == len(widths) - 2 else 1.0 / np.sqrt(fan_in)
        W.append((rng.standard_normal((widths[k + 1], fan_in)) * std).tolist())
        b.append([0.0] * widths[k + 1])
    return MLP(widths=tuple(widths), W=W, b=b)


def init_flow(arch: FlowArchitecture, seed: int, final_std=1e-2) -> CouplingFlow:
    """Near-identity initialization: small final-layer weights, zero biases."""
    if arch.d < 2:
        raise ValueError("coupling layers require d >= 2")
    rng = np.random.default_rng(seed)
    layers = []
    idx = list(range(arch.d))
    for j in range(arch.n_layers):
        # alternate which coordinate block is transformed
        split = arch.d // 2
        if j % 2 == 0:
            a, b = tuple(idx[:split]), tuple(idx[split:])
        else:
            a, b = tuple(idx[split:]), tuple(idx[:split])
        widths = [len(a)] + [arch.hidden_width] * arch.hidden_layers + [len(b)]
        layers.append(
            ACFLayer(
                a=a,
                b=b,
                s_net=_init_mlp(widths, rng, final_std),
                t_net=_init_mlp(widths, rng, final_std),
            )
        )
    return CouplingFlow(d=arch.d, layers=layers, final_tanh=arch.final_tanh)
