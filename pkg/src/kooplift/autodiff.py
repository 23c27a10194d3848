"""Scalar-graph automatic differentiation.

Reverse mode is implemented with an explicit tape of scalar nodes; forward
mode uses dual numbers (``Tangent``).  Dual arithmetic is expressed in terms
of the primitive operations, so a tangent whose components are ``Node``
objects is recorded on the reverse tape -- this gives forward-over-reverse
nesting, which the training loss needs to differentiate through flow
Jacobians and their inverses.

Node values are either Python floats or 1-D numpy arrays.  An array value
represents a batch of *independent* scalar evaluations sharing one graph
(the per-sample computations never interact), which keeps the per-sample
semantics of a scalar graph while amortizing interpreter overhead.
"""

from __future__ import annotations

import math
import threading

import numpy as np

__all__ = [
    "Node",
    "Tangent",
    "Tape",
    "NonFiniteError",
    "reverse_gradient",
    "forward_tangent",
    "backward",
    "exp",
    "log",
    "tanh",
    "elu",
    "batch_sum",
    "fused_dot",
]


class NonFiniteError(ArithmeticError):
    """Raised when a NaN/Inf shows up in a graph value or gradient."""

    def __init__(self, op, message=""):
        self.op = op
        super().__init__(f"non-finite value in operation '{op}'" + (f": {message}" if message else ""))


_local = threading.local()


def _active_tape():
    return getattr(_local, "tape", None)


class Tape:
    """Records nodes in creation order; reverse iteration is a valid
    reverse-topological order because parents are created before children."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        self._prev = _active_tape()
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._prev
        return False

    def __len__(self):
        return len(self.nodes)


def _is_const(x):
    return isinstance(x, (int, float, np.floating, np.ndarray))


class Node:
    """One scalar value in the computation graph.

    ``partials`` holds the local derivative w.r.t. each entry of ``parents``;
    constants are folded into the partials rather than materialized as nodes.
    """

    __slots__ = ("value", "op", "parents", "partials", "grad")

    # keep numpy from broadcasting over Node operands; binary ops fall back
    # to the reflected Node methods instead
    __array_ufunc__ = None

    def __init__(self, value, op="leaf", parents=(), partials=()):
        self.value = value
        self.op = op
        self.parents = parents
        self.partials = partials
        self.grad = None
        tape = _active_tape()
        if tape is None:
            raise RuntimeError("Node created outside an active Tape")
        tape.nodes.append(self)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Node):
            return Node(self.value + other.value, "add", (self, other), (1.0, 1.0))
        if isinstance(other, Tangent):
            return NotImplemented
        return Node(self.value + other, "add", (self,), (1.0,))

    __radd__ = __add__

    def __neg__(self):
        return Node(-self.value, "neg", (self,), (-1.0,))

    def __sub__(self, other):
        if isinstance(other, Node):
            return Node(self.value - other.value, "sub", (self, other), (1.0, -1.0))
        if isinstance(other, Tangent):
            return NotImplemented
        return Node(self.value - other, "sub", (self,), (1.0,))

    def __rsub__(self, other):
        if isinstance(other, Tangent):
            return NotImplemented
        return Node(other - self.value, "rsub", (self,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, Node):
            return Node(self.value * other.value, "mul", (self, other), (other.value, self.value))
        if isinstance(other, Tangent):
            return NotImplemented
        return Node(self.value * other, "mul", (self,), (other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            inv = 1.0 / other.value
            return Node(
                self.value * inv,
                "div",
                (self, other),
                (inv, -self.value * inv * inv),
            )
        if isinstance(other, Tangent):
            return NotImplemented
        return Node(self.value / other, "div", (self,), (1.0 / other,))

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        return Node(other * inv, "rdiv", (self,), (-other * inv * inv,))

    def __pow__(self, exponent):
        if isinstance(exponent, Node):
            raise TypeError("power exponent must be a constant")
        val = self.value ** exponent
        return Node(val, "pow", (self,), (exponent * self.value ** (exponent - 1),))

    # -- nonlinear primitives --------------------------------------------

    def exp(self):
        e = np.exp(self.value)
        return Node(e, "exp", (self,), (e,))

    def log(self):
        return Node(np.log(self.value), "log", (self,), (1.0 / self.value,))

    def tanh(self):
        t = np.tanh(self.value)
        return Node(t, "tanh", (self,), (1.0 - t * t,))

    def elu(self):
        v = self.value
        if isinstance(v, np.ndarray):
            e = np.exp(np.minimum(v, 0.0))
            val = np.where(v > 0.0, v, e - 1.0)
            der = np.where(v > 0.0, 1.0, e)
        elif v > 0.0:
            val, der = v, 1.0
        else:
            e = math.exp(v)
            val, der = e - 1.0, e
        return Node(val, "elu", (self,), (der,))

    def sum(self):
        """Reduce a batch value to a plain scalar (identity on floats)."""
        v = self.value
        if isinstance(v, np.ndarray):
            return Node(float(v.sum()), "sum", (self,), (1.0,))
        return Node(v, "sum", (self,), (1.0,))

    def __repr__(self):
        return f"Node({self.op}, value={self.value!r})"


# -- dual numbers ---------------------------------------------------------


class Tangent:
    """Dual number (primal, directional derivative).

    Components may be floats, arrays, or ``Node`` objects; all arithmetic
    reduces to primitive operations on the components, so nesting inside a
    reverse tape works without special cases.
    """

    __slots__ = ("p", "t")

    __array_ufunc__ = None

    def __init__(self, primal, tangent=0.0):
        self.p = primal
        self.t = tangent

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Tangent) else Tangent(x, 0.0)

    def __add__(self, other):
        o = Tangent._lift(other)
        return Tangent(self.p + o.p, _tadd(self.t, o.t))

    __radd__ = __add__

    def __neg__(self):
        return Tangent(-self.p, -self.t if not _is_zero(self.t) else 0.0)

    def __sub__(self, other):
        o = Tangent._lift(other)
        return Tangent(self.p - o.p, _tsub(self.t, o.t))

    def __rsub__(self, other):
        o = Tangent._lift(other)
        return Tangent(o.p - self.p, _tsub(o.t, self.t))

    def __mul__(self, other):
        o = Tangent._lift(other)
        t = _tadd(_tmul(self.t, o.p), _tmul(o.t, self.p))
        return Tangent(self.p * o.p, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Tangent._lift(other)
        q = self.p / o.p
        # (t_a - q * t_b) / b
        t = _tmul(_tsub(self.t, _tmul(o.t, q)), _inv(o.p))
        return Tangent(q, t)

    def __rtruediv__(self, other):
        return Tangent._lift(other).__truediv__(self)

    def __pow__(self, exponent):
        if isinstance(exponent, Tangent):
            raise TypeError("power exponent must be a constant")
        val = self.p ** exponent
        return Tangent(val, _tmul(self.t, exponent * self.p ** (exponent - 1)))

    def exp(self):
        e = exp(self.p)
        return Tangent(e, _tmul(self.t, e))

    def log(self):
        return Tangent(log(self.p), _tmul(self.t, _inv(self.p)))

    def tanh(self):
        th = tanh(self.p)
        return Tangent(th, _tmul(self.t, 1.0 - th * th))

    def elu(self):
        val = elu(self.p)
        der = _elu_deriv(self.p)
        return Tangent(val, _tmul(self.t, der))

    def __repr__(self):
        return f"Tangent(p={self.p!r}, t={self.t!r})"


def _is_zero(x):
    return isinstance(x, float) and x == 0.0


def _tadd(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _tsub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _tmul(t, factor):
    if _is_zero(t):
        return 0.0
    return t * factor


def _inv(x):
    return 1.0 / x


def _elu_deriv(p):
    if isinstance(p, Node):
        v = p.value
        if isinstance(v, np.ndarray):
            der = np.where(v > 0.0, 0.0, 1.0)
            # derivative as a graph value: where(v>0, 1, exp(p))
            return der * p.exp() + np.where(v > 0.0, 1.0, 0.0)
        if v > 0.0:
            return 1.0
        return p.exp()
    if isinstance(p, np.ndarray):
        return np.where(p > 0.0, 1.0, np.exp(np.minimum(p, 0.0)))
    return 1.0 if p > 0.0 else math.exp(p)


# -- generic primitives ---------------------------------------------------


def exp(x):
    if isinstance(x, (Node, Tangent)):
        return x.exp()
    return np.exp(x)


def log(x):
    if isinstance(x, (Node, Tangent)):
        return x.log()
    return np.log(x)


def tanh(x):
    if isinstance(x, (Node, Tangent)):
        return x.tanh()
    return np.tanh(x)


def elu(x):
    if isinstance(x, (Node, Tangent)):
        return x.elu()
    if isinstance(x, np.ndarray):
        return np.where(x > 0.0, x, np.exp(np.minimum(x, 0.0)) - 1.0)
    return x if x > 0.0 else math.exp(x) - 1.0


def batch_sum(x):
    """Sum a batched scalar over the batch axis (plain number on scalars)."""
    if isinstance(x, Node):
        return x.sum()
    if isinstance(x, np.ndarray):
        return float(x.sum())
    return x


def fused_dot(ws, xs, bias=0.0):
    """Dot product sum_i w_i x_i + bias as a single scalar primitive.

    Equivalent to the composed mul/add chain but recorded as one node, which
    keeps matrix-vector products assembled from scalars cheap.  Supports any
    mix of constants, nodes and tangents in either factor list.
    """
    if (
        isinstance(bias, Tangent)
        or any(isinstance(v, Tangent) for v in ws)
        or any(isinstance(v, Tangent) for v in xs)
    ):
        wp = [v.p if isinstance(v, Tangent) else v for v in ws]
        xp = [v.p if isinstance(v, Tangent) else v for v in xs]
        wt = [v.t if isinstance(v, Tangent) else 0.0 for v in ws]
        xt = [v.t if isinstance(v, Tangent) else 0.0 for v in xs]
        bp = bias.p if isinstance(bias, Tangent) else bias
        bt = bias.t if isinstance(bias, Tangent) else 0.0
        primal = fused_dot(wp, xp, bp)
        tangent = bt
        terms_w = [(t, p) for t, p in zip(wt, xp) if not _is_zero(t)]
        terms_x = [(p, t) for p, t in zip(wp, xt) if not _is_zero(t)]
        if terms_w:
            tangent = _tadd(
                tangent, fused_dot([t for t, _ in terms_w], [p for _, p in terms_w])
            )
        if terms_x:
            tangent = _tadd(
                tangent, fused_dot([p for p, _ in terms_x], [t for _, t in terms_x])
            )
        return Tangent(primal, tangent)

    parents = []
    partials = []
    if isinstance(bias, Node):
        value = bias.value
        parents.append(bias)
        partials.append(1.0)
    else:
        value = bias
    for w, x in zip(ws, xs):
        w_node = isinstance(w, Node)
        x_node = isinstance(x, Node)
        wv = w.value if w_node else w
        xv = x.value if x_node else x
        value = value + wv * xv
        if w_node:
            parents.append(w)
            partials.append(xv)
        if x_node:
            parents.append(x)
            partials.append(wv)
    if not parents:
        return value
    return Node(value, "dot", tuple(parents), tuple(partials))


# -- reverse pass ---------------------------------------------------------


def _all_finite(v):
    if isinstance(v, np.ndarray):
        return bool(np.all(np.isfinite(v)))
    return math.isfinite(v)


def _first_nonfinite(tape):
    for node in tape.nodes:
        if not _all_finite(node.value):
            return node
    return None


def backward(loss, tape, check_finite=True):
    """Accumulate ``grad`` on every node reachable from ``loss``.

    ``loss`` must be scalar-valued (a float, not a batch array).
    """
    if isinstance(loss.value, np.ndarray):
        raise ValueError("backward seed must be a scalar; reduce batches with .sum()")
    if check_finite and not _all_finite(loss.value):
        bad = _first_nonfinite(tape)
        raise NonFiniteError(bad.op if bad is not None else loss.op)
    loss.grad = 1.0
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        for parent, partial in zip(node.parents, node.partials):
            contrib = partial * g
            if isinstance(contrib, np.ndarray) and not isinstance(parent.value, np.ndarray):
                contrib = float(contrib.sum())
            if parent.grad is None:
                parent.grad = contrib
            else:
                parent.grad = parent.grad + contrib


def reverse_gradient(program, inputs):
    """Value and gradient of a scalar program.

    ``program`` receives a list of ``Node`` leaves (one per input) and must
    return a single scalar node.
    """
    with Tape() as tape:
        leaves = [Node(float(x), "input") for x in inputs]
        out = program(leaves)
        if not isinstance(out, Node):
            raise TypeError("program must return a Node")
        backward(out, tape)
    grad = [leaf.grad if leaf.grad is not None else 0.0 for leaf in leaves]
    value = out.value
    return value, grad


def forward_tangent(program, x, direction):
    """Evaluate ``program`` with a dual-number push: returns (value, J·v).

    ``program`` receives a list of scalars and returns a list of scalars;
    entries of ``x`` may themselves be ``Node`` objects, in which case the
    tangent pass is recorded on the active tape.
    """
    if len(x) != len(direction):
        raise ValueError(f"direction length {len(direction)} != input length {len(x)}")
    duals = [Tangent(xi, vi) for xi, vi in zip(x, direction)]
    outs = program(duals)
    value = [o.p if isinstance(o, Tangent) else o for o in outs]
    jvp = [o.t if isinstance(o, Tangent) else 0.0 for o in outs]
    return value, jvp
