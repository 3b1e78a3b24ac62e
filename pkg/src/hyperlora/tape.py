"""Reverse-mode differentiation on an explicit tape.

A :class:`Var` wraps a float64 array; arithmetic on Vars records one node
per primitive onto the owning :class:`Tape`.  Each node stores the forward
closure (for bit-exact replay) and a vector-Jacobian closure (for the
backward sweep).  Forward values are computed by the same kernels the plain
numpy path uses (:mod:`hyperlora.mathx`), so a taped forward pass and the
untaped one agree bitwise.

Supported primitives: matmul, add, sub, mul, neg, relu, exp, sum,
log-sum-exp, softmax, layer-norm, gather, slicing, reshape, transpose,
concat.  ReLU's subgradient at zero is zero.
"""

from __future__ import annotations

import numpy as np

from . import mathx


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Ordered record of primitive evaluations."""

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value, name: str = None) -> "Var":
        v = Var(np.asarray(value, dtype=np.float64), tape=self,
                op="leaf", name=name)
        self.nodes.append(v)
        return v

    def _record(self, v: "Var"):
        self.nodes.append(v)

    def gradients(self, loss: "Var", wrt: list["Var"]) -> list[np.ndarray]:
        """Backward sweep from a scalar loss.

        Returns gradients aligned with ``wrt`` (zero arrays for variables
        the loss does not depend on).  ``wrt`` entries must be leaves.
        """
        assert loss.tape is self
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            if node.parents is None:
                continue  # leaf: gradient stays for collection
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        return [grads.get(id(v), np.zeros_like(v.value)) for v in wrt]

    def replay(self) -> dict[int, np.ndarray]:
        """Recompute every node from its parents; returns id -> value.

        Leaves keep their recorded values; everything else is recomputed
        through the stored forward closures, reproducing the original
        values bit for bit.
        """
        values: dict[int, np.ndarray] = {}
        for node in self.nodes:
            if node.parents is None:
                values[id(node)] = node.value
            else:
                values[id(node)] = node.fwd(
                    *[values[id(p)] for p in node.parents])
        return values

    def first_nonfinite(self):
        """(index, op name) of the first node with a non-finite value."""
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.value)):
                return i, node.op
        return None


class Var:
    """A float64 array plus the bookkeeping to differentiate through it."""

    __slots__ = ("value", "tape", "op", "name", "parents", "vjp", "fwd")
    __array_ufunc__ = None  # keep numpy from consuming Var operands

    def __init__(self, value, tape, op, name=None, parents=None,
                 vjp=None, fwd=None):
        self.value = value
        self.tape = tape
        self.op = op
        self.name = name
        self.parents = parents
        self.vjp = vjp
        self.fwd = fwd

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    # -------------------------------------------------------------- helpers
    @property
    def T(self):
        return _op1(self, "transpose", lambda x: x.T, lambda g, x, y: g.T)

    def reshape(self, shape):
        return _op1(self, "reshape", lambda x: x.reshape(shape),
                    lambda g, x, y: g.reshape(x.shape))

    def sum(self, axis=None, keepdims=False):
        def vjp(g, x, y):
            if axis is None:
                return np.broadcast_to(g, x.shape).copy()
            ge = np.expand_dims(g, axis) if not keepdims else g
            return np.broadcast_to(ge, x.shape).copy()
        return _op1(self, "sum",
                    lambda x: np.sum(x, axis=axis, keepdims=keepdims), vjp)

    def __getitem__(self, idx):
        def fwd(x):
            return x[idx]

        def vjp(g, x, y):
            out = np.zeros_like(x)
            np.add.at(out, idx, g)
            return out
        return _op1(self, "slice", fwd, vjp)

    # ------------------------------------------------------------ operators
    def __add__(self, other):
        return _binary(self, other, "add", lambda a, b: a + b,
                       lambda g, a, b: _unbroadcast(g, a.shape),
                       lambda g, a, b: _unbroadcast(g, b.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, "sub", lambda a, b: a - b,
                       lambda g, a, b: _unbroadcast(g, a.shape),
                       lambda g, a, b: _unbroadcast(-g, b.shape))

    def __rsub__(self, other):
        return _binary(self, other, "rsub", lambda a, b: b - a,
                       lambda g, a, b: _unbroadcast(-g, a.shape),
                       lambda g, a, b: _unbroadcast(g, b.shape))

    def __mul__(self, other):
        return _binary(self, other, "mul", lambda a, b: a * b,
                       lambda g, a, b: _unbroadcast(g * b, a.shape),
                       lambda g, a, b: _unbroadcast(g * a, b.shape))

    __rmul__ = __mul__

    def __neg__(self):
        return _op1(self, "neg", lambda x: -x, lambda g, x, y: -g)

    def __matmul__(self, other):
        return _binary(self, other, "matmul", _mm,
                       lambda g, a, b: g @ b.T,
                       lambda g, a, b: a.T @ g)

    def __rmatmul__(self, other):
        return _binary(self, other, "rmatmul", lambda a, b: _mm(b, a),
                       lambda g, a, b: b.T @ g,
                       lambda g, a, b: g @ a.T)


def _mm(a, b):
    assert a.ndim == 2 and b.ndim == 2, "tape matmul is 2-D only"
    return a @ b


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _op1(x: Var, op: str, fwd, vjp):
    out_val = fwd(x.value)
    v = Var(out_val, x.tape, op, parents=(x,),
            vjp=lambda g, xv=x.value, yv=out_val: (vjp(g, xv, yv),),
            fwd=fwd)
    x.tape._record(v)
    return v


def _binary(a, b, op, fwd, vjp_a, vjp_b):
    av, bv = _value(a), _value(b)
    out_val = fwd(av, bv)
    parents, grads = [], []
    if isinstance(a, Var):
        parents.append(a)
        grads.append(vjp_a)
    if isinstance(b, Var):
        parents.append(b)
        grads.append(vjp_b)
    tape = (a.tape if isinstance(a, Var) else b.tape)

    def vjp(g, av=av, bv=bv):
        return tuple(fn(g, av, bv) for fn in grads)

    if isinstance(a, Var) and isinstance(b, Var):
        replay = fwd
    elif isinstance(a, Var):
        replay = lambda x, bv=bv: fwd(x, bv)  # noqa: E731
    else:
        replay = lambda x, av=av: fwd(av, x)  # noqa: E731
    v = Var(out_val, tape, op, parents=tuple(parents), vjp=vjp, fwd=replay)
    tape._record(v)
    return v


# ------------------------------------------------------------- named ops

def relu(x):
    if not isinstance(x, Var):
        return mathx.relu(x)
    return _op1(x, "relu", mathx.relu,
                lambda g, xv, yv: g * (xv > 0.0))


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    return _op1(x, "exp", np.exp, lambda g, xv, yv: g * yv)


def logsumexp(x, axis):
    if not isinstance(x, Var):
        return mathx.logsumexp(x, axis=axis)

    def vjp(g, xv, yv):
        ge = np.expand_dims(g, axis)
        ye = np.expand_dims(yv, axis)
        return ge * np.exp(xv - ye)
    return _op1(x, "logsumexp", lambda v: mathx.logsumexp(v, axis=axis), vjp)


def softmax(x, axis=-1):
    if not isinstance(x, Var):
        return mathx.softmax(x, axis=axis)

    def vjp(g, xv, yv):
        dot = np.sum(g * yv, axis=axis, keepdims=True)
        return yv * (g - dot)
    return _op1(x, "softmax", lambda v: mathx.softmax(v, axis=axis), vjp)


def layer_norm(x, gamma, beta, eps=1e-5):
    if not isinstance(x, Var):
        return mathx.layer_norm(x, gamma, beta, eps=eps)
    assert not isinstance(gamma, Var) and not isinstance(beta, Var), \
        "tape layer_norm differentiates the input only"

    def vjp(g, xv, yv):
        d = xv.shape[-1]
        mu = np.mean(xv, axis=-1, keepdims=True)
        var = np.mean((xv - mu) ** 2, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xv - mu) * inv
        dxhat = g * gamma
        term1 = dxhat
        term2 = np.mean(dxhat, axis=-1, keepdims=True)
        term3 = xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        return inv * (term1 - term2 - term3)
    return _op1(x, "layer_norm",
                lambda v: mathx.layer_norm(v, gamma, beta, eps=eps), vjp)


def gather(x, ids):
    """Row gather with scatter-add backward."""
    ids = np.asarray(ids)
    if not isinstance(x, Var):
        return x[ids]

    def vjp(g, xv, yv):
        out = np.zeros_like(xv)
        np.add.at(out, ids, g)
        return out
    return _op1(x, "gather", lambda v: v[ids], vjp)


def concat(parts, axis=0):
    if not any(isinstance(p, Var) for p in parts):
        return np.concatenate(parts, axis=axis)
    tape = next(p.tape for p in parts if isinstance(p, Var))
    values = [_value(p) for p in parts]
    out_val = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    var_parents = [(i, p) for i, p in enumerate(parts) if isinstance(p, Var)]

    def vjp(g):
        chunks = []
        for i, _ in var_parents:
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            chunks.append(g[tuple(sl)])
        return tuple(chunks)

    const_vals = {i: v for i, v in enumerate(values)
                  if not isinstance(parts[i], Var)}

    def replay(*parent_vals):
        vals = []
        it = iter(parent_vals)
        for i in range(len(parts)):
            vals.append(const_vals[i] if i in const_vals else next(it))
        return np.concatenate(vals, axis=axis)

    v = Var(out_val, tape, "concat",
            parents=tuple(p for _, p in var_parents), vjp=vjp, fwd=replay)
    tape._record(v)
    return v


class TapeOps:
    """Ops backend recording onto a tape (see :class:`hyperlora.mathx.NumpyOps`)."""

    relu = staticmethod(relu)
    softmax = staticmethod(softmax)
    logsumexp = staticmethod(logsumexp)
    layer_norm = staticmethod(layer_norm)
    exp = staticmethod(exp)
    concat = staticmethod(concat)

    @staticmethod
    def value_of(x):
        return _value(x)


tape_ops = TapeOps()
