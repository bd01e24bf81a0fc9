"""A small array-level reverse-mode tape.

Each primitive is a function ``fn(*arrays, **static) -> (outputs, pullback)``
where ``pullback(*output_adjoints)`` returns one adjoint per array input (or
``None`` for inputs that are not differentiated).  The moment rules in
:mod:`momentbnn.layers` and the loss terms in :mod:`momentbnn.objective` and
:mod:`momentbnn.variational` are all written in this form, with hand-derived
adjoints.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ShapeError


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"


class _Node:
    __slots__ = ("fn", "static", "inputs", "outputs", "pullback", "multi")

    def __init__(self, fn, static, inputs, outputs, pullback, multi):
        self.fn = fn
        self.static = static
        self.inputs = inputs
        self.outputs = outputs
        self.pullback = pullback
        self.multi = multi


class Tape:
    """Records primitive applications in execution order.

    Recording order is a topological order, so :meth:`backward` only has to
    walk the node list in reverse.
    """

    def __init__(self):
        self._values = []
        self._leaves = []
        self._nodes = []

    def _new(self, value):
        var = Var(self, len(self._values), value)
        self._values.append(value)
        return var

    def leaf(self, value):
        """Register a differentiable input."""
        var = self._new(np.asarray(value, dtype=np.float64))
        self._leaves.append(var.index)
        return var

    def apply(self, fn, *inputs, **static):
        """Run ``fn`` on the input values and record it.

        Inputs that are not :class:`Var` are treated as constants.
        """
        values = [x.value if isinstance(x, Var) else x for x in inputs]
        out, pullback = fn(*values, **static)
        multi = isinstance(out, tuple)
        outs = out if multi else (out,)
        out_vars = tuple(self._new(o) for o in outs)
        self._nodes.append(_Node(fn, static, inputs, out_vars, pullback, multi))
        return out_vars if multi else out_vars[0]

    def __len__(self):
        return len(self._nodes)

    def backward(self, root):
        """Adjoints of the scalar ``root`` with respect to every recorded value.

        Returns a list indexed like the tape's values; entries never reached
        are zero arrays.
        """
        if not isinstance(root, Var) or root.tape is not self:
            raise ValueError("backward() needs a Var recorded on this tape")
        if root.value.size != 1:
            raise ValueError(
                f"backward() needs a scalar root, got shape {root.value.shape}"
            )
        adj = [None] * len(self._values)
        adj[root.index] = np.ones_like(root.value)
        for node in reversed(self._nodes):
            outs = [adj[v.index] for v in node.outputs]
            if all(g is None for g in outs):
                continue
            outs = [
                np.zeros_like(v.value) if g is None else g
                for g, v in zip(outs, node.outputs)
            ]
            in_adj = node.pullback(*outs)
            if not isinstance(in_adj, tuple):
                in_adj = (in_adj,)
            for ref, g in zip(node.inputs, in_adj):
                if g is None or not isinstance(ref, Var):
                    continue
                i = ref.index
                adj[i] = g if adj[i] is None else adj[i] + g
        return [
            np.zeros_like(v) if g is None else g for g, v in zip(adj, self._values)
        ]

    def grad(self, root, leaves):
        """Adjoints of ``root`` for the given leaf vars only."""
        adj = self.backward(root)
        return [adj[leaf.index] for leaf in leaves]

    def replay(self, leaf_values=None):
        """Re-execute every node from the leaves and return the recomputed values.

        ``leaf_values`` optionally maps leaf Vars to replacement values.
        """
        values = list(self._values)
        for var, value in (leaf_values or {}).items():
            values[var.index] = np.asarray(value, dtype=np.float64)
        for node in self._nodes:
            args = [values[r.index] if isinstance(r, Var) else r for r in node.inputs]
            out, _ = node.fn(*args, **node.static)
            outs = out if node.multi else (out,)
            for v, o in zip(node.outputs, outs):
                values[v.index] = o
        return values


# --- generic primitives -------------------------------------------------


def softplus(x):
    out = np.logaddexp(0.0, x)

    def pullback(g):
        return (g * expit(x),)

    return out, pullback


def square(x):
    def pullback(g):
        return (2.0 * x * g,)

    return x * x, pullback


def take(x, start, shape):
    """Contiguous slice of a flat vector, reshaped."""
    size = int(np.prod(shape, dtype=np.int64))
    out = x[start : start + size].reshape(shape)

    def pullback(g):
        full = np.zeros_like(x)
        full[start : start + size] = g.ravel()
        return (full,)

    return out, pullback


def column(x, index):
    """Select one column of a 2-D array."""

    def pullback(g):
        full = np.zeros_like(x)
        full[:, index] = g
        return (full,)

    return x[:, index], pullback


def add(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"add: shapes {np.shape(a)} and {np.shape(b)} differ")

    def pullback(g):
        return g, g

    return a + b, pullback


def add_scalar(x, c):
    def pullback(g):
        return (g,)

    return x + c, pullback


def linear_combination(*xs, weights):
    """sum_i weights[i] * xs[i] for scalars/arrays of equal shape."""
    out = sum(w * x for w, x in zip(weights, xs))

    def pullback(g):
        return tuple(w * g for w in weights)

    return np.asarray(out, dtype=np.float64), pullback


def reparameterize(mu, sigma, eps):
    """w = mu + sigma * eps with eps of shape (n_samples, n_params)."""

    def pullback(g):
        return g.sum(axis=0), (g * eps).sum(axis=0), None

    return mu + sigma * eps, pullback
