"""Minimal reverse/forward automatic differentiation over numpy values.

Two cooperating pieces:

* ``Tape`` / ``ADValue`` — reverse mode.  Every operation appends a node to
  its tape (value + backward rule); ``Tape.backward`` replays the tape in
  reverse creation order and leaves ``∂output/∂leaf`` in each leaf's
  ``adjoint``.  Node values are numpy arrays (a scalar is a 0-d array), so a
  whole minibatch flows through one node per operation.

* ``Dual`` — forward mode.  A ``(primal, tangent)`` pair whose components may
  be plain arrays *or* tape nodes.  Seeding duals whose components live on a
  tape gives forward-over-reverse nesting: directional state derivatives are
  computed in forward mode and the training gradient is a single reverse
  sweep over everything, including the dual arithmetic.

The primitive set is fixed: ``+ - * / tanh sin cos sqrt`` plus matrix
multiply and the structural ops (concat/stack/slice/reshape/transpose/sum,
lower-triangular fill, SPD solve) needed to assemble models.  Broadcasting is
supported only in the limited patterns the models use (leading batch axes,
scalars, bias rows); anything fancier is out of scope on purpose.

``tanh``/``sin``/``cos``/``sqrt``/``matmul`` etc. are module-level functions
that dispatch on their argument (ndarray, ``ADValue`` or ``Dual``), so model
code written against this module runs unchanged in plain-eval, reverse,
forward, and nested modes.
"""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .errors import ContractError, NumericFaultError

Arrayish = Union["ADValue", np.ndarray, float, int]

# Condition-number ceiling for solve_spd (estimated bound, not exact).
_SOLVE_COND_LIMIT = 1e12


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _finite(a: np.ndarray) -> bool:
    return bool(np.isfinite(a).all())


class Tape:
    """Recording context for one reverse-mode computation.

    A tape is confined to a single logical worker and reset (dropped) between
    training iterations; nothing is retained across backward calls except the
    recorded nodes themselves.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[ADValue] = []

    def leaf(self, value, label: str | None = None) -> "ADValue":
        """Register an input we want gradients for."""
        v = np.asarray(value, dtype=float)
        return ADValue(self, v, op="leaf", parents=(), bwd=None, label=label)

    def leaves(self) -> list["ADValue"]:
        return [n for n in self.nodes if n.op == "leaf"]

    def backward(self, output: "ADValue") -> dict[int, np.ndarray]:
        """Reverse sweep from ``output``; returns ``{leaf index: gradient}``.

        ``output`` must be scalar (size-1).  Adjoints are reset first, so
        repeated calls give identical results and tape values are untouched.
        Raises :class:`NumericFaultError` (carrying the node index) if a
        non-finite value or adjoint is encountered during the traversal.
        """
        if not isinstance(output, ADValue) or output.tape is not self:
            raise ContractError("backward target must be a node on this tape")
        if output.value.size != 1:
            raise ContractError(
                f"backward target must be scalar, got shape {output.value.shape}"
            )
        for node in self.nodes:
            node.adjoint = None
        output.adjoint = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.idx + 1]):
            adj = node.adjoint
            if adj is None:
                continue
            if not _finite(node.value) or not _finite(adj):
                raise NumericFaultError(
                    "non-finite value in backward traversal",
                    node=node.idx, op=node.op,
                )
            if node._bwd is not None:
                node._bwd(adj)
        grads = {}
        for node in self.nodes:
            if node.op == "leaf":
                g = node.adjoint
                grads[node.idx] = np.zeros_like(node.value) if g is None else g.copy()
        return grads


def backward(output: "ADValue") -> dict[int, np.ndarray]:
    """Convenience wrapper: run the sweep on the output's own tape."""
    return output.tape.backward(output)


class ADValue:
    """One node on a :class:`Tape`: value, accumulated adjoint, provenance."""

    __slots__ = ("tape", "value", "adjoint", "op", "parents", "_bwd", "idx", "label")

    # keep numpy from consuming us elementwise; reflected operators fire instead
    __array_ufunc__ = None

    def __init__(self, tape, value, op, parents, bwd, label=None):
        self.tape = tape
        self.value = value
        self.adjoint = None
        self.op = op
        self.parents = parents
        self._bwd = bwd
        self.label = label
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def _acc(self, grad: np.ndarray):
        # adjoints are never mutated in place, so sharing array objects is fine
        grad = _unbroadcast(grad, self.value.shape)
        self.adjoint = grad if self.adjoint is None else self.adjoint + grad

    def __repr__(self):
        return f"ADValue(op={self.op!r}, shape={self.value.shape}, idx={self.idx})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _add(self, _neg_any(other))

    def __rsub__(self, other):
        return _add(_neg_any(self), other)

    def __neg__(self):
        return _neg_any(self)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __matmul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return _getitem(self, idx)


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, ADValue):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ContractError("operands live on different tapes")
    if tape is None:
        raise ContractError("no tape among operands")
    return tape


def _val(x) -> np.ndarray:
    if isinstance(x, ADValue):
        return x.value
    return np.asarray(x, dtype=float)


def _is_node(x) -> bool:
    return isinstance(x, ADValue)


def _has_node(*xs) -> bool:
    return any(isinstance(x, ADValue) for x in xs)


def _has_dual(*xs) -> bool:
    return any(isinstance(x, Dual) for x in xs)


# -- primitive reverse-mode ops -----------------------------------------


def _add(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out_v = av + bv

    def bwd(g):
        if _is_node(a):
            a._acc(g)
        if _is_node(b):
            b._acc(g)

    return ADValue(tape, out_v, "add", _parents(a, b), bwd)


def _neg_any(x):
    if isinstance(x, ADValue):
        tape = x.tape
        out_v = -x.value

        def bwd(g):
            x._acc(-g)

        return ADValue(tape, out_v, "neg", (x,), bwd)
    return -_val(x) if not isinstance(x, Dual) else -x


def _mul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out_v = av * bv

    def bwd(g):
        if _is_node(a):
            a._acc(g * bv)
        if _is_node(b):
            b._acc(g * av)

    return ADValue(tape, out_v, "mul", _parents(a, b), bwd)


def _div(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out_v = av / bv

    def bwd(g):
        if _is_node(a):
            a._acc(g / bv)
        if _is_node(b):
            b._acc(-g * av / (bv * bv))

    return ADValue(tape, out_v, "div", _parents(a, b), bwd)


def _parents(*xs):
    return tuple(x for x in xs if isinstance(x, ADValue))


def _unary(x, name, fn, dfn):
    tape = x.tape
    out_v = fn(x.value)

    def bwd(g):
        x._acc(g * dfn(x.value, out_v))

    return ADValue(tape, out_v, name, (x,), bwd)


def _getitem(x, idx):
    tape = x.tape
    out_v = x.value[idx]

    def bwd(g):
        z = np.zeros_like(x.value)
        z[idx] += g
        x._acc(z)

    return ADValue(tape, out_v, "slice", (x,), bwd)


def _matmul_both_1d(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out_v = av @ bv

    def bwd(g):
        if _is_node(a):
            a._acc(g * bv)
        if _is_node(b):
            b._acc(g * av)

    return ADValue(tape, out_v, "matmul", _parents(a, b), bwd)


def _matmul_node(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim == 1 and bv.ndim == 1:
        return _matmul_both_1d(a, b)
    tape = _tape_of(a, b)
    out_v = np.matmul(av, bv)

    def bwd(g):
        if _is_node(a):
            if bv.ndim == 1:
                a._acc(np.expand_dims(g, -1) * bv)
            elif av.ndim == 1:
                r = np.matmul(np.expand_dims(g, -2), np.swapaxes(bv, -1, -2))
                a._acc(np.squeeze(r, -2))
            else:
                a._acc(np.matmul(g, np.swapaxes(bv, -1, -2)))
        if _is_node(b):
            if av.ndim == 1:
                b._acc(np.expand_dims(av, -1) * np.expand_dims(g, -2))
            elif bv.ndim == 1:
                r = np.matmul(np.swapaxes(av, -1, -2), np.expand_dims(g, -1))
                b._acc(np.squeeze(r, -1))
            else:
                b._acc(np.matmul(np.swapaxes(av, -1, -2), g))

    return ADValue(tape, out_v, "matmul", _parents(a, b), bwd)


# -- generic (dispatching) functions --------------------------------------


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.primal)
        tan = None if x.tangent is None else x.tangent * (1.0 - t * t)
        return Dual(t, tan)
    if isinstance(x, ADValue):
        return _unary(x, "tanh", np.tanh, lambda v, o: 1.0 - o * o)
    return np.tanh(x)


def sin(x):
    if isinstance(x, Dual):
        tan = None if x.tangent is None else x.tangent * cos(x.primal)
        return Dual(sin(x.primal), tan)
    if isinstance(x, ADValue):
        return _unary(x, "sin", np.sin, lambda v, o: np.cos(v))
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        tan = None if x.tangent is None else -(x.tangent * sin(x.primal))
        return Dual(cos(x.primal), tan)
    if isinstance(x, ADValue):
        return _unary(x, "cos", np.cos, lambda v, o: -np.sin(v))
    return np.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.primal)
        tan = None if x.tangent is None else x.tangent / (2.0 * s)
        return Dual(s, tan)
    if isinstance(x, ADValue):
        return _unary(x, "sqrt", np.sqrt, lambda v, o: 0.5 / o)
    return np.sqrt(x)


def matmul(a, b):
    if _has_dual(a, b):
        ad = a if isinstance(a, Dual) else Dual(a, None)
        bd = b if isinstance(b, Dual) else Dual(b, None)
        p = matmul(ad.primal, bd.primal)
        t = None
        if ad.tangent is not None:
            t = matmul(ad.tangent, bd.primal)
        if bd.tangent is not None:
            t2 = matmul(ad.primal, bd.tangent)
            t = t2 if t is None else t + t2
        return Dual(p, t)
    if _has_node(a, b):
        return _matmul_node(a, b)
    return np.matmul(_val(a), _val(b))


def asum(x, axis=None, keepdims=False):
    """Sum reduction (full or along one axis)."""
    if isinstance(x, Dual):
        t = None if x.tangent is None else asum(x.tangent, axis, keepdims)
        return Dual(asum(x.primal, axis, keepdims), t)
    if isinstance(x, ADValue):
        out_v = x.value.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                x._acc(np.broadcast_to(g, x.value.shape))
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                x._acc(np.broadcast_to(ge, x.value.shape))

        return ADValue(x.tape, np.asarray(out_v), "sum", (x,), bwd)
    return np.asarray(_val(x).sum(axis=axis, keepdims=keepdims))


def reshape(x, shape):
    if isinstance(x, Dual):
        t = x.tangent
        if t is None:
            return Dual(reshape(x.primal, shape), None)
        # tangent may carry extra leading direction axes
        tv, pv = _val_of(t), _val_of(x.primal)
        lead = tv.shape[: tv.ndim - pv.ndim]
        return Dual(reshape(x.primal, shape), reshape(t, lead + tuple(shape)))
    if isinstance(x, ADValue):
        old = x.value.shape
        out_v = x.value.reshape(shape)

        def bwd(g):
            x._acc(g.reshape(old))

        return ADValue(x.tape, out_v, "reshape", (x,), bwd)
    return _val(x).reshape(shape)


def _val_of(x):
    return x.value if isinstance(x, ADValue) else np.asarray(x, dtype=float)


def transpose_last(x):
    """Swap the last two axes (matrix transpose, batch aware)."""
    if isinstance(x, Dual):
        t = None if x.tangent is None else transpose_last(x.tangent)
        return Dual(transpose_last(x.primal), t)
    if isinstance(x, ADValue):
        out_v = np.swapaxes(x.value, -1, -2)

        def bwd(g):
            x._acc(np.swapaxes(g, -1, -2))

        return ADValue(x.tape, out_v, "transpose", (x,), bwd)
    return np.swapaxes(_val(x), -1, -2)


def concat(parts: Sequence, axis=-1):
    if any(isinstance(p, Dual) for p in parts):
        duals = [p if isinstance(p, Dual) else Dual(p, None) for p in parts]
        tangents = [d.tangent if d.tangent is not None else _zero_like(d.primal)
                    for d in duals]
        return Dual(concat([d.primal for d in duals], axis),
                    concat(_broadcast_tangents(tangents), axis))
    if any(isinstance(p, ADValue) for p in parts):
        tape = _tape_of(*parts)
        vals = [_val(p) for p in parts]
        out_v = np.concatenate(vals, axis=axis)
        sizes = [v.shape[axis] for v in vals]
        offs = np.cumsum([0] + sizes)

        def bwd(g):
            for p, lo, hi in zip(parts, offs[:-1], offs[1:]):
                if _is_node(p):
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    p._acc(g[tuple(idx)])

        return ADValue(tape, out_v, "concat", _parents(*parts), bwd)
    return np.concatenate([_val(p) for p in parts], axis=axis)


def _broadcast_tangents(tangents):
    """Bring tangents to common leading-direction axes so concat lines up."""
    shapes = [_val_of(t).shape for t in tangents]
    top = max(len(s) for s in shapes)
    lead = np.broadcast_shapes(*[(1,) * (top - len(s)) + s[: len(s) - 1] for s in shapes])
    return [_broadcast_one(t, s, tuple(lead) + (s[-1],)) for t, s in zip(tangents, shapes)]


def _broadcast_tangents_full(tangents):
    """Bring tangents to one fully broadcast shape (for stack)."""
    shapes = [_val_of(t).shape for t in tangents]
    target = np.broadcast_shapes(*shapes)
    return [_broadcast_one(t, s, tuple(target)) for t, s in zip(tangents, shapes)]


def _broadcast_one(t, shape, target):
    if shape == target:
        return t
    if isinstance(t, np.ndarray):
        return np.broadcast_to(t, target)
    # node tangent: realize the broadcast through a multiply-by-ones
    pad = (1,) * (len(target) - len(shape)) + shape
    ones = np.ones([tg if p == 1 else 1 for tg, p in zip(target, pad)])
    return t * ones


def stack(parts: Sequence, axis=0):
    if any(isinstance(p, Dual) for p in parts):
        duals = [p if isinstance(p, Dual) else Dual(p, None) for p in parts]
        tangents = [d.tangent if d.tangent is not None else _zero_like(d.primal)
                    for d in duals]
        return Dual(stack([d.primal for d in duals], axis),
                    stack(_broadcast_tangents_full(tangents), axis))
    if any(isinstance(p, ADValue) for p in parts):
        tape = _tape_of(*parts)
        vals = [_val(p) for p in parts]
        out_v = np.stack(vals, axis=axis)

        def bwd(g):
            gs = np.moveaxis(g, axis, 0)
            for i, p in enumerate(parts):
                if _is_node(p):
                    p._acc(gs[i])

        return ADValue(tape, out_v, "stack", _parents(*parts), bwd)
    return np.stack([_val(p) for p in parts], axis=axis)


def fill_lower_triangular(vec, n: int):
    """Scatter ``(..., n(n+1)/2)`` into the lower triangle of ``(..., n, n)``.

    Entries are consumed row-major: (0,0), (1,0), (1,1), (2,0), ...
    """
    rows, cols = np.tril_indices(n)
    if isinstance(vec, Dual):
        t = None if vec.tangent is None else fill_lower_triangular(vec.tangent, n)
        return Dual(fill_lower_triangular(vec.primal, n), t)
    if isinstance(vec, ADValue):
        v = vec.value
        out_v = np.zeros(v.shape[:-1] + (n, n), dtype=float)
        out_v[..., rows, cols] = v

        def bwd(g):
            vec._acc(g[..., rows, cols])

        return ADValue(vec.tape, out_v, "fill_tril", (vec,), bwd)
    v = _val(vec)
    out = np.zeros(v.shape[:-1] + (n, n), dtype=float)
    out[..., rows, cols] = v
    return out


def _zero_like(x):
    return np.zeros_like(_val_of(x))


def _chol(a_value: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a_value)
    except np.linalg.LinAlgError as exc:
        raise NumericFaultError(f"SPD factorization failed: {exc}") from None


def _check_spd_condition(a_value: np.ndarray, chol_value: np.ndarray):
    # Gershgorin bound over min squared Cholesky diagonal: cheap overestimate
    # of the 2-norm condition number; only meant to catch blowups.
    lam_hi = np.abs(a_value).sum(axis=-1).max(axis=-1)
    lam_lo = np.square(np.diagonal(chol_value, axis1=-2, axis2=-1)).min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = lam_hi / lam_lo
    if np.any(~np.isfinite(est)) or np.any(est > _SOLVE_COND_LIMIT):
        raise NumericFaultError(
            "SPD system condition estimate exceeds limit",
            cond_estimate=float(np.nanmax(est)),
        )


def _chol_solve_vec(chol_value: np.ndarray, b_value: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol_value, np.expand_dims(b_value, -1))
    x = np.linalg.solve(np.swapaxes(chol_value, -1, -2), y)
    return np.squeeze(x, -1)


def solve_spd(a, b):
    """Solve ``A x = b`` for symmetric positive definite ``A`` via Cholesky.

    ``a``: ``(..., n, n)``; ``b``: ``(..., n)``.  Differentiable in both
    arguments (reverse and forward).  Raises :class:`NumericFaultError` if
    factorization fails or the condition estimate exceeds 1e12.
    """
    if _has_dual(a, b):
        ad = a if isinstance(a, Dual) else Dual(a, None)
        bd = b if isinstance(b, Dual) else Dual(b, None)
        x = solve_spd(ad.primal, bd.primal)
        # dx = A^{-1} (db - dA x)
        rhs = None
        if bd.tangent is not None:
            rhs = bd.tangent
        if ad.tangent is not None:
            ax = matmul(ad.tangent, _expand_vec(x))
            ax = _squeeze_vec(ax)
            rhs = -ax if rhs is None else rhs - ax
        if rhs is None:
            return Dual(x, None)
        return Dual(x, solve_spd(ad.primal, rhs))
    if _has_node(a, b):
        tape = _tape_of(a, b)
        av, bv = _val(a), _val(b)
        L = _chol(av)
        _check_spd_condition(av, L)
        x_v = _chol_solve_vec(L, bv)

        def bwd(g):
            gb = _chol_solve_vec(L, g)
            if _is_node(b):
                b._acc(gb)
            if _is_node(a):
                a._acc(-np.expand_dims(gb, -1) * np.expand_dims(x_v, -2))

        return ADValue(tape, x_v, "solve_spd", _parents(a, b), bwd)
    av, bv = _val(a), _val(b)
    L = _chol(av)
    _check_spd_condition(av, L)
    return _chol_solve_vec(L, bv)


def _expand_vec(x):
    v = _val_of(x)
    return reshape(x, v.shape + (1,))


def _squeeze_vec(x):
    v = _val_of(x)
    return reshape(x, v.shape[:-1])


def matvec(a, x):
    """``(..., n, n) @ (..., n) -> (..., n)`` with dual/node dispatch."""
    return _squeeze_vec(matmul(a, _expand_vec(x)))


# -- forward mode ----------------------------------------------------------


class Dual:
    """Forward-mode pair.  Components may be arrays or tape nodes.

    The tangent may carry extra *leading* axes (a stack of directions), so a
    single forward pass yields every coordinate partial at once.
    """

    __slots__ = ("primal", "tangent")

    __array_ufunc__ = None

    def __init__(self, primal, tangent):
        self.primal = primal
        self.tangent = tangent if tangent is not None else None

    def _t(self):
        return self.tangent if self.tangent is not None else _zero_like(self.primal)

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Dual) else Dual(x, None)

    def __add__(self, other):
        o = Dual._lift(other)
        p = self.primal + o.primal
        if self.tangent is None:
            t = o.tangent
        elif o.tangent is None:
            t = self.tangent
        else:
            t = self.tangent + o.tangent
        return Dual(p, t)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.primal, None if self.tangent is None else -self.tangent)

    def __sub__(self, other):
        return self + (-Dual._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = Dual._lift(other)
        p = self.primal * o.primal
        t = None
        if self.tangent is not None:
            t = self.tangent * o.primal
        if o.tangent is not None:
            t2 = self.primal * o.tangent
            t = t2 if t is None else t + t2
        return Dual(p, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._lift(other)
        p = self.primal / o.primal
        t = None
        if self.tangent is not None:
            t = self.tangent / o.primal
        if o.tangent is not None:
            t2 = (self.primal * o.tangent) / (o.primal * o.primal)
            t = -t2 if t is None else t - t2
        return Dual(p, t)

    def __rtruediv__(self, other):
        return Dual._lift(other) / self

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        t = self.tangent
        if t is not None:
            pv = _val_of(self.primal)
            tv = _val_of(t)
            if tv.ndim > pv.ndim:
                # leading direction axes: shift the item index past them
                extra = tv.ndim - pv.ndim
                full = idx if isinstance(idx, tuple) else (idx,)
                t = t[(slice(None),) * extra + full]
            else:
                t = t[idx]
        return Dual(self.primal[idx], t)

    def __repr__(self):
        return f"Dual(primal={self.primal!r})"


def seed_duals(x, directions: np.ndarray | None = None) -> Dual:
    """Wrap ``x`` (shape ``(..., d)``) with identity-basis tangents.

    The returned dual's tangent has a leading axis of length ``d`` (or
    ``directions.shape[0]``), one slot per direction; downstream tangents keep
    that axis, so a scalar function's tangent ends up holding its whole
    coordinate gradient.
    """
    xv = _val_of(x)
    d = xv.shape[-1]
    if directions is None:
        directions = np.eye(d)
    k = directions.shape[0]
    tangent = directions.reshape((k,) + (1,) * (xv.ndim - 1) + (d,))
    if xv.ndim == 1:
        tangent = directions
    return Dual(x, tangent)


def jvp(f: Callable, x, v):
    """Jacobian-vector product: ``(Jf)(x) · v`` via a forward dual pass."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape:
        raise ContractError(f"jvp direction shape {v.shape} != point shape {x.shape}")
    out = f(Dual(x, v))
    if isinstance(out, Dual):
        return np.asarray(_val_of(out._t()))
    return np.zeros_like(np.asarray(out, dtype=float))


def grad(f: Callable, x) -> np.ndarray:
    """Reverse-mode gradient of a scalar function of one vector."""
    tape = Tape()
    leaf = tape.leaf(np.asarray(x, dtype=float))
    out = f(leaf)
    if not isinstance(out, ADValue):
        return np.zeros_like(np.asarray(x, dtype=float))
    return tape.backward(out)[leaf.idx]


def grad_check(f: Callable, x, h: float = 1e-5) -> float:
    """Worst relative error of the reverse-mode gradient vs central differences.

    ``f`` must accept either a plain 1-d array or a tape node and return a
    scalar.  The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``; any non-finite comparison reports
    as ``inf``.
    """
    if h <= 0:
        raise ContractError("grad_check requires h > 0")
    x = np.asarray(x, dtype=float)
    analytic = grad(f, x)
    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy(); xp[i] += h
        xm = flat.copy(); xm[i] -= h
        fp = float(_val_of(f(xp.reshape(x.shape))))
        fm = float(_val_of(f(xm.reshape(x.shape))))
        numeric = (fp - fm) / (2.0 * h)
        a = float(analytic.ravel()[i])
        if not (np.isfinite(a) and np.isfinite(numeric)):
            return float("inf")
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
