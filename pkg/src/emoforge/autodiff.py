"""Reverse-mode automatic differentiation on numpy arrays.

A small tape: every arithmetic op builds a `Tensor` node holding its value,
its parents and a closure that routes the output gradient back to them.
`grad` differentiates a scalar loss with respect to a flat parameter vector,
`finite_diff_check` verifies any such gradient against central differences,
and `adam_step` is the optimizer used by all trainers in this package.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UnsupportedOpError


def _unbroadcast(g, shape):
    # Sum the gradient over axes that were added or broadcast in the forward op.
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """One node of the tape. Wraps a float64 array; never mutate `.data`."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    # Keep numpy from silently consuming Tensors in ufunc expressions; the
    # supported op set is exactly what the methods below define.
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        self.grad = g if self.grad is None else self.grad + g

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = Tensor(self.data + other.data, (self, other))
        def back(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))
        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._backward = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        out = Tensor(self.data * other.data, (self, other))
        def back(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))
        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * _wrap(other) ** -1.0

    def __rtruediv__(self, other):
        return _wrap(other) * self ** -1.0

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise UnsupportedOpError("only scalar exponents are differentiable")
        out = Tensor(self.data ** p, (self,))
        out._backward = lambda g: self._accum(g * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = _wrap(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        out = Tensor(self.data @ other.data, (self, other))
        def back(g):
            self._accum(g @ other.data.T)
            other._accum(self.data.T @ g)
        out._backward = back
        return out

    # -- elementwise functions --------------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), (self,))
        out._backward = lambda g: self._accum(g * out.data)
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))
        out._backward = lambda g: self._accum(g / self.data)
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), (self,))
        out._backward = lambda g: self._accum(g * (1.0 - out.data ** 2))
        return out

    def sigmoid(self):
        out = Tensor(1.0 / (1.0 + np.exp(-self.data)), (self,))
        out._backward = lambda g: self._accum(g * out.data * (1.0 - out.data))
        return out

    def softplus(self):
        out = Tensor(np.logaddexp(0.0, self.data), (self,))
        out._backward = lambda g: self._accum(g / (1.0 + np.exp(-self.data)))
        return out

    def clip(self, lo, hi):
        # Gradient passes through inside [lo, hi], zero outside.
        out = Tensor(np.clip(self.data, lo, hi), (self,))
        mask = (self.data >= lo) & (self.data <= hi)
        out._backward = lambda g: self._accum(g * mask)
        return out

    # -- reductions and reshaping ------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        def back(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accum(np.broadcast_to(gg, self.data.shape).copy())
        out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = Tensor(self.data.reshape(shape), (self,))
        out._backward = lambda g: self._accum(g.reshape(self.data.shape))
        return out

    @property
    def T(self):
        out = Tensor(self.data.T, (self,))
        out._backward = lambda g: self._accum(g.T)
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))
        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)  # scatter-add handles repeated indices
            self._accum(full)
        out._backward = back
        return out

    def item(self):
        return float(self.data)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x):
    """A tape leaf that never receives gradient of interest (plain data)."""
    return Tensor(x)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def back(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            t._accum(g[tuple(sl)])
    out._backward = back
    return out


def log_softmax_rows(t):
    """Numerically stable row-wise log-softmax of a 2-D Tensor.

    The row max is subtracted as a constant; the shift is gradient-neutral,
    so detaching it keeps the derivative exact.
    """
    shift = t - constant(t.data.max(axis=1, keepdims=True))
    return shift - shift.exp().sum(axis=1, keepdims=True).log()


def backward(out):
    """Accumulate gradients of a scalar Tensor into every reachable node."""
    if out.data.size != 1:
        raise UnsupportedOpError("backward requires a scalar output")
    topo, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    out.grad = np.ones_like(out.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def grad(loss_fn, params, return_loss=False):
    """Gradient of a scalar loss with respect to a flat parameter vector.

    `loss_fn` receives the parameters as a Tensor and must build its result
    from Tensor operations only; anything else raises UnsupportedOpError.
    With return_loss=True, returns (gradient, loss value) from the same
    forward pass.
    """
    theta = Tensor(np.asarray(params, dtype=np.float64))
    try:
        out = loss_fn(theta)
    except TypeError as exc:
        raise UnsupportedOpError("loss used an operation outside the tape: %s" % exc) from exc
    if not isinstance(out, Tensor):
        raise UnsupportedOpError("loss must return a Tensor, got %r" % type(out).__name__)
    backward(out)
    g = np.zeros_like(theta.data) if theta.grad is None else theta.grad
    if return_loss:
        return g, float(out.data)
    return g


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param_index: int


def finite_diff_check(loss_fn, params, epsilon=1e-3):
    """Compare `grad` against central finite differences, per parameter.

    Relative error uses |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    theta = np.asarray(params, dtype=np.float64)
    analytic = grad(loss_fn, theta)

    def value_at(p):
        out = loss_fn(Tensor(p))
        return float(out.data)

    worst_err, worst_idx = 0.0, 0
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = epsilon
        numeric = (value_at(theta + bump) - value_at(theta - bump)) / (2.0 * epsilon)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        err = abs(analytic[i] - numeric) / denom
        if err > worst_err:
            worst_err, worst_idx = err, i
    return GradCheckReport(max_rel_error=worst_err, worst_param_index=worst_idx)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int

    @classmethod
    def zeros(cls, n):
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update. Pure: returns (new_params, new_state)."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError("params shape %s != grads shape %s" % (p.shape, g.shape))
    if state is None:
        state = AdamState.zeros(p.size)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_p, AdamState(m=m, v=v, t=t)


class ParamLayout:
    """Maps named weight arrays into one flat vector and back.

    `unpack` works on both plain arrays and Tensors, so the same model code
    serves training (differentiable slices of the parameter Tensor) and
    inference (cheap ndarray views).
    """

    def __init__(self, shapes):
        self.shapes = dict(shapes)
        self.slices = {}
        offset = 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape)) if shape else 1
            self.slices[name] = (offset, offset + n)
            offset += n
        self.size = offset

    def offset(self, name):
        return self.slices[name][0]

    def pack(self, arrays):
        theta = np.zeros(self.size)
        for name, shape in self.shapes.items():
            a, b = self.slices[name]
            theta[a:b] = np.asarray(arrays[name], dtype=np.float64).reshape(-1)
        return theta

    def unpack(self, theta):
        out = {}
        for name, shape in self.shapes.items():
            a, b = self.slices[name]
            block = theta[a:b]
            out[name] = block.reshape(shape) if shape else block.reshape(())
        return out

    def init(self, seed_stream, scales):
        """Gaussian init, one named substream per block for cross-model stability."""
        arrays = {}
        for name, shape in self.shapes.items():
            scale = scales.get(name, 0.0)
            if scale == 0.0:
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = seed_stream(name).normal(0.0, scale, size=shape)
        return self.pack(arrays)
