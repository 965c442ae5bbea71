"""Tensor type with a reverse-mode gradient tape."""
import numpy as np

from ..errors import GraphCycle, NonFiniteGradient, NonFiniteInput, ShapeMismatch

_default_dtype = np.float64


def set_default_dtype(dtype):
    """Switch the dtype used for new tensors (float64 or float32)."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


class Tensor:
    """An n-d array plus an optional gradient buffer.

    Tensors produced by ops keep a reference to their inputs and a closure
    mapping the output gradient to input gradients; ``backward`` walks that
    graph once in reverse topological order.
    """

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or (data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else _default_dtype)
        self.data = np.array(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return len(self.data)

    def backward(self, grad=None):
        backward(self, grad)

    # elementwise arithmetic, broadcasting like numpy
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def exp(self):
        return exp(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("non-finite value in operation input")


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), bw)


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), bw)


def neg(a):
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    if not np.all(np.isfinite(out)):
        raise NonFiniteInput("exp overflowed")
    return Tensor._from_op(out, (a,), lambda g: (g * out,))


def tsum(a):
    return Tensor._from_op(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def tmean(a):
    n = a.size
    return Tensor._from_op(np.asarray(a.data.mean()), (a,), lambda g: (np.full(a.shape, g / n, dtype=a.dtype),))


def reshape(a, shape):
    old = a.shape
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def _topo_order(root):
    # iterative DFS; state 1 = on stack, 2 = done
    state = {}
    order = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        st = state.get(key)
        if st == 2:
            continue
        if st == 1:
            raise GraphCycle("cycle detected in computation graph")
        state[key] = 1
        stack.append((node, True))
        for p in node._parents:
            pst = state.get(id(p))
            if pst == 1:
                raise GraphCycle("cycle detected in computation graph")
            if pst is None and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss, grad=None):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor that requires grad."""
    if not loss.requires_grad:
        raise ValueError("backward() called on a tensor that does not require grad")
    if grad is None:
        if loss.size != 1:
            raise ShapeMismatch("backward() without an explicit gradient needs a scalar loss")
        grad = np.ones(loss.shape, dtype=loss.dtype)
    else:
        grad = np.asarray(grad, dtype=loss.dtype)
        if grad.shape != loss.shape:
            raise ShapeMismatch(f"gradient shape {grad.shape} != tensor shape {loss.shape}")

    grads = {id(loss): grad}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            if not np.all(np.isfinite(pg)):
                label = parent.name or f"tensor of shape {parent.shape}"
                raise NonFiniteGradient(f"non-finite gradient for {label}")
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
