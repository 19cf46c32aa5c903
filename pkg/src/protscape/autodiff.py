"""Minimal eager reverse-mode differentiation over 2-D float64 arrays.

Every value on the tape is a Tensor wrapping a (r, c) ndarray; scalars are
(1, 1). Ops record their parents plus a vector-Jacobian closure, and
backward() walks the graph once in reverse topological order. Constants
(requires_grad=False, no grad-requiring ancestors) record nothing, so large
constant inputs cost no tape memory.

Accumulated gradients are never mutated in place; closures may safely
return views.
"""

from __future__ import annotations

import threading

import numpy as np

_grad_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


class no_grad:
    """Disable tape recording on ops run inside the block.

    Tensors produced while recording is off carry no parent links, so
    bulk inference sweeps hold plain values instead of full tapes. The
    switch is per-thread: worker threads are unaffected by a block
    entered elsewhere, and nesting restores the previous state on exit.
    """

    def __enter__(self):
        self._saved = _grad_enabled()
        _grad_state.enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        _grad_state.enabled = self._saved
        return False


def _as_value(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    elif v.ndim == 1:
        v = v.reshape(1, -1)
    if v.ndim != 2:
        raise ValueError(f"tape values must be 2-D, got shape {v.shape}")
    return v


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents")

    def __init__(self, value, requires_grad=False, parents=()):
        self.value = _as_value(value)
        self.grad = None
        if parents and not _grad_enabled():
            parents = ()
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p, _ in parents
        )
        self._parents = parents if self.requires_grad else ()

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() on shape {self.shape}")
        return float(self.value[0, 0])

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return smul(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(wrap(other), self)

    def __neg__(self):
        return smul(self, -1.0)

    def __abs__(self):
        return absval(self)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def wrap(x) -> Tensor:
    """Wrap a value as a constant Tensor (no-op on Tensors)."""
    return x if isinstance(x, Tensor) else Tensor(x)


def param(x) -> Tensor:
    """Wrap a value as a trainable leaf."""
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


# -- primitive ops -----------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.value @ b.value
    return Tensor(
        out,
        parents=(
            (a, lambda g, bv=b.value: g @ bv.T),
            (b, lambda g, av=a.value: av.T @ g),
        ),
    )


def transpose(a) -> Tensor:
    a = wrap(a)
    return Tensor(a.value.T, parents=((a, lambda g: g.T),))


def add(a, b) -> Tensor:
    """Elementwise sum; b may be a (1, c) row broadcast over a's rows."""
    a, b = wrap(a), wrap(b)
    if b.shape != a.shape:
        if b.shape != (1, a.shape[1]):
            raise ValueError(f"add shapes {a.shape} and {b.shape}")
        return Tensor(
            a.value + b.value,
            parents=(
                (a, lambda g: g),
                (b, lambda g: g.sum(axis=0, keepdims=True)),
            ),
        )
    return Tensor(a.value + b.value, parents=((a, lambda g: g), (b, lambda g: g)))


def sub(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shapes {a.shape} and {b.shape}")
    return Tensor(a.value - b.value, parents=((a, lambda g: g), (b, lambda g: -g)))


def smul(a, c: float) -> Tensor:
    a = wrap(a)
    c = float(c)
    return Tensor(a.value * c, parents=((a, lambda g: g * c),))


def hadamard(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shapes {a.shape} and {b.shape}")
    return Tensor(
        a.value * b.value,
        parents=(
            (a, lambda g, bv=b.value: g * bv),
            (b, lambda g, av=a.value: g * av),
        ),
    )


def absval(a) -> Tensor:
    """|a| with subgradient 0 at 0 (sign(0) = 0)."""
    a = wrap(a)
    s = np.sign(a.value)
    return Tensor(np.abs(a.value), parents=((a, lambda g: g * s),))


def relu(a) -> Tensor:
    a = wrap(a)
    mask = a.value > 0.0
    return Tensor(a.value * mask, parents=((a, lambda g: g * mask),))


def softmax_cols(a) -> Tensor:
    """Column-wise softmax; every output column sums to 1."""
    a = wrap(a)
    shifted = a.value - a.value.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=0, keepdims=True)

    def vjp(g, y=y):
        return y * (g - (y * g).sum(axis=0, keepdims=True))

    return Tensor(y, parents=((a, vjp),))


def hconcat(parts) -> Tensor:
    parts = [wrap(p) for p in parts]
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ValueError("hconcat parts must share their row count")
    widths = [p.shape[1] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    out = np.concatenate([p.value for p in parts], axis=1)
    parents = tuple(
        (p, lambda g, a=int(offsets[i]), b=int(offsets[i + 1]): g[:, a:b])
        for i, p in enumerate(parts)
    )
    return Tensor(out, parents=parents)


def reshape(a, shape) -> Tensor:
    a = wrap(a)
    return Tensor(
        a.value.reshape(shape),
        parents=((a, lambda g, s=a.value.shape: g.reshape(s)),),
    )


def row_gather(a, indices) -> Tensor:
    """Select rows of a by integer index, keeping their order."""
    a = wrap(a)
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(g, idx=idx, shape=a.value.shape):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.value[idx, :], parents=((a, vjp),))


def mean_all(a) -> Tensor:
    a = wrap(a)
    inv = 1.0 / a.value.size
    return Tensor(
        np.array([[a.value.mean()]]),
        parents=((a, lambda g, s=a.value.shape: np.full(s, g[0, 0] * inv)),),
    )


def mse(a, b) -> Tensor:
    """Mean squared error over all entries, as a (1, 1) scalar."""
    a, b = wrap(a), wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"mse shapes {a.shape} and {b.shape}")
    diff = a.value - b.value
    inv = 1.0 / diff.size
    out = np.array([[np.mean(diff * diff)]])
    return Tensor(
        out,
        parents=(
            (a, lambda g: (2.0 * inv * g[0, 0]) * diff),
            (b, lambda g: (-2.0 * inv * g[0, 0]) * diff),
        ),
    )


# -- reverse pass ------------------------------------------------------


def backward(root: Tensor) -> None:
    """Accumulate d root / d leaf into .grad over the whole tape.

    root must be a scalar. Existing .grad values on leaves are added to,
    which is what per-frame accumulation over a batch wants; call
    zero_grad() between optimizer steps.
    """
    if root.value.size != 1:
        raise ValueError("backward() needs a scalar root")
    if not root.requires_grad:
        raise ValueError("root does not depend on any trainable leaf")

    topo: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, vjp in node._parents:
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else prev + contrib


def check_gradients(
    build_loss,
    leaves,
    rng,
    coords_per_leaf: int = 3,
    h: float = 1e-5,
    denom_floor: float = 1e-6,
) -> float:
    """Compare tape gradients against central differences.

    build_loss() must rebuild the loss from the current leaf values.
    Samples coords_per_leaf random coordinates of every leaf and returns
    the worst relative error |fd - grad| / max(|fd|, |grad|, floor).
    """
    for leaf in leaves:
        leaf.zero_grad()
    backward(build_loss())
    worst = 0.0
    for leaf in leaves:
        flat = leaf.value.reshape(-1)
        gflat = (
            np.zeros_like(flat)
            if leaf.grad is None
            else leaf.grad.reshape(-1)
        )
        k = min(coords_per_leaf, flat.size)
        for idx in rng.choice(flat.size, size=k, replace=False):
            saved = flat[idx]
            flat[idx] = saved + h
            up = build_loss().item()
            flat[idx] = saved - h
            down = build_loss().item()
            flat[idx] = saved
            fd = (up - down) / (2.0 * h)
            err = abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), denom_floor)
            worst = max(worst, err)
    return worst
