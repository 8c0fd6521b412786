"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery for the toy trainer: affine maps, tanh, feature-axis
window pooling, concatenation, and softmax cross-entropy. Graphs are built
fresh each step; backward() walks the tape in reverse topological order.
"""
from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "_parents", "_bw")

    def __init__(self, value, parents=(), bw=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._bw = bw


def _accumulate(var: Var, grad: np.ndarray) -> None:
    if var.grad is None:
        var.grad = grad.copy()
    else:
        var.grad += grad


def backward(root: Var) -> None:
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
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
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


def add(a: Var, b: Var) -> Var:
    out = Var(a.value + b.value, (a, b))
    out._bw = lambda g: (_accumulate(a, g), _accumulate(b, g))
    return out


def add_bias(a: Var, bias: Var) -> Var:
    out = Var(a.value + bias.value, (a, bias))
    out._bw = lambda g: (_accumulate(a, g), _accumulate(bias, g.sum(axis=0)))
    return out


def matmul(a: Var, b: Var) -> Var:
    out = Var(a.value @ b.value, (a, b))

    def bw(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    out._bw = bw
    return out


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    out = Var(t, (a,))
    out._bw = lambda g: _accumulate(a, g * (1.0 - t * t))
    return out


def concat(parts: list[Var]) -> Var:
    out = Var(np.concatenate([p.value for p in parts], axis=1), tuple(parts))
    widths = [p.value.shape[1] for p in parts]

    def bw(g):
        start = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, start : start + w])
            start += w

    out._bw = bw
    return out


def _pad_edge(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (1, 1)), mode="edge")


def _fold_pad(gp: np.ndarray) -> np.ndarray:
    g = gp[:, 1:-1].copy()
    g[:, 0] += gp[:, 0]
    g[:, -1] += gp[:, -1]
    return g


def avg_pool3(a: Var) -> Var:
    """Window-3, stride-1 mean along the feature axis, edges clamped."""
    hp = _pad_edge(a.value)
    out = Var((hp[:, :-2] + hp[:, 1:-1] + hp[:, 2:]) / 3.0, (a,))

    def bw(g):
        gp = np.zeros_like(hp)
        gp[:, :-2] += g / 3.0
        gp[:, 1:-1] += g / 3.0
        gp[:, 2:] += g / 3.0
        _accumulate(a, _fold_pad(gp))

    out._bw = bw
    return out


def max_pool3(a: Var) -> Var:
    """Window-3, stride-1 max along the feature axis, edges clamped."""
    hp = _pad_edge(a.value)
    windows = np.stack([hp[:, :-2], hp[:, 1:-1], hp[:, 2:]], axis=0)
    arg = windows.argmax(axis=0)
    out = Var(np.take_along_axis(windows, arg[None], axis=0)[0], (a,))

    def bw(g):
        gp = np.zeros_like(hp)
        w = g.shape[1]
        for s in range(3):
            mask = arg == s
            gp[:, s : s + w] += g * mask
        _accumulate(a, _fold_pad(gp))

    out._bw = bw
    return out


def cross_entropy(logits: Var, labels: np.ndarray) -> Var:
    z = logits.value
    zmax = z.max(axis=1, keepdims=True)
    exp = np.exp(z - zmax)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = z.shape[0]
    nll = -np.log(np.maximum(probs[np.arange(n), labels], 1e-300))
    out = Var(nll.mean(), (logits,))

    def bw(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        _accumulate(logits, (float(g) / n) * grad)

    out._bw = bw
    return out
