"""Tape-based reverse-mode differentiation over dense float64 arrays.

The op surface is deliberately small: matrix product, additions with a
row-vector bias as the only broadcast, elementwise nonlinearities,
embedding lookup, concatenation, reductions, a fused stable softmax
cross-entropy, and the clip/min pieces needed for ratio-clipped policy
objectives.  Nodes are recorded in forward order, which is already a
topological order, so the backward pass is a single reverse sweep.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError, ShapeError

CHECKPOINT_VERSION = 1


class Parameter:
    """A named trainable array with a persistent gradient accumulator."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tensor:
    """A value living on a tape; ``grad`` is filled by ``Tape.backward``."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def _as2d(name: str, t: Tensor) -> np.ndarray:
    if t.data.ndim != 2:
        raise ShapeError(f"{name} expects a 2-D operand, got shape {t.data.shape}")
    return t.data


class Tape:
    """Records ops in forward order and replays them in reverse for grads."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []
        self._tensors: list[Tensor] = []
        self._seen: set[int] = set()
        self._param_leaves: list[tuple[Tensor, Parameter]] = []

    def _register(self, *tensors: Tensor) -> None:
        for t in tensors:
            if id(t) not in self._seen:
                self._seen.add(id(t))
                self._tensors.append(t)

    # ------------------------------------------------------------------ leaves

    def leaf(self, data) -> Tensor:
        t = Tensor(np.array(data, dtype=np.float64))
        self._register(t)
        return t

    def param(self, p: Parameter) -> Tensor:
        t = Tensor(p.data)
        self._register(t)
        self._param_leaves.append((t, p))
        return t

    # ------------------------------------------------------------------- ops

    def _record(self, inputs: tuple[Tensor, ...], out: Tensor, backward) -> Tensor:
        self._register(*inputs, out)
        self._nodes.append((out, backward))
        return out

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        ad, bd = _as2d("matmul", a), _as2d("matmul", b)
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul shapes {ad.shape} and {bd.shape} do not chain")
        out = Tensor(ad @ bd)

        def backward(g):
            a.grad += g @ bd.T
            b.grad += ad.T @ g

        return self._record((a, b), out, backward)

    def matmul_nt(self, a: Tensor, b: Tensor) -> Tensor:
        """a @ b.T without materializing a transposed tensor."""
        ad, bd = _as2d("matmul_nt", a), _as2d("matmul_nt", b)
        if ad.shape[1] != bd.shape[1]:
            raise ShapeError(f"matmul_nt shapes {ad.shape} and {bd.shape} do not chain")
        out = Tensor(ad @ bd.T)

        def backward(g):
            a.grad += g @ bd
            b.grad += g.T @ ad

        return self._record((a, b), out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; ``b`` may be a row vector added to every row of ``a``."""
        ad, bd = a.data, b.data
        row_bias = (ad.ndim == 2 and bd.ndim in (1, 2) and bd.shape[-1] == ad.shape[1]
                    and (bd.ndim == 1 or bd.shape[0] == 1) and bd.shape != ad.shape)
        if not row_bias and ad.shape != bd.shape:
            raise ShapeError(f"add shapes {ad.shape} and {bd.shape} differ")
        out = Tensor(ad + bd)

        def backward(g):
            a.grad += g
            if row_bias:
                b.grad += g.sum(axis=0).reshape(bd.shape)
            else:
                b.grad += g

        return self._record((a, b), out, backward)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.shape != b.data.shape:
            raise ShapeError(f"sub shapes {a.data.shape} and {b.data.shape} differ")
        out = Tensor(a.data - b.data)

        def backward(g):
            a.grad += g
            b.grad -= g

        return self._record((a, b), out, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.shape != b.data.shape:
            raise ShapeError(f"mul shapes {a.data.shape} and {b.data.shape} differ")
        out = Tensor(a.data * b.data)

        def backward(g):
            a.grad += g * b.data
            b.grad += g * a.data

        return self._record((a, b), out, backward)

    def scale(self, a: Tensor, s: float) -> Tensor:
        out = Tensor(a.data * s)

        def backward(g):
            a.grad += g * s

        return self._record((a,), out, backward)

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.data)
        out = Tensor(y)

        def backward(g):
            a.grad += g * (1.0 - y * y)

        return self._record((a,), out, backward)

    def sigmoid(self, a: Tensor) -> Tensor:
        y = 1.0 / (1.0 + np.exp(-a.data))
        out = Tensor(y)

        def backward(g):
            a.grad += g * y * (1.0 - y)

        return self._record((a,), out, backward)

    def exp(self, a: Tensor) -> Tensor:
        y = np.exp(a.data)
        out = Tensor(y)

        def backward(g):
            a.grad += g * y

        return self._record((a,), out, backward)

    def gather_rows(self, a: Tensor, indices) -> Tensor:
        """Row lookup (embedding fetch); backward scatter-adds into the table."""
        idx = np.asarray(indices, dtype=np.int64)
        table = _as2d("gather_rows", a)
        if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
            raise ShapeError(
                f"gather_rows index out of range for table with {table.shape[0]} rows")
        out = Tensor(table[idx])

        def backward(g):
            np.add.at(a.grad, idx, g)

        return self._record((a,), out, backward)

    def concat_cols(self, parts: list[Tensor]) -> Tensor:
        datas = [_as2d("concat_cols", p) for p in parts]
        if len({d.shape[0] for d in datas}) != 1:
            raise ShapeError(f"concat_cols row counts differ: {[d.shape for d in datas]}")
        out = Tensor(np.concatenate(datas, axis=1))
        splits = np.cumsum([d.shape[1] for d in datas])[:-1]

        def backward(g):
            for part, piece in zip(parts, np.split(g, splits, axis=1)):
                part.grad += piece

        return self._record(tuple(parts), out, backward)

    def mean_rows(self, a: Tensor) -> Tensor:
        ad = _as2d("mean_rows", a)
        n = ad.shape[0]
        out = Tensor(ad.mean(axis=0))

        def backward(g):
            a.grad += np.broadcast_to(g / n, ad.shape)

        return self._record((a,), out, backward)

    def sum(self, a: Tensor) -> Tensor:
        out = Tensor(np.array(a.data.sum()))

        def backward(g):
            a.grad += g

        return self._record((a,), out, backward)

    def clip(self, a: Tensor, lo: float, hi: float) -> Tensor:
        out = Tensor(np.clip(a.data, lo, hi))
        inside = (a.data > lo) & (a.data < hi)

        def backward(g):
            a.grad += g * inside

        return self._record((a,), out, backward)

    def minimum(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise min; on ties the gradient routes to ``a``."""
        if a.data.shape != b.data.shape:
            raise ShapeError(f"minimum shapes {a.data.shape} and {b.data.shape} differ")
        take_a = a.data <= b.data
        out = Tensor(np.where(take_a, a.data, b.data))

        def backward(g):
            a.grad += g * take_a
            b.grad += g * ~take_a

        return self._record((a, b), out, backward)

    def masked_log_softmax(self, a: Tensor, valid) -> Tensor:
        """Log-softmax of a 1-D logit vector restricted to ``valid`` entries.

        Invalid entries come out as -inf and receive zero gradient.
        """
        mask = np.asarray(valid, dtype=bool)
        x = a.data
        if x.ndim != 1 or mask.shape != x.shape:
            raise ShapeError(f"masked_log_softmax expects matching 1-D shapes, "
                             f"got {x.shape} and {mask.shape}")
        if not mask.any():
            raise ContractError("masked_log_softmax: no valid entries")
        z = np.where(mask, x, -np.inf)
        m = z[mask].max()
        lse = m + np.log(np.exp(z[mask] - m).sum())
        y = z - lse
        probs = np.where(mask, np.exp(y), 0.0)
        out = Tensor(y)

        def backward(g):
            gm = np.where(mask, g, 0.0)
            a.grad += gm - probs * gm.sum()

        return self._record((a,), out, backward)

    def pick(self, a: Tensor, index: int) -> Tensor:
        x = a.data
        if x.ndim != 1:
            raise ShapeError(f"pick expects a 1-D operand, got {x.shape}")
        out = Tensor(np.array(x[index]))

        def backward(g):
            a.grad[index] += g

        return self._record((a,), out, backward)

    def softmax_cross_entropy(self, logits: Tensor, targets, weights=None) -> Tensor:
        """Weighted-mean cross entropy with a numerically stable softmax.

        ``logits`` is (n, V) or (V,); ``targets`` holds class indices.  With
        ``weights`` the per-row losses are averaged with those weights
        (rows of weight zero contribute nothing).
        """
        x = logits.data
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        if tgt.shape[0] != x.shape[0]:
            raise ShapeError(f"softmax_cross_entropy got {x.shape[0]} rows "
                             f"but {tgt.shape[0]} targets")
        if tgt.size and (tgt.min() < 0 or tgt.max() >= x.shape[1]):
            raise ShapeError(f"target index out of range for {x.shape[1]} classes")
        w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        wsum = w.sum()
        if wsum <= 0:
            raise ContractError("softmax_cross_entropy: total weight must be positive")
        shifted = x - x.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        logp_target = shifted[np.arange(x.shape[0]), tgt] - logz
        out = Tensor(np.array(-(w * logp_target).sum() / wsum))
        softmax = np.exp(shifted - logz[:, None])

        def backward(g):
            d = softmax.copy()
            d[np.arange(x.shape[0]), tgt] -= 1.0
            d *= (g * w / wsum)[:, None]
            logits.grad += d[0] if squeeze else d

        return self._record((logits,), out, backward)

    # --------------------------------------------------------------- backward

    def backward(self, loss: Tensor) -> None:
        """Reverse sweep from a scalar loss; accumulates into Parameter.grad.

        Every tensor that touched this tape gets a grad buffer; tensors off
        the path from the loss keep zeros.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        for t in self._tensors:
            t.grad = np.zeros_like(t.data)
        loss.grad = np.ones_like(loss.data)
        for out, backward_fn in reversed(self._nodes):
            backward_fn(out.grad)
        for t, p in self._param_leaves:
            p.grad += t.grad

    def node_count(self) -> int:
        return len(self._nodes)


class Adam:
    """Adam with torch-style L2 weight decay folded into the gradient."""

    def __init__(self, params: list[Parameter], lr: float = 0.001,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self._t)
            vhat = v / (1 - b2 ** self._t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def save_params(path, params: dict[str, Parameter]) -> None:
    """Write named tensors as versioned JSON with exact float round-trip."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "tensors": {
            name: {"shape": list(p.data.shape), "data": p.data.ravel().tolist()}
            for name, p in sorted(params.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_params(path) -> dict[str, Parameter]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    out = {}
    for name, spec in payload["tensors"].items():
        arr = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        out[name] = Parameter(name, arr)
    return out
