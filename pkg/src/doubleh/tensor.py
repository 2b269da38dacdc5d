"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the primitives the message-passing model needs are provided. Every op
accepts a 1-d vector or a 2-d matrix whose rows are independent vectors
(row-wise semantics); nothing broadcasts beyond that. Ops record themselves
on the active :class:`Tape` whenever an input requires gradients, and
:func:`backward` replays the tape in reverse to produce exact gradients.

All values are float64 and every op output is checked to be finite; a NaN or
Inf raises :class:`~doubleh.errors.NumericError` at the op that produced it.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError

Array = np.ndarray


def _as_array(data) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim > 2:
        raise ValueError(f"only vectors and matrices are supported, got shape {arr.shape}")
    return arr


def _check_finite(arr: Array, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {op}")


class Tensor:
    """Immutable dense array plus a gradient-tracking flag.

    Tensors are not mutated by ops; the optimizer rebinds ``data`` wholesale,
    so arrays captured by tape closures stay valid.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_array(data)
        _check_finite(arr, "tensor creation")
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _TapeNode:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple, backward_fn: Callable):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of ops for one forward pass; single-context, single-use.

    Nodes are appended in creation order, which is topological by
    construction (an op's inputs exist before the op runs). ``backward``
    walks the list once in reverse.
    """

    def __init__(self):
        self.nodes: list[_TapeNode] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None


_ACTIVE_TAPE: Optional[Tape] = None


def _result(data: Array, op: str, inputs: tuple, backward_fn: Callable) -> Tensor:
    """Wrap an op output, recording it on the active tape when needed."""
    _check_finite(data, op)
    needs_grad = any(t is not None and t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = needs_grad
    if needs_grad and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.nodes.append(_TapeNode(out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor, params: Optional[Sequence[Tensor]] = None) -> dict:
    """Accumulate gradients of a scalar ``loss`` over the tape's leaf tensors.

    Returns a dict keyed by Tensor identity. Leaves never reached by the
    sweep are absent; pass ``params`` to guarantee a (zero) entry for each.
    Disconnected parameters are therefore zeros, not an error.
    """
    if loss.data.shape != ():
        raise ValueError(f"loss must be a scalar, got shape {loss.data.shape}")
    adjoint: dict[Tensor, Array] = {loss: np.ones((), dtype=np.float64)}
    produced = {node.output for node in tape.nodes}
    for node in reversed(tape.nodes):
        grad_out = adjoint.pop(node.output, None)
        if grad_out is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward_fn(grad_out)):
            if tensor is None or grad is None or not tensor.requires_grad:
                continue
            if tensor in adjoint:
                adjoint[tensor] = adjoint[tensor] + grad
            else:
                adjoint[tensor] = grad
    grads = {t: g for t, g in adjoint.items() if t.requires_grad and t not in produced}
    for g in grads.values():
        _check_finite(g, "backward")
    if params is not None:
        for p in params:
            grads.setdefault(p, np.zeros_like(p.data))
    return grads


# ---------------------------------------------------------------------------
# primitives


def affine(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """w @ x (+ b) for a vector x, or x @ w.T (+ b) row-wise for a matrix."""
    xd, wd = x.data, w.data
    if wd.ndim != 2:
        raise ValueError(f"weight must be a matrix, got shape {wd.shape}")
    d_out, d_in = wd.shape
    if xd.shape[-1] != d_in:
        raise ValueError(f"affine shape mismatch: x {xd.shape} vs w {wd.shape}")
    if b is not None and b.data.shape != (d_out,):
        raise ValueError(f"bias shape {b.data.shape} does not match output dim {d_out}")
    if xd.ndim == 1:
        out = wd @ xd
    else:
        out = xd @ wd.T
    if b is not None:
        out = out + b.data

    def backward_fn(g):
        if xd.ndim == 1:
            gx = wd.T @ g
            gw = np.outer(g, xd)
            gb = g
        else:
            gx = g @ wd
            gw = g.T @ xd
            gb = g.sum(axis=0)
        return gx, gw, (gb if b is not None else None)

    return _result(out, "affine", (x, w, b), backward_fn)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0.0

    def backward_fn(g):
        return (g * mask,)

    return _result(out, "relu", (x,), backward_fn)


def layernorm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(population variance + eps), per vector / per row.

    No learnable gain or bias.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xd = x.data
    if xd.shape[-1] < 1:
        raise ValueError("layernorm needs at least one entry per vector")
    mu = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (xd - mu) * inv

    def backward_fn(g):
        # d/dx of (x-mu)*inv with mu, var both functions of x:
        # gx = inv * (g - mean(g) - y * mean(g * y))
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _result(y, "layernorm", (x,), backward_fn)


def dropout(x: Tensor, p: float, mode: str, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: zero entries with probability p, scale survivors by 1/(1-p).

    Eval mode and p == 0 are exact identities (the input is returned as-is
    and the generator is not consumed).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    keep = rng.random(x.data.shape) >= p
    scale = keep / (1.0 - p)
    out = x.data * scale

    def backward_fn(g):
        return (g * scale,)

    return _result(out, "dropout", (x,), backward_fn)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """x / max(||x||, eps) per vector / per row; zero vectors stay zero."""
    xd = x.data
    norm = np.sqrt((xd**2).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    y = xd / denom

    def backward_fn(g):
        # Where ||x|| > eps: g/||x|| - x (x.g)/||x||^3; else the map is x/eps.
        dot = (g * xd).sum(axis=-1, keepdims=True)
        grad_full = g / denom - xd * dot / denom**3
        grad_tiny = g / denom
        return (np.where(norm > eps, grad_full, grad_tiny),)

    return _result(y, "l2_normalize", (x,), backward_fn)


def stable_softmax(logits: Array) -> Array:
    """Plain-array softmax with max subtraction (no gradient tracking)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target, reduction: str = "sum"):
    """Fused log-softmax + negative log likelihood.

    Vector logits with an int target give a scalar loss; matrix logits with
    one target per row reduce by ``sum`` or ``mean``. Returns
    ``(loss, probs)`` where probs is a plain array (no gradient flows
    through it).
    """
    ld = logits.data
    if ld.shape[-1] < 2:
        raise ValueError("need at least two classes")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    z = ld - ld.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_probs = z - logsumexp
    probs = np.exp(log_probs)

    if ld.ndim == 1:
        t = int(target)
        if not 0 <= t < ld.shape[0]:
            raise ValueError(f"target {t} out of range for {ld.shape[0]} classes")
        loss_val = -log_probs[t]
        onehot = np.zeros_like(ld)
        onehot[t] = 1.0

        def backward_fn(g):
            return ((probs - onehot) * g,)

    else:
        idx = np.asarray(target, dtype=np.intp)
        n = ld.shape[0]
        if idx.shape != (n,):
            raise ValueError(f"need one target per row, got {idx.shape} for {n} rows")
        if n == 0:
            raise ValueError("empty batch")
        if idx.min() < 0 or idx.max() >= ld.shape[1]:
            raise ValueError("target class out of range")
        per_row = -log_probs[np.arange(n), idx]
        loss_val = per_row.sum() if reduction == "sum" else per_row.mean()
        onehot = np.zeros_like(ld)
        onehot[np.arange(n), idx] = 1.0
        factor = 1.0 if reduction == "sum" else 1.0 / n

        def backward_fn(g):
            return ((probs - onehot) * (g * factor),)

    loss = _result(np.asarray(loss_val), "softmax_cross_entropy", (logits,), backward_fn)
    return loss, probs


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two vectors, or two matrices side by side."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim:
        raise ValueError(f"rank mismatch: {ad.shape} vs {bd.shape}")
    if ad.ndim == 2 and ad.shape[0] != bd.shape[0]:
        raise ValueError(f"row count mismatch: {ad.shape} vs {bd.shape}")
    out = np.concatenate([ad, bd], axis=-1)
    split = ad.shape[-1]

    def backward_fn(g):
        return g[..., :split], g[..., split:]

    return _result(out, "concat_cols", (a, b), backward_fn)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Stack two matrices vertically."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[1]:
        raise ValueError(f"cannot stack shapes {ad.shape} and {bd.shape}")
    out = np.concatenate([ad, bd], axis=0)
    split = ad.shape[0]

    def backward_fn(g):
        return g[:split], g[split:]

    return _result(out, "concat_rows", (a, b), backward_fn)


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows by index; rows may repeat."""
    idx = np.asarray(indices, dtype=np.intp)
    if x.data.ndim != 2:
        raise ValueError("gather_rows needs a matrix")
    out = x.data[idx]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(out, "gather_rows", (x,), backward_fn)


def segment_sum(x: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows into ``num_segments`` buckets; empty buckets give zero rows."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    if x.data.ndim != 2:
        raise ValueError("segment_sum needs a matrix")
    if seg.shape != (x.data.shape[0],):
        raise ValueError("need one segment id per row")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ValueError("segment id out of range")
    out = np.zeros((num_segments, x.data.shape[1]), dtype=np.float64)
    np.add.at(out, seg, x.data)

    def backward_fn(g):
        return (g[seg],)

    return _result(out, "segment_sum", (x,), backward_fn)


def segment_max(x: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Columnwise max of rows per bucket; empty buckets give zero rows."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    if x.data.ndim != 2:
        raise ValueError("segment_max needs a matrix")
    if seg.shape != (x.data.shape[0],):
        raise ValueError("need one segment id per row")
    n_cols = x.data.shape[1]
    out = np.zeros((num_segments, n_cols), dtype=np.float64)
    # argmax_rows[s, c] = row of x providing out[s, c], -1 when bucket empty
    argmax_rows = np.full((num_segments, n_cols), -1, dtype=np.intp)
    order = np.argsort(seg, kind="stable")
    sorted_seg = seg[order]
    bounds = np.searchsorted(sorted_seg, np.arange(num_segments + 1))
    for s in range(num_segments):
        lo, hi = bounds[s], bounds[s + 1]
        if lo == hi:
            continue
        rows = order[lo:hi]
        block = x.data[rows]
        local = block.argmax(axis=0)
        out[s] = block[local, np.arange(n_cols)]
        argmax_rows[s] = rows[local]

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        valid = argmax_rows >= 0
        np.add.at(gx, (argmax_rows[valid], np.nonzero(valid)[1]), g[valid])
        return (gx,)

    return _result(out, "segment_max", (x,), backward_fn)


def scale_rows(x: Tensor, factors) -> Tensor:
    """Multiply each row (or each vector entry set) by a constant scalar factor."""
    f = np.asarray(factors, dtype=np.float64)
    if x.data.ndim == 2:
        if f.shape != (x.data.shape[0],):
            raise ValueError("need one factor per row")
        f = f[:, None]
    elif f.shape != ():
        raise ValueError("vector input takes a scalar factor")
    out = x.data * f

    def backward_fn(g):
        return (g * f,)

    return _result(out, "scale_rows", (x,), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def backward_fn(g):
        return g, g

    return _result(out, "add", (a, b), backward_fn)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum all entries to a scalar."""
    out = np.asarray(x.data.sum())

    def backward_fn(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _result(out, "reduce_sum", (x,), backward_fn)
