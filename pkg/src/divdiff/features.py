"""Feature extraction from a partially generated batch.

Each sample yields a unified per-position distribution (softmax rows at
masked positions, exact one-hot rows at committed positions), a
vocabulary-length max-pool of those rows with argmax routing records, and
a scalar quality score. Gradients in feature space are pushed back to the
masked logits analytically: each vocabulary entry routes its gradient to
the single position that attained the max, one-hot rows are constants,
and the softmax Jacobian is applied per touched row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ContractError, InvalidInputError
from .state import MaskState


@dataclass
class UnifiedDistribution:
    """Per-position probability rows plus bookkeeping flags.

    one_hot marks committed rows (constants under differentiation);
    pooled marks rows eligible for max-pooling (prompt rows are not).
    """

    probs: np.ndarray    # (B, S, V)
    one_hot: np.ndarray  # (B, S) bool
    pooled: np.ndarray   # (B, S) bool


@dataclass
class FeatureSet:
    """Max-pooled features, argmax routing, and optional quality scores.

    routing[i, w] is the sequence position whose row attained the max for
    vocabulary entry w (ties to the lowest position), or -1 when the entry
    is excluded by a top-k restriction.
    """

    features: np.ndarray          # (B, V)
    routing: np.ndarray           # (B, V) int64
    qualities: np.ndarray | None = None  # (B,)


def unified_distribution(logits, state: MaskState) -> UnifiedDistribution:
    """Softmax rows at masked positions, one-hot rows at committed ones."""
    x = np.asarray(logits, dtype=np.float64)
    if x.shape != (state.batch, state.length, state.vocab):
        raise InvalidInputError(
            f"unified_distribution: logits {x.shape} do not match the state "
            f"({state.batch}, {state.length}, {state.vocab})"
        )
    probs = np.zeros_like(x)
    if state.masked.any():
        probs[state.masked] = linalg.softmax_rows(x[state.masked])
    unmasked = ~state.masked
    if unmasked.any():
        ids = state.realized[unmasked]
        if ids.min() < 0 or ids.max() >= state.vocab:
            raise ContractError("realized token id outside the vocabulary")
        flat = probs[unmasked]
        flat[np.arange(flat.shape[0]), ids] = 1.0
        probs[unmasked] = flat
    pooled = np.ones((state.batch, state.length), dtype=bool)
    pooled[:, : state.prompt_len] = False
    return UnifiedDistribution(probs=probs, one_hot=unmasked, pooled=pooled)


def extract_features(ud: UnifiedDistribution, top_k: int | None = None) -> FeatureSet:
    """Max-pool the pooled rows over the sequence dimension.

    With top_k set, pooling is restricted to the union of each row's top-k
    vocabulary entries; excluded entries get feature 0 and routing -1.
    """
    b, s, v = ud.probs.shape
    if top_k is not None and top_k < 1:
        raise InvalidInputError("extract_features: top_k must be >= 1 when set")
    features = np.zeros((b, v), dtype=np.float64)
    routing = np.full((b, v), -1, dtype=np.int64)
    for i in range(b):
        rows_idx = np.flatnonzero(ud.pooled[i])
        if rows_idx.size == 0:
            continue
        rows = ud.probs[i, rows_idx]
        arg = rows.argmax(axis=0)
        vals = rows[arg, np.arange(v)]
        if top_k is None or top_k >= v:
            features[i] = vals
            routing[i] = rows_idx[arg]
        else:
            keep = np.zeros(v, dtype=bool)
            order = np.argsort(-rows, axis=1, kind="stable")[:, :top_k]
            keep[np.unique(order)] = True
            features[i, keep] = vals[keep]
            routing[i, keep] = rows_idx[arg[keep]]
    return FeatureSet(features=features, routing=routing)


def quality_scores(logits, state: MaskState) -> np.ndarray:
    """Mean of the model's max per-position probability over committed tokens.

    Only unmasked non-prompt positions count; a sample with none scores 1.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.shape != (state.batch, state.length, state.vocab):
        raise InvalidInputError("quality_scores: logits do not match the state")
    sel = ~state.masked.copy()
    sel[:, : state.prompt_len] = False
    out = np.ones(state.batch, dtype=np.float64)
    if not sel.any():
        return out
    maxes = linalg.softmax_rows(x[sel]).max(axis=-1)
    owner = np.nonzero(sel)[0]
    counts = np.bincount(owner, minlength=state.batch)
    sums = np.bincount(owner, weights=maxes, minlength=state.batch)
    present = counts > 0
    out[present] = sums[present] / counts[present]
    return out


def feature_set(logits, state: MaskState,
                top_k: int | None = None) -> tuple[FeatureSet, UnifiedDistribution]:
    """Convenience bundle: unified distribution, features, and qualities."""
    ud = unified_distribution(logits, state)
    fs = extract_features(ud, top_k=top_k)
    fs.qualities = quality_scores(logits, state)
    return fs, ud


def backprop_to_logits(upstream, fs: FeatureSet, ud: UnifiedDistribution) -> np.ndarray:
    """Push per-sample feature gradients back to the logits.

    upstream is (B, V), the gradient of some loss with respect to the
    pooled features. Gradient lands only at (masked position, vocabulary)
    slots recorded in the routing; everything else is zero.
    """
    b, s, v = ud.probs.shape
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != (b, v):
        raise InvalidInputError(f"backprop_to_logits: upstream {u.shape} != ({b}, {v})")
    grad = np.zeros_like(ud.probs)
    for i in range(b):
        rout = fs.routing[i]
        cols = np.flatnonzero(rout >= 0)
        if cols.size == 0:
            continue
        rows = rout[cols]
        if rows.max() >= s or not ud.pooled[i, rows].all():
            raise ContractError("routing points at a position outside the pooled rows")
        live = ~ud.one_hot[i, rows]
        rows, cols = rows[live], cols[live]
        if rows.size == 0:
            continue
        acc = np.zeros((s, v), dtype=np.float64)
        np.add.at(acc, (rows, cols), u[i, cols])
        for r in np.unique(rows):
            grad[i, r] = linalg.softmax_vjp(ud.probs[i, r], acc[r])
    return grad
