"""Recall@k and mean average precision over ranked out-of-town POIs."""
import numpy as np

from .. import kernels
from ..errors import ContractError


def _items(ranked):
    return ranked.pois if hasattr(ranked, "pois") else list(ranked)


def recall_at_k(ranked, truth, k):
    """|top-k ∩ truth| / |truth|."""
    truth = set(int(t) for t in truth)
    if not truth:
        raise ContractError("recall needs a nonempty ground-truth set")
    top = set(_items(ranked)[:k])
    return len(top & truth) / len(truth)


def average_precision(ranked, truth, n_items=None, cutoff=None):
    truth = set(int(t) for t in truth)
    if not truth:
        raise ContractError("average precision needs a nonempty ground-truth set")
    items = _items(ranked)
    if n_items is not None and len(items) < n_items:
        raise ContractError(f"ranking covers {len(items)} of {n_items} catalog items")
    limit = len(items) if not cutoff else min(cutoff, len(items))
    hits, acc = 0, 0.0
    for r, item in enumerate(items, 1):
        if item in truth:
            hits += 1
            if r <= limit:
                acc += hits / r
    return acc / len(truth)


def mean_average_precision(rankings, truths, n_items=None, cutoff=None):
    if len(rankings) != len(truths):
        raise ContractError("one ground-truth set per ranking is required")
    if not rankings:
        raise ContractError("no users to evaluate")
    return float(np.mean([average_precision(r, t, n_items, cutoff) for r, t in zip(rankings, truths)]))


def evaluate_scores(scores, truths, ks=(10, 20, 30), cutoff=0):
    """Mean Rec@k per k and MAP for a [U, D2] score matrix.

    Rankings break score ties by ascending POI id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable").astype(np.int64)
    truth = np.zeros(scores.shape, dtype=np.bool_)
    for u, t in enumerate(truths):
        t = np.asarray(t, dtype=np.int64)
        if t.size == 0:
            raise ContractError(f"user {u} has an empty ground-truth set")
        truth[u, t] = True
    recall, ap = kernels.recall_ap(order, truth, np.asarray(ks, dtype=np.int64), int(cutoff or 0))
    out = {f"Rec@{k}": float(recall[:, i].mean()) for i, k in enumerate(ks)}
    out["MAP"] = float(ap.mean())
    return out
