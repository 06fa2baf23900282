"""Out-of-town preference: geographic convolution, fusion, scoring and BPR."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numkit as nk
from .errors import ContractError, SamplingError

PREFIX = "outoftown."


@dataclass
class GeoConvWeights:
    W_c: nk.Tensor
    b_c: nk.Tensor


@dataclass
class FuseWeights:
    W_f: nk.Tensor
    b_f: nk.Tensor


@dataclass(frozen=True)
class BprTriple:
    user: int
    pos: int
    neg: int


def init_params(params, n_out, n_users, d):
    s = 1.0 / np.sqrt(d)
    params.uniform(PREFIX + "V_o", (n_out, d), s)
    params.uniform(PREFIX + "U_o", (max(n_users, 1), d), s)
    params.uniform(PREFIX + "W_c", (d, d), s)
    params.zeros(PREFIX + "b_c", (d,))
    params.uniform(PREFIX + "W_f", (d, 2 * d), s)
    params.zeros(PREFIX + "b_f", (d,))


def geo_weights(params):
    return GeoConvWeights(params[PREFIX + "W_c"], params[PREFIX + "b_c"])


def fuse_weights(params):
    return FuseWeights(params[PREFIX + "W_f"], params[PREFIX + "b_f"])


def geo_conv(a_geo, V_o, w):
    """ReLU(A_geo V_o W_c + b_c)."""
    a = a_geo.a_geo if hasattr(a_geo, "a_geo") else a_geo
    return nk.relu(nk.matmul(nk.matmul(nk.as_tensor(a), V_o), w.W_c) + w.b_c)


def fuse(u_o, u_int, w):
    """ReLU(W_f [u_o ; u_int] + b_f); works row-wise on batches."""
    x = nk.concat([u_o, u_int], axis=-1)
    return nk.relu(nk.matmul(x, nk.transpose(w.W_f)) + w.b_f)


def score(u, v):
    """Inner product along the last axis."""
    return nk.sum(nk.mul(u, v), axis=-1)


def sample_triples(positives, d2, n_neg, rng, user=0, positive_cap=0):
    """BPR triples for one user: each distinct positive paired with ``n_neg`` uniform negatives."""
    pos = np.unique(np.asarray(positives, dtype=np.int64))
    users, p, n = sample_triples_batch([pos], d2, n_neg, rng, positive_cap)
    return [BprTriple(user, int(a), int(b)) for a, b in zip(p, n)]


def sample_triples_batch(positives, d2, n_neg, rng, positive_cap=0):
    """Vectorized triples for a batch of users.

    ``positives[i]`` holds user i's visited out-POIs. Returns (row, pos, neg)
    index arrays where ``row`` indexes into ``positives``. Negatives are drawn
    uniformly from the complement of each user's positive set.
    """
    if n_neg < 1:
        raise ContractError("n_neg must be >= 1")
    pos_sets = []
    for i, p in enumerate(positives):
        p = np.unique(np.asarray(p, dtype=np.int64))
        if p.size and (p[0] < 0 or p[-1] >= d2):
            raise ContractError(f"positive POI outside [0, {d2}) for row {i}")
        if p.size >= d2:
            raise SamplingError(f"row {i} visited every out-POI; no negatives exist")
        if positive_cap and p.size > positive_cap:
            p = np.sort(rng.choice(p, size=positive_cap, replace=False))
        pos_sets.append(p)
    counts = np.array([p.size for p in pos_sets], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    pos_flat = np.concatenate(pos_sets) if pos_sets else np.zeros(0, dtype=np.int64)
    rows = np.repeat(np.arange(len(pos_sets)), counts * n_neg)
    pos = np.repeat(pos_flat, n_neg)
    draws = rng.integers(0, d2 - counts[rows]) if rows.size else np.zeros(0, dtype=np.int64)
    neg = kernels.complement_lookup(draws.astype(np.int64), rows.astype(np.int64), pos_flat, offsets)
    return rows, pos, neg


def bpr_loss(pos_scores, neg_scores):
    """-sum log sigmoid(s_pos - s_neg), computed as sum softplus(s_neg - s_pos)."""
    margin = nk.sub(pos_scores, neg_scores)
    if margin.value.size == 0:
        raise ContractError("bpr_loss needs at least one triple")
    return nk.sum(nk.softplus(-margin))
