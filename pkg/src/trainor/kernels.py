"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``TRAINOR_DISABLE_NUMBA`` is
unset (or set to ``0``). Both variants are importable as ``<name>_numba`` and
``<name>_numpy`` so tests and ``benchmarks/bench_kernels.py`` can compare them.
"""
import math
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

EARTH_RADIUS_KM = 6371.0


def _numba_requested():
    flag = os.environ.get("TRAINOR_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and _numba_requested()


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# scatter-add of rows (backward of an embedding gather)

@njit(cache=True)
def scatter_add_rows_numba(target, idx, src):
    d = target.shape[1]
    for i in range(idx.shape[0]):
        r = idx[i]
        for j in range(d):
            target[r, j] += src[i, j]


def scatter_add_rows_numpy(target, idx, src):
    np.add.at(target, idx, src)


# ---------------------------------------------------------------------------
# pairwise haversine distance

@njit(cache=True)
def haversine_matrix_numba(lat, lon):
    n = lat.shape[0]
    out = np.zeros((n, n))
    rad = math.pi / 180.0
    for i in range(n):
        p1 = lat[i] * rad
        for j in range(i + 1, n):
            p2 = lat[j] * rad
            dphi = p2 - p1
            dlmb = (lon[j] - lon[i]) * rad
            a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
            if a > 1.0:
                a = 1.0
            dist = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))
            out[i, j] = dist
            out[j, i] = dist
    return out


def haversine_matrix_numpy(lat, lon):
    phi = np.radians(lat)
    lmb = np.radians(lon)
    dphi = phi[None, :] - phi[:, None]
    dlmb = lmb[None, :] - lmb[:, None]
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi)[:, None] * np.cos(phi)[None, :] * np.sin(dlmb / 2.0) ** 2
    out = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(a, 1.0)))
    out = np.triu(out, 1)
    return out + out.T


# ---------------------------------------------------------------------------
# session graph: first-occurrence node list plus normalized in/out adjacency

@njit(cache=True)
def session_graph_numba(seq):
    n = seq.shape[0]
    nodes = np.empty(n, dtype=np.int64)
    local = np.empty(n, dtype=np.int64)
    count = 0
    for i in range(n):
        found = -1
        for j in range(count):
            if nodes[j] == seq[i]:
                found = j
                break
        if found < 0:
            nodes[count] = seq[i]
            found = count
            count += 1
        local[i] = found
    w = np.zeros((count, count))
    for i in range(1, n):
        a = local[i - 1]
        b = local[i]
        if a != b:
            w[a, b] += 1.0
    a_out = np.zeros((count, count))
    a_in = np.zeros((count, count))
    for r in range(count):
        s_out = 0.0
        s_in = 0.0
        for c in range(count):
            s_out += w[r, c]
            s_in += w[c, r]
        if s_out > 0.0:
            for c in range(count):
                a_out[r, c] = w[r, c] / s_out
        if s_in > 0.0:
            for c in range(count):
                a_in[r, c] = w[c, r] / s_in
    return nodes[:count].copy(), a_out, a_in


def session_graph_numpy(seq):
    seq = np.asarray(seq, dtype=np.int64)
    uniq, first = np.unique(seq, return_index=True)
    order = np.argsort(first, kind="stable")
    nodes = uniq[order]
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq))
    local = rank[np.searchsorted(uniq, seq)]
    count = len(nodes)
    w = np.zeros((count, count))
    src, dst = local[:-1], local[1:]
    keep = src != dst
    np.add.at(w, (src[keep], dst[keep]), 1.0)
    s_out = w.sum(axis=1, keepdims=True)
    s_in = w.sum(axis=0)[:, None]
    a_out = np.divide(w, s_out, out=np.zeros_like(w), where=s_out > 0)
    a_in = np.divide(w.T, s_in, out=np.zeros_like(w), where=s_in > 0)
    return nodes, a_out, a_in


# ---------------------------------------------------------------------------
# uniform negatives: map a draw r in [0, n - |P|) to the r-th id not in P

@njit(cache=True)
def complement_lookup_numba(draws, owner, pos_flat, offsets):
    out = np.empty(draws.shape[0], dtype=np.int64)
    for i in range(draws.shape[0]):
        u = owner[i]
        x = draws[i]
        for k in range(offsets[u], offsets[u + 1]):
            if pos_flat[k] <= x:
                x += 1
            else:
                break
        out[i] = x
    return out


def complement_lookup_numpy(draws, owner, pos_flat, offsets):
    out = np.empty(draws.shape[0], dtype=np.int64)
    for u in np.unique(owner):
        sel = owner == u
        pos = pos_flat[offsets[u]:offsets[u + 1]]
        # non-positive ids preceding each positive
        gaps = pos - np.arange(len(pos))
        r = draws[sel]
        out[sel] = r + np.searchsorted(gaps, r, side="right")
    return out


# ---------------------------------------------------------------------------
# ranking metrics over full-catalog orderings

@njit(cache=True)
def recall_ap_numba(order, truth, ks, cutoff):
    n_users, n_items = order.shape
    recall = np.zeros((n_users, ks.shape[0]))
    ap = np.zeros(n_users)
    limit = n_items if cutoff <= 0 else min(cutoff, n_items)
    for u in range(n_users):
        n_truth = 0
        for j in range(n_items):
            if truth[u, j]:
                n_truth += 1
        hits = 0
        acc = 0.0
        for r in range(n_items):
            if truth[u, order[u, r]]:
                hits += 1
                if r < limit:
                    acc += hits / (r + 1.0)
            for q in range(ks.shape[0]):
                if r + 1 == ks[q]:
                    recall[u, q] = hits / n_truth
        for q in range(ks.shape[0]):
            if ks[q] > n_items:
                recall[u, q] = hits / n_truth
        ap[u] = acc / n_truth
    return recall, ap


def recall_ap_numpy(order, truth, ks, cutoff):
    n_items = order.shape[1]
    hit = np.take_along_axis(truth, order, axis=1)
    cum = np.cumsum(hit, axis=1)
    n_truth = truth.sum(axis=1).astype(np.float64)
    cols = np.minimum(np.asarray(ks), n_items) - 1
    recall = cum[:, cols] / n_truth[:, None]
    limit = n_items if cutoff <= 0 else min(cutoff, n_items)
    prec = cum[:, :limit] / np.arange(1, limit + 1)
    ap = (prec * hit[:, :limit]).sum(axis=1) / n_truth
    return recall, ap


if USE_NUMBA:
    scatter_add_rows = scatter_add_rows_numba
    haversine_matrix = haversine_matrix_numba
    session_graph = session_graph_numba
    complement_lookup = complement_lookup_numba
    recall_ap = recall_ap_numba
else:
    scatter_add_rows = scatter_add_rows_numpy
    haversine_matrix = haversine_matrix_numpy
    session_graph = session_graph_numpy
    complement_lookup = complement_lookup_numpy
    recall_ap = recall_ap_numpy
