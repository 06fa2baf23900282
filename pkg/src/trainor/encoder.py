"""Home-town preference encoder: gated graph propagation and attention readout.

Inputs may carry a leading batch axis. Padded nodes have zero adjacency rows
and columns, so they never leak into real nodes; the readout masks them out.
"""
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .dataio import SessionBatch, SessionGraph, batch_session_graphs
from .errors import ContractError, DimensionError

PREFIX = "encoder."


@dataclass
class GgnnWeights:
    W_z: nk.Tensor
    U_z: nk.Tensor
    W_r: nk.Tensor
    U_r: nk.Tensor
    W_h: nk.Tensor
    U_h: nk.Tensor
    b_g: nk.Tensor
    steps: int = 1

    @classmethod
    def from_store(cls, params, steps=1):
        names = ("W_z", "U_z", "W_r", "U_r", "W_h", "U_h", "b_g")
        return cls(*(params[PREFIX + n] for n in names), steps=steps)


@dataclass
class AttentionWeights:
    q: nk.Tensor
    W_p: nk.Tensor
    b_p: nk.Tensor

    @classmethod
    def from_store(cls, params):
        return cls(params[PREFIX + "q"], params[PREFIX + "W_p"], params[PREFIX + "b_p"])


def init_params(params, n_home, d):
    s = 1.0 / np.sqrt(d)
    params.uniform(PREFIX + "home_emb", (n_home, d), s)
    for n in ("W_z", "W_r", "W_h"):
        params.uniform(PREFIX + n, (d, 2 * d), s)
    for n in ("U_z", "U_r", "U_h"):
        params.uniform(PREFIX + n, (d, d), s)
    params.zeros(PREFIX + "b_g", (2 * d,))
    params.uniform(PREFIX + "q", (d,), s)
    params.uniform(PREFIX + "W_p", (d, d), s)
    params.zeros(PREFIX + "b_p", (d,))


def _linear(x, W):
    # W stored as (out, in)
    return nk.matmul(x, nk.transpose(W))


def ggnn_propagate(graph, v_h, w):
    """Run ``w.steps`` gated updates; returns node states of the same shape as ``v_h``."""
    v_h = nk.as_tensor(v_h)
    a_out, a_in = graph.a_out, graph.a_in
    if a_out.shape[-1] != v_h.shape[-2] or a_out.shape[:-1] != v_h.shape[:-1]:
        raise DimensionError(f"graph with adjacency {a_out.shape} does not match node embeddings {v_h.shape}")
    if w.steps < 1:
        raise ContractError("ggnn steps must be >= 1")
    a_out_t, a_in_t = nk.as_tensor(a_out), nk.as_tensor(a_in)
    h = v_h
    for _ in range(w.steps):
        msg = nk.concat([nk.matmul(a_out_t, h), nk.matmul(a_in_t, h)], axis=-1) + w.b_g
        z = nk.sigmoid(_linear(msg, w.W_z) + _linear(h, w.U_z))
        r = nk.sigmoid(_linear(msg, w.W_r) + _linear(h, w.U_r))
        cand = nk.tanh(_linear(msg, w.W_h) + _linear(r * h, w.U_h))
        h = (1.0 - z) * h + z * cand
    return h


def attend_preference(v_prime, w, mask=None, use_softmax=False):
    """Attention readout: alpha_i = q . sigmoid(W_p v_i + b_p), u = sum_i alpha_i v_i.

    Weights are left unnormalized unless ``use_softmax`` is set.
    """
    v_prime = nk.as_tensor(v_prime)
    if v_prime.shape[-2] < 1:
        raise ContractError("attention readout needs at least one node")
    gate = nk.sigmoid(_linear(v_prime, w.W_p) + w.b_p)
    alpha = nk.matmul(gate, w.q)                     # [..., N]
    if use_softmax:
        if mask is not None:
            alpha = alpha + np.where(mask > 0, 0.0, -1e30)
        alpha = nk.softmax(alpha, axis=-1)
    elif mask is not None:
        alpha = alpha * mask
    # sum_i alpha_i v_i as a batched row-vector product
    return nk.reshape(nk.matmul(nk.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1])), v_prime),
                      v_prime.shape[:-2] + (v_prime.shape[-1],))


def encode(params, graphs, steps=1, use_softmax=False):
    """Home-town preference vectors ``[B, d]`` for a SessionBatch or list of SessionGraphs."""
    if isinstance(graphs, SessionGraph):
        graphs = [graphs]
    batch = graphs if isinstance(graphs, SessionBatch) else batch_session_graphs(graphs)
    emb = nk.take_rows(params[PREFIX + "home_emb"], batch.nodes)
    states = ggnn_propagate(batch, emb, GgnnWeights.from_store(params, steps))
    return attend_preference(states, AttentionWeights.from_store(params), batch.mask, use_softmax)
