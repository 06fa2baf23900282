"""Sanity baselines and the ranker interface shared with the full model.

A ranker exposes ``scores(users) -> [len(users), D2]`` for cold-start users
(TravelBehavior records whose out-of-town check-ins are hidden from it).
"""
import numpy as np

from .. import numkit as nk
from .. import outoftown
from ..dataio import build_session_graph, to_bag_of_words
from ..errors import ContractError
from ..pipeline import RankedRecommendation, TrainOR, rank_scores


class Ranker:
    name = "ranker"

    def scores(self, users):
        raise NotImplementedError

    def rank(self, user, k=None):
        s = self.scores([user])[0]
        order = rank_scores(s, k)
        return RankedRecommendation(getattr(user, "user", None), [(int(j), float(s[j])) for j in order])


class TopRanker(Ranker):
    name = "TOP"

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.float64)

    def scores(self, users):
        return np.tile(self.counts, (len(users), 1))

    def ranking(self):
        return [int(j) for j in rank_scores(self.counts)]


def baseline_top(train, n_out):
    """Static ranking by training check-in count; ties fall to ascending id."""
    if not train:
        raise ContractError("TOP baseline needs training users")
    counts = np.zeros(n_out)
    for u in train:
        counts += to_bag_of_words(u.out_set, n_out)
    return TopRanker(counts)


class BprMfRanker(Ranker):
    name = "BPR-MF"

    def __init__(self, user_emb, poi_emb):
        self.user_emb = user_emb
        self.poi_emb = poi_emb
        # cold-start users all receive the mean training-user embedding
        self.cold_user = user_emb.mean(axis=0)

    def scores(self, users):
        return np.tile(self.poi_emb @ self.cold_user, (len(users), 1))


def baseline_bpr_mf(train, n_out, d=128, epochs=30, seed=0, lr=0.001, l2=1e-5, n_neg=4, batch_size=64):
    """Plain MF trained with the BPR loss and Adam; no graphs, intention or transfer."""
    if not train:
        raise ContractError("BPR-MF baseline needs training users")
    params = nk.ParamStore(seed)
    s = 1.0 / np.sqrt(d)
    U = params.uniform("mf.U", (len(train), d), s)
    V = params.uniform("mf.V", (n_out, d), s)
    positives = [u.positives() for u in train]
    shuffle_ss, neg_ss = np.random.SeedSequence(seed).spawn(2)
    shuffle_rng, neg_rng = np.random.default_rng(shuffle_ss), np.random.default_rng(neg_ss)
    step = 0
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(train))
        for start in range(0, len(train), batch_size):
            idx = order[start:start + batch_size]
            rows, pos, neg = outoftown.sample_triples_batch([positives[i] for i in idx], n_out, n_neg, neg_rng)
            users = nk.take_rows(U, idx[rows])
            loss = outoftown.bpr_loss(outoftown.score(users, nk.take_rows(V, pos)),
                                      outoftown.score(users, nk.take_rows(V, neg)))
            nk.backward(loss, params)
            step += 1
            nk.adam_step(params, lr, l2, t=step)
    return BprMfRanker(U.value.copy(), V.value.copy())


class TrainORRanker(Ranker):
    def __init__(self, model):
        self.model = model
        self.name = model.cfg.variant

    def scores(self, users):
        graphs = [build_session_graph(u.home_seq) for u in users]
        return self.model.cold_start_scores(graphs)

    @classmethod
    def from_checkpoint(cls, ckpt):
        return cls(TrainOR.from_checkpoint(ckpt))
