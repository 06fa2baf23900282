"""Model assembly, joint training and cold-start recommendation."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoder, intention, outoftown
from . import numkit as nk
from .config import TrainConfig
from .dataio import CheckIn, batch_session_graphs, build_geo_graph, build_session_graph, to_bag_of_words
from .errors import ContractError, InputError, TrainingDiverged

log = logging.getLogger(__name__)

PREFIX = "transfer."
CHECKPOINT_VERSION = 1


@dataclass
class TransferWeights:
    W1: nk.Tensor
    b1: nk.Tensor
    W2: nk.Tensor
    b2: nk.Tensor

    @classmethod
    def from_store(cls, params):
        return cls(*(params[PREFIX + n] for n in ("W1", "b1", "W2", "b2")))


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict
    a_geo: np.ndarray
    home_tokens: list
    out_tokens: list
    epoch: int = 0
    losses: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


@dataclass
class RankedRecommendation:
    user: object
    items: list   # (out-POI id, score), best first

    @property
    def pois(self):
        return [p for p, _ in self.items]


@dataclass
class EpochLog:
    epoch: int
    loss: float
    l_n: float
    l_p: float
    l_t: float
    val_recall10: float
    seconds: float

    def line(self):
        return (f"{self.epoch}\t{self.loss:.6f}\t{self.l_n:.6f}\t{self.l_p:.6f}\t{self.l_t:.6f}"
                f"\t{self.val_recall10:.6f}\t{self.seconds:.3f}")


def transfer_map(u_h, w):
    """Two-layer MLP mapping home preference into the out-of-town user space."""
    hidden = nk.relu(nk.matmul(u_h, nk.transpose(w.W1)) + w.b1)
    return nk.matmul(hidden, nk.transpose(w.W2)) + w.b2


def transfer_loss(mapped, u_o):
    """Sum over users of ||F_tr(u_h) - u_o||^2."""
    return nk.sum(nk.square(nk.sub(mapped, u_o)))


def _check_finite(name, value):
    v = value.value if isinstance(value, nk.Tensor) else np.asarray(value)
    if not np.all(np.isfinite(v)):
        raise TrainingDiverged(name, epoch=None)


def joint_loss(l_n, l_p, l_t, cfg):
    """lambda1*L_N + lambda2*L_P + lambda3*L_T; L_N is dropped when intention is ablated."""
    for name, part in (("L_N", l_n), ("L_P", l_p), ("L_T", l_t)):
        _check_finite(name, part)
    total = nk.add(nk.mul(l_p, cfg.lambda2), nk.mul(l_t, cfg.lambda3))
    if not cfg.disable_intention:
        total = nk.add(total, nk.mul(l_n, cfg.lambda1))
    return total


class TrainOR:
    """All trainable state plus the forward computations that use it."""

    def __init__(self, cfg, n_home, n_out, n_train_users, a_geo, home_tokens=None, out_tokens=None):
        self.cfg = cfg
        self.n_home = n_home
        self.n_out = n_out
        self.n_train_users = n_train_users
        self.a_geo = np.asarray(a_geo, dtype=np.float64)
        self.home_tokens = list(home_tokens) if home_tokens is not None else [str(i) for i in range(n_home)]
        self.out_tokens = list(out_tokens) if out_tokens is not None else [str(i) for i in range(n_out)]
        self._home_index = {t: i for i, t in enumerate(self.home_tokens)}
        d = cfg.d
        p = self.params = nk.ParamStore(cfg.seed)
        encoder.init_params(p, n_home, d)
        outoftown.init_params(p, n_out, n_train_users, d)
        intention.init_params(p, n_out, d, cfg.K, cfg.enc_hidden, share_E=cfg.share_E_Vo)
        s = 1.0 / np.sqrt(d)
        p.uniform(PREFIX + "W1", (d, d), s)
        p.zeros(PREFIX + "b1", (d,))
        p.uniform(PREFIX + "W2", (d, d), s)
        p.zeros(PREFIX + "b2", (d,))

    @classmethod
    def for_dataset(cls, dataset, cfg):
        geo = build_geo_graph(dataset.out_coords, cfg.geo_norm)
        return cls(cfg, dataset.n_home, dataset.n_out, len(dataset.train), geo.a_geo,
                   dataset.home_tokens, dataset.out_tokens)

    @classmethod
    def from_checkpoint(cls, ckpt):
        model = cls(ckpt.config, len(ckpt.home_tokens), len(ckpt.out_tokens),
                    ckpt.params[outoftown.PREFIX + "U_o"].shape[0], ckpt.a_geo,
                    ckpt.home_tokens, ckpt.out_tokens)
        model.params.load_state(ckpt.params)
        return model

    def checkpoint(self, epoch=0, losses=None):
        return Checkpoint(config=self.cfg, params=self.params.state(), a_geo=self.a_geo.copy(),
                          home_tokens=list(self.home_tokens), out_tokens=list(self.out_tokens),
                          epoch=epoch, losses=dict(losses or {}))

    # -- components -------------------------------------------------------

    def ntm_weights(self):
        E = self.params[outoftown.PREFIX + "V_o"] if self.cfg.share_E_Vo else None
        return intention.NtmWeights.from_store(self.params, E)

    def home_preference(self, graphs):
        return encoder.encode(self.params, graphs, self.cfg.ggnn_steps, self.cfg.attn_softmax)

    def poi_vectors(self):
        V_o = self.params[outoftown.PREFIX + "V_o"]
        if self.cfg.disable_geoconv:
            return V_o
        return outoftown.geo_conv(self.a_geo, V_o, outoftown.geo_weights(self.params))

    def intention_vectors(self, u_h):
        if self.cfg.disable_intention:
            return nk.as_tensor(np.zeros(u_h.shape)), None
        return intention.user_intention(self.params[intention.PREFIX + "T"], u_h,
                                         self.params[intention.PREFIX + "W_t"])

    def transfer(self, u_h):
        return transfer_map(u_h, TransferWeights.from_store(self.params))

    def fused_users(self, u_o, u_h):
        """Fusion of an out-of-town user vector with the intention derived from ``u_h``."""
        u_int, _ = self.intention_vectors(u_h)
        return outoftown.fuse(u_o, u_int, outoftown.fuse_weights(self.params))

    def intention_distribution(self):
        w = self.ntm_weights()
        return intention.intention_poi_distribution(w.E, w.T).value

    # -- training ---------------------------------------------------------

    def batch_losses(self, graphs, bows, user_rows, positives, neg_rng, eps_rng):
        """Loss components on one batch of training users.

        ``user_rows`` index the U_o table; ``positives`` are per-user out-POI lists.
        """
        cfg = self.cfg
        u_h = self.home_preference(graphs)
        if cfg.disable_intention:
            l_n = nk.as_tensor(0.0)
        else:
            w = self.ntm_weights()
            post = intention.encode_posterior(bows, w)
            eps = eps_rng.standard_normal((len(user_rows), cfg.K))
            theta = intention.sample_theta(post, w.theta_W, w.theta_b, eps)
            phi = intention.intention_poi_distribution(w.E, w.T)
            l_n = intention.ntm_loss(bows, phi, theta, post)
        u_o = nk.take_rows(self.params[outoftown.PREFIX + "U_o"], user_rows)
        fused = self.fused_users(u_o, u_h)
        V = self.poi_vectors()
        rows, pos, neg = outoftown.sample_triples_batch(positives, self.n_out, cfg.n_neg, neg_rng,
                                                        cfg.positive_cap)
        users = nk.take_rows(fused, rows)
        l_p = outoftown.bpr_loss(outoftown.score(users, nk.take_rows(V, pos)),
                                 outoftown.score(users, nk.take_rows(V, neg)))
        target = nk.as_tensor(u_o.value.copy()) if cfg.stop_grad_transfer_target else u_o
        l_t = transfer_loss(self.transfer(u_h), target)
        return l_n, l_p, l_t, joint_loss(l_n, l_p, l_t, cfg)

    # -- inference --------------------------------------------------------

    def cold_start_scores(self, graphs, batch_size=256):
        """Scores [B, D2] for users known only by their home-town session graphs."""
        V = self.poi_vectors().value
        out = np.empty((len(graphs), self.n_out))
        for s in range(0, len(graphs), batch_size):
            chunk = graphs[s:s + batch_size]
            u_h = self.home_preference(chunk)
            fused = self.fused_users(self.transfer(u_h), u_h)
            out[s:s + len(chunk)] = fused.value @ V.T
        return out

    def home_ids(self, home_seq):
        """Map tokens / CheckIns / ids to home vocabulary ids, dropping unknown POIs."""
        ids = []
        for item in home_seq:
            if isinstance(item, CheckIn):
                item = item.poi
            if isinstance(item, str):
                if item in self._home_index:
                    ids.append(self._home_index[item])
            elif 0 <= int(item) < self.n_home:
                ids.append(int(item))
        return ids


def rank_scores(scores, k=None):
    """Item order best-first; equal scores fall back to ascending id."""
    order = np.argsort(-np.asarray(scores), axis=-1, kind="stable")
    return order if k is None else order[..., :k]


def _graph_cache(users):
    return [build_session_graph(u.home_seq) for u in users]


def validation_recall(model, users, graphs=None, k=10):
    from .evalgen import evaluate_scores
    if not users:
        return float("nan")
    graphs = graphs if graphs is not None else _graph_cache(users)
    metrics = evaluate_scores(model.cold_start_scores(graphs), [u.positives() for u in users], ks=(k,))
    return metrics[f"Rec@{k}"]


def train(dataset, cfg, on_epoch=None, model=None):
    """Jointly optimize all components; returns (Checkpoint, list of EpochLog).

    ``on_epoch`` receives each EpochLog as it is produced.
    """
    if not dataset.train:
        raise ContractError("training needs at least one training user")
    model = model if model is not None else TrainOR.for_dataset(dataset, cfg)
    params = model.params
    train_users = dataset.train
    graphs = _graph_cache(train_users)
    valid_graphs = _graph_cache(dataset.valid)
    bows = np.stack([to_bag_of_words(u.out_set, dataset.n_out) for u in train_users]).astype(np.float64)
    positives = [u.positives() for u in train_users]

    shuffle_ss, neg_ss, eps_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    neg_rng = np.random.default_rng(neg_ss)
    eps_rng = np.random.default_rng(eps_ss)

    history = []
    step = 0
    last_good = model.checkpoint(0)
    n = len(train_users)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        totals = np.zeros(4)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = batch_session_graphs([graphs[i] for i in idx])
            try:
                l_n, l_p, l_t, loss = model.batch_losses(batch, bows[idx], idx, [positives[i] for i in idx],
                                                         neg_rng, eps_rng)
            except TrainingDiverged as exc:
                raise TrainingDiverged(exc.component, epoch, last_good) from None
            nk.backward(loss, params)
            step += 1
            nk.adam_step(params, cfg.lr, cfg.l2, t=step)
            totals += [loss.item(), l_n.item(), l_p.item(), l_t.item()]
        if not all(np.all(np.isfinite(t.value)) for _, t in params.items()):
            raise TrainingDiverged("parameters", epoch, last_good)
        val = validation_recall(model, dataset.valid, valid_graphs)
        entry = EpochLog(epoch, *totals, val, time.perf_counter() - t0)
        history.append(entry)
        log.info(entry.line())
        if on_epoch is not None:
            on_epoch(entry)
        last_good = model.checkpoint(epoch, _loss_dict(entry))
    return last_good, history


def _loss_dict(entry):
    return {"L": entry.loss, "L_N": entry.l_n, "L_P": entry.l_p, "L_T": entry.l_t}


def recommend(ckpt, home_seq, k=10, model=None, user=None):
    """Top-k out-of-town POIs for a new user given only home-town check-ins."""
    if k < 1:
        raise InputError("k must be >= 1")
    model = model if model is not None else TrainOR.from_checkpoint(ckpt)
    ids = model.home_ids(home_seq)
    if not ids:
        raise InputError("no known home-town POIs in the check-in sequence")
    scores = model.cold_start_scores([build_session_graph(ids)])[0]
    order = rank_scores(scores, min(k, model.n_out))
    return RankedRecommendation(user, [(int(j), float(scores[j])) for j in order])
