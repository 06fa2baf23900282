"""Run baselines, the full model and its ablations on the same test users."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig, replace
from ..dataio import load_dataset
from ..errors import ContractError
from ..pipeline import TrainOR, train
from .baselines import TrainORRanker, baseline_bpr_mf, baseline_top
from .metrics import evaluate_scores

log = logging.getLogger(__name__)

MODELS = ("TOP", "BPR-MF", "TrainOR", "TrainOR-I", "TrainOR-C", "TrainOR-IC")
ABLATIONS = {
    "TrainOR": (False, False),
    "TrainOR-I": (True, False),
    "TrainOR-C": (False, True),
    "TrainOR-IC": (True, True),
}


@dataclass
class EvalReport:
    ks: tuple
    seed: int
    rows: list = field(default_factory=list)   # dicts: model, repeat, n_users, metrics, seconds
    runtime: float = 0.0

    def metric_names(self):
        return [f"Rec@{k}" for k in self.ks] + ["MAP"]

    def models(self):
        seen = []
        for r in self.rows:
            if r["model"] not in seen:
                seen.append(r["model"])
        return seen

    def mean(self, model):
        rows = [r for r in self.rows if r["model"] == model]
        if not rows:
            raise KeyError(model)
        return {m: float(np.mean([r[m] for r in rows])) for m in self.metric_names()}

    def repeats(self):
        return len({r["repeat"] for r in self.rows})

    def to_tsv(self):
        names = self.metric_names()
        out = ["\t".join(["model", "repeat", "n_users"] + names + ["seconds"])]
        multi = self.repeats() > 1
        for model in self.models():
            rows = [r for r in self.rows if r["model"] == model]
            if multi:
                for r in rows:
                    out.append("\t".join([model, str(r["repeat"]), str(r["n_users"])]
                                         + [f"{r[m]:.4f}" for m in names] + [f"{r['seconds']:.2f}"]))
            mean = self.mean(model)
            n = int(np.mean([r["n_users"] for r in rows]))
            secs = float(np.mean([r["seconds"] for r in rows]))
            out.append("\t".join([model, "mean", str(n)] + [f"{mean[m]:.4f}" for m in names] + [f"{secs:.2f}"]))
        return "\n".join(out) + "\n"


def build_ranker(name, dataset, cfg, on_epoch=None):
    if name == "TOP":
        return baseline_top(dataset.train, dataset.n_out)
    if name == "BPR-MF":
        return baseline_bpr_mf(dataset.train, dataset.n_out, d=cfg.d, epochs=cfg.epochs, seed=cfg.seed,
                               lr=cfg.lr, l2=cfg.l2, n_neg=cfg.n_neg, batch_size=cfg.batch_size)
    if name in ABLATIONS:
        no_int, no_geo = ABLATIONS[name]
        ckpt, _ = train(dataset, replace(cfg, disable_intention=no_int, disable_geoconv=no_geo), on_epoch=on_epoch)
        return TrainORRanker(TrainOR.from_checkpoint(ckpt))
    raise ContractError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")


def evaluate_rankers(rankers, users, ks=(10, 20, 30), cutoff=0):
    truths = [u.positives() for u in users]
    return {name: evaluate_scores(r.scores(users), truths, ks, cutoff) for name, r in rankers.items()}


def run_experiment(data, models=MODELS, cfg=None, ks=(10, 20, 30), repeats=1, rankers=None):
    """Evaluate ``models`` on the test split; repeat ``repeats`` times over new split and model seeds.

    ``data`` is a dataset directory (required when ``repeats > 1``) or a
    loaded Dataset. ``rankers`` maps extra names to ready-made rankers,
    evaluated on the first repeat only.
    """
    cfg = cfg or TrainConfig()
    if repeats < 1:
        raise ContractError("repeats must be >= 1")
    if repeats > 1 and not isinstance(data, (str, bytes)) and not hasattr(data, "__fspath__"):
        raise ContractError("repeated experiments need a dataset directory to re-split")
    report = EvalReport(ks=tuple(ks), seed=cfg.seed)
    t_all = time.perf_counter()
    for rep in range(repeats):
        run_cfg = replace(cfg, seed=cfg.seed + rep, split_seed=cfg.split_seed + rep)
        if hasattr(data, "train"):
            dataset = data
        else:
            dataset = load_dataset(data, split_seed=run_cfg.split_seed)
        if not dataset.test:
            raise ContractError("dataset has no test users")
        todo = [(m, None) for m in models]
        if rep == 0 and rankers:
            todo += list(rankers.items())
        for name, ready in todo:
            t0 = time.perf_counter()
            ranker = ready if ready is not None else build_ranker(name, dataset, run_cfg)
            metrics = evaluate_rankers({name: ranker}, dataset.test, ks, cfg.map_cutoff)[name]
            row = {"model": name, "repeat": rep, "n_users": len(dataset.test),
                   "seconds": time.perf_counter() - t0, **metrics}
            log.info("repeat %d %s %s", rep, name, metrics)
            report.rows.append(row)
    report.runtime = time.perf_counter() - t_all
    return report
