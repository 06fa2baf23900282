"""Command-line entry point: ``trainor <subcommand> ...``."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import build_session_graph, load_dataset, read_checkins
from .errors import TrainorError, TrainingDiverged

TRAIN_FLAGS = {
    # flag: (TrainConfig field, type)
    "d": ("d", int),
    "k_topics": ("K", int),
    "lambda1": ("lambda1", float),
    "lambda2": ("lambda2", float),
    "lambda3": ("lambda3", float),
    "lr": ("lr", float),
    "l2": ("l2", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "n_neg": ("n_neg", int),
    "ggnn_steps": ("ggnn_steps", int),
    "seed": ("seed", int),
    "split_seed": ("split_seed", int),
}


def _add_train_flags(p):
    p.add_argument("--config", help="key=value config file")
    for flag, (_, typ) in TRAIN_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    p.add_argument("--ablate-intention", action="store_true", default=None)
    p.add_argument("--ablate-geoconv", action="store_true", default=None)


def train_config_from_args(args, base=None):
    """Defaults, then the config file, then flags given on the command line."""
    cfg = base or C.TrainConfig()
    if getattr(args, "config", None):
        cfg = C.from_kv(C.TrainConfig, C.read_kv(args.config), base=cfg)
    changes = {}
    for flag, (name, _) in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "ablate_intention", None):
        changes["disable_intention"] = True
    if getattr(args, "ablate_geoconv", None):
        changes["disable_geoconv"] = True
    return C.replace(cfg, **changes) if changes else cfg


def _ks(text):
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be >= 1")
    return ks


def cmd_gen_data(args):
    from .evalgen import generate_synthetic
    kv = C.read_kv(args.config) if args.config else {}
    cfg = C.from_kv(C.SynthConfig, kv)
    if args.seed is not None:
        cfg = C.replace(cfg, seed=args.seed)
    data = generate_synthetic(cfg, args.out)
    print(f"wrote {len(data.pois)} POIs and {len(data.checkins)} check-ins for {cfg.n_users} users to {args.out}")
    return 0


def cmd_train(args):
    from .pipeline import train
    cfg = train_config_from_args(args)
    dataset = load_dataset(args.data, split_seed=cfg.split_seed)
    sys.stderr.write(dataset.report.to_text())
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    header = "epoch\tL\tL_N\tL_P\tL_T\tval_Rec@10\tseconds"
    print(header)
    if log_fh:
        log_fh.write(header + "\n")

    def on_epoch(entry):
        print(entry.line(), flush=True)
        if log_fh:
            log_fh.write(entry.line() + "\n")
            log_fh.flush()

    try:
        ckpt, _ = train(dataset, cfg, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        if exc.checkpoint is not None:
            save_checkpoint(exc.checkpoint, args.out)
            sys.stderr.write(f"saved last good checkpoint (epoch {exc.checkpoint.epoch}) to {args.out}\n")
        raise
    finally:
        if log_fh:
            log_fh.close()
    save_checkpoint(ckpt, args.out)
    return 0


def cmd_evaluate(args):
    from .evalgen import TrainORRanker, run_experiment
    ckpt = load_checkpoint(args.ckpt)
    cfg = ckpt.config
    models = [m for m in (args.models.split(",") if args.models else ["TOP"]) if m]
    if args.repeats > 1:
        # fresh splits need fresh training; repeat 0 reproduces the checkpoint's own run
        report = run_experiment(args.data, models + [cfg.variant], cfg, args.k, args.repeats)
    else:
        dataset = load_dataset(args.data, split_seed=cfg.split_seed)
        report = run_experiment(dataset, models, cfg, args.k, 1,
                                rankers={cfg.variant: TrainORRanker.from_checkpoint(ckpt)})
    text = report.to_tsv()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_experiment(args):
    from .evalgen import MODELS, run_experiment
    cfg = train_config_from_args(args)
    models = args.models.split(",") if args.models else list(MODELS)
    report = run_experiment(args.data, models, cfg, args.k, args.repeats)
    text = report.to_tsv()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_recommend(args):
    from .pipeline import TrainOR, recommend
    ckpt = load_checkpoint(args.ckpt)
    model = TrainOR.from_checkpoint(ckpt)
    seqs = {}
    for _, user, ts, poi in read_checkins(args.user_checkins):
        rows = seqs.setdefault(user, [])
        rows.append((ts, len(rows), poi))
    print("user\trank\tpoi_id\tscore")
    for user, rows in seqs.items():
        home = [poi for _, _, poi in sorted(rows)]
        rec = recommend(ckpt, home, args.k, model=model, user=user)
        for rank, (j, s) in enumerate(rec.items, 1):
            print(f"{user}\t{rank}\t{model.out_tokens[j]}\t{s:.6f}")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import run_gradcheck
    if args.scale != "tiny":
        raise TrainorError(f"unknown scale {args.scale!r}")
    errors, seconds = run_gradcheck(eps=args.eps)
    ok = True
    for name, err in errors.items():
        passed = err < args.tol
        ok &= passed
        print(f"{name}\tmax_rel_err={err:.3e}\t{'PASS' if passed else 'FAIL'}")
    print(f"runtime\t{seconds:.2f}s")
    return 0 if ok else 1


def cmd_dump_intentions(args):
    from .pipeline import TrainOR
    ckpt = load_checkpoint(args.ckpt)
    model = TrainOR.from_checkpoint(ckpt)
    phi = model.intention_distribution()
    out = sys.stdout
    out.write(f"# intention-POI distribution: {phi.shape[0]} intentions x {phi.shape[1]} out-POIs\n")
    out.write("intention\t" + "\t".join(model.out_tokens) + "\n")
    for i, row in enumerate(phi):
        out.write(f"{i}\t" + "\t".join(f"{x:.6g}" for x in row) + "\n")
    if args.top:
        out.write(f"# top {args.top} POIs per intention\n")
        for i, row in enumerate(phi):
            best = np.argsort(-row, kind="stable")[:args.top]
            out.write(f"{i}\t" + "\t".join(f"{model.out_tokens[j]}:{row[j]:.4f}" for j in best) + "\n")
    if args.data:
        if ckpt.config.disable_intention:
            out.write("# intention module disabled in this checkpoint; no per-user weights\n")
            return 0
        dataset = load_dataset(args.data, split_seed=ckpt.config.split_seed)
        users = dataset.test
        graphs = [build_session_graph(u.home_seq) for u in users]
        _, beta = model.intention_vectors(model.home_preference(graphs))
        out.write("# per-user intention weights (test users)\n")
        out.write("user\t" + "\t".join(str(i) for i in range(phi.shape[0])) + "\n")
        for u, b in zip(users, beta.value):
            out.write(f"{u.token}\t" + "\t".join(f"{x:.6f}" for x in b) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="trainor", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="also write the per-epoch log here")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint against baselines on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=_ks, default=(10, 20, 30))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--models", help="comma-separated baselines to include (default TOP)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="train and compare baselines and ablations")
    p.add_argument("--data", required=True)
    p.add_argument("--models", help="comma-separated subset of TOP,BPR-MF,TrainOR,TrainOR-I,TrainOR-C,TrainOR-IC")
    p.add_argument("--k", type=_ks, default=(10, 20, 30))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out")
    _add_train_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("recommend", help="top-k out-of-town POIs for users given home check-ins")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--user-checkins", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--scale", default="tiny")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-intentions", help="print learned intention distributions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory; adds per-user weights for test users")
    p.add_argument("--top", type=int, default=0)
    p.set_defaults(func=cmd_dump_intentions)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainorError, OSError) as exc:
        sys.stderr.write(f"trainor: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
