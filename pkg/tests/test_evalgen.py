import math
from itertools import combinations

import numpy as np
import pytest

from trainor.config import SynthConfig, TrainConfig
from trainor.dataio import CheckIn, TravelBehavior, load_dataset
from trainor.errors import ConfigError, ContractError
from trainor.evalgen import (EvalReport, baseline_bpr_mf, baseline_top, evaluate_scores, generate_synthetic,
                             mean_average_precision, recall_at_k, run_experiment)
from trainor.evalgen.metrics import average_precision
from trainor.pipeline import rank_scores


def _brute_recall(order, truth, k):
    return len(set(order[:k]) & set(truth)) / len(set(truth))


def _brute_ap(order, truth):
    truth = set(truth)
    precisions = [len(set(order[:r]) & truth) / r for r in range(1, len(order) + 1) if order[r - 1] in truth]
    return sum(precisions) / len(truth)


def _random_cases(seed, n):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        n_items = int(rng.integers(1, 11))
        order = [int(x) for x in rng.permutation(n_items)]
        truth = [int(x) for x in rng.choice(n_items, size=int(rng.integers(1, min(3, n_items) + 1)), replace=False)]
        yield n_items, order, truth


def _user(uid, out):
    return TravelBehavior(uid, [CheckIn(uid, t, 0) for t in range(5)], [CheckIn(uid, 100 + t, p) for t, p in enumerate(out)])


def test_recall_examples():
    assert recall_at_k([0, 2, 1], {0, 1}, 2) == 0.5
    assert recall_at_k([3, 0, 2, 1], {0, 1}, 10) == 1.0
    assert recall_at_k([3, 2, 0, 1], {0, 1}, 2) == 0.0
    with pytest.raises(ContractError):
        recall_at_k([0, 1], set(), 1)


def test_map_examples():
    assert mean_average_precision([[5, 1, 2, 3]], [{5}]) == 1.0
    assert average_precision([1, 2, 3, 5], {5}) == 0.25
    with pytest.raises(ContractError):
        mean_average_precision([[0, 1]], [{0}], n_items=4)


def test_metrics_match_brute_force_oracles():
    for n_items, order, truth in _random_cases(0, 20):
        for k in range(1, n_items + 2):
            assert recall_at_k(order, truth, k) == _brute_recall(order, truth, k)
        assert average_precision(order, truth, n_items) == _brute_ap(order, truth)


def test_map_averages_users():
    cases = list(_random_cases(1, 3))
    expected = np.mean([_brute_ap(o, t) for _, o, t in cases])
    assert mean_average_precision([o for _, o, _ in cases], [t for _, _, t in cases]) == pytest.approx(expected, abs=1e-15)


def test_score_matrix_metrics_match_oracles():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n_users, n_items = int(rng.integers(1, 6)), int(rng.integers(3, 11))
        scores = rng.integers(0, 4, (n_users, n_items)).astype(float)  # ties on purpose
        truths = [rng.choice(n_items, size=int(rng.integers(1, 4)), replace=False) for _ in range(n_users)]
        ks = (1, 3, 5)
        got = evaluate_scores(scores, truths, ks)
        orders = [list(rank_scores(s)) for s in scores]
        for k in ks:
            assert got[f"Rec@{k}"] == pytest.approx(np.mean([_brute_recall(o, t, k) for o, t in zip(orders, truths)]),
                                                   abs=1e-15)
        assert got["MAP"] == pytest.approx(np.mean([_brute_ap(o, t) for o, t in zip(orders, truths)]), abs=1e-15)


def test_recall_nondecreasing_in_k(rng):
    scores = rng.normal(size=(30, 15))
    truths = [rng.choice(15, size=3, replace=False) for _ in range(30)]
    got = evaluate_scores(scores, truths, ks=tuple(range(1, 16)))
    rec = [got[f"Rec@{k}"] for k in range(1, 16)]
    assert all(a <= b for a, b in zip(rec, rec[1:])) and rec[-1] == 1.0
    assert all(0 <= v <= 1 for v in got.values())


def test_map_cutoff_only_counts_early_hits():
    assert average_precision([0, 1, 2, 3], {0, 3}, cutoff=2) == 0.5
    got = evaluate_scores(np.array([[4.0, 3, 2, 1]]), [[0, 3]], ks=(2,), cutoff=2)
    assert got["MAP"] == 0.5


def test_top_baseline_examples():
    top = baseline_top([_user(0, [0, 0, 0, 1]), _user(1, [0, 0, 1])], 2)
    assert top.ranking() == [0, 1]
    tie = baseline_top([_user(0, [2, 1, 3, 0])], 5)
    assert tie.ranking() == [0, 1, 2, 3, 4]
    a, b = top.rank(_user(7, [1]), 2), top.rank(_user(8, [0]), 2)
    assert a.pois == b.pois
    with pytest.raises(ContractError):
        baseline_top([], 3)


def test_top_ranking_is_a_permutation(small_synth_dir):
    ds = load_dataset(small_synth_dir)
    assert sorted(baseline_top(ds.train, ds.n_out).ranking()) == list(range(ds.n_out))


def test_bpr_mf_tiny_instance():
    users = [_user(0, [0, 0, 0])]
    ranker = baseline_bpr_mf(users, 2, d=4, epochs=200, seed=0, lr=0.05)
    s = ranker.user_emb[0] @ ranker.poi_emb.T
    assert s[0] > s[1]
    assert ranker.rank(users[0]).pois[0] == 0


def test_bpr_mf_deterministic_and_cold_start_mean(small_synth_dir):
    ds = load_dataset(small_synth_dir)
    a = baseline_bpr_mf(ds.train, ds.n_out, d=8, epochs=2, seed=3)
    b = baseline_bpr_mf(ds.train, ds.n_out, d=8, epochs=2, seed=3)
    assert a.user_emb.tobytes() == b.user_emb.tobytes() and a.poi_emb.tobytes() == b.poi_emb.tobytes()
    expected = list(rank_scores(a.poi_emb @ a.user_emb.mean(axis=0)))
    assert a.rank(ds.test[0]).pois == expected


SMALL = dict(n_users=150, n_home_pois=40, n_out_pois=30, k_true=3, n_home_clusters=3)


def test_synthetic_passes_filter(tmp_path):
    generate_synthetic(SynthConfig(seed=2, **SMALL), tmp_path)
    ds = load_dataset(tmp_path)
    assert ds.report.filtered_users == 0 and ds.report.users_kept == 150


def test_synthetic_is_byte_identical(tmp_path):
    cfg = SynthConfig(seed=9, **SMALL)
    generate_synthetic(cfg, tmp_path / "a")
    generate_synthetic(cfg, tmp_path / "b")
    for name in ("pois.tsv", "checkins.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    generate_synthetic(SynthConfig(seed=10, **SMALL), tmp_path / "c")
    assert (tmp_path / "a" / "checkins.tsv").read_bytes() != (tmp_path / "c" / "checkins.tsv").read_bytes()


def test_shared_intention_means_more_overlap():
    data = generate_synthetic(SynthConfig(seed=4, **SMALL))
    sets = [set(v.tolist()) for v in data.user_out]
    same, diff = [], []
    for i, j in combinations(range(len(sets)), 2):
        jac = len(sets[i] & sets[j]) / len(sets[i] | sets[j])
        (same if data.user_intention[i] == data.user_intention[j] else diff).append(jac)
    assert np.mean(same) > np.mean(diff)


def test_point_mass_intentions_concentrate_visits():
    cfg = SynthConfig(seed=5, concentration=1e12, **SMALL)
    data = generate_synthetic(cfg)
    bound = math.ceil(cfg.n_out_pois / cfg.k_true)
    for visits in data.user_out:
        assert np.unique(visits).size <= bound


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_home_pois=3, n_home_clusters=5)
    with pytest.raises(ConfigError):
        SynthConfig(k_true=1)
    with pytest.raises(ConfigError):
        SynthConfig(home_checkins=(4, 10))


def test_experiment_report_rows_and_repeats(small_synth_dir):
    cfg = TrainConfig(d=8, K=3, enc_hidden=16, epochs=1, batch_size=32, n_neg=2)
    models = ["TOP", "TrainOR", "TrainOR-I", "TrainOR-C", "TrainOR-IC"]
    report = run_experiment(small_synth_dir, models, cfg, ks=(10, 20), repeats=2)
    assert report.models() == models and report.repeats() == 2
    lines = report.to_tsv().splitlines()
    assert lines[0].split("\t") == ["model", "repeat", "n_users", "Rec@10", "Rec@20", "MAP", "seconds"]
    top_rows = [line.split("\t") for line in lines if line.startswith("TOP\t")]
    assert [r[1] for r in top_rows] == ["0", "1", "mean"]
    per = [float(r[3]) for r in top_rows[:2]]
    assert float(top_rows[2][3]) == pytest.approx(np.mean(per), abs=1e-4)
    for row in report.rows:
        assert 0 <= row["Rec@10"] <= row["Rec@20"] <= 1 and 0 <= row["MAP"] <= 1


def test_experiment_single_repeat_on_loaded_dataset(small_synth_dir):
    ds = load_dataset(small_synth_dir)
    report = run_experiment(ds, ["TOP", "BPR-MF"], TrainConfig(d=8, epochs=1), ks=(10,))
    assert report.models() == ["TOP", "BPR-MF"]
    assert "repeat" in report.to_tsv() and "\tmean\t" in report.to_tsv()
    with pytest.raises(ContractError):
        run_experiment(ds, ["TOP"], repeats=2)
    with pytest.raises(ContractError):
        run_experiment(ds, ["SR-GNN"])


def test_eval_report_mean():
    rep = EvalReport(ks=(10,), seed=0, rows=[
        {"model": "X", "repeat": 0, "n_users": 5, "Rec@10": 0.2, "MAP": 0.1, "seconds": 1.0},
        {"model": "X", "repeat": 1, "n_users": 5, "Rec@10": 0.4, "MAP": 0.3, "seconds": 1.0},
    ])
    assert rep.mean("X") == pytest.approx({"Rec@10": 0.3, "MAP": 0.2})
