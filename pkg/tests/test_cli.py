import pytest

from trainor.checkpoint import load_checkpoint
from trainor.cli import build_parser, main, train_config_from_args

SYNTH = "n_users=120\nn_home_pois=40\nn_out_pois=24\nk_true=3\nn_home_clusters=3\n"
TRAIN = ["--d", "8", "--k-topics", "3", "--epochs", "2", "--batch-size", "32", "--n-neg", "2"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.cfg").write_text(SYNTH)
    assert main(["gen-data", "--config", str(root / "synth.cfg"), "--out", str(root / "data"), "--seed", "3"]) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "m.ckpt"),
                 "--log", str(root / "train.log")] + TRAIN) == 0
    return root


def test_train_writes_checkpoint_and_log(workdir, capsys):
    ckpt = load_checkpoint(workdir / "m.ckpt")
    assert ckpt.config.d == 8 and ckpt.config.K == 3 and ckpt.epoch == 2
    log = (workdir / "train.log").read_text().splitlines()
    assert log[0] == "epoch\tL\tL_N\tL_P\tL_T\tval_Rec@10\tseconds"
    assert [row.split("\t")[0] for row in log[1:]] == ["1", "2"]


def test_config_file_then_flags(tmp_path):
    (tmp_path / "t.cfg").write_text("d=32\nlr=0.05\n# comment\nepochs=7\n")
    args = build_parser().parse_args(["train", "--data", "x", "--out", "y", "--config", str(tmp_path / "t.cfg"),
                                      "--d", "16", "--ablate-geoconv"])
    cfg = train_config_from_args(args)
    assert (cfg.d, cfg.lr, cfg.epochs, cfg.disable_geoconv) == (16, 0.05, 7, True)


def test_evaluate_prints_report(workdir, capsys):
    out = workdir / "report.tsv"
    assert main(["evaluate", "--ckpt", str(workdir / "m.ckpt"), "--data", str(workdir / "data"),
                 "--k", "5,10", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("model\trepeat\tn_users\tRec@5\tRec@10\tMAP")
    assert [line.split("\t")[0] for line in lines[1:]] == ["TOP", "TrainOR"]
    assert capsys.readouterr().out == out.read_text()


def test_recommend(workdir, capsys):
    users = workdir / "new_users.tsv"
    users.write_text("alice\t10\th0001\nalice\t5\th0002\nbob\t1\th0003\nbob\t2\tunknown\n")
    assert main(["recommend", "--ckpt", str(workdir / "m.ckpt"), "--user-checkins", str(users), "--k", "4"]) == 0
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
    assert rows[0] == ["user", "rank", "poi_id", "score"]
    assert [r[0] for r in rows[1:]] == ["alice"] * 4 + ["bob"] * 4
    scores = [float(r[3]) for r in rows[1:5]]
    assert scores == sorted(scores, reverse=True)
    assert all(r[2].startswith("o") for r in rows[1:])


def test_dump_intentions(workdir, capsys):
    assert main(["dump-intentions", "--ckpt", str(workdir / "m.ckpt"), "--top", "2",
                 "--data", str(workdir / "data")]) == 0
    out = capsys.readouterr().out.splitlines()
    rows = out[2:5]
    for row in rows:
        assert abs(sum(float(x) for x in row.split("\t")[1:]) - 1.0) < 1e-4
    assert any(line.startswith("# per-user intention weights") for line in out)


def test_experiment_subcommand(workdir, capsys):
    assert main(["experiment", "--data", str(workdir / "data"), "--models", "TOP,TrainOR-IC",
                 "--k", "10"] + TRAIN[:2] + ["--epochs", "1"]) == 0
    out = capsys.readouterr().out
    assert "TOP\tmean" in out and "TrainOR-IC\tmean" in out


def test_gradcheck_subcommand(capsys):
    assert main(["gradcheck", "--scale", "tiny"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "runtime" in out


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "m.ckpt")]) == 2
    (tmp_path / "bad.ckpt").write_bytes(b"TRNR\x01")
    assert main(["dump-intentions", "--ckpt", str(tmp_path / "bad.ckpt")]) == 2
    assert "trainor: error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["evaluate", "--ckpt", "x", "--data", "y", "--k", "0"])
