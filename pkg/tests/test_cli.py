import csv
import json
import os

import numpy as np
import pytest

from twostream_ecg.cli import main

SEVEN = [{"label": f"C{i}", "mean_rr_s": 0.6 + 0.1 * i} for i in range(7)]


def run(*argv):
    return main([str(a) for a in argv])


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tree(path):
    return {p: (path / p).read_bytes() for p in sorted(os.listdir(path))}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small morphology dataset with a trained identified stream."""
    root = tmp_path_factory.mktemp("cli")
    data, out = root / "data", root / "run"
    cfg = write_config(root / "cfg.json", data_dir=str(data), out_dir=str(out), seed=1, epochs=60,
                       synthesis={"preset": "morph4", "records_per_class": 8})
    assert run("generate", "--config", cfg) == 0
    assert run("preprocess", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 0
    return root, data, out, cfg


def test_generate_seven_classes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        cfg = write_config(tmp_path / "g.json", data_dir=str(d), seed=7,
                           synthesis={"classes": SEVEN, "records_per_class": 100})
        assert run("generate", "--config", cfg) == 0
    rows = read_csv(a / "manifest.csv")
    assert len(rows) == 700 and len({r["record"] for r in rows}) == 700
    assert sorted({r["label"] for r in rows}) == [c["label"] for c in SEVEN]
    assert all(sum(r["label"] == c["label"] for r in rows) == 100 for c in SEVEN)
    assert len(list(a.glob("*.hea"))) == 700 and len(list(a.glob("*.dat"))) == 700
    assert tree(a) == tree(b)


def test_unknown_config_key_no_side_effects(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "c.json", data_dir=str(tmp_path), out_dir=str(out), learning_rate=1)
    assert run("train", "--config", cfg) == 1
    assert not out.exists()


def test_bad_values_rejected(tmp_path, capsys):
    d = tmp_path / "d"
    assert run("generate", "--data-dir", d, "--config",
               write_config(tmp_path / "c.json", synthesis={"preset": "nope"})) == 1
    assert run("generate", "--config", write_config(tmp_path / "c2.json", data_dir=str(d),
                                                     synthesis={"preset": "rr", "records_per_class": 0})) == 1
    assert run("train", "--data-dir", tmp_path, "--out-dir", d) == 1  # no manifest
    assert not d.exists()
    with pytest.raises(SystemExit) as ei:
        run("train", "--method", "sideways")
    assert ei.value.code == 1


def test_fusion_requires_checkpoints(workspace, tmp_path):
    _, data, _, _ = workspace
    out = tmp_path / "fx"
    assert run("train", "--data-dir", data, "--out-dir", out, "--model", "fusion_fc") == 1
    assert run("train", "--data-dir", data, "--out-dir", out, "--model", "fusion_avg",
               "--identified-checkpoint", "x.ckpt") == 1
    assert not out.exists()


def test_missing_record_listed(tmp_path, capsys):
    d = tmp_path / "d"
    assert run("generate", "--config", write_config(tmp_path / "c.json", data_dir=str(d),
                                                     synthesis={"preset": "rr", "records_per_class": 2})) == 0
    (d / "hr60_0001.hea").unlink()
    assert run("preprocess", "--data-dir", d) == 2
    assert "hr60_0001" in capsys.readouterr().err


def test_history_and_split(workspace):
    _, data, out, _ = workspace
    hist = read_csv(out / "history.csv")
    assert len(hist) == 60 and list(hist[0]) == ["epoch", "lr", "train_loss", "train_acc", "valid_loss", "valid_acc"]
    assert float(hist[0]["lr"]) == 0.01 and float(hist[20]["lr"]) == pytest.approx(0.001)
    split = json.loads((out / "split.json").read_text())
    assert not set(split["train"]) & set(split["test"]) and not set(split["train"]) & set(split["valid"])
    assert (out / "identified.ckpt").is_file()


def test_training_deterministic(workspace, tmp_path):
    _, data, out, _ = workspace
    again = tmp_path / "again"
    assert run("train", "--data-dir", data, "--out-dir", again, "--seed", 1, "--epochs", 60) == 0
    assert (again / "history.csv").read_bytes() == (out / "history.csv").read_bytes()
    assert (again / "identified.ckpt").read_bytes() == (out / "identified.ckpt").read_bytes()


def test_evaluate_train_and_test(workspace, tmp_path):
    _, data, out, _ = workspace
    ck = out / "identified.ckpt"
    ev_train, ev_test = tmp_path / "tr", tmp_path / "te"
    assert run("evaluate", "--data-dir", data, "--out-dir", ev_train, "--checkpoint", ck, "--split", "train") == 0
    assert json.loads((ev_train / "report.json").read_text())["accuracy"] == 1.0
    assert run("evaluate", "--data-dir", data, "--out-dir", ev_test, "--checkpoint", ck) == 0
    rep = json.loads((ev_test / "report.json").read_text())
    split = json.loads((out / "split.json").read_text())
    preds = read_csv(ev_test / "predictions.csv")
    assert {p["item"] for p in preds} == set(split["test"])
    for c in rep["classes"]:
        if c["f1"] is not None:
            assert abs(c["f1"] - 2 * c["ppv"] * c["sen"] / (c["ppv"] + c["sen"])) < 1e-6
    rows = read_csv(ev_test / "report.csv")
    assert [r["class"] for r in rows][-2:] == ["average", "overall"]


def test_predict_matches_evaluate(workspace, tmp_path, capsys):
    _, data, out, _ = workspace
    ck = out / "identified.ckpt"
    ev = tmp_path / "ev"
    assert run("evaluate", "--data-dir", data, "--out-dir", ev, "--checkpoint", ck) == 0
    pred = read_csv(ev / "predictions.csv")[0]
    capsys.readouterr()
    lines = []
    for _ in range(2):
        assert run("predict", "--checkpoint", ck, data / pred["item"]) == 0
        lines.append(capsys.readouterr().out)
    assert lines[0] == lines[1]
    obj = json.loads(lines[0])
    assert obj["record"] == pred["item"] and obj["class_name"] == pred["predicted"]
    assert sum(obj["probs"].values()) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose([obj["probs"][k[2:]] for k in pred if k.startswith("p_")],
                       [float(v) for k, v in pred.items() if k.startswith("p_")], atol=1e-12)


def test_predict_missing_record(workspace, tmp_path):
    _, _, out, _ = workspace
    assert run("predict", "--checkpoint", out / "identified.ckpt", tmp_path / "ghost") == 2


def test_full_fusion_pipeline(workspace, tmp_path, capsys):
    _, data, out, _ = workspace
    tm = tmp_path / "tm"
    assert run("train", "--data-dir", data, "--out-dir", tm, "--model", "temporal", "--seed", 1, "--epochs", 3) == 0
    for kind in ("fusion_fc", "fusion_avg"):
        fo = tmp_path / kind
        assert run("train", "--data-dir", data, "--out-dir", fo, "--model", kind, "--seed", 1, "--epochs", 3,
                   "--identified-checkpoint", out / "identified.ckpt",
                   "--temporal-checkpoint", tm / "temporal.ckpt") == 0
        ev = tmp_path / f"ev_{kind}"
        assert run("evaluate", "--data-dir", data, "--out-dir", ev, "--checkpoint", fo / f"{kind}.ckpt") == 0
        assert (ev / "confusion.csv").is_file()
    # a stream trained on a different split cannot be fused
    other = tmp_path / "other"
    assert run("train", "--data-dir", data, "--out-dir", other, "--model", "temporal", "--seed", 2,
               "--epochs", 1) == 0
    assert run("train", "--data-dir", data, "--out-dir", tmp_path / "bad", "--model", "fusion_fc", "--seed", 1,
               "--identified-checkpoint", out / "identified.ckpt",
               "--temporal-checkpoint", other / "temporal.ckpt") != 0
