import json

import pytest

from shiftcast.cli import main
from shiftcast.tables import FEATURE_COLUMNS, write_csv


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--out", str(root / "gen"), "--replications", "2"]) == 0
    assert main(["featurize", "--spi", str(root / "gen/spi.csv"), "--aoi", str(root / "gen/aoi.csv"),
                 "--out", str(root / "features.csv")]) == 0
    return root


def read(p):
    return p.read_text()


def test_generate_outputs(small):
    gen = small / "gen"
    assert len(read(gen / "aoi.csv").splitlines()) == 1 + 6 * 33 * 2
    assert len(read(gen / "spi.csv").splitlines()) == 1 + 2 * 6 * 33 * 2
    assert read(gen / "truth.csv").splitlines()[0].endswith("g_x,g_y,g_ang")
    manifest = json.loads(read(gen / "manifest.json"))
    assert manifest["counts"]["placements"] == 396
    echo = json.loads(read(gen / "generate.config.json"))
    assert echo["command"] == "generate" and echo["args"]["seed"] == 0


def test_featurize_writes_diagnostics(small):
    diag = json.loads(read(small / "features.csv.join.json"))
    assert diag == {"rows": 396, "orphan_placements": [], "orphan_deposits": []}


def test_train_predict_round_trip(small, capsys):
    feats, model = small / "features.csv", small / "model.json"
    assert main(["train", "--features", str(feats), "--spec", "C0402", "--target", "y", "--out", str(model)]) == 0
    out = capsys.readouterr().out
    assert "target=shift_y_ratio n=66" in out and "train_rmse=" in out
    doc = json.loads(read(model))
    assert doc["feature_names"] == [f"x{i}" for i in range(1, 10)] and doc["converged"] is True
    assert main(["predict", "--model", str(model), "--features", str(feats), "--out", str(small / "p.csv")]) == 0
    lines = read(small / "p.csv").splitlines()
    assert lines[0] == "board_id,component_id,setting_id,spec_name,predicted_shift_y_ratio"
    assert len(lines) == 1 + 396


def test_modeling_needs_spec_choice_when_types_are_mixed(small, capsys):
    assert main(["train", "--features", str(small / "features.csv"), "--out", str(small / "m.json")]) == 2
    assert "--spec" in capsys.readouterr().err


def test_pooled_training(small):
    assert main(["train", "--features", str(small / "features.csv"), "--spec", "all", "--target", "angle",
                 "--kernel", "linear", "--c", "1", "--epsilon", "0.031", "--out", str(small / "pooled.json")]) == 0


def test_linear_rejects_gamma(small, capsys):
    rc = main(["train", "--features", str(small / "features.csv"), "--spec", "C0402", "--kernel", "linear",
               "--gamma", "1", "--out", str(small / "x.json")])
    assert rc == 2 and "gamma" in capsys.readouterr().err


def test_not_converged_is_flagged(small, capsys):
    path = small / "nc.json"
    rc = main(["train", "--features", str(small / "features.csv"), "--spec", "C0402", "--kernel", "linear",
               "--c", "100", "--epsilon", "0", "--kkt-tol", "1e-12", "--max-epochs", "1", "--out", str(path)])
    assert rc == 0
    assert "converged=false" in capsys.readouterr().err
    assert json.loads(read(path))["converged"] is False


def test_predict_rejects_missing_features(small, capsys):
    bad = small / "bad.csv"
    write_csv(bad, ["board_id", "component_id", "setting_id", "spec_name", "x1", "x2"], [("B", "C", 1, "C0402", 0, 0)])
    rc = main(["predict", "--model", str(small / "model.json"), "--features", str(bad), "--out", str(small / "q.csv")])
    err = capsys.readouterr().err
    assert rc == 1 and "x9" in err and "expects features" in err


def test_predict_empty_input(small):
    empty = small / "empty.csv"
    write_csv(empty, FEATURE_COLUMNS, [])
    assert main(["predict", "--model", str(small / "model.json"), "--features", str(empty),
                 "--out", str(small / "e.csv")]) == 0
    assert read(small / "e.csv").count("\n") == 1


def test_summarize_table_shape(small):
    out = small / "summary.csv"
    assert main(["summarize", "--features", str(small / "features.csv"), "--out", str(out)]) == 0
    lines = read(out).splitlines()
    assert lines[0].startswith("setting_id,count,shift_x_avg_um,shift_x_std_um,shift_x_min_um,shift_x_max_um")
    assert len(lines) == 1 + 33


def test_sweep_k_usage_error(small, capsys):
    rc = main(["sweep-k", "--features", str(small / "features.csv"), "--spec", "C0402",
               "--k-min", "5", "--k-max", "4", "--out", str(small / "k.csv")])
    assert rc == 2 and "k-min" in capsys.readouterr().err


def test_evaluate_and_tune(small, capsys):
    feats = str(small / "features.csv")
    assert main(["evaluate", "--features", feats, "--spec", "C0402", "--k", "3", "--targets", "x",
                 "--model", "lin=linear,1,0.031", "--model", "rbf=rbf,0.13,0.00097,1",
                 "--out", str(small / "eval.csv")]) == 0
    assert "Shift X (ratio)" in capsys.readouterr().out
    assert len(read(small / "eval.csv").splitlines()) == 3
    assert main(["tune", "--features", feats, "--spec", "C0402", "--k", "3", "--cs", "0.1,1",
                 "--epsilons", "0.01", "--gammas", "1", "--out", str(small / "tune.csv")]) == 0
    best = json.loads(read(small / "tune.csv.best.json"))
    assert best["kernel"]["variant"] == "rbf" and best["c"] in (0.1, 1.0)


def test_bad_model_spec_is_usage_error(small):
    with pytest.raises(SystemExit) as info:
        main(["evaluate", "--features", str(small / "features.csv"), "--model", "nope", "--out", "x.csv"])
    assert info.value.code == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    args = ["generate", "--replications", "1", "--spec", "C0402", "--out"]
    assert main(args + [str(tmp_path / "a")]) == 0
    monkeypatch.setenv("SHIFTCAST_SEED", "5")
    assert main(args + [str(tmp_path / "b")]) == 0
    assert read(tmp_path / "a/aoi.csv") != read(tmp_path / "b/aoi.csv")
    assert json.loads(read(tmp_path / "b/generate.config.json"))["args"]["seed"] == 5
    monkeypatch.setenv("SHIFTCAST_SEED", "abc")
    assert main(args + [str(tmp_path / "c")]) == 2


def test_missing_input_file(tmp_path, capsys):
    rc = main(["summarize", "--features", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "s.csv")])
    assert rc == 1 and capsys.readouterr().err


def test_hidden_oracle_command(small, capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "oracle-solve" not in capsys.readouterr().out
    assert main(["oracle-solve", "--features", str(small / "features.csv"), "--spec", "C0402",
                 "--limit", "6", "--gamma", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["betas"]) == 6
