import json

import pytest

from cfx.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["gen-data", "--kind", "two_moons", "--n", "200", "--seed", "1", "--out", "d.csv"]) == 0
    assert main(["train-target", "--data", "d.csv", "--arch", "8,8", "--epochs", "40",
                 "--out", "t.json"]) == 0
    return tmp_path


def test_attack_eval_pipeline(workdir, capsys):
    assert main(["attack", "--target", "t.json", "--data", "d.csv", "--kind", "cca", "--n", "40",
                 "--arch", "6", "--epochs", "20", "--out", "s.json"]) == 0
    assert main(["attack", "--target", "t.json", "--data", "d.csv", "--kind", "polytope",
                 "--n", "40", "--out", "p.json"]) == 0
    capsys.readouterr()
    assert main(["eval", "--target", "t.json", "--surrogate", "s.json", "--data", "d.csv",
                 "--uniform-size", "500", "--bins", "10"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["fidelity_uniform"] <= 1 and sum(out["histogram"]) == 500
    assert main(["eval", "--target", "t.json", "--surrogate", "p.json", "--uniform-size", "200"]) == 0


def test_attack_defaults_to_cca_at_half():
    from cfx.cli import build_parser
    args = build_parser().parse_args(["attack", "--target", "t", "--data", "d", "--out", "o"])
    assert args.kind == "cca" and args.k == 0.5


def test_eval_missing_model_exits_2(workdir):
    assert main(["eval", "--target", "t.json", "--surrogate", "missing.json"]) == 2


def test_unknown_subcommand_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"run": {"nope": 1}}')
    assert main(["run", "--config", str(cfg)]) == 1
    cfg.write_text("{not json")
    assert main(["theorem1", "--config", str(cfg)]) == 1
    cfg.write_text('{"schedule": {"T": 0, "N": 1}}')
    assert main(["run", "--config", str(cfg)]) == 1


def test_config_section_defaults_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"theorem2": {"n": [5], "trials": 10}}))
    assert main(["theorem2", "--config", str(cfg)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].split()[0] == "5"
    assert main(["theorem2", "--config", str(cfg), "--n", "5,20"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 3


def test_slope_table_subcommand(capsys):
    assert main(["theorem1", "--dims", "2,3", "--n", "50,100,200,400", "--trials", "2",
                 "--mc-samples", "5000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["d", "slope", "required", "pass"]
    assert [l.split()[0] for l in lines[1:]] == ["2", "3"]


def test_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "dataset": {"kind": "two_moons", "n": 100}, "target_arch": [5], "surrogate_archs": [[4]],
        "attacks": ["baseline", "cca"], "schedule": {"T": 1, "N": 10}, "ensemble_size": 1,
        "target_training": {"epochs": 2}, "surrogate_training": {"epochs": 2}, "uniform_size": 100,
        "output_dir": str(tmp_path / "out")}))
    assert main(["run", "--config", str(cfg), "--ensemble-size", "2"]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "out" / "results.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["rows"] == 4


def test_lipschitz_and_clamp_diag(workdir, capsys):
    assert main(["lipschitz", "--model", "t.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["layer_spectral_norms"]) == 3
    assert out["probability_lipschitz"] == pytest.approx(0.25 * out["logit_lipschitz"])
    assert main(["attack", "--target", "t.json", "--data", "d.csv", "--n", "40", "--arch", "6",
                 "--epochs", "20", "--out", "s.json"]) == 0
    capsys.readouterr()
    assert main(["clamp-diag", "--target", "t.json", "--surrogate", "s.json", "--data", "d.csv",
                 "--samples", "50"]) == 0
    assert json.loads(capsys.readouterr().out)["holds"] is True
