import json

import numpy as np
import pytest

from lgmor.cli import build_parser, main
from lgmor.errors import InvalidArgument
from lgmor.experiments import (ExperimentConfig, ExperimentError, evaluate, offline,
                               reference_solutions, run_experiment, run_online, timing_harness)

SMALL = dict(nx=12, ny=12, ncx=3, ncy=3, L=3, n_max=3, n_train=8, n_test=3, tol=1e-10)


def test_config_roundtrip_and_validation():
    c = ExperimentConfig(**SMALL)
    assert ExperimentConfig.from_json(c.to_json()) == c
    with pytest.raises(InvalidArgument):
        ExperimentConfig.from_dict(dict(bogus=1))
    with pytest.raises(InvalidArgument):
        ExperimentConfig(nx=0)
    with pytest.raises(InvalidArgument):
        ExperimentConfig(betas=(1e-2, -1.0))
    with pytest.raises(InvalidArgument):
        ExperimentConfig(experiment="unknown")


def test_offline_and_evaluate():
    c = ExperimentConfig(**SMALL)
    off = offline(c)
    assert off.greedy.spaces.N == 3
    assert off.model_at(2).size == 10
    mus = off.scenario.sample(3, 5)
    refs = reference_solutions(off.scenario, mus)
    err, reds = evaluate(off.scenario, off.model, mus, refs, off.local)
    assert len(reds) == 3
    assert {"e2_u", "e2_f", "e2_lam", "eH_u", "J_mean", "e2_u_local"} <= set(err)
    assert 0.0 <= err["e2_u_local"] < 1.0
    t = timing_harness(off.model, off.scenario, mus, 1, 2)
    assert t["reduced_size"] == off.model.size and t["speedup"] > 0


def test_run_experiment_writes_artifacts(tmp_path):
    c = ExperimentConfig(**SMALL, output=str(tmp_path / "run"), L_list=(2, 3),
                         coarse_list=(2, 3))
    rep = run_experiment(c, studies=("N", "L", "H"), bench=True)
    for key in ("bundle", "selection_log", "eigenvalues", "errors", "timing", "u_mean",
                "L_study", "H_study", "N_study"):
        assert key in rep.paths, key
    assert len(rep.tables["L_study"]) == 2
    timing = json.loads((tmp_path / "run" / "timing.json").read_text())
    assert "speedup" in timing
    sols, mus, model = run_online(tmp_path / "run" / "bundle", n_test=2)
    assert len(sols) == 2 and model.size == 5 * model.meta["N"]
    assert np.isfinite(sols[0].J)


def test_failure_writes_error_record(tmp_path):
    c = ExperimentConfig(**dict(SMALL, ncx=5), output=str(tmp_path / "bad"))
    with pytest.raises(ExperimentError) as err:
        run_experiment(c)
    rec = json.loads((tmp_path / "bad" / "error.json").read_text())
    assert rec["stage"] == err.value.stage == "offline"


def _flags(out):
    return ["--nx", "12", "--ny", "12", "--ncx", "3", "--ncy", "3", "--L", "3", "--n-max", "2",
            "--n-train", "6", "--n-test", "2", "--output", str(out)]


def test_cli_offline_online_study_bench(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["offline", *_flags(out)]) == 0
    assert (out / "bundle" / "manifest.json").exists()
    assert main(["online", str(out / "bundle"), "--out", str(out)]) == 0
    assert (out / "online_solutions.csv").exists()
    assert main(["study", "--study", "beta", *_flags(tmp_path / "st"), "--betas", "1e-2",
                 "1e-3"]) == 0
    assert (tmp_path / "st" / "beta_study.csv").exists()
    assert main(["bench", *_flags(tmp_path / "be")]) == 0
    assert "speedup" in capsys.readouterr().out


def test_cli_config_file_env_and_errors(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(SMALL, n_max=1)))
    monkeypatch.setenv("LGMOR_OUTPUT", str(tmp_path / "env"))
    assert main(["offline", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "bundle").exists()
    assert main(["offline", "--config", str(cfg), "--ncx", "5"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        build_parser().parse_args(["study"])
