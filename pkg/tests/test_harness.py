import json
import os

import numpy as np
import pytest

from mflab.harness import (
    EXPERIMENTS,
    ArtifactMismatchError,
    ConfigError,
    config_hash,
    emit_plots,
    load_config,
    parse_config,
    read_metrics,
    run_experiment,
    verdicts_from_metrics,
)
from mflab.harness.cli import main
from mflab.harness.runner import ExperimentReport, artifact_hash
from mflab.transport import ResourceCapError

TP = 2 * np.pi

# small versions of every experiment, each well under a second
TINY = {
    "klimontovich_equivalence": dict(n_list=[8], t_end=0.2, dt=1e-2, snapshots=4),
    "dobrushin": dict(n_list=[8], trials=3, t_end=0.2, dt=1e-2, snapshots=4),
    "fournier_guillin": dict(n_list=[16, 64, 256], trials=5),
    "quantum_meanfield": dict(grid={"M": 16, "L": TP}, n_list=[2, 3], t_end=0.1, dt=1e-2),
    "klimontovich_quantum": dict(grid={"M": 16, "L": TP}, trials=2, t_end=0.05, dt=1e-3),
    "wigner_husimi_suite": dict(trials=2, options={"eps_list": [0.5]}),
    "pseudo_distance_suite": dict(trials=1, options={"pinned_eps": [0.5], "atoms": 8,
                                                     "pinned_points": [[0.0, 0.0]]}),
    "joint_limit": dict(trials=4, t_end=0.1, grid={"M": 32, "L": 2 * TP},
                        options={"batches": 2, "classical_atoms": 16}),
}


def tiny(exp, **kw):
    raw = {"schema": 1, "experiment": exp, **TINY[exp]}
    raw.update(kw)
    return raw


def _write_cfg(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def test_every_experiment_has_a_tiny_config():
    assert set(TINY) == set(EXPERIMENTS)


@pytest.mark.parametrize("exp", sorted(TINY))
def test_tiny_runs_pass_and_recompute_from_metrics(exp, tmp_path):
    rep = run_experiment(parse_config(tiny(exp)), str(tmp_path))
    assert rep.passed, (rep.failures, rep.violations)
    for name in rep.artifacts:
        path = tmp_path / name
        assert path.exists()
        if name.endswith((".csv", ".dat", ".json")):
            assert artifact_hash(str(path)) == rep.config_hash
    v = verdicts_from_metrics(str(tmp_path / "metrics.csv"))
    assert v["consistent"] and v["passed"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and report["config_hash"] == rep.config_hash
    assert (tmp_path / "plots" / "plots.json").exists()


def test_dobrushin_with_zero_potential_passes():
    rep = run_experiment(parse_config(tiny("dobrushin", potential={"name": "zero"})), write=False)
    assert rep.passed


def test_metrics_are_byte_identical_across_runs_and_jobs(tmp_path):
    raw = tiny("dobrushin")
    a = run_experiment(parse_config(raw), str(tmp_path / "a"))
    b = run_experiment(parse_config(raw), str(tmp_path / "b"), jobs=2)
    assert a.metrics_csv() == b.metrics_csv()
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_seed_changes_results():
    a = run_experiment(parse_config(tiny("fournier_guillin")), write=False)
    b = run_experiment(parse_config(tiny("fournier_guillin", seed=7)), write=False)
    assert a.config_hash != b.config_hash
    assert a.metrics_csv() != b.metrics_csv()


def test_config_hash_ignores_output_dir_and_key_order():
    raw = tiny("dobrushin")
    h = config_hash(parse_config(raw))
    assert config_hash(parse_config({**raw, "output_dir": "elsewhere"})) == h
    assert config_hash(parse_config(dict(reversed(list(raw.items()))))) == h
    assert config_hash(parse_config({**raw, "trials": 4})) != h


@pytest.mark.parametrize("raw,match", [
    ({"schema": 1, "experiment": "dobrushin", "colour": 1}, "unknown config keys"),
    ({"schema": 2, "experiment": "dobrushin"}, "schema"),
    ({"schema": 1, "experiment": "vlasov_poisson"}, "unknown experiment"),
    ({"schema": 1, "experiment": "dobrushin", "options": {"nope": 1}}, "unknown options"),
    ({"schema": 1, "experiment": "dobrushin", "n_list": [8, 4]}, "increasing"),
    ({"schema": 1, "experiment": "dobrushin", "potential": {"name": "coulomb"}}, "unknown potential"),
    ({"schema": 1, "experiment": "dobrushin", "potential": {"name": "gaussian", "params": [1, 0]}}, "invalid potential"),
    ({"schema": 1, "experiment": "fournier_guillin", "trials": 4}, "5 trials"),
    ({"schema": 1, "experiment": "fournier_guillin", "d": 2}, "d >= 3"),
    ({"schema": 1, "experiment": "quantum_meanfield", "grid": {"M": 12, "L": 1.0}}, "power of two"),
    ({"schema": 1, "experiment": "dobrushin", "seed": -1}, "seed"),
    ({"schema": 1, "experiment": "dobrushin", "dt": 0}, "dt"),
])
def test_config_errors(raw, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(raw)


def test_memory_cap_is_checked_at_parse_time():
    with pytest.raises(ResourceCapError):
        parse_config(tiny("quantum_meanfield", options={"amplitude_cap": 100}))


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_numerical_failure_is_recorded_not_raised():
    # a coherent packet whose momentum the grid cannot resolve
    raw = tiny("pseudo_distance_suite", grid={"M": 16, "L": 16.0})
    rep = run_experiment(parse_config(raw), write=False)
    assert not rep.passed
    assert rep.failures and rep.failures[0].startswith("ValueError")


def test_emit_plots_with_no_metrics_warns(tmp_path):
    rep = ExperimentReport("dobrushin", {}, "0" * 64)
    assert emit_plots(rep, str(tmp_path)) == []
    assert rep.warnings and "no metrics" in rep.warnings[0]
    assert not (tmp_path / "plots").exists()
    assert not rep.passed


def test_plot_files_have_blocks_per_curve(tmp_path):
    rep = run_experiment(parse_config(tiny("fournier_guillin")), str(tmp_path))
    desc = json.loads((tmp_path / "plots" / "plots.json").read_text())
    fig = desc["figures"][0]
    text = (tmp_path / "plots" / fig["file"]).read_text()
    assert text.startswith(f"# config_hash={rep.config_hash}")
    assert len(text.strip().split("\n\n\n")) == len(fig["curves"])


def test_resume_refuses_other_config(tmp_path):
    run_experiment(parse_config(tiny("dobrushin")), str(tmp_path))
    run_experiment(parse_config(tiny("dobrushin")), str(tmp_path))
    with pytest.raises(ArtifactMismatchError):
        run_experiment(parse_config(tiny("dobrushin", seed=5)), str(tmp_path))


def test_cache_reuse_and_mismatch(tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    cache.mkdir()
    monkeypatch.setenv("MFLAB_CACHE", str(cache))
    raw = tiny("quantum_meanfield")
    fresh = run_experiment(parse_config(raw), write=False)
    assert any(n.endswith(".mfq") for n in os.listdir(cache))
    cached = run_experiment(parse_config(raw), write=False)
    assert cached.metrics_csv() == fresh.metrics_csv()
    # a checkpoint from another config under the same name is refused
    for n in os.listdir(cache):
        if n.endswith(".json"):
            meta = json.loads((cache / n).read_text())
            meta["config_hash"] = "f" * 64
            (cache / n).write_text(json.dumps(meta))
    with pytest.raises(ArtifactMismatchError):
        run_experiment(parse_config(raw), write=False)


def test_tampered_metrics_are_inconsistent(tmp_path):
    run_experiment(parse_config(tiny("dobrushin")), str(tmp_path))
    rows = read_metrics(str(tmp_path / "metrics.csv"))
    assert rows
    text = (tmp_path / "metrics.csv").read_text().replace(",true,true,", ",false,true,", 1)
    (tmp_path / "metrics.csv").write_text(text)
    assert not verdicts_from_metrics(str(tmp_path / "metrics.csv"))["consistent"]


def test_cli_list_and_validate(tmp_path, capsys):
    assert main(["list-experiments"]) == 0
    assert capsys.readouterr().out.split() == list(EXPERIMENTS)
    assert main(["validate", _write_cfg(tmp_path, tiny("dobrushin"))]) == 0
    assert capsys.readouterr().out.startswith("ok: dobrushin")


def test_cli_exit_codes(tmp_path, capsys):
    ok = _write_cfg(tmp_path, tiny("klimontovich_equivalence"), "ok.json")
    assert main(["run", ok, "--out", str(tmp_path / "ok")]) == 0
    assert "klimontovich_equivalence: PASS" in capsys.readouterr().out
    # a zero energy-drift budget cannot be met by a finite time step
    fail = _write_cfg(tmp_path, tiny("klimontovich_equivalence", dt=0.1,
                                      options={"energy_drift_tol": 0.0}), "fail.json")
    assert main(["run", fail, "--out", str(tmp_path / "fail")]) == 2
    assert "FAIL" in capsys.readouterr().out
    bad = _write_cfg(tmp_path, {"schema": 1, "experiment": "dobrushin", "colour": 1}, "bad.json")
    assert main(["run", bad, "--out", str(tmp_path / "bad")]) == 3
    assert main(["run", ok, "--out", str(tmp_path / "ok"), "--seed", "3"]) == 3
    assert main(["run", ok, "--out", str(tmp_path / "ok2"), "--jobs", "0"]) == 3
    cap = _write_cfg(tmp_path, tiny("quantum_meanfield", options={"amplitude_cap": 100}), "cap.json")
    assert main(["run", cap, "--out", str(tmp_path / "cap")]) == 4
    assert "resource cap" in capsys.readouterr().err


def test_cli_writes_to_config_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = _write_cfg(tmp_path, tiny("klimontovich_equivalence", output_dir="results"))
    assert main(["run", cfg]) == 0
    assert (tmp_path / "results" / "metrics.csv").exists()
