import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbirthmark import ConfigError, ExperimentConfig, ensemble_average, run
from qbirthmark.cli import main
from qbirthmark.experiments import KINDS, SCHEMAS, parse_seeds, ratio_of_means


def test_every_kind_has_a_schema():
    assert set(KINDS) == set(SCHEMAS)


def test_ensemble_average_examples():
    e = ensemble_average([1.0, 2.0, 3.0])
    assert e.mean == 2.0 and e.stderr == pytest.approx(1 / math.sqrt(3))
    one = ensemble_average([4.0])
    assert (one.mean, one.stderr, one.single) == (4.0, 0.0, True)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.randoms())
def test_ensemble_average_order_invariant(values, rnd):
    ids = list(range(len(values)))
    pairs = list(zip(ids, values))
    rnd.shuffle(pairs)
    a = ensemble_average(values, ids)
    b = ensemble_average([v for _, v in pairs], [i for i, _ in pairs])
    assert a == b
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert ensemble_average(values) == ensemble_average(shuffled)


def test_ratio_of_means_delta_method():
    rng = np.random.default_rng(0)
    x = rng.normal(10, 1, 4000)
    y = rng.normal(5, 0.5, 4000)
    r = ratio_of_means(x, y)
    assert r.mean == pytest.approx(2.0, rel=0.01)
    # bootstrap oracle for the standard error
    idx = rng.integers(0, 4000, (300, 4000))
    boot = x[idx].mean(axis=1) / y[idx].mean(axis=1)
    assert r.stderr == pytest.approx(boot.std(), rel=0.2)


def test_parse_seeds():
    assert parse_seeds("0:3, 7") == (0, 1, 2, 7)
    assert parse_seeds([5, 1]) == (1, 5)
    for bad in ("", "3:3", "a", "1,1", "-1"):
        with pytest.raises(ConfigError):
            parse_seeds(bad)


def test_config_validation_names_key():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig("model-a-sweep", {"n_c": 500}, "0")
    assert info.value.key == "n_c"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig("goe-factor", {"size": 3}, "0")
    assert info.value.key == "size"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig("goe-factor", {}, [])
    assert info.value.key == "seeds"
    with pytest.raises(ConfigError):
        ExperimentConfig("not-a-kind", {}, "0")
    with pytest.raises(ConfigError) as info:
        ExperimentConfig("stadium", {"sigma": 0.2}, "0")
    assert info.value.key == "stadium"


def test_ini_round_trip():
    cfg = ExperimentConfig("model-b-sweep", {"lambdas": "0.05, 0.1", "n_beta": "300"}, "0:4", "out/b")
    text = cfg.to_text()
    back = ExperimentConfig.from_text(text)
    assert back == cfg
    assert back.parameters["lambdas"] == (0.05, 0.1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text.replace("n_beta", "n_gamma"))


def test_overrides_win():
    cfg = ExperimentConfig("goe-factor", {"n": 50}, "0:2", "a")
    back = ExperimentConfig.from_text(cfg.to_text(), {"n": "80", "seeds": "5", "outputs": "b"})
    assert back.parameters["n"] == 80 and back.seeds == (5,) and back.outputs == "b"


def small_configs(tmp_path):
    return [
        ExperimentConfig("goe-factor", {"n": 60, "pairs": 5}, "0:3", tmp_path / "goe"),
        ExperimentConfig("gue-factor", {"n": 60, "pairs": 5}, "0:2", tmp_path / "gue"),
        ExperimentConfig("model-a-sweep", {"n_alpha": 20, "n_betas": "40,80"}, "0:2", tmp_path / "a"),
        ExperimentConfig("model-b-sweep", {"n_alpha": 20, "n_beta": 60}, "0:2", tmp_path / "b"),
        ExperimentConfig("saturation", {"n_alpha": 20, "n_beta": 60, "points": 120}, "0", tmp_path / "s"),
        ExperimentConfig("spectral-characterization", {"n": 200}, "0:2", tmp_path / "sp"),
        ExperimentConfig("qb-prediction", {"n_alpha": 30, "n_beta": 90, "taus": "2, 5, 1e6",
                                           "references": 2}, "0", tmp_path / "qb"),
        ExperimentConfig("stadium", {"t_total": 0.004, "launches": "center_57", "nx": 512, "ny": 256,
                                     "snapshot_times": "0.002"}, "0", tmp_path / "st"),
    ]


def test_every_kind_runs_and_is_deterministic(tmp_path):
    for cfg in small_configs(tmp_path):
        first = run(cfg)
        files = {k: (first.out / k).read_bytes() for k in first.manifest["outputs"]}
        assert any(k.endswith(".csv") for k in files)
        second = run(cfg)
        assert second.manifest["outputs"] == first.manifest["outputs"]
        for k, data in files.items():
            assert (second.out / k).read_bytes() == data
        manifest = json.loads((first.out / "manifest.json").read_text())
        assert ExperimentConfig.from_dict(manifest["config"]) == cfg
        assert set(manifest["timings"]) >= {"compute_s", "total_s"}
        assert manifest["version"]


def test_sweep_tables(tmp_path):
    cfg = ExperimentConfig("model-b-sweep", {"n_alpha": 30, "n_beta": 90}, "0:3", tmp_path)
    res = run(cfg)
    lines = (tmp_path / "aggregate.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
    lams = [row["lambda"] for row in res.summary["rows"]]
    assert lams == [0.05, 0.1, 0.2, 1.0]


def test_qb_rows_outside_window_are_marked(tmp_path):
    cfg = ExperimentConfig("qb-prediction", {"n_alpha": 30, "n_beta": 90, "taus": "1e6",
                                             "references": 1}, "0", tmp_path)
    run(cfg)
    assert "outside-window" in (tmp_path / "realizations.csv").read_text()


def test_abort_goes_to_quarantine(tmp_path, monkeypatch):
    from qbirthmark import experiments

    def boom(cfg, out, results):
        (out / "partial.csv").write_text("x\r\n")
        raise RuntimeError("disk full")

    monkeypatch.setattr(experiments, "_emit_factor", boom)
    cfg = ExperimentConfig("goe-factor", {"n": 20, "pairs": 2}, "0", tmp_path)
    with pytest.raises(RuntimeError):
        run(cfg)
    q = tmp_path / "quarantine"
    assert (q / "partial.csv").exists()
    assert json.loads((q / "abort.json").read_text())["message"] == "disk full"
    assert not (tmp_path / "manifest.json").exists()


def test_parallel_matches_serial(tmp_path):
    cfg = ExperimentConfig("model-a-sweep", {"n_alpha": 20, "n_betas": "40"}, "0:4", tmp_path / "s")
    a = run(cfg, jobs=1)
    b = run(cfg.replace(outputs=str(tmp_path / "p")), jobs=2)
    assert (a.out / "aggregate.csv").read_bytes() == (b.out / "aggregate.csv").read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["model-b-sweep", "--n-alpha", "20", "--n-beta", "40", "--seed", "0:2",
                 "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert len(summary["rows"]) == 4
    assert main(["model-b-sweep", "--seed", "", "--out", str(out)]) == 2
    assert "seeds" in capsys.readouterr().err
    assert main(["model-a-sweep", "--n-c", "0", "--out", str(out)]) == 2
    cfg = tmp_path / "e.ini"
    cfg.write_text(ExperimentConfig("goe-factor", {"n": 30, "pairs": 3}, "0", out).to_text())
    assert main(["run", str(cfg), "-q"]) == 0
    assert main(["gue-factor", "--config", str(cfg)]) == 2


def test_cli_numerical_failure_exit_code(tmp_path, monkeypatch):
    from qbirthmark import experiments
    from qbirthmark.errors import SolverError

    def fail(*a, **k):
        raise SolverError("no convergence", residual=1.0)

    monkeypatch.setattr(experiments, "eigensolve", fail)
    assert main(["goe-factor", "--n", "10", "--out", str(tmp_path)]) == 3


def test_numpy_backend_flag(tmp_path):
    code = "import qbirthmark, sys; sys.stdout.write(qbirthmark.BACKEND)"
    import os
    env = dict(os.environ, QBIRTHMARK_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout == "numpy"
