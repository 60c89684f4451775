import json
import os
import subprocess
import sys

import numpy as np
import pytest

from squeezeclock import cli
from squeezeclock._io import read_csv
from squeezeclock.cli import ExperimentSpec, SpecError, main, parse_spec, run_experiment, task_seed, validate_spec
from squeezeclock.protocol import default_schedule

FAST = {"l": 200, "pilot_runs": 1000}


def test_alpha_out_of_range():
    errs = validate_spec({"command": "simulate", "seed": 1, "alpha": 1.2})
    assert errs == ["alpha must lie in (0,1)"]


def test_all_violations_reported():
    errs = validate_spec("command=simulate N=101 alpha=1.5 foo=3")
    assert "alpha must lie in (0,1)" in errs
    assert any("N must be an even integer" in e for e in errs)
    assert "unknown key 'foo'" in errs
    assert "seed is required" in errs
    assert len(errs) == 4


def test_bad_types_and_grids():
    errs = validate_spec({"command": "sweep-N", "seed": "x", "N_grid": [], "protocols": ["magic"],
                          "gammaT_grid": "0.1,-0.2"})
    assert any(e.startswith("seed must be an integer") for e in errs)
    assert "N_grid must not be empty" in errs
    assert "gammaT_grid entries must be positive" in errs
    assert any(e.startswith("protocols entries") for e in errs)
    assert "command is required" in validate_spec("seed=1")
    assert validate_spec("{not json")[0].startswith("invalid JSON")


def test_minimal_spec_defaults():
    spec = validate_spec("command=simulate seed=7")
    assert isinstance(spec, ExperimentSpec)
    d = default_schedule(spec.N)
    sched = spec.schedule()
    assert (sched.kappa, sched.n, sched.omegas) == (d.kappa, d.n, d.omegas)
    r = spec.resolved()
    assert r["kappa"] == d.kappa and r["n"] == d.n and "out" not in r
    conv = spec.schedule(protocol="conventional")
    assert conv.n == 1 and conv.kappa == pytest.approx(np.sqrt(spec.N))


def test_json_and_overrides():
    raw = json.dumps({"command": "simulate", "seed": 3, "N": 400, "gammaT_grid": [0.1, 0.2]})
    spec = parse_spec(raw, {"N": 200, "gammaT": None})
    assert spec.N == 200 and spec.gammaT == 0.1 and spec.gammaT_grid == (0.1, 0.2)
    with pytest.raises(SpecError) as exc:
        parse_spec(raw, {"alpha": 2})
    assert exc.value.errors == ["alpha must lie in (0,1)"]


def test_task_seed_is_counter_based():
    assert task_seed(5, 3) == task_seed(5, 3)
    assert len({task_seed(5, i) for i in range(100)}) == 100
    assert task_seed(5, 0) != task_seed(6, 0)


def _run(tmp_path, name, **kw):
    spec = parse_spec({"out": str(tmp_path / name), **kw})
    status, files = run_experiment(spec)
    assert status == 0 and files == [str(tmp_path / name)]
    return open(files[0], "rb").read()


def test_simulate_byte_identical(tmp_path):
    kw = dict(command="simulate", seed=11, N=400, replicates=2, **FAST)
    a = _run(tmp_path, "a.csv", **kw)
    b = _run(tmp_path, "b.csv", **kw)
    assert a == b
    meta, header, rows = read_csv(tmp_path / "a.csv")
    assert header[:2] == ["replicate", "sigma_gamma"] and len(rows) == 2
    assert json.loads(meta["config"])["seed"] == 11
    c = _run(tmp_path, "c.csv", **{**kw, "seed": 12})
    assert c != a


def test_worker_count_independence(tmp_path):
    kw = dict(command="sweep-ramsey", seed=2, N=400, gammaT_grid=[0.05, 0.1, 0.2], **FAST)
    one = _run(tmp_path, "w1.csv", workers=1, **kw)
    two = _run(tmp_path, "w2.csv", workers=2, **kw)
    assert one == two
    _, header, rows = read_csv(tmp_path / "w1.csv")
    assert header == ["protocol", "gammaT", "kappa", "sigma_gamma", "stderr", "fringe_hops"]
    assert len(rows) == 6


def test_csv_round_trip(tmp_path):
    spec = parse_spec({"command": "analytic", "seed": 1, "N": 1000, "out": str(tmp_path / "r.csv")})
    run_experiment(spec)
    _, header, rows = read_csv(tmp_path / "r.csv")
    from squeezeclock.analytics import analytic_report

    s = spec.schedule()
    rep = analytic_report(1000, s.kappa, s.n, s.omegas, 0.1)
    expect = [v for _, _, v in rep.rows()]
    got = [float(r[2]) for r in rows]
    np.testing.assert_allclose(got, expect, rtol=1e-12, atol=0)


@pytest.mark.parametrize("command, extra", [
    ("sweep-N", {"N_grid": [100, 200], "kappa_grid": [2.0, 4.0]}),
    ("spectrum", {"l": 1024, "replicates": 2}),
    ("optimize", {"N": 100, "budget": 50, "l": 400}),
])
def test_other_commands(tmp_path, command, extra, capsys):
    kw = {**FAST, "N": 200, **extra}
    _run(tmp_path, "x.csv", command=command, seed=4, **kw)
    meta, header, rows = read_csv(tmp_path / "x.csv")
    assert rows and meta["command"] == command and "backend" in meta
    for row in rows:
        for cell in row:
            if cell not in ("adaptive", "conventional"):
                assert np.isfinite(float(cell))
    if command == "optimize":
        assert "sigma_gamma" in capsys.readouterr().out


def test_partial_output_removed(tmp_path, monkeypatch):
    def boom(spec, out):
        with open(out, "w") as fh:
            fh.write("half a file")
        raise RuntimeError("interrupted")

    monkeypatch.setitem(cli._DISPATCH, "simulate", boom)
    spec = parse_spec({"command": "simulate", "seed": 1, "out": str(tmp_path / "o.csv")})
    with pytest.raises(RuntimeError):
        run_experiment(spec)
    assert os.listdir(tmp_path) == []


def test_main_exit_codes(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["--command", "analytic", "--seed", "1", "--N", "1000", "--out", str(out)]) == 0
    assert out.exists()
    assert main(["--command", "simulate", "--seed", "1", "--alpha", "1.2"]) == 2
    err = capsys.readouterr().err.strip()
    assert err == "error: alpha must lie in (0,1)"
    assert main(["--command", "simulate", "--seed", "1", "--set", "bogus"]) == 2
    cfg = tmp_path / "c.txt"
    cfg.write_text("command=analytic\nseed=3\nN=400\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "k.csv"), "--set", "gammaT=0.2"]) == 0
    meta, _, _ = read_csv(tmp_path / "k.csv")
    conf = json.loads(meta["config"])
    assert conf["N"] == 400 and conf["gammaT"] == 0.2


def test_console_entry_point(tmp_path):
    out = tmp_path / "e.csv"
    r = subprocess.run([sys.executable, "-m", "squeezeclock.cli", "--command", "analytic", "--seed", "1",
                        "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 0 and out.exists()
    r = subprocess.run([sys.executable, "-m", "squeezeclock.cli", "--command", "simulate"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and r.stderr.strip() == "error: seed is required"
