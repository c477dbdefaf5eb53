import json

import numpy as np
import pytest

from varqsim.cli import main, run_single


def write_spec(tmp_path, spec, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(spec))
    return str(p)


EVOLVE_SPEC = {
    "command": "evolve",
    "seed": 1,
    "model": {"kind": "tfim", "n": 2, "J": 0.5, "h": -1.0},
    "ansatz": {"kind": "efficient_su2", "n": 2, "reps": 1, "initial": "plus"},
    "evolve": {"mode": "imaginary", "t_total": 0.1, "dt": 0.02},
    "observables": {"z": "z_mean"},
}


def test_run_single_evolve(tmp_path):
    out = tmp_path / "run"
    summary = run_single(dict(EVOLVE_SPEC), str(out))
    assert (out / "trace.csv").exists()
    assert (out / "summary.json").exists()
    final = summary["final"]
    assert {"energy", "variance", "i_b", "d_b_final", "z_final"} <= set(final)
    assert final["i_b"] < 0.05  # short horizon, expressive ansatz
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header.startswith("t,theta_0")
    disk = json.loads((out / "summary.json").read_text())
    assert disk["command"] == "evolve"
    assert disk["counters"]["simulations"] > 0


def test_run_single_determinism(tmp_path):
    a = run_single(dict(EVOLVE_SPEC), str(tmp_path / "a"))
    b = run_single(dict(EVOLVE_SPEC), str(tmp_path / "b"))
    assert (tmp_path / "a" / "summary.json").read_bytes() == \
        (tmp_path / "b" / "summary.json").read_bytes()
    assert (tmp_path / "a" / "trace.csv").read_bytes() == \
        (tmp_path / "b" / "trace.csv").read_bytes()
    assert a["final"] == b["final"]


def test_run_single_realtime_bound(tmp_path):
    spec = {
        "command": "evolve",
        "model": {"kind": "heisenberg", "n": 2, "J": 0.25, "h": -1.0},
        "ansatz": {"kind": "brickwall", "n": 2, "reps": 1, "initial": "plus"},
        "evolve": {"mode": "real", "t_total": 0.1, "dt": 0.02},
    }
    summary = run_single(spec, str(tmp_path / "rt"))
    assert "bound_final" in summary["final"]
    rows = (tmp_path / "rt" / "trace.csv").read_text().strip().splitlines()
    bound_col = [float(r.split(",")[-1]) for r in rows[1:]]
    assert all(np.isfinite(bound_col))
    assert bound_col == sorted(bound_col)


def test_run_single_optimize_and_qng(tmp_path):
    spec = {
        "command": "optimize",
        "seed": 2,
        "model": {"kind": "tfim", "n": 2, "J": 0.5, "h": -1.0},
        "ansatz": {"kind": "efficient_su2", "n": 2, "reps": 1,
                   "initial": "plus"},
        "optimize": {"optimizer": "qng", "budget": 30, "lr_const": 0.2,
                     "lr_decay": 0.0},
    }
    summary = run_single(spec, str(tmp_path / "opt"))
    final = summary["final"]
    assert final["energy_final"] < -1.0  # well below the plus-state energy
    assert final["circuits"] >= 0
    rows = (tmp_path / "opt" / "trace.csv").read_text().strip().splitlines()
    assert rows[0].startswith("k,loss,circuits,shots")
    assert len(rows) == 32


def test_run_single_spsa_with_shots(tmp_path):
    spec = {
        "command": "optimize",
        "seed": 3,
        "shots": 256,
        "model": {"kind": "tfim", "n": 2, "J": 0.5, "h": -1.0},
        "ansatz": {"kind": "efficient_su2", "n": 2, "reps": 1,
                   "initial": "plus"},
        "optimize": {"optimizer": "spsa", "budget": 10, "lr_const": 0.05},
    }
    summary = run_single(spec, str(tmp_path / "spsa"))
    # 2 evaluations/iteration, 2 measurement groups (ZZ and X), 256 each
    assert summary["final"]["shots"] == 256 * 2 * 2 * 10
    assert summary["counters"]["shots"] == 256 * 2 * 2 * 10


def test_run_single_qmetts(tmp_path):
    spec = {
        "command": "qmetts",
        "seed": 4,
        "model": {"kind": "heisenberg", "n": 2, "J": 0.25, "h": -1.0},
        "qmetts": {"betas": [0.5, 1.0], "n_samples": 40, "burn_in": 5},
    }
    summary = run_single(spec, str(tmp_path / "qm"))
    final = summary["final"]
    assert set(final) == {"beta_0.5", "beta_1.0"}
    for block in final.values():
        assert abs(block["mean"] - block["exact"]) < 10 * block["stderr"] + 0.05
    rows = (tmp_path / "qm" / "trace.csv").read_text().strip().splitlines()
    assert rows[0] == "beta,mean,stderr,M"
    assert len(rows) == 3


def test_run_single_gibbs(tmp_path):
    spec = {
        "command": "gibbs",
        "model": {"kind": "tfim", "n": 2, "J": 1.0, "h": 0.0},
        "gibbs": {"beta": 2.0},
    }
    summary = run_single(spec, str(tmp_path / "gb"))
    from varqsim.oracle import thermal_average
    from varqsim.pauli import build_model
    h = build_model("tfim", 2, J=1.0, h=0.0)
    assert summary["final"]["energy"] == pytest.approx(
        thermal_average(h, 2.0, h))


def test_run_single_trotter_bench(tmp_path):
    spec = {
        "command": "trotter-bench",
        "model": {"kind": "tfim", "n": 2, "J": 0.5, "h": -1.0},
        "trotter": {"t": 0.5, "steps": [1, 4]},
    }
    summary = run_single(spec, str(tmp_path / "tb"))
    final = summary["final"]
    assert set(final) == {"order1_steps1", "order1_steps4",
                          "order2_steps1", "order2_steps4"}
    # more steps, less error; order 2 beats order 1 at equal steps
    assert final["order1_steps4"] < final["order1_steps1"]
    assert final["order2_steps4"] < final["order2_steps1"]
    assert final["order2_steps4"] < final["order1_steps4"]


def test_run_single_grad_bench(tmp_path):
    spec = {
        "command": "grad-bench",
        "seed": 0,
        "grad_bench": {"n": 3, "reps": [1, 2]},
    }
    summary = run_single(spec, str(tmp_path / "gbch"))
    final = summary["final"]
    assert set(final) == {"d12", "d18"}
    for block in final.values():
        assert block["grad_ops"] > 0 and block["qgt_ops"] > 0
    # linear-in-d gate cost for the reverse gradient
    assert final["d18"]["grad_ops"] < 2.0 * final["d12"]["grad_ops"]


def test_run_single_maxcut(tmp_path):
    spec = {
        "command": "maxcut",
        "seed": 1,
        "model": {"graph": {"kind": "explicit", "n": 3,
                            "edges": [[1, 2, 1.0], [2, 3, 1.0]]}},
        "ansatz": {"kind": "efficient_su2", "n": 3, "reps": 1,
                   "initial": "plus"},
        "evolve": {"engine": "saqite", "t_total": 0.5, "dt": 0.1,
                   "saqite": {"samples": 5}},
    }
    summary = run_single(spec, str(tmp_path / "mc"))
    final = summary["final"]
    assert final["best_cut"] == 2.0
    assert final["n_optimal"] == 2
    assert 0.0 <= final["optimal_mass"] <= 1.0


def test_run_single_unknown_command(tmp_path):
    with pytest.raises(ValueError):
        run_single({"command": "teleport"}, str(tmp_path / "x"))


def test_main_exit_codes(tmp_path):
    # 2: unreadable or unparsable spec
    assert main(["--spec", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--spec", str(bad)]) == 2
    # 2: malformed --set
    ok = write_spec(tmp_path, EVOLVE_SPEC)
    assert main(["--spec", ok, "--set", "novalue"]) == 2
    # 3: validation error inside the run
    spec = dict(EVOLVE_SPEC)
    spec["command"] = "nonsense"
    p = write_spec(tmp_path, spec, "bad_cmd.json")
    assert main(["--spec", p, "--out", str(tmp_path / "o1")]) == 3
    # 3: bad model kind
    p = write_spec(tmp_path, {**EVOLVE_SPEC, "model": {"kind": "zoo", "n": 2}},
                   "bad_model.json")
    assert main(["--spec", p, "--out", str(tmp_path / "o2")]) == 3


def test_main_set_overrides(tmp_path):
    p = write_spec(tmp_path, EVOLVE_SPEC)
    out = tmp_path / "ov"
    rc = main(["--spec", p, "--out", str(out),
               "--set", "evolve.t_total=0.04",
               "--set", "evolve.dt=0.02", "--seed", "9"])
    assert rc == 0
    disk = json.loads((out / "summary.json").read_text())
    assert disk["seed"] == 9
    assert disk["config"]["evolve"]["t_total"] == 0.04
    rows = (out / "trace.csv").read_text().strip().splitlines()
    assert len(rows) == 4  # header + 3 checkpoints


def test_main_seed_sweep(tmp_path):
    spec = dict(EVOLVE_SPEC)
    spec["seeds"] = [1, 2]
    spec["evolve"] = {"mode": "imaginary", "t_total": 0.04, "dt": 0.02}
    p = write_spec(tmp_path, spec)
    out = tmp_path / "sweep"
    assert main(["--spec", p, "--out", str(out)]) == 0
    assert (out / "seed_1" / "summary.json").exists()
    assert (out / "seed_2" / "trace.csv").exists()
    top = json.loads((out / "summary.json").read_text())
    assert set(top["seeds"]) == {"1", "2"}
    # exact engine: both seeds agree; the sweep aggregates per-seed finals
    assert top["seeds"]["1"]["energy"] == top["seeds"]["2"]["energy"]
