"""JSON-driven experiment runner.

A run is described by a JSON spec with a `command` plus sections for the
model, ansatz, and engine settings; results land in an output directory as
trace.csv and summary.json. Identical specs produce byte-identical outputs.

Exit codes: 2 on spec parse errors, 3 on validation errors, 4 on runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .apps import (MaxcutResult, QmettsConfig, circle_graph, maxcut_saqite,
                   qmetts_chain)
from .circuit import ParameterizedCircuit, build_ansatz, initial_parameters
from .deriv import energy_gradient, grad_reverse, qgt_reverse
from .evolve import (DualParams, EvolutionConfig, SaqiteParams, bures_metrics,
                     evolve, realtime_error_bound)
from .optimize import (OptimizerConfig, blackbox_loss, make_energy,
                       make_fidelity, run_gd, run_qng, run_qnspsa, run_spsa)
from .oracle import (exact_imag_evolve, exact_real_evolve, gibbs_state,
                     thermal_average, trotter_circuit)
from .pauli import Graph, PauliString, PauliSum, build_model, split_diagonal
from .rng import substream
from .solve import SolverConfig
from .state import Statevector, counters, expectation


def _build_graph(gspec) -> Graph:
    if gspec is None or gspec.get("kind", "circle") == "circle":
        g = gspec or {}
        return circle_graph(g.get("n", 15), g.get("w1", 20.0),
                            g.get("w2", -20.0),
                            tuple(g.get("offsets", (1, 3))))
    if "edges" in gspec:
        return Graph(gspec["n"], [tuple(e) for e in gspec["edges"]])
    raise ValueError("graph spec needs kind=circle or explicit edges")


def _build_model(mspec) -> PauliSum:
    kind = mspec["kind"]
    if kind == "maxcut":
        return build_model("maxcut", graph=_build_graph(mspec.get("graph")))
    kwargs = {k: mspec[k] for k in ("J", "h", "h_x", "h_z") if k in mspec}
    return build_model(kind, n=mspec["n"], topology=mspec.get("topology", "line"),
                       **kwargs)


def _build_ansatz(aspec, seed: int):
    kind = aspec["kind"]
    kwargs = {k: v for k, v in aspec.items() if k not in ("kind", "initial", "theta0")}
    if kind == "two_design":
        kwargs.setdefault("seed", seed)
    circuit = build_ansatz(kind, **kwargs)
    if "theta0" in aspec:
        theta0 = np.asarray(aspec["theta0"], dtype=float)
    else:
        theta0 = initial_parameters(circuit, aspec.get("initial", "zero"))
    return circuit, theta0


def _build_observables(ospec, n: int):
    if not ospec:
        return None
    out = {}
    for name, val in ospec.items():
        if val == "z_mean":
            out[name] = PauliSum([(1.0 / n, PauliString.from_chars(n, {q: "Z"}))
                                  for q in range(1, n + 1)])
        elif val == "x_mean":
            out[name] = PauliSum([(1.0 / n, PauliString.from_chars(n, {q: "X"}))
                                  for q in range(1, n + 1)])
        elif isinstance(val, list):
            out[name] = PauliSum([(c, label) for c, label in val])
        else:
            raise ValueError(f"bad observable spec for {name!r}")
    return out


def _solver(sspec) -> SolverConfig | None:
    if not sspec:
        return None
    return SolverConfig(method=sspec.get("method", "stable_subspace"),
                        delta=sspec.get("delta", 1e-2),
                        relative=sspec.get("relative", False))


def _evolution_config(spec) -> EvolutionConfig:
    e = spec.get("evolve", {})
    saqite = SaqiteParams(**e.get("saqite", {}))
    dual = DualParams(**e.get("dual", {}))
    return EvolutionConfig(
        mode=e.get("mode", "imaginary"), t_total=e.get("t_total", 1.0),
        dt=e.get("dt", 0.01), engine=e.get("engine", "varqte"),
        solver=_solver(e.get("solver")), shots=spec.get("shots"),
        seed=spec.get("seed", 0),
        observables=None,  # set by the caller
        store_matrices=e.get("store_matrices", e.get("mode") == "real"),
        saqite=saqite, dual=dual)


def cmd_evolve(spec, out: Path) -> dict:
    model = _build_model(spec["model"])
    circuit, theta0 = _build_ansatz(spec["ansatz"], spec.get("seed", 0))
    config = _evolution_config(spec)
    config.observables = _build_observables(spec.get("observables"), circuit.n)
    trace = evolve(circuit, model, theta0, config)

    d_b = bound = None
    final = {"energy": trace.energies[-1], "variance": trace.variances[-1]}
    if spec.get("reference", True) and model.n <= 10:
        initial = circuit.simulate(theta0)
        if config.mode == "real":
            refs = exact_real_evolve(model, initial, trace.times)
        else:
            refs = exact_imag_evolve(model, initial, trace.times)
        metrics = bures_metrics(trace, circuit, refs)
        d_b = metrics.d_b
        final["i_b"] = metrics.i_b
        final["d_b_final"] = metrics.d_b[-1]
    if config.mode == "real" and (trace.gs or trace.dual_losses):
        bound = realtime_error_bound(trace)
        final["bound_final"] = bound[-1]
    (out / "trace.csv").write_text(trace.to_csv(d_b=d_b, bound=bound))
    for name, vals in trace.extras.items():
        final[f"{name}_final"] = vals[-1]
    return final


def cmd_optimize(spec, out: Path) -> dict:
    o = spec.get("optimize", {})
    circuit, theta0 = _build_ansatz(spec["ansatz"], spec.get("seed", 0))
    config = OptimizerConfig(
        budget=o.get("budget", 100), lr_const=o.get("lr_const", 0.01),
        lr_offset=o.get("lr_offset", 0.0), lr_decay=o.get("lr_decay", 0.602),
        pert_const=o.get("pert_const", 0.01),
        pert_decay=o.get("pert_decay", 0.101), beta=o.get("beta", 1e-3),
        resample_initial=o.get("resample_initial", 100),
        resample_steady=o.get("resample_steady", 2),
        resample_initial_iters=o.get("resample_initial_iters", 1),
        seed=spec.get("seed", 0), blocking=o.get("blocking", False),
        solver=_solver(o.get("solver")))
    shots = spec.get("shots")
    optimizer = o.get("optimizer", "spsa")
    objective = o.get("objective", "energy")

    if objective == "cut":
        graph = _build_graph(spec.get("model", {}).get("graph"))
        if shots is None:
            raise ValueError("cut objective needs shots")
        loss = blackbox_loss(lambda x: -graph.cut_value(x), circuit, shots,
                             seed=spec.get("seed", 0), cache={})
        model = build_model("maxcut", graph=graph)
    else:
        model = _build_model(spec["model"])
        loss = make_energy(circuit, model, shots=shots, seed=spec.get("seed", 0))

    if optimizer == "gd":
        trace = run_gd(loss, lambda th: energy_gradient(circuit, model, th),
                       theta0, config)
    elif optimizer == "qng":
        trace = run_qng(loss, lambda th: energy_gradient(circuit, model, th),
                        lambda th: qgt_reverse(circuit, th).g, theta0, config)
    elif optimizer == "spsa":
        if o.get("calibrate"):
            config = OptimizerConfig(**{**config.__dict__, "lr_const": None})
        trace = run_spsa(loss, theta0, config)
    elif optimizer == "qnspsa":
        fid = make_fidelity(circuit, shots=shots, seed=spec.get("seed", 0))
        trace = run_qnspsa(loss, fid, theta0, config)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    (out / "trace.csv").write_text(trace.to_csv())
    exact_final = expectation(circuit.simulate(trace.thetas[-1]), model)
    return {"loss_final": trace.losses[-1], "energy_final": exact_final,
            "circuits": int(trace.circuits[-1]), "shots": int(trace.shots[-1])}


def cmd_qmetts(spec, out: Path) -> dict:
    model = _build_model(spec["model"])
    q = spec.get("qmetts", {})
    obs = _build_observables(spec.get("observables"), model.n)
    observable = next(iter(obs.values())) if obs else model
    betas = q.get("betas", [q.get("beta", 1.0)])
    lines = ["beta,mean,stderr,M"]
    final = {}
    for beta in betas:
        config = QmettsConfig(beta=beta, n_samples=q.get("n_samples", 100),
                              burn_in=q.get("burn_in", 0),
                              seed=spec.get("seed", 0))
        res = qmetts_chain(model, observable, config)
        lines.append(f"{beta:.17g},{res.mean:.17g},{res.stderr:.17g},{res.n}")
        final[f"beta_{beta}"] = {"mean": res.mean, "stderr": res.stderr,
                                 "exact": thermal_average(model, beta, observable)}
    (out / "trace.csv").write_text("\n".join(lines) + "\n")
    return final


def cmd_gibbs(spec, out: Path) -> dict:
    model = _build_model(spec["model"])
    beta = spec.get("gibbs", {}).get("beta", 1.0)
    obs = _build_observables(spec.get("observables"), model.n) or {"energy": model}
    rho = gibbs_state(model, beta)
    return {name: rho.expectation(o) for name, o in obs.items()}


def cmd_trotter_bench(spec, out: Path) -> dict:
    model = _build_model(spec["model"])
    t = spec.get("trotter", {})
    horizon = t.get("t", 1.0)
    steps_list = t.get("steps", [1, 2, 4, 8, 16, 32])
    groups = list(split_diagonal(model))
    n = model.n
    plus = np.ones(2) / np.sqrt(2.0)
    state0 = (Statevector.product([plus] * n) if t.get("initial", "plus") == "plus"
              else Statevector.zero(n))
    exact = exact_real_evolve(model, state0, horizon)
    lines = ["order,n_steps,infidelity"]
    final = {}
    for order in (1, 2):
        for steps in steps_list:
            circ = trotter_circuit(groups, horizon, steps, order=order)
            approx = circ.simulate(np.zeros(0), initial=state0)
            f = float(abs(np.vdot(exact.amps, approx.amps)) ** 2)
            lines.append(f"{order},{steps},{1.0 - f:.17g}")
            final[f"order{order}_steps{steps}"] = 1.0 - f
    (out / "trace.csv").write_text("\n".join(lines) + "\n")
    return final


def cmd_grad_bench(spec, out: Path) -> dict:
    g = spec.get("grad_bench", {})
    n = g.get("n", 8)
    reps_list = g.get("reps", [1, 2, 4, 8, 12])
    model = _build_model(spec["model"]) if "model" in spec else build_model(
        "tfim", n=n, J=1.0, h=1.0)
    rng = substream(spec.get("seed", 0), "grad_bench")
    lines = ["d,grad_ops,qgt_ops"]
    final = {}
    for reps in reps_list:
        circuit = build_ansatz("efficient_su2", n=n, reps=reps)
        theta = rng.uniform(-np.pi, np.pi, circuit.d)
        before = counters.unitary + counters.generator + counters.observable
        grad_reverse(circuit, model, theta)
        mid = counters.unitary + counters.generator + counters.observable
        qgt_reverse(circuit, theta)
        after = counters.unitary + counters.generator + counters.observable
        lines.append(f"{circuit.d},{mid - before},{after - mid}")
        final[f"d{circuit.d}"] = {"grad_ops": mid - before, "qgt_ops": after - mid}
    (out / "trace.csv").write_text("\n".join(lines) + "\n")
    return final


def cmd_maxcut(spec, out: Path) -> dict:
    graph = _build_graph(spec.get("model", {}).get("graph"))
    circuit, theta0 = _build_ansatz(spec["ansatz"], spec.get("seed", 0))
    config = _evolution_config(spec)
    result = maxcut_saqite(graph, circuit, theta0, config)
    (out / "trace.csv").write_text(result.trace.to_csv())
    return {"optimal_mass": result.optimal_mass,
            "best_bitstring": result.best_bitstring,
            "best_cut": result.best_cut,
            "n_optimal": len(result.optimal_set)}


_COMMANDS = {"evolve": cmd_evolve, "optimize": cmd_optimize,
             "qmetts": cmd_qmetts, "gibbs": cmd_gibbs,
             "trotter-bench": cmd_trotter_bench, "grad-bench": cmd_grad_bench,
             "maxcut": cmd_maxcut}


def _apply_set(spec: dict, assignment: str):
    if "=" not in assignment:
        raise ValueError(f"--set needs key=value, got {assignment!r}")
    key, _, raw = assignment.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = spec
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def run_single(spec: dict, out_dir: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counters.reset()
    command = spec.get("command")
    if command not in _COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    final = _COMMANDS[command](spec, out)
    summary = {"command": command, "version": __version__,
               "seed": spec.get("seed", 0), "config": spec,
               "counters": counters.snapshot(), "final": final}
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2, default=float) + "\n")
    return summary


def _seed_run(args):
    spec, out_dir = args
    return run_single(spec, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="varqsim",
                                     description="variational quantum time "
                                                 "evolution experiment runner")
    parser.add_argument("--spec", required=True, help="JSON experiment spec")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a (dotted) spec key; value parsed as JSON")
    parser.add_argument("--seed", type=int, help="override spec seed")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel workers for independent seed sweeps")
    args = parser.parse_args(argv)

    try:
        spec = json.loads(Path(args.spec).read_text())
        for assignment in args.set:
            _apply_set(spec, assignment)
    except (OSError, ValueError) as err:
        print(f"spec error: {err}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec["seed"] = args.seed
    if args.out is not None:
        spec["out"] = args.out

    out_dir = spec.get("out", "out")
    try:
        seeds = spec.get("seeds")
        if seeds:
            jobs = []
            for s in seeds:
                sub = json.loads(json.dumps(spec))
                sub["seed"] = s
                sub.pop("seeds", None)
                jobs.append((sub, str(Path(out_dir) / f"seed_{s}")))
            if args.threads > 1:
                with ProcessPoolExecutor(max_workers=args.threads) as pool:
                    summaries = list(pool.map(_seed_run, jobs))
            else:
                summaries = [_seed_run(j) for j in jobs]
            top = {"command": spec.get("command"), "version": __version__,
                   "seeds": {str(s["seed"]): s["final"] for s in summaries}}
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "summary.json").write_text(
                json.dumps(top, sort_keys=True, indent=2, default=float) + "\n")
        else:
            run_single(spec, out_dir)
    except (ValueError, KeyError, TypeError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # runtime failures (divergence, convergence checks)
        print(f"runtime error: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
