"""Variational real and imaginary time evolution.

Three engines share one trace format:
  varqte:  per step solve g theta_dot = b with the exact reverse-mode QGT
           and gradient (or their shot-based estimates) and step forward.
  saqite:  stochastic estimators for g and b, exponentially averaged across
           steps, solved in the stable subspace.
  dualqte: per step minimize the dual loss (1 - F)/2 - dtau * dtheta . b by
           gradient descent instead of solving the linear system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import ParameterizedCircuit, fidelity as circuit_fidelity
from .deriv import (EstimatorState, PerturbationSpec, SHIFT, estimator_update,
                    evolution_gradient, grad_spsa_sample, qgt_hessian_form,
                    qgt_reverse, qgt_spsa_sample)
from .pauli import PauliSum
from .rng import substream
from .solve import SolverConfig, solve_regularized
from .state import Statevector, bures_distance, expectation, sampled_expectation


@dataclass(frozen=True)
class SaqiteParams:
    """Per-step sampling counts and cross-step momenta."""

    samples: int = 10
    tau1: float = 0.99
    tau2: float = 0.0
    perturbation: float = 1e-2
    exact_init: bool = False
    m_decay: float | None = None  # M_k = max(1, floor(samples * m_decay^k))


@dataclass(frozen=True)
class DualParams:
    """Inner gradient-descent settings for the dual engine.

    dtau is the time perturbation of the dual loss; None couples it to the
    integration step. Decoupling with dtau << dt sharpens the a-posteriori
    error bound, which carries an O(dtau) approximation term.
    """

    eta: float = 0.1
    first_iters: int = 100
    iters: int = 10
    warmstart: bool = True
    loss_tol: float | None = None
    dtau: float | None = None


@dataclass
class EvolutionConfig:
    mode: str = "imaginary"
    t_total: float = 1.0
    dt: float = 0.01
    engine: str = "varqte"
    solver: SolverConfig | None = None
    shots: int | None = None
    seed: int = 0
    observables: dict | None = None
    store_matrices: bool = False
    saqite: SaqiteParams = field(default_factory=SaqiteParams)
    dual: DualParams = field(default_factory=DualParams)

    def __post_init__(self):
        if self.mode not in ("imaginary", "real"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.engine not in ("varqte", "saqite", "dualqte"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.t_total <= 0 or self.dt <= 0:
            raise ValueError("need positive t_total and dt")

    def grid(self) -> tuple[int, float]:
        """(number of steps, effective dt): the horizon is divided into
        ceil(t_total / dt) equal steps."""
        n = int(np.ceil(self.t_total / self.dt - 1e-9))
        return n, self.t_total / n


@dataclass
class EvolutionTrace:
    mode: str
    times: np.ndarray
    thetas: np.ndarray
    energies: np.ndarray
    variances: np.ndarray
    theta_dots: np.ndarray
    extras: dict = field(default_factory=dict)
    inner_iters: list = field(default_factory=list)
    dual_losses: list = field(default_factory=list)
    dual_dtau: float | None = None
    gs: list = field(default_factory=list)
    bs: list = field(default_factory=list)

    def to_csv(self, d_b=None, bound=None) -> str:
        d = self.thetas.shape[1]
        cols = ["t"] + [f"theta_{j}" for j in range(d)]
        cols += ["energy", "variance", "D_B", "bound"]
        lines = [",".join(cols)]
        for i, t in enumerate(self.times):
            row = [f"{t:.17g}"]
            row += [f"{x:.17g}" for x in self.thetas[i]]
            row.append(f"{self.energies[i]:.17g}")
            row.append(f"{self.variances[i]:.17g}")
            row.append(f"{d_b[i]:.17g}" if d_b is not None else "nan")
            row.append(f"{bound[i]:.17g}" if bound is not None else "nan")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


class _Recorder:
    def __init__(self, circuit, hamiltonian, observables):
        self.circuit = circuit
        self.h = hamiltonian
        self.observables = observables or {}
        self.times, self.thetas, self.energies, self.variances = [], [], [], []
        self.theta_dots = []
        self.extras = {k: [] for k in self.observables}

    def snapshot(self, t, theta):
        state = self.circuit.simulate(theta)
        e, v = expectation(state, self.h, with_variance=True)
        self.times.append(t)
        self.thetas.append(np.array(theta))
        self.energies.append(e)
        self.variances.append(v)
        for k, obs in self.observables.items():
            self.extras[k].append(expectation(state, obs))
        return e, v

    def finish(self, mode) -> EvolutionTrace:
        return EvolutionTrace(
            mode=mode,
            times=np.array(self.times),
            thetas=np.array(self.thetas),
            energies=np.array(self.energies),
            variances=np.array(self.variances),
            theta_dots=np.array(self.theta_dots)
            if self.theta_dots else np.zeros((0, len(self.thetas[0]))),
            extras={k: np.array(v) for k, v in self.extras.items()})


def _shot_tools(circuit, hamiltonian, config):
    """(energy_fn(circ, theta), fidelity_fn(a, b) in expanded space) for the
    configured shot count, or (None, None) when running exactly."""
    if config.shots is None:
        return None, None
    rng = substream(config.seed, "shots")
    expanded, _ = circuit.expand_unique()

    def energy_fn(circ, theta):
        state = circ.simulate(theta)
        return sampled_expectation(state, hamiltonian, config.shots, rng=rng)

    def fid_fn(a, b):
        return circuit_fidelity(expanded, a, b, shots=config.shots, rng=rng)

    return energy_fn, fid_fn


def varqte_evolve(circuit: ParameterizedCircuit, hamiltonian: PauliSum,
                  theta0, config: EvolutionConfig) -> EvolutionTrace:
    """Linear-solve engine. With shots, g comes from the shift-rule Hessian
    of the sampled fidelity and b from the shift rule on sampled energies
    (imaginary time only; sampled real time needs the dual engine).

    Recorded energies and variances are exact diagnostics; sampled
    quantities only drive the dynamics.
    """
    if config.mode == "real" and config.shots is not None:
        raise NotImplementedError("sampled real-time evolution: use dualqte")
    solver = config.solver or SolverConfig()
    n_steps, dt = config.grid()
    theta = np.asarray(theta0, dtype=float).copy()
    energy_fn, fid_fn = _shot_tools(circuit, hamiltonian, config)
    rec = _Recorder(circuit, hamiltonian, config.observables)
    gs, bs = [], []
    for i in range(n_steps + 1):
        rec.snapshot(i * dt, theta)
        if i == n_steps:
            break
        if config.shots is None:
            g = qgt_reverse(circuit, theta).g
            b = evolution_gradient(circuit, hamiltonian, theta, config.mode)
        else:
            g = qgt_hessian_form(circuit, theta, method="psr", fidelity_fn=fid_fn)
            b = evolution_gradient(circuit, hamiltonian, theta, config.mode,
                                   method="psr", energy_fn=energy_fn)
        if config.store_matrices:
            gs.append(g)
            bs.append(b)
        theta_dot = solve_regularized(g, b, solver)
        rec.theta_dots.append(theta_dot)
        theta = theta + dt * theta_dot
    trace = rec.finish(config.mode)
    trace.gs, trace.bs = gs, bs
    return trace


def saqite_evolve(circuit: ParameterizedCircuit, hamiltonian: PauliSum,
                  theta0, config: EvolutionConfig) -> EvolutionTrace:
    """Stochastically averaged imaginary-time engine."""
    if config.mode != "imaginary":
        raise ValueError("saqite is an imaginary-time engine")
    p = config.saqite
    solver = config.solver or SolverConfig(method="stable_subspace", delta=1e-2)
    n_steps, dt = config.grid()
    theta = np.asarray(theta0, dtype=float).copy()
    d = circuit.d
    spec = PerturbationSpec(epsilon=p.perturbation, seed=config.seed)
    rng_g = substream(config.seed, "spsa.qgt")
    rng_b = substream(config.seed, "spsa.grad")
    energy_fn, fid_fn = _shot_tools(circuit, hamiltonian, config)
    if fid_fn is None:
        expanded, _ = circuit.expand_unique()
        fid_fn = lambda a, b: circuit_fidelity(expanded, a, b)

    # sampling happens in public parameter space but the fidelity runs on
    # the expanded circuit; map public points through the Jacobian
    _, jac = circuit.expand_unique()
    fid_pub = lambda a, b: fid_fn(jac @ a, jac @ b)

    def loss(th):
        if energy_fn is None:
            return expectation(circuit.simulate(th), hamiltonian)
        return energy_fn(circuit, th)

    if p.exact_init:
        est = EstimatorState(g_bar=qgt_reverse(circuit, theta).g,
                             b_bar=evolution_gradient(circuit, hamiltonian,
                                                      theta, "imaginary"),
                             tau1=p.tau1, tau2=p.tau2, k=1)
    else:
        est = EstimatorState.identity_init(d, tau1=p.tau1, tau2=p.tau2)

    rec = _Recorder(circuit, hamiltonian, config.observables)
    for i in range(n_steps + 1):
        rec.snapshot(i * dt, theta)
        if i == n_steps:
            break
        m = p.samples
        if p.m_decay is not None:
            m = max(1, int(np.floor(p.samples * p.m_decay ** (i + 1))))
        g_samples = [qgt_spsa_sample(fid_pub, theta, spec, rng=rng_g)
                     for _ in range(m)]
        b_samples = [-0.5 * grad_spsa_sample(loss, theta, spec, rng=rng_b)
                     for _ in range(m)]
        est = estimator_update(est, g_samples, b_samples)
        theta_dot = solve_regularized(est.g_bar, est.b_bar, solver)
        rec.theta_dots.append(theta_dot)
        theta = theta + dt * theta_dot
    return rec.finish(config.mode)


def _dual_step(jac, th_pub, b_pub, dtau, fid_fn, params, start, max_iters):
    """Minimize (1 - F(theta, theta + dtheta))/2 - dtau * dtheta . b by
    gradient descent; returns (dtheta, iterations, final loss)."""
    th_exp = jac @ th_pub
    dtheta = start.copy()
    m = jac.shape[0]

    def loss_of(dth):
        return 0.5 * (1.0 - fid_fn(th_exp, th_exp + jac @ dth)) - dtau * (dth @ b_pub)

    def grad_of(dth):
        v = jac @ dth
        grad_exp = np.zeros(m)
        for j in range(m):
            e = np.zeros(m)
            e[j] = SHIFT
            grad_exp[j] = 0.5 * (fid_fn(th_exp, th_exp + v + e)
                                 - fid_fn(th_exp, th_exp + v - e))
        return -0.5 * (jac.T @ grad_exp) - dtau * b_pub

    prev = loss_of(dtheta)
    rising = 0
    total = 0
    for it in range(1, max_iters + 1):
        dtheta = dtheta - params.eta * grad_of(dtheta)
        cur = loss_of(dtheta)
        total = it
        if cur > prev:
            rising += 1
            if rising >= 10:
                raise RuntimeError("dual inner loop diverged "
                                   "(loss rose 10 iterations in a row)")
        else:
            rising = 0
        if params.loss_tol is not None and abs(cur - prev) < params.loss_tol:
            prev = cur
            break
        prev = cur
    return dtheta, total, prev


def dualqte_evolve(circuit: ParameterizedCircuit, hamiltonian: PauliSum,
                   theta0, config: EvolutionConfig) -> EvolutionTrace:
    """Dual-loss engine: each step finds its update by descending
    (1 - F)/2 - dtau * dtheta . b, warmstarted from the previous step, and
    advances theta by dt * dtheta / dtau (dtau defaults to dt)."""
    p = config.dual
    n_steps, dt = config.grid()
    dtau = p.dtau if p.dtau is not None else dt
    if dtau <= 0:
        raise ValueError("need positive dtau")
    theta = np.asarray(theta0, dtype=float).copy()
    energy_fn, fid_fn = _shot_tools(circuit, hamiltonian, config)
    expanded, jac = circuit.expand_unique()
    if fid_fn is None:
        fid_fn = lambda a, b: circuit_fidelity(expanded, a, b)

    rec = _Recorder(circuit, hamiltonian, config.observables)
    trace_inner, trace_loss = [], []
    dtheta = np.zeros(circuit.d)
    for i in range(n_steps + 1):
        rec.snapshot(i * dt, theta)
        if i == n_steps:
            break
        if config.mode == "imaginary" and config.shots is not None:
            b = evolution_gradient(circuit, hamiltonian, theta, "imaginary",
                                   method="psr", energy_fn=energy_fn)
        else:
            # real-time b stays exact even with shots; only the fidelity
            # descent is sampled
            b = evolution_gradient(circuit, hamiltonian, theta, config.mode)
        start = dtheta if p.warmstart else np.zeros(circuit.d)
        max_iters = p.first_iters if i == 0 else p.iters
        dtheta, iters, final_loss = _dual_step(jac, theta, b, dtau, fid_fn, p,
                                               start, max_iters)
        trace_inner.append(iters)
        trace_loss.append(final_loss)
        theta_dot = dtheta / dtau
        rec.theta_dots.append(theta_dot)
        theta = theta + dt * theta_dot
    trace = rec.finish(config.mode)
    trace.inner_iters = trace_inner
    trace.dual_losses = trace_loss
    trace.dual_dtau = dtau
    return trace


def evolve(circuit, hamiltonian, theta0, config: EvolutionConfig) -> EvolutionTrace:
    engine = {"varqte": varqte_evolve, "saqite": saqite_evolve,
              "dualqte": dualqte_evolve}[config.engine]
    return engine(circuit, hamiltonian, theta0, config)


@dataclass
class BuresMetrics:
    fidelities: np.ndarray
    d_b: np.ndarray
    i_b: float


def bures_metrics(trace: EvolutionTrace, circuit: ParameterizedCircuit,
                  references) -> BuresMetrics:
    """Bures distance to reference states at every recorded time and its
    time average I_B = (1/T) integral D_B dt (trapezoidal)."""
    if len(references) != len(trace.times):
        raise ValueError("need one reference per recorded time")
    fids, dbs = [], []
    for theta, ref in zip(trace.thetas, references):
        state = circuit.simulate(theta)
        f = float(abs(np.vdot(ref.amps, state.amps)) ** 2)
        fids.append(f)
        dbs.append(bures_distance(f))
    fids, dbs = np.array(fids), np.array(dbs)
    horizon = trace.times[-1] - trace.times[0]
    i_b = float(np.trapezoid(dbs, trace.times) / horizon) if horizon > 0 else 0.0
    return BuresMetrics(fidelities=fids, d_b=dbs, i_b=i_b)


def realtime_error_bound(trace: EvolutionTrace) -> np.ndarray:
    """A-posteriori Bures-distance bound for real-time evolution.

    Accumulates dt * sqrt(max(Var(E) + vdot(theta_dot, g theta_dot)
    - 2 vdot(theta_dot, b), 0)) using the stored phase-fixed g and b; dual
    traces substitute 2 L* / dt^2 for the quadratic form. The clamp guards
    roundoff, the integrand is nonnegative in exact arithmetic.
    """
    if trace.mode != "real":
        raise ValueError("error bound applies to real-time traces")
    steps = len(trace.times) - 1
    rates = np.zeros(steps)
    if trace.gs and trace.bs:
        for i in range(steps):
            td = trace.theta_dots[i]
            quad = td @ trace.gs[i] @ td - 2.0 * (td @ trace.bs[i])
            rates[i] = np.sqrt(max(trace.variances[i] + quad, 0.0))
    elif trace.dual_losses:
        for i in range(steps):
            dtau = trace.dual_dtau
            if dtau is None:
                dtau = trace.times[i + 1] - trace.times[i]
            quad = 2.0 * trace.dual_losses[i] / (dtau * dtau)
            rates[i] = np.sqrt(max(trace.variances[i] + quad, 0.0))
    else:
        raise ValueError("trace carries neither matrices nor dual losses; "
                         "rerun with store_matrices=True or the dual engine")
    bound = np.zeros(steps + 1)
    for i in range(steps):
        bound[i + 1] = bound[i] + (trace.times[i + 1] - trace.times[i]) * rates[i]
    return bound
