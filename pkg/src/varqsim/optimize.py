"""Ground-state and black-box optimizers: gradient descent, natural
gradient, SPSA, and its metric-preconditioned variant.

Schedules follow the standard power laws eta_k = A (B + k)^(-alpha) and
eps_k = C k^(-gamma) with k starting at 1; alpha = gamma = 0 gives fixed
rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import ParameterizedCircuit, fidelity as circuit_fidelity
from .deriv import (EstimatorState, PerturbationSpec, estimator_update,
                    grad_spsa_sample, psd_project, qgt_spsa_sample)
from .pauli import PauliSum
from .rng import substream
from .solve import SolverConfig, solve_regularized
from .state import counters, expectation, sampled_expectation


@dataclass(frozen=True)
class OptimizerConfig:
    budget: int = 100
    lr_const: float | None = 0.01      # A; None lets run_spsa calibrate it
    lr_offset: float = 0.0             # B
    lr_decay: float = 0.602            # alpha
    pert_const: float = 0.01           # C
    pert_decay: float = 0.101          # gamma
    beta: float = 1e-3                 # metric regularization for qnspsa
    resample_initial: int = 100
    resample_steady: int = 2
    resample_initial_iters: int = 1
    seed: int = 0
    blocking: bool = False
    calibration_target: float = np.pi / 5
    calibration_samples: int = 25
    solver: SolverConfig | None = None  # qng metric solver

    def lr(self, k: int) -> float:
        return self.lr_const * (self.lr_offset + k) ** (-self.lr_decay)

    def pert(self, k: int) -> float:
        return self.pert_const * k ** (-self.pert_decay)


@dataclass
class OptimizerTrace:
    thetas: np.ndarray        # (budget + 1, d), row 0 is the start point
    losses: np.ndarray        # per row; nan where no counted value exists
    circuits: np.ndarray      # cumulative circuit executions per row
    shots: np.ndarray         # cumulative shots per row

    def to_csv(self) -> str:
        d = self.thetas.shape[1]
        cols = ["k", "loss", "circuits", "shots"] + [f"theta_{j}" for j in range(d)]
        lines = [",".join(cols)]
        for k in range(len(self.losses)):
            row = [str(k), f"{self.losses[k]:.17g}",
                   str(int(self.circuits[k])), str(int(self.shots[k]))]
            row += [f"{x:.17g}" for x in self.thetas[k]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


class _Tracker:
    def __init__(self, theta0):
        self.thetas = [np.array(theta0, dtype=float)]
        self.losses = []
        self.circuits = []
        self.shots = []
        self._c0 = counters.circuits
        self._s0 = counters.shots

    def record(self, theta, loss_value):
        self.thetas.append(np.array(theta, dtype=float))
        self.losses.append(loss_value)
        self.circuits.append(counters.circuits - self._c0)
        self.shots.append(counters.shots - self._s0)

    def prepend_initial(self, loss_value):
        self.losses.insert(0, loss_value)
        self.circuits.insert(0, counters.circuits - self._c0)
        self.shots.insert(0, counters.shots - self._s0)

    def finish(self) -> OptimizerTrace:
        return OptimizerTrace(thetas=np.array(self.thetas),
                              losses=np.array(self.losses, dtype=float),
                              circuits=np.array(self.circuits),
                              shots=np.array(self.shots))


def make_energy(circuit: ParameterizedCircuit, hamiltonian: PauliSum,
                shots: int | None = None, seed: int = 0, rng=None):
    """Counted loss function theta -> <H> (exact or shot-estimated)."""
    if shots is not None and rng is None:
        rng = substream(seed, "shots")

    def loss(theta):
        counters.loss_evals += 1
        state = circuit.simulate(theta)
        if shots is None:
            return expectation(state, hamiltonian)
        return sampled_expectation(state, hamiltonian, shots, rng=rng)

    return loss


def make_fidelity(circuit: ParameterizedCircuit, shots: int | None = None,
                  seed: int = 0, rng=None):
    """fid(theta_a, theta_b) in public parameter space."""
    if shots is not None and rng is None:
        rng = substream(seed, "shots")
    expanded, jac = circuit.expand_unique()

    def fid(a, b):
        return circuit_fidelity(expanded, jac @ np.asarray(a, float),
                                jac @ np.asarray(b, float), shots=shots, rng=rng)

    return fid


def blackbox_loss(f, circuit: ParameterizedCircuit, shots: int,
                  seed: int = 0, rng=None, cache: dict | None = None):
    """Loss theta -> sum_x p_hat(x) f(x) over sampled bitstrings.

    f is called once per distinct bitstring per evaluation (or once ever
    when a cache dict is supplied), so expensive classical objectives are
    never re-evaluated shot by shot.
    """
    if rng is None:
        rng = substream(seed, "shots")

    def loss(theta):
        counters.loss_evals += 1
        state = circuit.simulate(theta)
        counts = state.probabilities()
        draws = rng.multinomial(shots, counts / counts.sum())
        counters.shots += shots
        total = 0.0
        for x in np.nonzero(draws)[0]:
            x = int(x)
            if cache is not None:
                if x not in cache:
                    cache[x] = f(x)
                val = cache[x]
            else:
                val = f(x)
            total += draws[x] * val
        return total / shots

    return loss


def run_gd(loss, grad, theta0, config: OptimizerConfig) -> OptimizerTrace:
    """Plain gradient descent; loss is evaluated once per iterate for the
    trace, the step uses grad alone."""
    theta = np.array(theta0, dtype=float)
    tr = _Tracker(theta)
    tr.prepend_initial(loss(theta))
    for k in range(1, config.budget + 1):
        theta = theta - config.lr(k) * np.asarray(grad(theta), dtype=float)
        tr.record(theta, loss(theta))
    return tr.finish()


def calibrate_lr(loss, theta0, config: OptimizerConfig, rng) -> float:
    """First-step calibration: probe gradient samples at perturbation C and
    scale A so the first update moves each parameter by about the target."""
    d = len(theta0)
    spec = PerturbationSpec(epsilon=config.pert_const, seed=config.seed)
    probes = [grad_spsa_sample(loss, theta0, spec, rng=rng)
              for _ in range(config.calibration_samples)]
    mean = np.mean(probes, axis=0)
    denom = np.abs(mean).sum()
    if denom == 0:
        raise RuntimeError("calibration probes averaged to zero")
    return float(config.calibration_target * d / denom)


def run_spsa(loss, theta0, config: OptimizerConfig) -> OptimizerTrace:
    """Simultaneous-perturbation descent: exactly 2 loss evaluations per
    iteration (plus 2 per calibration probe and 1 per blocking test).

    The recorded loss is the mean of the two perturbed evaluations; row 0
    has no counted value and records nan.
    """
    theta = np.array(theta0, dtype=float)
    rng = substream(config.seed, "spsa.grad")
    a = config.lr_const
    if a is None:
        a = calibrate_lr(loss, theta, config, rng)
    tr = _Tracker(theta)
    tr.prepend_initial(np.nan)
    spec_seed = PerturbationSpec(epsilon=1.0, seed=config.seed)
    recent = []
    last_proxy = None
    for k in range(1, config.budget + 1):
        eps = config.pert(k)
        delta = spec_seed.draw(rng, len(theta))
        lp = loss(theta + eps * delta)
        lm = loss(theta - eps * delta)
        ghat = (lp - lm) / (2 * eps) * delta
        proxy = 0.5 * (lp + lm)
        candidate = theta - a * (config.lr_offset + k) ** (-config.lr_decay) * ghat
        if config.blocking and last_proxy is not None and len(recent) >= 2:
            cand_loss = loss(candidate)
            if cand_loss > last_proxy + 2.0 * np.std(recent):
                tr.record(theta, proxy)  # step rejected
                recent = (recent + [proxy])[-25:]
                continue
        theta = candidate
        last_proxy = proxy
        recent = (recent + [proxy])[-25:]
        tr.record(theta, proxy)
    return tr.finish()


def run_qng(loss, grad, qgt_fn, theta0, config: OptimizerConfig) -> OptimizerTrace:
    """Natural gradient descent: theta <- theta - eta * g^+ grad."""
    solver = config.solver or SolverConfig(method="diag_shift", delta=1e-3)
    theta = np.array(theta0, dtype=float)
    tr = _Tracker(theta)
    tr.prepend_initial(loss(theta))
    for k in range(1, config.budget + 1):
        g = qgt_fn(theta)
        direction = solve_regularized(g, np.asarray(grad(theta), dtype=float),
                                      solver)
        theta = theta - config.lr(k) * direction
        tr.record(theta, loss(theta))
    return tr.finish()


def run_qnspsa(loss, fid, theta0, config: OptimizerConfig) -> OptimizerTrace:
    """SPSA preconditioned with a stochastically averaged metric.

    Per iteration: one gradient sample (2 loss evaluations) and M metric
    samples (4 fidelity evaluations each, M from the resampling schedule);
    the running metric average starts at the identity, is globally averaged
    over iterations, projected to positive form, and regularized with the
    normalized diagonal shift beta before solving.
    """
    theta = np.array(theta0, dtype=float)
    d = len(theta)
    rng_g = substream(config.seed, "spsa.grad")
    rng_q = substream(config.seed, "spsa.qgt")
    est = EstimatorState.identity_init(d, tau1="global", tau2="global")
    solver = SolverConfig(method="normalized_diag_shift", delta=config.beta)
    tr = _Tracker(theta)
    tr.prepend_initial(np.nan)
    spec_seed = PerturbationSpec(epsilon=1.0, seed=config.seed)
    for k in range(1, config.budget + 1):
        eps = config.pert(k)
        spec = PerturbationSpec(epsilon=eps, seed=config.seed)
        delta = spec_seed.draw(rng_g, d)
        lp = loss(theta + eps * delta)
        lm = loss(theta - eps * delta)
        ghat = (lp - lm) / (2 * eps) * delta
        m = (config.resample_initial if k <= config.resample_initial_iters
             else config.resample_steady)
        g_samples = [qgt_spsa_sample(fid, theta, spec, rng=rng_q)
                     for _ in range(m)]
        est = estimator_update(est, g_samples, [np.zeros(d)])
        direction = solve_regularized(psd_project(est.g_bar), ghat, solver)
        theta = theta - config.lr(k) * direction
        tr.record(theta, 0.5 * (lp + lm))
    return tr.finish()
