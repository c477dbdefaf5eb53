"""Application drivers built on the evolution and optimization engines:
thermal-state sampling chains, generative Boltzmann-machine training,
Max-Cut ground-state search, and the optimizer convergence-region study.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np

from .circuit import Gate, ParameterizedCircuit, build_ansatz, initial_parameters
from .deriv import energy_gradient, evolution_gradient, qgt_reverse
from .evolve import EvolutionConfig, saqite_evolve
from .optimize import OptimizerConfig, OptimizerTrace, run_gd, run_qng, run_spsa
from .pauli import Graph, PauliString, PauliSum, build_model
from .rng import substream
from .solve import SolverConfig, solve_regularized
from .state import (DensityOperator, Statevector, counters, expectation,
                    partial_trace, pauli_action)


# ---------------------------------------------------------------------------
# thermal sampling chain


@dataclass(frozen=True)
class QmettsConfig:
    beta: float
    n_samples: int
    burn_in: int = 0
    seed: int = 0
    bases: tuple = ("X", "Y")  # collapse basis cycles through these per step


@dataclass
class QmettsResult:
    values: np.ndarray     # recorded estimates after burn-in
    mean: float
    stderr: float

    @property
    def n(self) -> int:
        return len(self.values)


def collapse_to_product(state: Statevector, basis: str, rng) -> Statevector:
    """Projectively measure every qubit in the given Pauli basis.

    Collapses qubit by qubit with Born-rule probabilities; the result is the
    corresponding product of single-qubit eigenstates.
    """
    if basis not in ("X", "Y", "Z"):
        raise ValueError("basis must be X, Y or Z")
    amps = state.amps.copy()
    n = state.n
    for q in range(1, n + 1):
        xm = (1 << (q - 1)) if basis in ("X", "Y") else 0
        yzm = (1 << (q - 1)) if basis in ("Y", "Z") else 0
        ny = 1 if basis == "Y" else 0
        pa = pauli_action(amps, n, xm, yzm, ny)
        exp_p = float(np.vdot(amps, pa).real)
        p_plus = min(max(0.5 * (1.0 + exp_p), 0.0), 1.0)
        sign = 1.0 if rng.random() < p_plus else -1.0
        weight = p_plus if sign > 0 else 1.0 - p_plus
        amps = 0.5 * (amps + sign * pa) / np.sqrt(weight)
    return Statevector(n, amps)


def qmetts_chain(hamiltonian: PauliSum, observable: PauliSum,
                 config: QmettsConfig) -> QmettsResult:
    """Markov chain of minimally entangled thermal states.

    Each step evolves the current product state to imaginary time beta/2,
    records <observable>, and collapses back to a product state in a basis
    that alternates through config.bases. The chain starts from |+...+>.
    """
    n = hamiltonian.n
    rng = substream(config.seed, "shots")
    evals, vecs = np.linalg.eigh(hamiltonian.matrix())

    def imag_evolve(state):
        w = np.exp(-(evals - evals.min()) * config.beta / 2.0)
        amps = vecs @ (w * (vecs.conj().T @ state.amps))
        return Statevector(n, amps / np.linalg.norm(amps))

    plus = np.array([1.0, 1.0]) / np.sqrt(2.0)
    state = Statevector.product([plus] * n)
    values = []
    total = config.burn_in + config.n_samples
    for i in range(total):
        thermal = imag_evolve(state)
        if i >= config.burn_in:
            values.append(expectation(thermal, observable))
        basis = config.bases[i % len(config.bases)]
        state = collapse_to_product(thermal, basis, rng)
    values = np.array(values)
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return QmettsResult(values=values, mean=float(values.mean()), stderr=stderr)


# ---------------------------------------------------------------------------
# Gibbs-state preparation on a purified register


def _embed_doubled(hamiltonian: PauliSum) -> PauliSum:
    """Lift a system observable onto the doubled register, identity on the
    ancilla half (system qubits keep their indices 1..n)."""
    n2 = 2 * hamiltonian.n
    return PauliSum([
        (c, PauliString.from_chars(n2, {q: ps.char(q) for q in ps.support()}))
        for c, ps in hamiltonian.terms
    ])


def run_gibbs_prep(hamiltonian: PauliSum, beta: float, backend: str = "exact",
                   circuit: ParameterizedCircuit | None = None,
                   config: EvolutionConfig | None = None) -> DensityOperator:
    """Prepare e^(-beta H)/Z on the system register via a purification.

    The register is doubled; the ansatz's Bell initialization maximally
    entangles each system qubit with an ancilla. Imaginary-time evolution of
    the pure doubled state to tau = beta/2 under the embedded Hamiltonian,
    followed by tracing out the ancillas, leaves the Gibbs state on the
    system. backend "exact" evolves with the dense oracle, "varqite" with
    the variational engine (default: dt=0.05, the engine's solver).
    """
    if beta < 0:
        raise ValueError("need beta >= 0")
    n_sys = hamiltonian.n
    if circuit is None:
        circuit = build_ansatz("gibbs_pair")
    if circuit.n != 2 * n_sys:
        raise ValueError(f"ansatz acts on {circuit.n} qubits, "
                         f"need {2 * n_sys} for a purification")
    theta0 = initial_parameters(circuit, "bell")
    keep = tuple(range(1, n_sys + 1))
    if beta == 0:
        return partial_trace(circuit.simulate(theta0), keep)
    h_doubled = _embed_doubled(hamiltonian)
    if backend == "exact":
        from .oracle import exact_imag_evolve
        final = exact_imag_evolve(h_doubled, circuit.simulate(theta0),
                                  beta / 2.0)
    elif backend == "varqite":
        from .evolve import varqte_evolve
        if config is None:
            config = EvolutionConfig(mode="imaginary", t_total=beta / 2.0,
                                     dt=0.05)
        trace = varqte_evolve(circuit, h_doubled, theta0, config)
        final = circuit.simulate(trace.thetas[-1])
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return partial_trace(final, keep)


# ---------------------------------------------------------------------------
# Boltzmann machine on a purified pair ansatz


def boltzmann_hamiltonian(weight: float, h1: float, h2: float) -> PauliSum:
    """H = -w Z1 Z2 - h1 Z1 - h2 Z2 embedded on the 4-qubit purification
    (system qubits 1 and 2)."""
    return PauliSum([
        (-weight, PauliString.from_chars(4, {1: "Z", 2: "Z"})),
        (-h1, PauliString.from_chars(4, {1: "Z"})),
        (-h2, PauliString.from_chars(4, {2: "Z"})),
    ])


def boltzmann_target(weight: float, h1: float, h2: float,
                     beta: float = 1.0) -> np.ndarray:
    """Exact Gibbs distribution over the two visible bits (LSB = bit 1)."""
    probs = np.zeros(4)
    for k in range(4):
        z1 = 1.0 - 2.0 * (k & 1)
        z2 = 1.0 - 2.0 * ((k >> 1) & 1)
        energy = -weight * z1 * z2 - h1 * z1 - h2 * z2
        probs[k] = np.exp(-beta * energy)
    return probs / probs.sum()


def visible_marginal(state: Statevector) -> np.ndarray:
    """Probabilities of the two system qubits of the 4-qubit purification."""
    p = state.probabilities()
    return np.array([p[(np.arange(16) & 3) == a].sum() for a in range(4)])


@dataclass(frozen=True)
class VarqbmConfig:
    """ite_backend picks the Gibbs-preparation subroutine per loss call:
    "varqite" (deterministic linear-solve evolution), "qnspsa" (stochastic
    natural-gradient steps with a globally averaged metric), or "exact"
    (dense propagator)."""

    budget: int = 100
    lr: float = 0.1
    perturbation: float = 0.1
    seed: int = 0
    beta: float = 1.0
    ite_backend: str = "varqite"
    ite_dt: float = 0.05
    ite_samples: int = 10
    ite_perturbation: float = 1e-2
    ite_delta: float = 0.1


def _qnspsa_ite(circuit, hamiltonian, theta0, config, seed) -> np.ndarray:
    """Natural-gradient imaginary time: theta <- theta + dt g^-1 b with g
    averaged over all metric samples so far (seeded with the exact metric
    at the start point), projected to positive form and regularized."""
    from .circuit import fidelity as circuit_fidelity
    from .deriv import (EstimatorState, PerturbationSpec, estimator_update,
                        grad_spsa_sample, psd_project, qgt_spsa_sample)
    theta = theta0.copy()
    expanded, jac = circuit.expand_unique()
    fid = lambda a, b: circuit_fidelity(expanded, jac @ a, jac @ b)
    energy = lambda th: expectation(circuit.simulate(th), hamiltonian)
    rng_g = substream(seed, "spsa.qgt")
    rng_b = substream(seed, "spsa.grad")
    spec = PerturbationSpec(epsilon=config.ite_perturbation, seed=seed)
    est = EstimatorState(
        g_bar=qgt_reverse(circuit, theta).g,
        b_bar=evolution_gradient(circuit, hamiltonian, theta, "imaginary"),
        tau1="global", tau2=0.0)
    solver = SolverConfig(method="normalized_diag_shift",
                          delta=config.ite_delta)
    steps = max(1, int(round(config.beta / 2.0 / config.ite_dt)))
    for _ in range(steps):
        gs = [qgt_spsa_sample(fid, theta, spec, rng=rng_g)
              for _ in range(config.ite_samples)]
        bs = [-0.5 * grad_spsa_sample(energy, theta, spec, rng=rng_b)
              for _ in range(config.ite_samples)]
        est = estimator_update(est, gs, bs)
        dth = solve_regularized(psd_project(est.g_bar), est.b_bar, solver)
        theta = theta + config.ite_dt * dth
    return theta


def _varqbm_model_probs(weight, h1, h2, config, seed_offset) -> np.ndarray:
    """Train-forward pass: imaginary-time evolve the purification to
    beta/2 under the model Hamiltonian and read off the visible marginal."""
    circuit = build_ansatz("gibbs_pair")
    theta0 = initial_parameters(circuit, "bell")
    h_model = boltzmann_hamiltonian(weight, h1, h2)
    if config.ite_backend == "varqite":
        from .evolve import varqte_evolve
        econf = EvolutionConfig(mode="imaginary", t_total=config.beta / 2.0,
                                dt=config.ite_dt,
                                solver=SolverConfig(method="diag_shift",
                                                    delta=config.ite_delta))
        trace = varqte_evolve(circuit, h_model, theta0, econf)
        final = trace.thetas[-1]
    elif config.ite_backend == "qnspsa":
        final = _qnspsa_ite(circuit, h_model, theta0, config,
                            seed=config.seed + 100003 * seed_offset)
    elif config.ite_backend == "exact":
        from .oracle import exact_imag_evolve
        state = exact_imag_evolve(h_model, circuit.simulate(theta0),
                                  config.beta / 2.0)
        return visible_marginal(state)
    else:
        raise ValueError(f"unknown ite_backend {config.ite_backend!r}")
    return visible_marginal(circuit.simulate(final))


@dataclass
class VarqbmResult:
    params: np.ndarray          # (w, h1, h2) after training
    model_probs: np.ndarray
    target_probs: np.ndarray
    tv_distance: float
    losses: np.ndarray


def varqbm_train(target_probs, config: VarqbmConfig) -> VarqbmResult:
    """Fit (w, h1, h2) so the purified Gibbs marginal matches target_probs,
    by SPSA on the cross-entropy of the visible distribution.

    With the stochastic backend the two probe evaluations of one SPSA
    iteration share the inner random stream, so the loss difference is not
    swamped by preparation noise; the reported final distribution is then
    the mean over 10 fresh preparations.
    """
    target = np.asarray(target_probs, dtype=float)
    rng_init = substream(config.seed, "varqbm.init")
    params0 = rng_init.uniform(-2.0, 2.0, size=3)
    eval_counter = [0]

    def loss(params):
        counters.loss_evals += 1
        eval_counter[0] += 1
        probs = _varqbm_model_probs(params[0], params[1], params[2], config,
                                    seed_offset=(eval_counter[0] + 1) // 2)
        if np.any(probs < 1e-12):
            warnings.warn("clipping visible probabilities at 1e-12")
            probs = np.clip(probs, 1e-12, None)
        return float(-(target * np.log(probs)).sum())

    opt = OptimizerConfig(budget=config.budget, lr_const=config.lr,
                          lr_decay=0.0, pert_const=config.perturbation,
                          pert_decay=0.0, seed=config.seed)
    trace = run_spsa(loss, params0, opt)
    final = trace.thetas[-1]
    n_preps = 10 if config.ite_backend == "qnspsa" else 1
    model = np.mean([
        _varqbm_model_probs(final[0], final[1], final[2], config,
                            seed_offset=1000 + j)
        for j in range(n_preps)], axis=0)
    tv = 0.5 * float(np.abs(model - target).sum())
    return VarqbmResult(params=final, model_probs=model, target_probs=target,
                        tv_distance=tv, losses=trace.losses)


# ---------------------------------------------------------------------------
# Max-Cut


def circle_graph(n: int = 15, w1: float = 20.0, w2: float = -20.0,
                 offsets=(1, 3)) -> Graph:
    """Circulant graph: weight w1 edges at the first offset, w2 at the
    second, nodes on a ring."""
    edges = []
    for off, w in zip(offsets, (w1, w2)):
        for j in range(1, n + 1):
            k = (j + off - 1) % n + 1
            edges.append((j, k, w))
    return Graph(n, edges)


@dataclass
class MaxcutResult:
    trace: object
    final_probs: np.ndarray
    optimal_set: list
    optimal_mass: float
    best_bitstring: int
    best_cut: float


def maxcut_saqite(graph: Graph, circuit: ParameterizedCircuit, theta0,
                  config: EvolutionConfig) -> MaxcutResult:
    """SA-QITE ground-state search on the cut Hamiltonian; reports the
    probability mass on the brute-force optimal configurations."""
    hamiltonian = build_model("maxcut", graph=graph)
    trace = saqite_evolve(circuit, hamiltonian, theta0, config)
    final = circuit.simulate(trace.thetas[-1])
    probs = final.probabilities()
    best, optimal = graph.max_cut_brute_force()
    mass = float(probs[optimal].sum())
    best_bit = int(np.argmax(probs))
    return MaxcutResult(trace=trace, final_probs=probs, optimal_set=optimal,
                        optimal_mass=mass, best_bitstring=best_bit,
                        best_cut=graph.cut_value(best_bit))


# ---------------------------------------------------------------------------
# optimizer convergence regions


def two_parameter_circuit() -> ParameterizedCircuit:
    """RX on qubit 1 followed by a controlled RY (decomposed) onto qubit 2.

    Together with a diagonal two-qubit Hamiltonian this gives a loss
    landscape whose natural-gradient flow escapes the theta_1 = 0 axis
    everywhere except the axes themselves.
    """
    ops = [
        Gate("RX", (1,), index=0),
        Gate("RY", (2,), index=1, coeff=0.5),
        Gate("CX", (1, 2)),
        Gate("RY", (2,), index=1, coeff=-0.5),
        Gate("CX", (1, 2)),
    ]
    return ParameterizedCircuit(2, 2, ops, meta={"kind": "two_parameter"})


def staircase_hamiltonian() -> PauliSum:
    """diag(1, 2, 3, 0) = 1.5 I + 0.5 Z_1 - Z_1 Z_2; minimum 0 at |11>."""
    return PauliSum([
        (1.5, "II"),
        (0.5, PauliString.from_chars(2, {1: "Z"})),
        (-1.0, PauliString.from_chars(2, {1: "Z", 2: "Z"})),
    ])


def convergence_region(optimizer: str, grid: np.ndarray, budget: int,
                       eta: float, tol: float = 1e-4) -> np.ndarray:
    """Boolean convergence grid for the two-parameter landscape.

    Runs the optimizer from every (theta_1, theta_2) start on the grid and
    marks the starts whose final loss reaches the global minimum within tol.
    """
    circuit = two_parameter_circuit()
    hamiltonian = staircase_hamiltonian()

    def loss(theta):
        return expectation(circuit.simulate(theta), hamiltonian)

    def grad(theta):
        return energy_gradient(circuit, hamiltonian, theta)

    config = OptimizerConfig(budget=budget, lr_const=eta, lr_decay=0.0)
    result = np.zeros((len(grid), len(grid)), dtype=bool)
    for i, t1 in enumerate(grid):
        for j, t2 in enumerate(grid):
            theta0 = np.array([t1, t2])
            if optimizer == "gd":
                tr = run_gd(loss, grad, theta0, config)
            elif optimizer == "qng":
                tr = run_qng(loss, grad,
                             lambda th: qgt_reverse(circuit, th).g,
                             theta0, config)
            else:
                raise ValueError(f"unknown optimizer {optimizer!r}")
            result[i, j] = tr.losses[-1] < tol
    return result
