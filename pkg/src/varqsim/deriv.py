"""Circuit derivatives.

Exact gradients via the parameter-shift rule or a reverse-mode sweep, the
quantum geometric tensor via reverse mode or a Hessian of the fidelity, their
simultaneous-perturbation estimators, and the right-hand sides of variational
real and imaginary time evolution.

All rotation generators are Pauli halves (R(t) = exp(-i t P / 2)), so the
shift rule uses eigenvalue spread 1: shift pi/2, prefactor 1/2. Circuits
whose gates share or rescale parameters are handled by differentiating in the
expanded per-gate angle space and contracting with the Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .circuit import ParameterizedCircuit, fidelity as circuit_fidelity
from .pauli import PauliSum, identity_sum
from .rng import substream
from .state import (counters, apply_gate_inplace, expectation, masks_for,
                    observable_apply, pauli_action, pauli_bilinear)

SHIFT = np.pi / 2


@dataclass(frozen=True)
class PerturbationSpec:
    """Stochastic-perturbation settings: size, seed, direction law."""

    epsilon: float = 1e-2
    seed: int = 0
    distribution: str = "bernoulli"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("need epsilon > 0")
        if self.distribution != "bernoulli":
            raise ValueError("only bernoulli +-1 directions are supported")

    def draw(self, rng, d: int) -> np.ndarray:
        return rng.integers(0, 2, size=d) * 2.0 - 1.0


@dataclass
class QGT:
    """Quantum geometric tensor split into metric, imaginary part, and the
    phase vector p_j = <d_j psi | psi> used for global-phase fixing."""

    g: np.ndarray
    im: np.ndarray
    p: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return self.g + 1j * self.im


def _default_energy(circuit: ParameterizedCircuit, observable: PauliSum):
    def fn(theta):
        return expectation(circuit.simulate(theta), observable)
    return fn


def grad_parameter_shift(circuit: ParameterizedCircuit, observable: PauliSum,
                         theta, energy_fn=None) -> np.ndarray:
    """Exact-form gradient from 2 d energy evaluations.

    energy_fn(circuit, theta) -> float defaults to the exact expectation; a
    shot-based evaluator gives an unbiased stochastic gradient.
    """
    expanded, jac = circuit.expand_unique()
    th = jac @ np.asarray(theta, dtype=float)
    if energy_fn is None:
        energy_fn = _default_energy(expanded, observable)
    else:
        base_fn = energy_fn
        energy_fn = lambda t: base_fn(expanded, t)
    grad = np.zeros(len(th))
    for j in range(len(th)):
        shift = np.zeros(len(th))
        shift[j] = SHIFT
        grad[j] = 0.5 * (energy_fn(th + shift) - energy_fn(th - shift))
    return jac.T @ grad


def grad_finite_diff(loss, theta, eps: float = 1e-5,
                     scheme: str = "central") -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros(len(theta))
    if scheme == "central":
        for j in range(len(theta)):
            e = np.zeros(len(theta))
            e[j] = eps
            grad[j] = (loss(theta + e) - loss(theta - e)) / (2 * eps)
    elif scheme == "forward":
        base = loss(theta)
        for j in range(len(theta)):
            e = np.zeros(len(theta))
            e[j] = eps
            grad[j] = (loss(theta + e) - base) / eps
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return grad


def grad_spsa_sample(loss, theta, spec: PerturbationSpec,
                     rng=None, direction=None) -> np.ndarray:
    """One simultaneous-perturbation gradient sample (2 loss evaluations)."""
    theta = np.asarray(theta, dtype=float)
    if rng is None and direction is None:
        rng = substream(spec.seed, "spsa.grad")
    delta = spec.draw(rng, len(theta)) if direction is None else np.asarray(direction, float)
    eps = spec.epsilon
    diff = loss(theta + eps * delta) - loss(theta - eps * delta)
    # Bernoulli directions are +-1, so elementwise inverse equals delta
    return (diff / (2 * eps)) * delta


def grad_reverse(circuit: ParameterizedCircuit, observable: PauliSum,
                 theta) -> np.ndarray:
    """w_j = <d_j psi| O |psi> for all parameters in one backward sweep.

    The energy gradient is 2 Re(w); the imaginary part feeds real-time
    evolution. Runs in O(circuit length) gate applications with two state
    carriers, never one per parameter.
    """
    expanded, jac = circuit.expand_unique()
    th = jac @ np.asarray(theta, dtype=float)
    ops = expanded.ops
    positions = expanded.param_positions()
    lam_sv = expanded.simulate(th)
    lam = lam_sv.amps
    zeta = observable_apply(lam_sv, observable)
    n = expanded.n
    angles = [g.resolved_angle(th) for g in ops]
    w = np.zeros(len(positions), dtype=complex)
    cursor = len(ops)
    for k in range(len(positions) - 1, -1, -1):
        pos = positions[k]
        for i in range(cursor - 1, pos, -1):
            g = ops[i]
            apply_gate_inplace(lam, n, g.kind, g.qubits, angles[i], adjoint=True)
            apply_gate_inplace(zeta, n, g.kind, g.qubits, angles[i],
                               adjoint=True, check=False)
        cursor = pos + 1
        g = ops[pos]
        xm, yzm, ny = masks_for(n, g.axis, g.qubits)
        # generator G = P/2; w_k = i <lam| G zeta>
        w[k] = 0.5j * pauli_bilinear(lam, zeta, n, xm, yzm, ny)
        counters.generator += 1
    return jac.T @ w


def energy_gradient(circuit: ParameterizedCircuit, observable: PauliSum,
                    theta) -> np.ndarray:
    return 2.0 * np.real(grad_reverse(circuit, observable, theta))


def qgt_reverse(circuit: ParameterizedCircuit, theta) -> QGT:
    """Full quantum geometric tensor in one O(d * circuit length) sweep.

    Uses three state carriers: the forward state, and per row a copy plus a
    generator-applied copy walked backward to meet every earlier parameter.
    """
    expanded, jac = circuit.expand_unique()
    th = jac @ np.asarray(theta, dtype=float)
    ops = expanded.ops
    positions = expanded.param_positions()
    n = expanded.n
    m = len(positions)
    angles = [g.resolved_angle(th) for g in ops]
    masks = []
    for pos in positions:
        g = ops[pos]
        masks.append(masks_for(n, g.axis, g.qubits))

    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    counters.simulations += 1
    smat = np.zeros((m, m), dtype=complex)
    avec = np.zeros(m)
    cursor = 0
    for j in range(m):
        pos = positions[j]
        for i in range(cursor, pos + 1):
            g = ops[i]
            apply_gate_inplace(psi, n, g.kind, g.qubits, angles[i])
        cursor = pos + 1
        xm, yzm, ny = masks[j]
        eta = 0.5 * pauli_action(psi, n, xm, yzm, ny)
        counters.generator += 1
        lam = psi.copy()
        smat[j, j] = np.vdot(eta, eta).real
        avec[j] = np.vdot(lam, eta).real
        wcur = pos
        for k in range(j - 1, -1, -1):
            for i in range(wcur, positions[k], -1):
                g = ops[i]
                apply_gate_inplace(lam, n, g.kind, g.qubits, angles[i], adjoint=True)
                apply_gate_inplace(eta, n, g.kind, g.qubits, angles[i],
                                   adjoint=True, check=False)
            wcur = positions[k]
            xm, yzm, ny = masks[k]
            smat[j, k] = 0.5 * pauli_bilinear(eta, lam, n, xm, yzm, ny)
            smat[k, j] = np.conj(smat[j, k])
            counters.generator += 1
    # phase vector p_j = <d_j psi|psi> = i <psi|G_j|psi>
    p = 1j * avec
    q = smat - np.outer(p, p.conj())
    q_pub = jac.T @ q @ jac
    p_pub = jac.T @ p
    g = 0.5 * (q_pub.real + q_pub.real.T)
    im = 0.5 * (q_pub.imag - q_pub.imag.T)
    return QGT(g=g, im=im, p=p_pub)


def qgt_hessian_form(circuit: ParameterizedCircuit, theta, method: str = "psr",
                     eps: float = 1e-5, fidelity_fn=None) -> np.ndarray:
    """Metric g from second derivatives of the two-point fidelity.

    g_jk = -(1/2) d_j d_k F(theta, theta + v) at v = 0, evaluated with the
    four-point shift rule (method="psr", exact for Pauli-half generators) or
    central differences (method="fd"). Uses exactly 2 d^2 fidelity calls;
    the diagonal saves two calls per row via F(theta, theta) = 1.

    fidelity_fn(theta_a, theta_b) overrides the exact compute-uncompute
    fidelity; it receives vectors in the expanded per-gate angle space.
    """
    expanded, jac = circuit.expand_unique()
    th = jac @ np.asarray(theta, dtype=float)
    m = len(th)
    if fidelity_fn is None:
        fidelity_fn = lambda a, b: circuit_fidelity(expanded, a, b)
    if method == "psr":
        s, pref = SHIFT, 1.0 / 8.0
    elif method == "fd":
        s, pref = eps, 1.0 / (8.0 * eps * eps)
    else:
        raise ValueError(f"unknown method {method!r}")

    def fid(v):
        return fidelity_fn(th, th + v)

    g = np.zeros((m, m))
    for j in range(m):
        ej = np.zeros(m)
        ej[j] = 1.0
        g[j, j] = -pref * (fid(2 * s * ej) + fid(-2 * s * ej) - 2.0)
        for k in range(j):
            ek = np.zeros(m)
            ek[k] = 1.0
            val = -pref * (fid(s * (ej + ek)) - fid(s * (ej - ek))
                           - fid(s * (ek - ej)) + fid(-s * (ej + ek)))
            g[j, k] = g[k, j] = val
    return jac.T @ g @ jac


def qgt_spsa_sample(fidelity_fn, theta, spec: PerturbationSpec, rng=None,
                    directions=None) -> np.ndarray:
    """One symmetric rank-two metric sample from 4 fidelity evaluations.

    fidelity_fn(theta_a, theta_b) -> float. Unbiased for the true metric up
    to O(epsilon^2); callers average many samples and regularize.
    """
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    if rng is None and directions is None:
        rng = substream(spec.seed, "spsa.qgt")
    if directions is None:
        d1, d2 = spec.draw(rng, d), spec.draw(rng, d)
    else:
        d1, d2 = (np.asarray(v, dtype=float) for v in directions)
    eps = spec.epsilon
    df = (fidelity_fn(theta, theta + eps * d1 + eps * d2)
          - fidelity_fn(theta, theta + eps * d1 - eps * d2)
          - fidelity_fn(theta, theta - eps * d1 + eps * d2)
          + fidelity_fn(theta, theta - eps * d1 - eps * d2))
    outer = np.outer(d1, d2)
    return (-df / (8.0 * eps * eps)) * 0.5 * (outer + outer.T)


def evolution_gradient(circuit: ParameterizedCircuit, hamiltonian: PauliSum,
                       theta, mode: str, method: str = "reverse",
                       spec: PerturbationSpec | None = None, rng=None,
                       energy_fn=None) -> np.ndarray:
    """Right-hand side b of the variational evolution equation g theta_dot = b.

    imaginary: b = -grad E / 2, via the reverse sweep (method="reverse"),
        the shift rule on a supplied energy evaluator (method="psr"), or one
        simultaneous-perturbation sample (method="spsa").
    real: b_k = Im(<d_k psi|H|psi>) - E Im(<d_k psi|psi>), exact reverse
        sweeps only; no unbiased sampling scheme exists for this right-hand
        side, so shot-based modes must go through the dual formulation.
    """
    if mode == "imaginary":
        if method == "reverse":
            return -np.real(grad_reverse(circuit, hamiltonian, theta))
        if method == "psr":
            return -0.5 * grad_parameter_shift(circuit, hamiltonian, theta,
                                               energy_fn=energy_fn)
        if method == "spsa":
            if spec is None:
                raise ValueError("spsa needs a PerturbationSpec")
            if energy_fn is None:
                loss = _default_energy(circuit, hamiltonian)
            else:
                loss = lambda t: energy_fn(circuit, t)
            return -0.5 * grad_spsa_sample(loss, theta, spec, rng=rng)
        raise ValueError(f"unknown method {method!r}")
    if mode == "real":
        if method != "reverse":
            raise NotImplementedError(
                "real-time b has no direct sampled estimator; use dual evolution")
        w = grad_reverse(circuit, hamiltonian, theta)
        v = grad_reverse(circuit, identity_sum(circuit.n), theta)
        energy = expectation(circuit.simulate(theta), hamiltonian)
        return np.imag(w) - energy * np.imag(v)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class EstimatorState:
    """Exponentially averaged metric and right-hand-side estimators.

    k counts samples already folded in (an identity or exact seed counts as
    one). tau may be a float (fixed momentum) or "global" for the running
    mean tau_k = k / (k + 1).
    """

    g_bar: np.ndarray
    b_bar: np.ndarray
    tau1: float | str = 0.0
    tau2: float | str = 0.0
    k: int = 1

    @classmethod
    def identity_init(cls, d: int, tau1=0.0, tau2=0.0) -> "EstimatorState":
        return cls(g_bar=np.eye(d), b_bar=np.zeros(d), tau1=tau1, tau2=tau2, k=1)

    def _momentum(self, tau) -> float:
        if tau == "global":
            return self.k / (self.k + 1.0)
        return float(tau)


def estimator_update(est: EstimatorState, g_samples, b_samples) -> EstimatorState:
    """Fold a batch of raw samples into the running averages.

    The batch is averaged first, then blended with momentum; the stored
    averages stay raw (possibly indefinite), positivity is enforced only at
    solve time via psd_project.
    """
    g_new = np.mean(np.asarray(g_samples, dtype=float), axis=0)
    b_new = np.mean(np.asarray(b_samples, dtype=float), axis=0)
    t1 = est._momentum(est.tau1)
    t2 = est._momentum(est.tau2)
    return EstimatorState(
        g_bar=t1 * est.g_bar + (1.0 - t1) * g_new,
        b_bar=t2 * est.b_bar + (1.0 - t2) * b_new,
        tau1=est.tau1, tau2=est.tau2, k=est.k + 1)


def psd_project(mat: np.ndarray) -> np.ndarray:
    """Closest-in-spirit positive form: flip negative eigenvalues in place."""
    sym = 0.5 * (mat + mat.T)
    evals, vecs = np.linalg.eigh(sym)
    return (vecs * np.abs(evals)) @ vecs.T
