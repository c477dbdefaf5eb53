"""Dense reference routes: exact real/imaginary time evolution, Gibbs
states, and Trotter circuit construction.

These are the ground-truth oracles the variational engines are compared
against; real and imaginary evolution each come in two independent numerical
routes so the references can cross-check each other.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .circuit import Gate, ParameterizedCircuit
from .pauli import PauliSum, all_commuting, diagonalizing_basis
from .state import DensityOperator, Statevector


def _as_times(times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("times must be nonnegative and ascending")
    return t


def exact_real_evolve(hamiltonian: PauliSum, state: Statevector, times,
                      method: str = "eig", dt: float = 1e-3):
    """States exp(-i H t)|psi> at the requested times.

    eig: spectral decomposition, exact at any time.
    cayley: repeated Cayley steps (I + i dt H/2)^-1 (I - i dt H/2), an
        unconditionally unitary O(dt^2) integrator; every requested time must
        sit on the dt grid.
    Returns a list of Statevector (or a single one for scalar input).
    """
    times_arr = _as_times(times)
    scalar = np.isscalar(times) or getattr(times, "ndim", 1) == 0
    hmat = hamiltonian.matrix()
    if state.n != hamiltonian.n:
        raise ValueError("size mismatch")
    out = []
    if method == "eig":
        evals, vecs = np.linalg.eigh(hmat)
        coeff = vecs.conj().T @ state.amps
        for t in times_arr:
            amps = vecs @ (np.exp(-1j * evals * t) * coeff)
            out.append(Statevector(state.n, amps))
    elif method == "cayley":
        steps = times_arr / dt
        if np.max(np.abs(steps - np.round(steps))) > 1e-9:
            raise ValueError("cayley times must be multiples of dt")
        eye = np.eye(hmat.shape[0])
        lu = lu_factor(eye + 0.5j * dt * hmat)
        bmat = eye - 0.5j * dt * hmat
        amps = state.amps.copy()
        done = 0
        for t, k in zip(times_arr, np.round(steps).astype(int)):
            while done < k:
                amps = lu_solve(lu, bmat @ amps)
                done += 1
            out.append(Statevector(state.n, amps.copy()))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if scalar else out


def exact_imag_evolve(hamiltonian: PauliSum, state: Statevector, times,
                      method: str = "eig", dt: float = 1e-3,
                      check: bool = True, check_tol: float = 1e-6):
    """Normalized exp(-H tau)|psi> at the requested imaginary times.

    eig: spectral decomposition (spectrum shifted before exponentiating so
        large tau stays finite).
    taylor: repeated normalized (I - dt H) steps, first order in dt; with
        check=True the run is repeated at dt/2 and the energy traces must
        agree within check_tol.
    """
    times_arr = _as_times(times)
    scalar = np.isscalar(times) or getattr(times, "ndim", 1) == 0
    if state.n != hamiltonian.n:
        raise ValueError("size mismatch")
    hmat = hamiltonian.matrix()

    def _run_eig():
        evals, vecs = np.linalg.eigh(hmat)
        coeff = vecs.conj().T @ state.amps
        states = []
        for tau in times_arr:
            w = np.exp(-(evals - evals.min()) * tau) * coeff
            amps = vecs @ w
            norm = np.linalg.norm(amps)
            if norm < 1e-300:
                raise RuntimeError("state annihilated by projection")
            states.append(Statevector(state.n, amps / norm))
        return states

    def _run_taylor(step):
        steps = times_arr / step
        if np.max(np.abs(steps - np.round(steps))) > 1e-9:
            raise ValueError("taylor times must be multiples of dt")
        amps = state.amps.copy()
        states = []
        done = 0
        for k in np.round(steps).astype(int):
            while done < k:
                amps = amps - step * (hmat @ amps)
                amps /= np.linalg.norm(amps)
                done += 1
            states.append(Statevector(state.n, amps.copy()))
        return states

    if method == "eig":
        out = _run_eig()
    elif method == "taylor":
        out = _run_taylor(dt)
        if check:
            ref = _run_taylor(dt / 2)
            for a, b in zip(out, ref):
                ea = float(np.vdot(a.amps, hmat @ a.amps).real)
                eb = float(np.vdot(b.amps, hmat @ b.amps).real)
                if abs(ea - eb) > check_tol:
                    raise RuntimeError(
                        f"taylor step not converged: dE={abs(ea - eb):.3e}, shrink dt")
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if scalar else out


def gibbs_state(hamiltonian: PauliSum, beta: float) -> DensityOperator:
    """exp(-beta H) / Z via eigendecomposition."""
    if beta < 0:
        raise ValueError("need beta >= 0")
    evals, vecs = np.linalg.eigh(hamiltonian.matrix())
    w = np.exp(-beta * (evals - evals.min()))
    w /= w.sum()
    rho = (vecs * w) @ vecs.conj().T
    return DensityOperator(hamiltonian.n, rho)


def thermal_average(hamiltonian: PauliSum, beta: float,
                    observable: PauliSum) -> float:
    return gibbs_state(hamiltonian, beta).expectation(observable)


def _pauli_exponential_ops(coeff: float, ps, angle_scale: float) -> list:
    """Gates for exp(-i coeff * angle_scale * P), lowered to basis changes,
    a CX parity chain onto the highest support qubit, and one RZ."""
    support = ps.support()
    if not support:
        raise ValueError("identity term has no circuit realization; drop constants")
    bases, _ = diagonalizing_basis(ps)
    pre = []
    for q in support:
        for g in bases[q - 1]:
            pre.append(Gate(g, (q,)))
    chain = [Gate("CX", (a, b)) for a, b in zip(support, support[1:])]
    rz = [Gate("RZ", (support[-1],), angle=2.0 * coeff * angle_scale)]
    post = []
    for q in reversed(support):
        for g in reversed(bases[q - 1]):
            # S undoes SDG; H is self-inverse
            post.append(Gate({"SDG": "S", "S": "SDG", "H": "H"}[g], (q,)))
    return pre + chain + rz + list(reversed(chain)) + post


def trotter_circuit(groups, t: float, n_steps: int,
                    order: int = 1) -> ParameterizedCircuit:
    """Product-formula circuit for exp(-i H t), H = sum of the groups.

    groups is a list of PauliSum whose terms commute within each group. Order
    1 applies every group for dt = t / n_steps per step; order 2 sandwiches
    the first group between half-steps of the others (groups K..2 at dt/2,
    group 1 at dt, groups 2..K at dt/2). No gates are merged across steps.
    """
    groups = list(groups)
    if not groups:
        raise ValueError("need at least one group")
    if n_steps < 1:
        raise ValueError("need n_steps >= 1")
    n = groups[0].n
    for g in groups:
        if g.n != n:
            raise ValueError("group size mismatch")
        if not all_commuting(g):
            raise ValueError("terms within a group must commute")
    dt = t / n_steps

    def group_ops(group, scale):
        ops = []
        for c, ps in group:
            ops += _pauli_exponential_ops(c, ps, scale)
        return ops

    ops = []
    for _ in range(n_steps):
        if order == 1:
            for g in groups:
                ops += group_ops(g, dt)
        elif order == 2:
            for g in reversed(groups[1:]):
                ops += group_ops(g, dt / 2)
            ops += group_ops(groups[0], dt)
            for g in groups[1:]:
                ops += group_ops(g, dt / 2)
        else:
            raise ValueError("order must be 1 or 2")
    return ParameterizedCircuit(n, 0, ops, meta={"kind": "trotter", "order": order,
                                                 "n_steps": n_steps, "t": t})
