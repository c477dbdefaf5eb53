"""Dense statevector simulation: gate kernels, expectation values, sampling,
partial trace, and a tensored readout-error model.

Conventions:
  * basis state k stores qubit j in bit (j - 1); qubit 1 is the least
    significant bit and a ket label reads |q_n ... q_1>.
  * public qubit indices are 1-based.
  * gates act in place on a (2^n,) complex array; every application is
    followed by a norm check, drift beyond 1e-8 raises NormDriftError.
"""

from __future__ import annotations

import numpy as np

from .pauli import PauliString, PauliSum, diagonalizing_basis
from .rng import substream

NORM_TOL = 1e-8

_SQ2 = np.sqrt(2.0)

FIXED_1Q = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / _SQ2,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "SX": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
}


class NormDriftError(RuntimeError):
    """Statevector norm drifted beyond tolerance after a gate."""


class OpCounter:
    """Global tally of simulator work.

    unitary: gate applications on any statevector.
    generator: Pauli-generator applications inside derivative passes.
    observable: observable applications, one per PauliSum term.
    simulations: full circuit simulations.
    fidelities: circuit-level fidelity evaluations.
    loss_evals: scalar loss evaluations in optimizers.
    shots: total measurement shots drawn.
    """

    _FIELDS = ("unitary", "generator", "observable", "simulations",
               "fidelities", "loss_evals", "shots")

    def __init__(self):
        self.reset()

    def reset(self):
        for f in self._FIELDS:
            setattr(self, f, 0)

    def snapshot(self) -> dict:
        return {f: getattr(self, f) for f in self._FIELDS}

    @property
    def circuits(self) -> int:
        """Circuit executions: one per simulation, two per fidelity
        (compute-uncompute runs the circuit twice)."""
        return self.simulations + 2 * self.fidelities

    def __repr__(self):
        inner = ", ".join(f"{f}={getattr(self, f)}" for f in self._FIELDS)
        return f"OpCounter({inner})"


counters = OpCounter()

# small index caches keyed by (n, masks); cleared when they grow too large
_SIGN_CACHE: dict = {}
_XOR_CACHE: dict = {}
_SWAP_CACHE: dict = {}
_CACHE_CAP = 512


def _signs(n: int, mask: int) -> np.ndarray:
    key = (n, mask)
    out = _SIGN_CACHE.get(key)
    if out is None:
        if len(_SIGN_CACHE) > _CACHE_CAP:
            _SIGN_CACHE.clear()
        k = np.arange(1 << n, dtype=np.uint64)
        out = 1.0 - 2.0 * (np.bitwise_count(k & np.uint64(mask)) & 1)
        _SIGN_CACHE[key] = out
    return out


def _xor_index(n: int, mask: int) -> np.ndarray:
    key = (n, mask)
    out = _XOR_CACHE.get(key)
    if out is None:
        if len(_XOR_CACHE) > _CACHE_CAP:
            _XOR_CACHE.clear()
        out = np.arange(1 << n, dtype=np.int64) ^ mask
        _XOR_CACHE[key] = out
    return out


def masks_for(n: int, axis: str, qubits) -> tuple[int, int, int]:
    """(flip mask, phase mask, Y count) for Pauli `axis` on given qubits."""
    if len(axis) != len(qubits):
        raise ValueError("axis/qubit length mismatch")
    xmask = yzmask = ny = 0
    for ch, q in zip(axis, qubits):
        bit = 1 << (q - 1)
        if ch in ("X", "Y"):
            xmask |= bit
        if ch in ("Y", "Z"):
            yzmask |= bit
        if ch == "Y":
            ny += 1
    return xmask, yzmask, ny


def pauli_action(amps: np.ndarray, n: int, xmask: int, yzmask: int, ny: int) -> np.ndarray:
    """Return P @ amps for the Pauli encoded by the masks (new array)."""
    phase = (1j ** (ny % 4)) * _signs(n, yzmask)
    if xmask == 0:
        return phase * amps
    out = np.empty_like(amps)
    out[_xor_index(n, xmask)] = phase * amps
    return out


def pauli_bilinear(bra: np.ndarray, ket: np.ndarray, n: int,
                   xmask: int, yzmask: int, ny: int) -> complex:
    """<bra| P |ket> without materializing P|ket>."""
    phase = (1j ** (ny % 4)) * _signs(n, yzmask)
    if xmask == 0:
        return complex(np.vdot(bra, phase * ket))
    return complex(np.vdot(bra[_xor_index(n, xmask)], phase * ket))


def _check_norm(amps: np.ndarray):
    norm = np.sqrt(np.vdot(amps, amps).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise NormDriftError(f"norm drifted to {norm!r}")


def _apply_1q(amps: np.ndarray, n: int, mat: np.ndarray, q: int):
    low = 1 << (q - 1)
    a = amps.reshape(-1, 2, low)
    a0 = a[:, 0, :].copy()
    a1 = a[:, 1, :]
    a[:, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    a[:, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1


def _swap_indices(n: int, control: int, target: int):
    key = (n, control, target)
    out = _SWAP_CACHE.get(key)
    if out is None:
        if len(_SWAP_CACHE) > _CACHE_CAP:
            _SWAP_CACHE.clear()
        k = np.arange(1 << n, dtype=np.int64)
        mc, mt = 1 << (control - 1), 1 << (target - 1)
        i0 = k[((k & mc) != 0) & ((k & mt) == 0)]
        out = (i0, i0 | mt)
        _SWAP_CACHE[key] = out
    return out


def _both_set(n: int, qa: int, qb: int):
    key = (n, min(qa, qb), max(qa, qb), "cz")
    out = _SWAP_CACHE.get(key)
    if out is None:
        if len(_SWAP_CACHE) > _CACHE_CAP:
            _SWAP_CACHE.clear()
        k = np.arange(1 << n, dtype=np.int64)
        m = (1 << (qa - 1)) | (1 << (qb - 1))
        out = k[(k & m) == m]
        _SWAP_CACHE[key] = out
    return out


def _validate_qubits(n: int, qubits):
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubit indices {qubits}")
    for q in qubits:
        if not 1 <= q <= n:
            raise ValueError(f"qubit {q} out of range for n={n}")


def apply_gate_inplace(amps: np.ndarray, n: int, kind: str, qubits,
                       angle: float | None = None, adjoint: bool = False,
                       check: bool = True):
    """Apply one gate to the raw amplitude array.

    kind is H/S/SDG/X/SX/CX/CZ or R<axis> with one Pauli letter per qubit
    (RX, RY, RZ, RZZ, RXY, ...). CX takes qubits=(control, target). adjoint
    applies the inverse (conjugate transpose; rotations negate the angle).
    check=False skips the norm test for carriers that are deliberately not
    unit vectors (observable-applied states in derivative sweeps).
    """
    _validate_qubits(n, qubits)
    kind = kind.upper()
    if kind in FIXED_1Q:
        if len(qubits) != 1:
            raise ValueError(f"{kind} is a single-qubit gate")
        mat = FIXED_1Q[kind]
        if adjoint:
            mat = mat.conj().T
        _apply_1q(amps, n, mat, qubits[0])
    elif kind == "CX":
        if len(qubits) != 2:
            raise ValueError("CX needs (control, target)")
        i0, i1 = _swap_indices(n, qubits[0], qubits[1])
        tmp = amps[i0].copy()
        amps[i0] = amps[i1]
        amps[i1] = tmp
    elif kind == "CZ":
        if len(qubits) != 2:
            raise ValueError("CZ needs two qubits")
        amps[_both_set(n, qubits[0], qubits[1])] *= -1.0
    elif kind.startswith("R") and len(kind) > 1:
        axis = kind[1:]
        if not set(axis) <= set("XYZ"):
            raise ValueError(f"unknown gate kind {kind!r}")
        if angle is None:
            raise ValueError(f"{kind} needs an angle")
        theta = -angle if adjoint else angle
        # R_P(t) = cos(t/2) I - i sin(t/2) P, with axis[m] on qubits[m]
        xm, yzm, ny = masks_for(n, axis, qubits)
        p = pauli_action(amps, n, xm, yzm, ny)
        amps *= np.cos(0.5 * theta)
        amps -= (1j * np.sin(0.5 * theta)) * p
    else:
        raise ValueError(f"unknown gate kind {kind!r}")
    counters.unitary += 1
    if check:
        _check_norm(amps)


class Statevector:
    """Normalized pure state on n qubits."""

    __slots__ = ("n", "amps")

    def __init__(self, n: int, amps: np.ndarray, validate: bool = True):
        amps = np.asarray(amps, dtype=complex)
        if amps.shape != (1 << n,):
            raise ValueError(f"expected {1 << n} amplitudes, got {amps.shape}")
        if validate:
            _check_norm(amps)
        self.n = n
        self.amps = amps

    @classmethod
    def zero(cls, n: int) -> "Statevector":
        return cls.basis(n, 0)

    @classmethod
    def basis(cls, n: int, k: int) -> "Statevector":
        if not 0 <= k < (1 << n):
            raise ValueError(f"basis index {k} out of range")
        amps = np.zeros(1 << n, dtype=complex)
        amps[k] = 1.0
        return cls(n, amps, validate=False)

    @classmethod
    def product(cls, factors) -> "Statevector":
        """Tensor product of per-qubit 2-vectors, factors[0] on qubit 1."""
        amps = np.array([1.0 + 0j])
        for f in factors:
            f = np.asarray(f, dtype=complex)
            if f.shape != (2,):
                raise ValueError("factors must be 2-vectors")
            amps = np.kron(f, amps)
        return cls(len(factors), amps)

    def copy(self) -> "Statevector":
        return Statevector(self.n, self.amps.copy(), validate=False)

    def apply(self, kind: str, qubits, angle=None, adjoint=False) -> "Statevector":
        """Return the state after one gate (the input is left untouched)."""
        out = self.amps.copy()
        apply_gate_inplace(out, self.n, kind, tuple(qubits), angle, adjoint)
        return Statevector(self.n, out, validate=False)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def __repr__(self):
        return f"Statevector(n={self.n})"


def apply_gate(state: Statevector, kind: str, qubits, angle=None,
               adjoint: bool = False) -> Statevector:
    return state.apply(kind, qubits, angle=angle, adjoint=adjoint)


def _observable_masks(state_n: int, observable: PauliSum):
    if observable.n > state_n:
        raise ValueError("observable acts on more qubits than the state")
    pad = "I" * (state_n - observable.n)
    for c, ps in observable:
        yield c, PauliString(pad + ps.label).masks()


def observable_apply(state: Statevector, observable: PauliSum) -> np.ndarray:
    """O|psi> as a raw amplitude array; counts one application per term."""
    chi = np.zeros_like(state.amps)
    for c, (xm, yzm, ny) in _observable_masks(state.n, observable):
        chi += c * pauli_action(state.amps, state.n, xm, yzm, ny)
        counters.observable += 1
    return chi


def expectation(state: Statevector, observable: PauliSum,
                with_variance: bool = False):
    """<O>, optionally with Var(O) = <O^2> - <O>^2 from the same pass."""
    chi = observable_apply(state, observable)
    value = float(np.vdot(state.amps, chi).real)
    if not with_variance:
        return value
    second = float(np.vdot(chi, chi).real)
    return value, max(second - value * value, 0.0)


def sample_counts(state: Statevector, shots: int,
                  bases=None, rng=None, seed: int | None = None) -> dict:
    """Multinomial bitstring counts, optionally after per-qubit basis changes.

    bases[j-1] is a tuple of gate names applied to qubit j before measuring
    (the output of diagonalizing_basis). Returns {bitstring int: count}.
    """
    if rng is None:
        if seed is None:
            raise ValueError("need rng or seed")
        rng = substream(seed, "shots")
    work = state
    if bases is not None:
        if len(bases) != state.n:
            raise ValueError("need one basis entry per qubit")
        out = state.amps.copy()
        for j, gates in enumerate(bases, start=1):
            for g in gates:
                apply_gate_inplace(out, state.n, g, (j,))
        work = Statevector(state.n, out, validate=False)
    probs = work.probabilities()
    probs = probs / probs.sum()
    draws = rng.multinomial(int(shots), probs)
    counters.shots += int(shots)
    hits = np.nonzero(draws)[0]
    return {int(k): int(draws[k]) for k in hits}


def sampled_expectation(state: Statevector, observable: PauliSum, shots: int,
                        rng=None, seed: int | None = None) -> float:
    """Shot-based estimate of <O> with qubitwise-commuting term grouping.

    Each group is measured with one circuit of `shots` shots; every term in
    the group is read off the same counts.
    """
    if rng is None:
        if seed is None:
            raise ValueError("need rng or seed")
        rng = substream(seed, "shots")
    pad = "I" * (state.n - observable.n)
    groups = group_qubitwise(PauliSum([(c, pad + ps.label) for c, ps in observable])
                             if pad else observable)
    total = 0.0
    for assignment, members in groups:
        bases = [_basis_for_char(assignment.get(j, "Z")) for j in range(1, state.n + 1)]
        counts = sample_counts(state, shots, bases=bases, rng=rng)
        for c, ps in members:
            _, diag = diagonalizing_basis(ps)
            _, zmask, _ = diag.masks()
            est = 0.0
            for k, cnt in counts.items():
                sign = 1 - 2 * (int(k & zmask).bit_count() % 2)
                est += sign * cnt
            total += c * est / shots
    return total


_CHAR_BASIS = {"Z": (), "I": (), "X": ("H",), "Y": ("SDG", "H")}


def _basis_for_char(ch: str):
    return _CHAR_BASIS[ch]


def group_qubitwise(observable: PauliSum):
    """Greedy qubitwise-commuting grouping.

    Returns a list of (assignment, terms) where assignment maps qubit -> basis
    char and terms is the list of (coeff, PauliString) measured together.
    """
    groups = []
    for c, ps in observable:
        placed = False
        for assignment, members in groups:
            ok = True
            for j in range(1, ps.n + 1):
                ch = ps.char(j)
                if ch == "I":
                    continue
                have = assignment.get(j)
                if have is not None and have != ch:
                    ok = False
                    break
            if ok:
                for j in range(1, ps.n + 1):
                    ch = ps.char(j)
                    if ch != "I":
                        assignment[j] = ch
                members.append((c, ps))
                placed = True
                break
        if not placed:
            assignment = {j: ps.char(j) for j in range(1, ps.n + 1)
                          if ps.char(j) != "I"}
            groups.append((assignment, [(c, ps)]))
    return groups


def fidelity_states(a: Statevector, b: Statevector, shots: int | None = None,
                    rng=None) -> float:
    """|<a|b>|^2, optionally binomially sampled with `shots` shots."""
    if a.n != b.n:
        raise ValueError("size mismatch")
    f = float(abs(np.vdot(a.amps, b.amps)) ** 2)
    if shots is None:
        return f
    if rng is None:
        raise ValueError("sampled fidelity needs an rng")
    counters.shots += int(shots)
    return float(rng.binomial(int(shots), min(max(f, 0.0), 1.0))) / shots


class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite matrix on n qubits."""

    __slots__ = ("n", "mat")

    def __init__(self, n: int, mat: np.ndarray, validate: bool = True):
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (1 << n, 1 << n):
            raise ValueError("shape mismatch")
        if validate:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
                raise ValueError("not Hermitian")
            if abs(np.trace(mat).real - 1.0) > 1e-10:
                raise ValueError("trace != 1")
            if np.linalg.eigvalsh(mat).min() < -1e-10:
                raise ValueError("negative eigenvalue")
        self.n = n
        self.mat = mat

    @classmethod
    def from_statevector(cls, state: Statevector) -> "DensityOperator":
        return cls(state.n, np.outer(state.amps, state.amps.conj()), validate=False)

    def expectation(self, observable: PauliSum) -> float:
        return float(np.trace(self.mat @ observable.matrix()).real)

    def purity(self) -> float:
        return float(np.trace(self.mat @ self.mat).real)


def partial_trace(state: Statevector, keep) -> DensityOperator:
    """Reduced density operator on `keep` (1-based, relabeled ascending)."""
    keep = sorted(set(keep))
    _validate_qubits(state.n, keep)
    n, k = state.n, len(keep)
    # tensor axes: axis (n - j) holds qubit j
    tens = state.amps.reshape((2,) * n)
    keep_axes = [n - j for j in keep]
    other_axes = [ax for ax in range(n) if ax not in keep_axes]
    # order kept axes so that higher kept qubit = leftmost axis after move
    keep_axes_sorted = sorted(keep_axes)
    perm = keep_axes_sorted + other_axes
    t = np.transpose(tens, perm).reshape(1 << k, 1 << (n - k))
    rho = t @ t.conj().T
    return DensityOperator(k, rho)


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    if a.n != b.n:
        raise ValueError("size mismatch")
    eig = np.linalg.eigvalsh(a.mat - b.mat)
    return float(0.5 * np.abs(eig).sum())


def bures_distance(f: float) -> float:
    """Bures distance from a fidelity value: sqrt(2 (1 - sqrt(F)))."""
    return float(np.sqrt(max(2.0 * (1.0 - np.sqrt(max(f, 0.0))), 0.0)))


class ReadoutModel:
    """Uncorrelated per-qubit readout confusion, one 2x2 column-stochastic
    matrix per qubit with A[i, j] = P(read i | prepared j)."""

    __slots__ = ("n", "mats", "invs")

    def __init__(self, mats):
        mats = [np.asarray(m, dtype=float) for m in mats]
        for m in mats:
            if m.shape != (2, 2):
                raise ValueError("confusion matrices are 2x2")
            if np.any(m < 0.0) or np.any(m > 1.0):
                raise ValueError("entries must be probabilities")
            if np.max(np.abs(m.sum(axis=0) - 1.0)) > 1e-9:
                raise ValueError("columns must sum to 1")
            if not (m[0, 0] > m[0, 1] and m[1, 1] > m[1, 0]):
                raise ValueError("matrix must be strictly diagonally dominant")
        self.n = len(mats)
        self.mats = mats
        self.invs = [np.linalg.inv(m) for m in mats]

    @classmethod
    def uniform(cls, n: int, p01: float, p10: float) -> "ReadoutModel":
        """Same confusion on every qubit: p01 = P(read 0|prep 1), p10 = P(read 1|prep 0)."""
        m = np.array([[1.0 - p10, p01], [p10, 1.0 - p01]])
        return cls([m] * n)

    def _apply_axiswise(self, probs: np.ndarray, mats) -> np.ndarray:
        t = probs.reshape((2,) * self.n)
        for j in range(1, self.n + 1):
            ax = self.n - j
            t = np.moveaxis(np.tensordot(mats[j - 1], t, axes=([1], [ax])), 0, ax)
        return t.reshape(-1)

    def corrupt(self, probs: np.ndarray) -> np.ndarray:
        """Distribution as seen through the noisy readout."""
        probs = np.asarray(probs, dtype=float)
        return self._apply_axiswise(probs, self.mats)

    def mitigate(self, probs: np.ndarray) -> np.ndarray:
        """Inverse map; output is a quasi-distribution (may dip below 0)."""
        probs = np.asarray(probs, dtype=float)
        return self._apply_axiswise(probs, self.invs)

    def mitigated_expectation(self, counts: dict, observable: PauliSum) -> float:
        """Mitigated <O> for a diagonal observable, term-wise in O(N n).

        counts maps bitstrings to weights (raw counts are normalized). Each
        term uses the per-qubit corrected eigenvalue mu_j = A_j^{-T} lambda_j
        so the full 2^n inverse is never formed.
        """
        total_w = float(sum(counts.values()))
        if total_w <= 0:
            raise ValueError("empty histogram")
        if observable.n != self.n:
            raise ValueError("size mismatch")
        value = 0.0
        for c, ps in observable:
            if not ps.is_diagonal():
                raise ValueError(f"{ps.label} is not diagonal")
            # per qubit: eigenvalue vector (1, 1) for I, (1, -1) for Z
            mus = []
            for j in range(1, self.n + 1):
                lam = np.array([1.0, -1.0]) if ps.char(j) == "Z" else np.array([1.0, 1.0])
                mus.append(self.invs[j - 1].T @ lam)
            term = 0.0
            for y, w in counts.items():
                prod = 1.0
                for j in range(1, self.n + 1):
                    prod *= mus[j - 1][(y >> (j - 1)) & 1]
                term += w * prod
            value += c * term / total_w
        return value
