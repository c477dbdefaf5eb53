"""Parameterized circuits: construction, simulation, serialization, the
ansatz library, and the compute-uncompute fidelity.

Rotation gates R<axis> implement exp(-i theta/2 * P_axis) with axis[m]
acting on qubits[m]; a gate angle is either a literal or coeff * theta[index],
so several gates may share one public parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliSum, all_commuting
from .rng import substream
from .state import Statevector, apply_gate_inplace, counters, masks_for

_FIXED = {"H", "S", "SDG", "X", "SX", "CX", "CZ"}


@dataclass(frozen=True)
class Gate:
    """One circuit operation. CX stores qubits=(control, target)."""

    kind: str
    qubits: tuple
    index: int | None = None
    coeff: float = 1.0
    angle: float | None = None

    @property
    def is_rotation(self) -> bool:
        return self.kind not in _FIXED

    @property
    def axis(self) -> str:
        return self.kind[1:]

    def resolved_angle(self, theta) -> float | None:
        if not self.is_rotation:
            return None
        if self.index is None:
            return self.angle
        return self.coeff * theta[self.index]


def _validate_gate(g: Gate, n: int, d: int):
    kind = g.kind.upper()
    if kind != g.kind:
        raise ValueError(f"gate kinds are upper-case, got {g.kind!r}")
    for q in g.qubits:
        if not 1 <= q <= n:
            raise ValueError(f"qubit {q} out of range for n={n}")
    if len(set(g.qubits)) != len(g.qubits):
        raise ValueError(f"duplicate qubits in {g}")
    if kind in _FIXED:
        want = 2 if kind in ("CX", "CZ") else 1
        if len(g.qubits) != want:
            raise ValueError(f"{kind} acts on {want} qubit(s)")
        if g.index is not None or g.angle is not None:
            raise ValueError(f"{kind} takes no angle")
        return
    if not (kind.startswith("R") and len(kind) > 1 and set(kind[1:]) <= set("XYZ")):
        raise ValueError(f"unknown gate kind {kind!r}")
    if len(kind) - 1 != len(g.qubits):
        raise ValueError(f"{kind} axis length does not match qubit count")
    if g.index is None and g.angle is None:
        raise ValueError(f"{kind} needs an index or a literal angle")
    if g.index is not None:
        if g.angle is not None:
            raise ValueError("give either index or angle, not both")
        if not 0 <= g.index < d:
            raise ValueError(f"parameter index {g.index} out of range for d={d}")
        if not np.isfinite(g.coeff):
            raise ValueError("coefficient must be finite")


class ParameterizedCircuit:
    """Gate list on n qubits with d public parameters."""

    __slots__ = ("n", "d", "ops", "meta")

    def __init__(self, n: int, d: int, ops, meta: dict | None = None):
        if n < 1:
            raise ValueError("need n >= 1")
        if d < 0:
            raise ValueError("need d >= 0")
        ops = tuple(ops)
        for g in ops:
            _validate_gate(g, n, d)
        self.n = n
        self.d = d
        self.ops = ops
        self.meta = dict(meta or {})

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"expected {self.d} parameters, got {theta.shape}")
        return theta

    def simulate(self, theta, initial: Statevector | None = None) -> Statevector:
        theta = self._check_theta(theta)
        if initial is None:
            amps = np.zeros(1 << self.n, dtype=complex)
            amps[0] = 1.0
        else:
            if initial.n != self.n:
                raise ValueError("initial state size mismatch")
            amps = initial.amps.copy()
        counters.simulations += 1
        for g in self.ops:
            apply_gate_inplace(amps, self.n, g.kind, g.qubits, g.resolved_angle(theta))
        return Statevector(self.n, amps, validate=False)

    def param_positions(self) -> list[int]:
        """Op positions carrying a trainable parameter, in circuit order."""
        return [i for i, g in enumerate(self.ops) if g.is_rotation and g.index is not None]

    def expand_unique(self):
        """Circuit with one fresh parameter per trainable rotation.

        Returns (expanded, J) with J of shape (d_expanded, d) mapping public
        to expanded parameters: theta_expanded = J @ theta.
        """
        new_ops = []
        rows = []
        for g in self.ops:
            if g.is_rotation and g.index is not None:
                k = len(rows)
                rows.append((g.index, g.coeff))
                new_ops.append(Gate(g.kind, g.qubits, index=k, coeff=1.0))
            else:
                new_ops.append(g)
        jac = np.zeros((len(rows), self.d))
        for k, (idx, coeff) in enumerate(rows):
            jac[k, idx] = coeff
        expanded = ParameterizedCircuit(self.n, len(rows), new_ops, meta=self.meta)
        return expanded, jac

    def extended(self, extra_ops, n: int | None = None, d: int | None = None):
        """New circuit with ops appended (optionally widened)."""
        return ParameterizedCircuit(n or self.n, d if d is not None else self.d,
                                    list(self.ops) + list(extra_ops), meta=self.meta)

    def to_text(self) -> str:
        lines = [f"qubits {self.n} params {self.d}"]
        for g in self.ops:
            toks = [g.kind] + [str(q) for q in g.qubits]
            if g.is_rotation:
                if g.index is not None:
                    toks.append(f"{g.coeff!r}*p{g.index}")
                else:
                    toks.append(repr(g.angle))
            lines.append(" ".join(toks))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ParameterizedCircuit":
        lines = [ln.strip() for ln in text.splitlines()
                 if ln.strip() and not ln.strip().startswith("#")]
        head = lines[0].split()
        if head[0] != "qubits" or head[2] != "params":
            raise ValueError("missing circuit header")
        n, d = int(head[1]), int(head[3])
        ops = []
        for ln in lines[1:]:
            toks = ln.split()
            kind = toks[0]
            if kind in _FIXED:
                ops.append(Gate(kind, tuple(int(t) for t in toks[1:])))
                continue
            qubits = tuple(int(t) for t in toks[1:-1])
            spec = toks[-1]
            if "p" in spec:
                coeff_s, idx_s = spec.split("*p") if "*p" in spec else ("1.0", spec[1:])
                ops.append(Gate(kind, qubits, index=int(idx_s), coeff=float(coeff_s)))
            else:
                ops.append(Gate(kind, qubits, angle=float(spec)))
        return cls(n, d, ops)

    def __repr__(self):
        return f"ParameterizedCircuit(n={self.n}, d={self.d}, ops={len(self.ops)})"


def fidelity(circuit: ParameterizedCircuit, theta_a, theta_b,
             shots: int | None = None, rng=None) -> float:
    """Compute-uncompute fidelity |<psi(theta_b)|psi(theta_a)>|^2.

    Runs U(theta_a) forward then U(theta_b) inverted; the fidelity is the
    all-zeros probability, binomially sampled when shots is given.
    """
    theta_a = circuit._check_theta(theta_a)
    theta_b = circuit._check_theta(theta_b)
    amps = np.zeros(1 << circuit.n, dtype=complex)
    amps[0] = 1.0
    for g in circuit.ops:
        apply_gate_inplace(amps, circuit.n, g.kind, g.qubits, g.resolved_angle(theta_a))
    for g in reversed(circuit.ops):
        apply_gate_inplace(amps, circuit.n, g.kind, g.qubits,
                           g.resolved_angle(theta_b), adjoint=True)
    counters.fidelities += 1
    p0 = float(abs(amps[0]) ** 2)
    p0 = min(max(p0, 0.0), 1.0)
    if shots is None:
        return p0
    if rng is None:
        raise ValueError("sampled fidelity needs an rng")
    counters.shots += int(shots)
    return float(rng.binomial(int(shots), p0)) / shots


# ---------------------------------------------------------------------------
# ansatz library


def _su2_layers(n, reps, rotation_gates, edges):
    ops = []
    idx = 0
    for _ in range(reps):
        for name in rotation_gates:
            kind = "R" + name[1].upper()
            for q in range(1, n + 1):
                ops.append(Gate(kind, (q,), index=idx))
                idx += 1
        for i, j in edges:
            ops.append(Gate("CX", (i, j)))
    for name in rotation_gates:
        kind = "R" + name[1].upper()
        for q in range(1, n + 1):
            ops.append(Gate(kind, (q,), index=idx))
            idx += 1
    return ops, idx


def build_ansatz(kind: str, **kw) -> ParameterizedCircuit:
    """Ansatz families used in the experiments.

    efficient_su2(n, reps, rotation_gates=("ry","rz"), edges=None):
        per block one layer of each rotation gate then a CX chain; a final
        rotation block; d = 2 n (reps + 1).
    two_design(n, reps, seed): fixed RY(pi/4) layer, then blocks of seeded
        random-axis rotations and brickwork CZs, and a final rotation layer;
        d = n (reps + 1).
    qaoa(cost, mixer=None, reps): alternating cost/mixer exponentials on
        |+...+>; parameters ordered gamma_1, beta_1, gamma_2, ...; d = 2 reps.
    brickwall(n, reps): per block an RX layer and individually parameterized
        RZZ on the chain; final RY layer; d = reps (2n - 1) + n.
    gibbs_pair(): fixed 4-qubit, 16-parameter circuit preparing a purified
        state; system qubits (1, 2), bath (3, 4).
    """
    if kind == "efficient_su2":
        n, reps = kw["n"], kw["reps"]
        rotation_gates = tuple(kw.get("rotation_gates", ("ry", "rz")))
        if len(rotation_gates) != 2:
            raise ValueError("need two rotation gate names")
        edges = kw.get("edges") or [(j, j + 1) for j in range(1, n)]
        ops, d = _su2_layers(n, reps, rotation_gates, edges)
        meta = {"kind": kind, "n": n, "reps": reps,
                "rotation_gates": rotation_gates, "edges": tuple(edges)}
        return ParameterizedCircuit(n, d, ops, meta)

    if kind == "two_design":
        n, reps, seed = kw["n"], kw["reps"], kw.get("seed", 0)
        rng = substream(seed, "twodesign.axes")
        axes = rng.integers(0, 3, size=(reps + 1, n))
        ops = [Gate("RY", (q,), angle=np.pi / 4) for q in range(1, n + 1)]
        idx = 0
        for layer in range(reps + 1):
            for q in range(1, n + 1):
                ops.append(Gate("R" + "XYZ"[axes[layer, q - 1]], (q,), index=idx))
                idx += 1
            if layer == reps:
                break
            for q in range(1, n, 2):
                ops.append(Gate("CZ", (q, q + 1)))
            for q in range(2, n, 2):
                ops.append(Gate("CZ", (q, q + 1)))
        meta = {"kind": kind, "n": n, "reps": reps, "seed": seed,
                "axes": axes.tolist()}
        return ParameterizedCircuit(n, idx, ops, meta)

    if kind == "qaoa":
        cost, reps = kw["cost"], kw["reps"]
        n = cost.n
        mixer = kw.get("mixer")
        if mixer is None:
            from .pauli import PauliString
            mixer = PauliSum([(-1.0, PauliString.from_chars(n, {q: "X"}))
                              for q in range(1, n + 1)])
        for group in (cost, mixer):
            if not all_commuting(group):
                raise ValueError("cost and mixer terms must commute within their group")
            for _, ps in group:
                if not 1 <= ps.weight <= 2:
                    raise ValueError("only 1- and 2-qubit terms supported")
        ops = [Gate("H", (q,)) for q in range(1, n + 1)]
        for p in range(reps):
            for pos, group in ((2 * p, cost), (2 * p + 1, mixer)):
                for c, ps in group:
                    sup = ps.support()
                    axis = "".join(ps.char(q) for q in sup)
                    ops.append(Gate("R" + axis, tuple(sup), index=pos, coeff=2.0 * c))
        meta = {"kind": kind, "n": n, "reps": reps}
        return ParameterizedCircuit(n, 2 * reps, ops, meta)

    if kind == "brickwall":
        n, reps = kw["n"], kw["reps"]
        ops = []
        idx = 0
        for _ in range(reps):
            for q in range(1, n + 1):
                ops.append(Gate("RX", (q,), index=idx))
                idx += 1
            for q in range(1, n):
                ops.append(Gate("RZZ", (q, q + 1), index=idx))
                idx += 1
        for q in range(1, n + 1):
            ops.append(Gate("RY", (q,), index=idx))
            idx += 1
        meta = {"kind": kind, "n": n, "reps": reps}
        return ParameterizedCircuit(n, idx, ops, meta)

    if kind == "gibbs_pair":
        ops = []
        idx = 0
        for q in range(1, 5):
            ops.append(Gate("RY", (q,), index=idx)); idx += 1
        for q in range(1, 5):
            ops.append(Gate("RZ", (q,), index=idx)); idx += 1
        ops += [Gate("CX", (2, 1)), Gate("CX", (3, 2)), Gate("CX", (4, 3))]
        for q in range(1, 5):
            ops.append(Gate("RY", (q,), index=idx)); idx += 1
        for q in range(1, 5):
            ops.append(Gate("RZ", (q,), index=idx)); idx += 1
        ops += [Gate("CX", (1, 3)), Gate("CX", (2, 4))]
        meta = {"kind": kind, "n": 4, "system": (1, 2), "bath": (3, 4)}
        return ParameterizedCircuit(4, 16, ops, meta)

    raise ValueError(f"unknown ansatz kind {kind!r}")


# angles (first gate, second gate) preparing each single-qubit state
_PRODUCT_ANGLES = {
    ("ry", "rz"): {
        "z+": (0.0, 0.0), "z-": (np.pi, 0.0),
        "x+": (np.pi / 2, 0.0), "x-": (-np.pi / 2, 0.0),
        "y+": (np.pi / 2, np.pi / 2), "y-": (np.pi / 2, -np.pi / 2),
    },
    ("rx", "rz"): {
        "z+": (0.0, 0.0), "z-": (np.pi, 0.0),
        "x+": (np.pi / 2, np.pi / 2), "x-": (np.pi / 2, -np.pi / 2),
        "y+": (np.pi / 2, np.pi), "y-": (np.pi / 2, 0.0),
    },
}


def initial_parameters(circuit: ParameterizedCircuit, target) -> np.ndarray:
    """Parameter vector whose circuit prepares a product state.

    target is "zero", "plus", "bell" (gibbs_pair only), or a list of
    per-qubit labels from z+/z-/x+/x-/y+/y-. Only the ansatz's final rotation
    block is used; all other parameters are zero.
    """
    kind = circuit.meta.get("kind")
    theta = np.zeros(circuit.d)
    if target == "zero":
        return theta
    if kind == "efficient_su2":
        n, reps = circuit.meta["n"], circuit.meta["reps"]
        gates = circuit.meta["rotation_gates"]
        base = 2 * n * reps
        if target == "plus":
            target = ["x+"] * n
        table = _PRODUCT_ANGLES[tuple(gates)]
        for q, label in enumerate(target, start=1):
            a1, a2 = table[label]
            theta[base + q - 1] = a1
            theta[base + n + q - 1] = a2
        return theta
    if kind == "brickwall":
        if target != "plus":
            raise ValueError("brickwall supports zero or plus")
        n, reps = circuit.meta["n"], circuit.meta["reps"]
        base = reps * (2 * n - 1)
        theta[base:base + n] = np.pi / 2
        return theta
    if kind == "gibbs_pair":
        if target != "bell":
            raise ValueError("gibbs_pair supports zero or bell")
        theta[8] = theta[9] = np.pi / 2
        return theta
    if kind == "qaoa":
        if target == "plus":
            return theta
        raise ValueError("qaoa prepares plus at zero parameters")
    raise ValueError(f"no initial-parameter rule for ansatz {kind!r} target {target!r}")
