"""Pauli-string algebra, model Hamiltonians, and dense-matrix conversion.

Labels are text in ket order: the leftmost character acts on the highest
qubit and the rightmost character on qubit 1, which is the least significant
bit of the integer basis index. So for ``ZIZ`` and bitstring ``k=0b101`` the
eigenvalue is (-1)^1 * (-1)^1 = +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_CHARS = frozenset("IXYZ")

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MATRIX_QUBIT_GUARD = 14


@lru_cache(maxsize=16384)
def _masks(label: str) -> tuple[int, int, int]:
    """(flip mask, phase mask, Y count) for a label.

    P|k> = i^nY * (-1)^popcount(k & phase_mask) |k XOR flip_mask>, where the
    flip mask collects X/Y positions and the phase mask collects Y/Z positions.
    """
    n = len(label)
    xmask = 0
    yzmask = 0
    ny = 0
    for idx, ch in enumerate(label):
        bit = 1 << (n - idx - 1)
        if ch in ("X", "Y"):
            xmask |= bit
        if ch in ("Y", "Z"):
            yzmask |= bit
        if ch == "Y":
            ny += 1
    return xmask, yzmask, ny


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, stored as a text label."""

    label: str

    def __post_init__(self):
        if not self.label or not set(self.label) <= _CHARS:
            raise ValueError(f"invalid Pauli label {self.label!r}")

    @property
    def n(self) -> int:
        return len(self.label)

    def char(self, qubit: int) -> str:
        """Pauli acting on a 1-based qubit index."""
        return self.label[self.n - qubit]

    @classmethod
    def from_chars(cls, n: int, assignment: dict[int, str]) -> "PauliString":
        chars = ["I"] * n
        for qubit, ch in assignment.items():
            if not 1 <= qubit <= n:
                raise ValueError(f"qubit {qubit} out of range for n={n}")
            chars[n - qubit] = ch
        return cls("".join(chars))

    def masks(self) -> tuple[int, int, int]:
        return _masks(self.label)

    @property
    def weight(self) -> int:
        return sum(ch != "I" for ch in self.label)

    def support(self) -> list[int]:
        """1-based qubits with a non-identity factor, ascending."""
        n = self.n
        return [n - i for i, ch in enumerate(self.label) if ch != "I"][::-1]

    def commutes_with(self, other: "PauliString") -> bool:
        if self.n != other.n:
            raise ValueError("length mismatch")
        clashes = sum(
            a != "I" and b != "I" and a != b
            for a, b in zip(self.label, other.label)
        )
        return clashes % 2 == 0

    def is_diagonal(self) -> bool:
        return set(self.label) <= {"I", "Z"}

    def matrix(self) -> np.ndarray:
        if self.n > MATRIX_QUBIT_GUARD:
            raise ValueError(f"matrix() limited to n <= {MATRIX_QUBIT_GUARD}")
        out = np.array([[1.0 + 0j]])
        for ch in self.label:
            out = np.kron(out, _PAULI_MATS[ch])
        return out

    def __str__(self) -> str:
        return self.label


def _as_string(term, n: int | None) -> PauliString:
    ps = PauliString(term) if isinstance(term, str) else term
    if n is not None and ps.n != n:
        raise ValueError(f"term {ps.label!r} has length {ps.n}, expected {n}")
    return ps


class PauliSum:
    """Real-weighted sum of Pauli strings (a Hermitian observable).

    Term order is preserved as built; simplify() merges duplicate labels into
    the first occurrence and drops exact zeros, keeping the order stable.
    """

    __slots__ = ("terms",)

    def __init__(self, terms):
        parsed = []
        n = None
        for coeff, label in terms:
            if isinstance(coeff, complex):
                if coeff.imag != 0:
                    raise ValueError("coefficients must be real (Hermiticity)")
                coeff = coeff.real
            c = float(coeff)
            if not np.isfinite(c):
                raise ValueError("coefficients must be finite")
            ps = _as_string(label, n)
            n = ps.n
            parsed.append((c, ps))
        if not parsed:
            raise ValueError("empty PauliSum")
        self.terms = tuple(parsed)

    @property
    def n(self) -> int:
        return self.terms[0][1].n

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def simplify(self) -> "PauliSum":
        order = []
        acc = {}
        for c, ps in self.terms:
            if ps.label not in acc:
                order.append(ps)
                acc[ps.label] = c
            else:
                acc[ps.label] += c
        kept = [(acc[ps.label], ps) for ps in order if acc[ps.label] != 0.0]
        if not kept:
            kept = [(0.0, PauliString("I" * self.n))]
        return PauliSum(kept)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if self.n != other.n:
            raise ValueError("size mismatch")
        return PauliSum(list(self.terms) + list(other.terms))

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "PauliSum":
        return PauliSum([(c * float(scalar), ps) for c, ps in self.terms])

    __rmul__ = __mul__

    def __neg__(self) -> "PauliSum":
        return self * -1.0

    def matrix(self) -> np.ndarray:
        if self.n > MATRIX_QUBIT_GUARD:
            raise ValueError(f"matrix() limited to n <= {MATRIX_QUBIT_GUARD}")
        dim = 1 << self.n
        out = np.zeros((dim, dim), dtype=complex)
        for c, ps in self.terms:
            out += c * ps.matrix()
        return out

    def to_text(self) -> str:
        return "\n".join(f"{c!r} {ps.label}" for c, ps in self.terms) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        terms = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            coeff, label = line.split()
            terms.append((float(coeff), label))
        return cls(terms)

    def __repr__(self) -> str:
        inner = " + ".join(f"{c}*{ps.label}" for c, ps in self.terms[:4])
        more = "" if len(self.terms) <= 4 else f" + ... ({len(self.terms)} terms)"
        return f"PauliSum({inner}{more})"


def identity_sum(n: int, coeff: float = 1.0) -> PauliSum:
    return PauliSum([(coeff, "I" * n)])


# basis changes (circuit order, first gate applied first):
#   X -> Z via H, Y -> Z via S-dagger then H
_BASIS_GATES = {"I": (), "Z": (), "X": ("H",), "Y": ("SDG", "H")}


def diagonalizing_basis(ps: PauliString):
    """Per-qubit Clifford lists plus the conjugated diagonal string.

    Returns (bases, diag) where bases[j-1] is the gate tuple for qubit j and
    diag replaces every X/Y by Z.
    """
    bases = [_BASIS_GATES[ps.char(j)] for j in range(1, ps.n + 1)]
    diag = PauliString("".join("Z" if ch in "XY" else ch for ch in ps.label))
    return bases, diag


def diagonal_eigenvalue(ps: PauliString, bitstring: int) -> int:
    """Eigenvalue of a diagonal (I/Z) string on the basis state |bitstring>."""
    if not ps.is_diagonal():
        raise ValueError(f"{ps.label} is not diagonal")
    _, zmask, _ = ps.masks()
    return 1 - 2 * (int(bitstring & zmask).bit_count() % 2)


@dataclass
class Graph:
    """Weighted undirected graph with 1-based nodes."""

    n_nodes: int
    edges: list  # (i, j, w) triples

    def __post_init__(self):
        for i, j, w in self.edges:
            if i == j:
                raise ValueError("self-loops not allowed")
            if not (1 <= i <= self.n_nodes and 1 <= j <= self.n_nodes):
                raise ValueError(f"edge ({i},{j}) out of range")
            float(w)

    def to_text(self) -> str:
        return "\n".join(f"{i} {j} {w!r}" for i, j, w in self.edges) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        edges = []
        nmax = 0
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            i, j, w = line.split()
            i, j = int(i), int(j)
            edges.append((i, j, float(w)))
            nmax = max(nmax, i, j)
        return cls(nmax, edges)

    def cut_value(self, bitstring: int) -> float:
        """Total weight of edges crossing the bipartition encoded by bits."""
        total = 0.0
        for i, j, w in self.edges:
            if ((bitstring >> (i - 1)) ^ (bitstring >> (j - 1))) & 1:
                total += w
        return total

    def max_cut_brute_force(self) -> tuple[float, list[int]]:
        """(best cut value, all optimal bitstrings); feasible for n <= 16."""
        if self.n_nodes > 16:
            raise ValueError("brute force limited to n <= 16")
        best, argbest = -np.inf, []
        for k in range(1 << self.n_nodes):
            v = self.cut_value(k)
            if v > best + 1e-12:
                best, argbest = v, [k]
            elif abs(v - best) <= 1e-12:
                argbest.append(k)
        return best, argbest


def topology_edges(n: int, topology: str, edges=None) -> list:
    """Unweighted edge list for the named coupling topology."""
    if topology == "line":
        return [(j, j + 1) for j in range(1, n)]
    if topology == "ring":
        if n < 3:
            raise ValueError("ring needs n >= 3")
        return [(j, j + 1) for j in range(1, n)] + [(n, 1)]
    if topology == "custom":
        if not edges:
            raise ValueError("custom topology needs explicit edges")
        return list(edges)
    raise ValueError(f"unknown topology {topology!r}")


def build_model(kind, n=None, topology="line", *, J=1.0, h=0.0,
                h_x=None, h_z=None, graph=None, edges=None) -> PauliSum:
    """Model Hamiltonians used throughout the package.

    tfim:          J * sum ZZ over edges + h * sum X
    tilted_ising:  J * sum ZZ (ring default) + h_z * sum Z + h_x * sum X
    heisenberg:    J * sum (XX + YY + ZZ) over edges + h * sum Z
    maxcut:        sum (w/2) * Z_i Z_j over graph edges; the constant offset
                   sum(w)/2 is dropped, so diagonal entries equal the negated
                   cut value shifted by that constant.
    """
    if kind == "maxcut":
        if graph is None:
            raise ValueError("maxcut needs a graph")
        if not graph.edges:
            raise ValueError("empty graph")
        gn = graph.n_nodes
        terms = [(0.5 * w, PauliString.from_chars(gn, {i: "Z", j: "Z"}))
                 for i, j, w in graph.edges]
        return PauliSum(terms).simplify()

    if n is None or n < 2:
        raise ValueError("need n >= 2")
    if kind == "tfim":
        es = topology_edges(n, topology, edges)
        terms = [(J, PauliString.from_chars(n, {i: "Z", j: "Z"})) for i, j in es]
        terms += [(h, PauliString.from_chars(n, {j: "X"})) for j in range(1, n + 1)]
        return PauliSum(terms).simplify()
    if kind == "tilted_ising":
        # defaults put the model in its robustly non-integrable regime
        h_x = (np.sqrt(5.0) + 5.0) / 8.0 if h_x is None else h_x
        h_z = (np.sqrt(5.0) + 1.0) / 4.0 if h_z is None else h_z
        es = topology_edges(n, topology if topology != "line" else "ring", edges)
        terms = [(J, PauliString.from_chars(n, {i: "Z", j: "Z"})) for i, j in es]
        terms += [(h_z, PauliString.from_chars(n, {j: "Z"})) for j in range(1, n + 1)]
        terms += [(h_x, PauliString.from_chars(n, {j: "X"})) for j in range(1, n + 1)]
        return PauliSum(terms).simplify()
    if kind == "heisenberg":
        es = topology_edges(n, topology, edges)
        terms = []
        for i, j in es:
            for ch in "XYZ":
                terms.append((J, PauliString.from_chars(n, {i: ch, j: ch})))
        terms += [(h, PauliString.from_chars(n, {j: "Z"})) for j in range(1, n + 1)]
        return PauliSum(terms).simplify()
    raise ValueError(f"unknown model kind {kind!r}")


def split_diagonal(hamiltonian: PauliSum) -> tuple[PauliSum, PauliSum]:
    """Split into (diagonal I/Z terms, remainder), preserving term order.

    The split gives the standard commuting groups for Ising-type models; each
    half raises if it would be empty.
    """
    diag = [(c, ps) for c, ps in hamiltonian if ps.is_diagonal()]
    rest = [(c, ps) for c, ps in hamiltonian if not ps.is_diagonal()]
    if not diag or not rest:
        raise ValueError("split needs both diagonal and off-diagonal terms")
    return PauliSum(diag), PauliSum(rest)


def all_commuting(group: PauliSum) -> bool:
    terms = [ps for _, ps in group]
    return all(a.commutes_with(b) for idx, a in enumerate(terms) for b in terms[idx + 1:])
