"""Dense statevector simulation for the gate set used by the PBS circuits.

Qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
significant bit).  States are plain complex128 numpy arrays of length
``2**n``; gate functions update them in place and return them.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

DEFAULT_MAX_QUBITS = 26
MAX_QUBITS_ENV = "PBS_CQAOA_MAX_QUBITS"


class CapacityError(RuntimeError):
    """Requested register is larger than the dense-simulation cap."""


def max_qubits() -> int:
    value = os.environ.get(MAX_QUBITS_ENV)
    return int(value) if value else DEFAULT_MAX_QUBITS


def check_capacity(n: int, limit: int | None = None) -> None:
    limit = max_qubits() if limit is None else limit
    if n > limit:
        raise CapacityError(
            f"{n} qubits exceeds the dense simulation cap of {limit} (set {MAX_QUBITS_ENV} to override)"
        )


def num_qubits(state: np.ndarray) -> int:
    n = int(state.size).bit_length() - 1
    if state.ndim != 1 or 1 << n != state.size:
        raise ValueError("state length must be a power of two")
    return n


@dataclass(frozen=True)
class RegisterLayout:
    """``M`` one-hot registers of ``N`` qubits; part ``r``, site ``i`` is qubit ``r*N + i``."""

    M: int
    N: int

    @property
    def num_qubits(self) -> int:
        return self.M * self.N

    def qubit(self, r: int, i: int) -> int:
        if not (0 <= r < self.M and 0 <= i < self.N):
            raise IndexError(f"register {r}, position {i} outside layout {self.M}x{self.N}")
        return r * self.N + i

    def register(self, r: int) -> list[int]:
        return [self.qubit(r, i) for i in range(self.N)]

    def encode(self, f: Sequence[int]) -> int:
        """Basis index of the one-hot encoding of assignment ``f``."""
        return sum(1 << self.qubit(r, i) for r, i in enumerate(f))

    def encode_many(self, assignments: np.ndarray) -> np.ndarray:
        a = np.asarray(assignments, dtype=np.int64)
        shifts = np.arange(self.M, dtype=np.int64) * self.N + a
        return np.sum(np.left_shift(np.int64(1), shifts), axis=1)


def zero_state(n: int, limit: int | None = None) -> np.ndarray:
    return basis_state(n, 0, limit)


def basis_state(n: int, index: int, limit: int | None = None) -> np.ndarray:
    check_capacity(n, limit)
    s = np.zeros(1 << n, dtype=complex)
    s[index] = 1.0
    return s


def _view(state: np.ndarray, qubits: Sequence[int]) -> tuple[np.ndarray, dict[int, int]]:
    """Reshape so each listed qubit has its own length-2 axis."""
    n = num_qubits(state)
    if not state.flags.c_contiguous:
        raise ValueError("state must be C-contiguous for in-place updates")
    for q in qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"qubit indices must be distinct, got {tuple(qubits)}")
    shape = []
    axis = {}
    prev = n
    for k, q in enumerate(sorted(qubits, reverse=True)):
        shape += [1 << (prev - q - 1), 2]
        axis[q] = 2 * k + 1
        prev = q
    shape.append(1 << prev)
    return state.reshape(shape), axis


def _at(view: np.ndarray, axis: Mapping[int, int], bits: Mapping[int, int]) -> tuple:
    idx: list = [slice(None)] * view.ndim
    for q, b in bits.items():
        idx[axis[q]] = b
    return tuple(idx)


def apply_x(state: np.ndarray, q: int) -> np.ndarray:
    v, ax = _view(state, [q])
    i0, i1 = _at(v, ax, {q: 0}), _at(v, ax, {q: 1})
    tmp = v[i0].copy()
    v[i0] = v[i1]
    v[i1] = tmp
    return state


def xxyy_matrix(theta: float, phase: float = 0.0) -> np.ndarray:
    """2x2 block of XX+YY on ``(|01>, |10>)`` in ``|q1 q2>`` ordering."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]], dtype=complex
    )


def apply_xxyy(state: np.ndarray, theta: float, q1: int, q2: int, phase: float = 0.0) -> np.ndarray:
    """XX+YY interaction: identity on ``|00>, |11>``, rotation on ``|01>, |10>``.

    ``phase=0`` gives ``[[cos, -i sin], [-i sin, cos]]`` (half-angles).
    ``phase=pi/2`` gives the real rotation ``[[cos, -sin], [sin, cos]]``,
    which moves amplitude from ``|01>`` to ``|10>`` with a positive sign.
    """
    if q1 == q2:
        raise ValueError("XX+YY needs two distinct qubits")
    v, ax = _view(state, [q1, q2])
    ia, ib = _at(v, ax, {q1: 0, q2: 1}), _at(v, ax, {q1: 1, q2: 0})
    m = xxyy_matrix(theta, phase).tolist()
    va, vb = v[ia], v[ib]  # views
    a = va.copy()
    va *= m[0][0]
    va += m[0][1] * vb
    vb *= m[1][1]
    vb += m[1][0] * a
    return state


def apply_cswap(state: np.ndarray, ctrl: int, a: int, b: int) -> np.ndarray:
    v, ax = _view(state, [ctrl, a, b])
    i01, i10 = _at(v, ax, {ctrl: 1, a: 0, b: 1}), _at(v, ax, {ctrl: 1, a: 1, b: 0})
    tmp = v[i01].copy()
    v[i01] = v[i10]
    v[i10] = tmp
    return state


def apply_mcp0(state: np.ndarray, qubits: Iterable[int], phi: float) -> np.ndarray:
    """Multiply by ``exp(i*phi)`` every amplitude whose listed qubits are all 0."""
    qubits = list(qubits)
    if not qubits:
        raise ValueError("MCP0 needs at least one qubit")
    v, ax = _view(state, qubits)
    v[_at(v, ax, {q: 0 for q in qubits})] *= np.exp(1j * phi)
    return state


def apply_mcp1(state: np.ndarray, qubits: Iterable[int], phi: float) -> np.ndarray:
    """Phase on the all-ones pattern of ``qubits``."""
    qubits = list(qubits)
    if not qubits:
        raise ValueError("MCP needs at least one qubit")
    v, ax = _view(state, qubits)
    v[_at(v, ax, {q: 1 for q in qubits})] *= np.exp(1j * phi)
    return state


@dataclass(eq=False)
class PhasePolynomial:
    """Multilinear polynomial in qubit variables.

    ``terms`` maps a tuple of distinct qubit indices to its coefficient; the
    empty tuple is the constant.  Diagonals are cached per register width.
    """

    terms: dict[tuple[int, ...], float]
    _cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def variables(self) -> set[int]:
        return {q for t in self.terms for q in t}

    def evaluate(self, index: int) -> float:
        total = 0.0
        for t, c in self.terms.items():
            if all(index >> q & 1 for q in t):
                total += c
        return total

    def diagonal(self, n: int) -> np.ndarray:
        if n not in self._cache:
            if self.variables and max(self.variables) >= n:
                raise IndexError(f"polynomial variable {max(self.variables)} outside {n} qubits")
            idx = np.arange(1 << n, dtype=np.int64)
            diag = np.zeros(1 << n)
            for t, c in self.terms.items():
                mask = np.ones(1 << n, dtype=bool)
                for q in t:
                    mask &= (idx >> q & 1).astype(bool)
                diag[mask] += c
            diag.setflags(write=False)
            self._cache[n] = diag
        return self._cache[n]


def apply_diagonal_phase(state: np.ndarray, poly: PhasePolynomial, gamma: float) -> np.ndarray:
    """``|x> -> exp(-i*gamma*poly(x)) |x>``."""
    state *= np.exp(-1j * gamma * poly.diagonal(num_qubits(state)))
    return state


class Gate(NamedTuple):
    name: str  # X | XXYY | CSWAP | MCP0 | DIAG
    qubits: tuple[int, ...]
    angle: float = 0.0
    phase: float = 0.0
    poly: PhasePolynomial | None = None


_SELF_INVERSE = {"X", "CSWAP"}


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def _check(self, qubits: Sequence[int]) -> None:
        for q in qubits:
            if not 0 <= q < self.num_qubits:
                raise IndexError(f"qubit {q} out of range for {self.num_qubits} qubits")

    def x(self, q: int) -> "Circuit":
        self._check([q])
        self.gates.append(Gate("X", (q,)))
        return self

    def xxyy(self, theta: float, q1: int, q2: int, phase: float = 0.0) -> "Circuit":
        self._check([q1, q2])
        if q1 == q2:
            raise ValueError("XX+YY needs two distinct qubits")
        self.gates.append(Gate("XXYY", (q1, q2), float(theta), float(phase)))
        return self

    def cswap(self, ctrl: int, a: int, b: int) -> "Circuit":
        self._check([ctrl, a, b])
        if len({ctrl, a, b}) != 3:
            raise ValueError(f"controlled swap needs distinct qubits, got {(ctrl, a, b)}")
        self.gates.append(Gate("CSWAP", (ctrl, a, b)))
        return self

    def mcp0(self, phi: float, qubits: Iterable[int]) -> "Circuit":
        qubits = tuple(qubits)
        if not qubits:
            raise ValueError("MCP0 needs at least one qubit")
        self._check(qubits)
        self.gates.append(Gate("MCP0", qubits, float(phi)))
        return self

    def diagonal(self, gamma: float, poly: PhasePolynomial) -> "Circuit":
        self._check(sorted(poly.variables))
        self.gates.append(Gate("DIAG", (), float(gamma), poly=poly))
        return self

    def extend(self, other: "Circuit") -> "Circuit":
        if other.num_qubits != self.num_qubits:
            raise ValueError("circuit widths differ")
        self.gates.extend(other.gates)
        return self

    def __len__(self) -> int:
        return len(self.gates)

    def count(self, name: str) -> int:
        return sum(g.name == name for g in self.gates)

    def netlist(self) -> str:
        lines = []
        for g in self.gates:
            q = " ".join(map(str, g.qubits))
            if g.name == "XXYY":
                lines.append(f"XXYY {q} theta={g.angle!r} phase={g.phase!r}")
            elif g.name == "MCP0":
                lines.append(f"MCP0 {q} phi={g.angle!r}")
            elif g.name == "DIAG":
                lines.append(f"DIAG gamma={g.angle!r} terms={len(g.poly.terms)}")
            else:
                lines.append(f"{g.name} {q}")
        return "\n".join(lines) + ("\n" if lines else "")


def invert_circuit(circuit: Circuit) -> Circuit:
    gates = []
    for g in reversed(circuit.gates):
        gates.append(g if g.name in _SELF_INVERSE else g._replace(angle=-g.angle))
    return Circuit(circuit.num_qubits, gates)


def apply_gate(state: np.ndarray, g: Gate) -> np.ndarray:
    if g.name == "X":
        return apply_x(state, g.qubits[0])
    if g.name == "XXYY":
        return apply_xxyy(state, g.angle, g.qubits[0], g.qubits[1], g.phase)
    if g.name == "CSWAP":
        return apply_cswap(state, *g.qubits)
    if g.name == "MCP0":
        return apply_mcp0(state, g.qubits, g.angle)
    if g.name == "DIAG":
        return apply_diagonal_phase(state, g.poly, g.angle)
    raise ValueError(f"unknown gate {g.name!r}")


def run_circuit(circuit: Circuit, state: np.ndarray, inplace: bool = False) -> np.ndarray:
    if num_qubits(state) != circuit.num_qubits:
        raise ValueError(
            f"circuit acts on {circuit.num_qubits} qubits, state has {num_qubits(state)}"
        )
    out = state if inplace else state.astype(complex, copy=True)
    for g in circuit.gates:
        apply_gate(out, g)
    return out


def run_circuit_sparse(circuit: Circuit, amplitudes: Mapping[int, complex], tol: float = 0.0) -> dict[int, complex]:
    """Apply ``circuit`` to a state stored as ``{basis index: amplitude}``.

    Cheap when the support stays small, e.g. for basis-state inputs to the
    state preparation.  Entries with ``|amp| <= tol`` are dropped after each gate.
    """
    state = {int(k): complex(v) for k, v in amplitudes.items()}
    for g in circuit.gates:
        if g.name == "X":
            bit = 1 << g.qubits[0]
            state = {k ^ bit: a for k, a in state.items()}
        elif g.name == "CSWAP":
            c, qa, qb = (1 << q for q in g.qubits)
            new = {}
            for k, a in state.items():
                if k & c and bool(k & qa) != bool(k & qb):
                    k ^= qa | qb
                new[k] = a
            state = new
        elif g.name == "XXYY":
            b1, b2 = (1 << q for q in g.qubits)
            m = xxyy_matrix(g.angle, g.phase)
            new: dict[int, complex] = {}
            for k, a in state.items():
                x1, x2 = bool(k & b1), bool(k & b2)
                if x1 == x2:
                    new[k] = new.get(k, 0) + a
                    continue
                # column 0 is |q1=0, q2=1>, column 1 is |q1=1, q2=0>
                col = 1 if x1 else 0
                k01 = (k & ~b1) | b2
                k10 = (k & ~b2) | b1
                new[k01] = new.get(k01, 0) + m[0, col] * a
                new[k10] = new.get(k10, 0) + m[1, col] * a
            state = new
        elif g.name == "MCP0":
            mask = sum(1 << q for q in g.qubits)
            ph = np.exp(1j * g.angle)
            state = {k: (a * ph if k & mask == 0 else a) for k, a in state.items()}
        elif g.name == "DIAG":
            state = {k: a * np.exp(-1j * g.angle * g.poly.evaluate(k)) for k, a in state.items()}
        else:
            raise ValueError(f"unknown gate {g.name!r}")
        if tol > 0:
            state = {k: a for k, a in state.items() if abs(a) > tol}
    return state


def dump_amplitudes_csv(state: np.ndarray, path: str | Path) -> None:
    """Debug dump ``index,re,im``; only for registers of at most 12 qubits."""
    if num_qubits(state) > 12:
        raise CapacityError("amplitude dumps are limited to 12 qubits")
    lines = ["index,re,im"] + [f"{k},{float(a.real)!r},{float(a.imag)!r}" for k, a in enumerate(state)]
    Path(path).write_text("\n".join(lines) + "\n")
