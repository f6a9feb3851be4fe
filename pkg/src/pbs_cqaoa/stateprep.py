"""Circuits preparing the uniform superposition of all feasible PBS assignments.

Each part owns a one-hot register of ``N`` qubits.  The root register gets a
``W_N`` state; every node then loads its sub-parts with partial W-states of
decreasing size and entangles them with controlled swaps so that sibling
sites and parent/child sites differ.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import InfeasibleInstanceError, PbsTree, count_feasible, enumerate_feasible
from .sim import Circuit, RegisterLayout, basis_state, check_capacity, run_circuit, run_circuit_sparse

# XX+YY phase parameter turning the gate into a real rotation, so the prepared
# amplitudes are real and non-negative.
REAL_ROTATION = math.pi / 2

AMPLITUDE_TOL = 1e-10


class MixedSpanError(AssertionError):
    """A basis state was mapped onto feasible and infeasible states at once."""


class Span(enum.Enum):
    FEASIBLE_SPAN = "feasible"
    INFEASIBLE_SPAN = "infeasible"


def w_angles(n: int, weights: Sequence[float] | None = None) -> list[float]:
    """Rotation angles moving a single excitation from qubit 0 onto ``n`` qubits.

    Uniform case: ``theta_i = 2*arccos(sqrt((n-i)/(n-i+1)))``.  With ``weights``
    the excitation ends on qubit ``k`` with probability ``weights[k]/sum(weights)``.
    """
    if n < 1:
        raise ValueError(f"W-state size must be at least 1, got {n}")
    if weights is None:
        return [2 * math.acos(math.sqrt((n - i) / (n - i + 1))) for i in range(1, n)]
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be n non-negative numbers with positive sum")
    w = w / w.sum()
    angles = []
    for i in range(1, n):
        remaining = w[0] + w[i:].sum()
        ratio = 0.0 if remaining <= 0 else min(1.0, w[i] / remaining)
        angles.append(2 * math.asin(math.sqrt(ratio)))
    return angles


def partial_w(layout: RegisterLayout, r: int, n: int, weights: Sequence[float] | None = None) -> Circuit:
    """``W_n`` on the first ``n`` qubits of register ``r``, the rest left at 0."""
    if not 1 <= n <= layout.N:
        raise ValueError(f"partial W size {n} outside 1..{layout.N}")
    c = Circuit(layout.num_qubits)
    q0 = layout.qubit(r, 0)
    c.x(q0)
    for i, theta in enumerate(w_angles(n, weights), start=1):
        c.xxyy(theta, layout.qubit(r, i), q0, REAL_ROTATION)
    return c


def make_distinct(layout: RegisterLayout, r1: int, r2: int, n: int) -> Circuit:
    """Controlled on ``r1[i]``, swap ``r2[n]`` and ``r2[i]`` for ``i < n``.

    Maps ``W_{n+1} (x) W_n`` to the uniform superposition over pairs of
    distinct positions in ``0..n``.
    """
    if r1 == r2:
        raise ValueError("make_distinct needs two different registers")
    if not 0 <= n <= layout.N - 1:
        raise ValueError(f"index {n} outside 0..{layout.N - 1}")
    c = Circuit(layout.num_qubits)
    for i in range(n):
        c.cswap(layout.qubit(r1, i), layout.qubit(r2, n), layout.qubit(r2, i))
    return c


@dataclass
class PrepCircuit:
    circuit: Circuit
    tree: PbsTree
    num_sites: int

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(self.tree.node_count, self.num_sites)


def prepare_pbs_circuit(tree: PbsTree, N: int) -> PrepCircuit:
    if N < tree.max_degree + 1:
        raise InfeasibleInstanceError(f"N={N} < m+1={tree.max_degree + 1}")
    layout = RegisterLayout(tree.node_count, N)
    c = Circuit(layout.num_qubits)
    c.extend(partial_w(layout, tree.root, N))

    def add_predecessors(x: int) -> None:
        P = tree.preds[x]
        m = len(P)
        for i in range(m):
            c.extend(partial_w(layout, P[i], N - 1 - i))
        # sibling constraint
        for i in range(m - 2, -1, -1):
            for j in range(i + 1, m):
                c.extend(make_distinct(layout, P[i], P[j], N - 2 - i))
        # parent/child constraint
        for i in range(m):
            c.extend(make_distinct(layout, x, P[i], N - 1))
        for y in P:
            add_predecessors(y)

    add_predecessors(tree.root)
    return PrepCircuit(c, tree, N)


def feasible_indices(tree: PbsTree, N: int) -> np.ndarray:
    """Sorted basis indices of the one-hot encodings of all feasible assignments."""
    layout = RegisterLayout(tree.node_count, N)
    f = np.array(enumerate_feasible(tree, N), dtype=np.int64).reshape(-1, tree.node_count)
    return np.sort(layout.encode_many(f))


def _in_sorted(values: np.ndarray, sorted_ref: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(sorted_ref, values)
    pos = np.minimum(pos, len(sorted_ref) - 1)
    return sorted_ref[pos] == values


def support_split(state: np.ndarray, feasible: np.ndarray, tol: float = AMPLITUDE_TOL) -> tuple[int, int]:
    """Number of non-negligible amplitudes on feasible and on infeasible encodings."""
    nz = np.flatnonzero(np.abs(state) > tol)
    hits = _in_sorted(nz, feasible)
    return int(hits.sum()), int((~hits).sum())


class PrepClassifier:
    """Simulates ``U_prep |x>`` for basis inputs and reports which subspace it lands in.

    ``dense=False`` (default) propagates the sparse support of the basis input;
    ``dense=True`` runs the full statevector.
    """

    def __init__(self, tree: PbsTree, N: int, dense: bool = False, limit: int | None = None):
        check_capacity(tree.node_count * N, limit)
        self.prep = prepare_pbs_circuit(tree, N)
        self.feasible = feasible_indices(tree, N)
        self.dense = dense
        self.limit = limit

    def image(self, x: int) -> np.ndarray:
        state = basis_state(self.prep.circuit.num_qubits, x, self.limit)
        return run_circuit(self.prep.circuit, state, inplace=True)

    def sparse_image(self, x: int) -> dict[int, complex]:
        return run_circuit_sparse(self.prep.circuit, {x: 1.0})

    def classify(self, x: int) -> Span:
        if self.dense:
            good, bad = support_split(self.image(x), self.feasible)
        else:
            img = self.sparse_image(x)
            nz = np.array([k for k, a in img.items() if abs(a) > AMPLITUDE_TOL], dtype=np.int64)
            hits = _in_sorted(nz, self.feasible)
            good, bad = int(hits.sum()), int((~hits).sum())
        if good and bad:
            raise MixedSpanError(f"U_prep|{x}> has {good} feasible and {bad} infeasible components")
        return Span.FEASIBLE_SPAN if good else Span.INFEASIBLE_SPAN


def classify_prep_image(tree: PbsTree, N: int, x: int, dense: bool = False) -> Span:
    """FEASIBLE_SPAN or INFEASIBLE_SPAN for ``U_prep |x>``; raises MixedSpanError otherwise."""
    return PrepClassifier(tree, N, dense).classify(x)


def prepared_state(tree: PbsTree, N: int, limit: int | None = None) -> np.ndarray:
    n = tree.node_count * N
    check_capacity(n, limit)
    prep = prepare_pbs_circuit(tree, N)
    return run_circuit(prep.circuit, basis_state(n, 0, limit), inplace=True)


def uniform_feasible_state(tree: PbsTree, N: int, limit: int | None = None) -> np.ndarray:
    """Reference ``|psi_F>`` built directly from the enumerated feasible set."""
    n = tree.node_count * N
    check_capacity(n, limit)
    s = np.zeros(1 << n, dtype=complex)
    s[feasible_indices(tree, N)] = 1.0 / math.sqrt(count_feasible(tree, N))
    return s
