"""QUBO form of a PBS instance: transport cost plus three penalty families.

Variable ``x[r*N + i]`` is 1 when part ``r`` sits at site ``i``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import PbsError, PbsInstance


@dataclass(frozen=True)
class QuboModel:
    num_vars: int
    # keys are (i, j) with i <= j; (i, i) holds the linear coefficient of x_i
    coeffs: dict[tuple[int, int], float]
    offset: float
    lambdas: tuple[float, float, float]

    def value(self, bits: Sequence[int]) -> float:
        x = np.asarray(bits, dtype=float)
        if x.shape != (self.num_vars,):
            raise ValueError(f"expected {self.num_vars} bits, got shape {x.shape}")
        total = self.offset
        for (i, j), c in self.coeffs.items():
            total += c * x[i] * x[j]
        return float(total)

    def to_triplets(self) -> str:
        lines = [f"offset {float(self.offset)!r}"]
        for (i, j) in sorted(self.coeffs):
            lines.append(f"{i} {j} {float(self.coeffs[(i, j)])!r}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_triplets())


def read_triplets(text: str) -> tuple[float, dict[tuple[int, int], float]]:
    offset = 0.0
    coeffs: dict[tuple[int, int], float] = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "offset":
            offset = float(parts[1])
        else:
            coeffs[(int(parts[0]), int(parts[1]))] = float(parts[2])
    return offset, coeffs


def onehot(f: Sequence[int], N: int) -> np.ndarray:
    bits = np.zeros(len(f) * N, dtype=np.int8)
    for r, i in enumerate(f):
        bits[r * N + i] = 1
    return bits


def default_penalty(inst: PbsInstance) -> float:
    """``2 * max c``; falls back to 1 for cost-free instances."""
    m = inst.max_cost
    return 2.0 * m if m > 0 else 1.0


def build_qubo(inst: PbsInstance, lam1: float, lam2: float, lam3: float) -> QuboModel:
    if min(lam1, lam2, lam3) <= 0:
        raise PbsError(f"penalty weights must be positive, got {(lam1, lam2, lam3)}")
    N = inst.num_sites
    tree = inst.tree
    q: dict[tuple[int, int], float] = defaultdict(float)

    def add(a: int, b: int, c: float) -> None:
        if c != 0.0:
            q[(min(a, b), max(a, b))] += c

    for r, s in tree.edges:
        c = inst.costs[r]
        for i in range(N):
            for j in range(N):
                if i != j:
                    add(r * N + i, s * N + j, float(c[i, j]))
    # (sum_i x - 1)^2 = -sum_i x + 2 sum_{i<j} x_i x_j + 1  using x^2 = x
    for r in range(tree.node_count):
        for i in range(N):
            add(r * N + i, r * N + i, -lam1)
            for j in range(i + 1, N):
                add(r * N + i, r * N + j, 2.0 * lam1)
    for r, s in tree.edges:
        for i in range(N):
            add(r * N + i, s * N + i, lam2)
    for r, s in tree.sibling_pairs:
        for i in range(N):
            add(r * N + i, s * N + i, lam3)
    return QuboModel(
        num_vars=tree.node_count * N,
        coeffs=dict(q),
        offset=lam1 * tree.node_count,
        lambdas=(float(lam1), float(lam2), float(lam3)),
    )
