"""PBS instances: trees, cost matrices, feasibility, and feasible-set combinatorics.

Parts are labelled ``0..M-1``.  An edge ``(r, s)`` means part ``r`` is a
sub-part of ``s`` and is shipped from site ``f(r)`` to site ``f(s)``; the
edge cost is ``costs[r][f(r), f(s)]``.  Sites are ``0..N-1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

Assignment = tuple[int, ...]

SYMMETRY_TOL = 1e-12
DEFAULT_ENUM_BUDGET = 10**6


class PbsError(ValueError):
    """Malformed tree, instance or document."""


class InfeasibleInstanceError(PbsError):
    """``N < m + 1``: no assignment satisfies the constraints."""


class BudgetExceededError(RuntimeError):
    """Enumeration would exceed the configured size budget."""


@dataclass(frozen=True)
class PbsTree:
    """Rooted tree of parts with edges pointing child -> parent."""

    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        M = self.node_count
        edges = tuple(sorted((int(r), int(s)) for r, s in self.edges))
        object.__setattr__(self, "edges", edges)
        if M < 1:
            raise PbsError(f"node_count must be positive, got {M}")
        if len(edges) != M - 1:
            raise PbsError(f"a tree on {M} nodes needs {M - 1} edges, got {len(edges)}")
        parent = [-1] * M
        for r, s in edges:
            if not (0 <= r < M and 0 <= s < M):
                raise PbsError(f"edge ({r}, {s}) has a label outside 0..{M - 1}")
            if r == s:
                raise PbsError(f"self-loop at node {r}")
            if parent[r] != -1:
                raise PbsError(f"node {r} has more than one outgoing edge")
            parent[r] = s
        roots = [x for x in range(M) if parent[x] == -1]
        if len(roots) != 1:
            raise PbsError(f"expected exactly one root, found {roots}")
        for x in range(M):
            seen = set()
            y = x
            while y != -1:
                if y in seen:
                    raise PbsError(f"cycle through node {y}")
                seen.add(y)
                y = parent[y]
        object.__setattr__(self, "_parent", tuple(parent))

    @classmethod
    def from_edges(cls, edges: Sequence[Sequence[int]], node_count: int | None = None) -> "PbsTree":
        edges = tuple((int(r), int(s)) for r, s in edges)
        if node_count is None:
            node_count = len(edges) + 1
        return cls(node_count, edges)

    @property
    def parent(self) -> tuple[int, ...]:
        """``parent[x]`` or -1 for the root."""
        return self._parent  # type: ignore[attr-defined]

    @cached_property
    def root(self) -> int:
        return self.parent.index(-1)

    @cached_property
    def preds(self) -> tuple[tuple[int, ...], ...]:
        """Predecessors (sub-parts) of every node, ascending by label."""
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for r, s in self.edges:
            out[s].append(r)
        return tuple(tuple(sorted(p)) for p in out)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.preds)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    @cached_property
    def heights(self) -> tuple[int, ...]:
        """Longest downward path to a leaf; leaves have height 0."""
        h = [0] * self.node_count
        for x in self.postorder():
            if self.preds[x]:
                h[x] = 1 + max(h[y] for y in self.preds[x])
        return tuple(h)

    def postorder(self) -> list[int]:
        order: list[int] = []
        stack = [(self.root, False)]
        while stack:
            x, done = stack.pop()
            if done:
                order.append(x)
                continue
            stack.append((x, True))
            for y in reversed(self.preds[x]):
                stack.append((y, False))
        return order

    def subtree(self, r: int) -> list[int]:
        """Nodes of the subtree rooted at ``r`` (preorder, ``r`` first)."""
        out = []
        stack = [r]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(reversed(self.preds[x]))
        return out

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if ``a`` lies on the path from ``b`` up to the root (inclusive of b)."""
        y = b
        while y != -1:
            if y == a:
                return True
            y = self.parent[y]
        return False

    @cached_property
    def sibling_pairs(self) -> tuple[tuple[int, int], ...]:
        """Unordered pairs ``r < s`` of sub-parts sharing a parent."""
        pairs = []
        for p in self.preds:
            for a in range(len(p)):
                for b in range(a + 1, len(p)):
                    pairs.append((p[a], p[b]))
        return tuple(sorted(pairs))

    @cached_property
    def conflicts(self) -> tuple[tuple[int, ...], ...]:
        """For every node, the nodes whose site must differ from its own."""
        out: list[set[int]] = [set() for _ in range(self.node_count)]
        for r, s in self.edges:
            out[r].add(s)
            out[s].add(r)
        for r, s in self.sibling_pairs:
            out[r].add(s)
            out[s].add(r)
        return tuple(tuple(sorted(c)) for c in out)


@dataclass(frozen=True)
class PbsInstance:
    """A tree, a number of sites and one ``N x N`` cost matrix per non-root part.

    ``allow_asymmetric`` is reserved for contracted instances produced by
    tree cropping, whose cost matrices carry a site-dependent subtree term.
    """

    tree: PbsTree
    num_sites: int
    costs: Mapping[int, np.ndarray]
    allow_asymmetric: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        N = self.num_sites
        if N < 1:
            raise PbsError(f"num_sites must be positive, got {N}")
        expected = {r for r, _ in self.tree.edges}
        keys = set(self.costs)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise PbsError(f"cost matrices missing for {missing}, unexpected for {extra}")
        frozen = {}
        for r in sorted(self.costs):
            c = np.array(self.costs[r], dtype=float)
            if c.shape != (N, N):
                raise PbsError(f"cost matrix of part {r} has shape {c.shape}, expected {(N, N)}")
            if not np.all(np.isfinite(c)):
                raise PbsError(f"cost matrix of part {r} has non-finite entries")
            if np.any(c < 0):
                raise PbsError(f"cost matrix of part {r} has negative entries")
            if not self.allow_asymmetric and not np.allclose(c, c.T, rtol=0.0, atol=SYMMETRY_TOL):
                raise PbsError(f"cost matrix of part {r} is not symmetric")
            c.setflags(write=False)
            frozen[r] = c
        object.__setattr__(self, "costs", frozen)

    @property
    def M(self) -> int:
        return self.tree.node_count

    @property
    def N(self) -> int:
        return self.num_sites

    @property
    def solvable(self) -> bool:
        return self.num_sites >= self.tree.max_degree + 1

    def require_solvable(self) -> None:
        if not self.solvable:
            raise InfeasibleInstanceError(
                f"N={self.num_sites} < m+1={self.tree.max_degree + 1}: no feasible assignment"
            )

    @property
    def max_cost(self) -> float:
        return max((float(c.max()) for c in self.costs.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "num_sites": self.num_sites,
            "edges": [list(e) for e in self.tree.edges],
            "costs": {str(r): self.costs[r].tolist() for r in sorted(self.costs)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def parse_instance(text: str) -> PbsInstance:
    """Parse and validate a JSON instance document.

    Matrices symmetric within ``1e-12`` are averaged with their transpose so
    that round-trip noise does not survive into the stored instance.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PbsError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PbsError("instance document must be a JSON object")
    for key in ("num_sites", "edges", "costs"):
        if key not in doc:
            raise PbsError(f"missing field {key!r}")
    N = doc["num_sites"]
    if not isinstance(N, int) or isinstance(N, bool):
        raise PbsError("num_sites must be an integer")
    edges = doc["edges"]
    if not isinstance(edges, list) or not all(
        isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e) for e in edges
    ):
        raise PbsError("edges must be a list of [r, s] integer pairs")
    tree = PbsTree.from_edges(edges, doc.get("num_parts"))
    raw = doc["costs"]
    if not isinstance(raw, dict):
        raise PbsError("costs must be an object keyed by node id")
    costs = {}
    for key, rows in raw.items():
        try:
            r = int(key)
        except ValueError:
            raise PbsError(f"cost key {key!r} is not a decimal node id") from None
        if not isinstance(rows, list) or len(rows) != N or any(
            not isinstance(row, list) or len(row) != N for row in rows
        ):
            raise PbsError(f"cost matrix of part {r} is missing or ragged")
        try:
            c = np.array(rows, dtype=float)
        except (TypeError, ValueError):
            raise PbsError(f"cost matrix of part {r} has non-numeric entries") from None
        if np.all(np.isfinite(c)) and np.allclose(c, c.T, rtol=0.0, atol=SYMMETRY_TOL):
            c = 0.5 * (c + c.T)
        costs[r] = c
    return PbsInstance(tree, N, costs)


def load_instance(path: str | Path) -> PbsInstance:
    return parse_instance(Path(path).read_text())


def is_feasible(f: Sequence[int], tree: PbsTree, N: int) -> bool:
    """True iff every node's site differs from its parent's and its siblings'."""
    if len(f) != tree.node_count or any(not 0 <= v < N for v in f):
        return False
    for x in range(tree.node_count):
        group = [f[x]] + [f[y] for y in tree.preds[x]]
        if len(set(group)) != len(group):
            return False
    return True


def cost(f: Sequence[int], inst: PbsInstance) -> float:
    total = 0.0
    for r, s in inst.tree.edges:
        total += float(inst.costs[r][f[r], f[s]])
    return total


def cost_many(assignments: np.ndarray, inst: PbsInstance) -> np.ndarray:
    """Row-wise :func:`cost`; same summation order, so results are bit-identical."""
    a = np.asarray(assignments, dtype=np.intp)
    total = np.zeros(a.shape[0])
    for r, s in inst.tree.edges:
        total = total + inst.costs[r][a[:, r], a[:, s]]
    return total


def _falling(n: int, k: int) -> int:
    out = 1
    for t in range(k):
        out *= n - t
    return out


def count_feasible(tree: PbsTree, N: int) -> int:
    """``|F| = N * prod_x (N-1)(N-2)...(N-d_x)``, exact; 0 when ``N < m+1``."""
    if N < tree.max_degree + 1:
        return 0
    total = N
    for d in tree.degrees:
        total *= _falling(N - 1, d)
    return total


def log10_count_feasible(tree: PbsTree, N: int) -> float:
    """``log10 |F|`` without forming the integer; ``-inf`` when infeasible."""
    if N < tree.max_degree + 1:
        return -math.inf
    s = math.log10(N)
    for d in tree.degrees:
        s += sum(math.log10(N - k) for k in range(1, d + 1))
    return s


def iter_feasible(tree: PbsTree, N: int) -> Iterator[Assignment]:
    """Feasible assignments in lexicographic order of the site sequence."""
    M = tree.node_count
    earlier = [tuple(y for y in tree.conflicts[x] if y < x) for x in range(M)]
    f = [0] * M

    def rec(x: int) -> Iterator[Assignment]:
        if x == M:
            yield tuple(f)
            return
        taken = {f[y] for y in earlier[x]}
        for i in range(N):
            if i not in taken:
                f[x] = i
                yield from rec(x + 1)

    if N >= tree.max_degree + 1:
        yield from rec(0)


def enumerate_feasible(tree: PbsTree, N: int, budget: int = DEFAULT_ENUM_BUDGET) -> list[Assignment]:
    n = count_feasible(tree, N)
    if n > budget:
        raise BudgetExceededError(f"|F|={n} exceeds enumeration budget {budget}")
    return list(iter_feasible(tree, N))


def feasible_by_filtering(tree: PbsTree, N: int) -> list[Assignment]:
    """Brute-force filter of the full ``N**M`` grid; oracle for small cases."""
    return [f for f in product(range(N), repeat=tree.node_count) if is_feasible(f, tree, N)]


def random_tree(M: int, max_degree: int, seed: int, model: str = "attachment") -> PbsTree:
    """Random tree rooted at node 0 with every in-degree at most ``max_degree``.

    ``attachment``: node ``n`` attaches to a uniformly chosen earlier node whose
    in-degree is still below the cap.
    ``branching``: nodes are expanded breadth-first, each receiving a uniform
    number of children in ``1..max_degree`` until ``M`` nodes exist.
    """
    if M < 1 or max_degree < 1:
        raise PbsError("random_tree needs M >= 1 and max_degree >= 1")
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = []
    if model == "attachment":
        indeg = [0]
        for n in range(1, M):
            open_nodes = [x for x in range(n) if indeg[x] < max_degree]
            p = open_nodes[int(rng.integers(len(open_nodes)))]
            indeg[p] += 1
            indeg.append(0)
            edges.append((n, p))
    elif model == "branching":
        n = 1
        frontier = [0]
        while n < M:
            x = frontier.pop(0)
            k = min(int(rng.integers(1, max_degree + 1)), M - n)
            for y in range(n, n + k):
                edges.append((y, x))
                frontier.append(y)
            n += k
    else:
        raise PbsError(f"unknown tree model {model!r}")
    return PbsTree(M, tuple(edges))


def random_costs(tree: PbsTree, N: int, seed: int) -> PbsInstance:
    """Uniform ``[0, 1)`` symmetric costs with zero diagonal, one matrix per edge."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(N, k=1)
    costs = {}
    for r, _ in tree.edges:
        c = np.zeros((N, N))
        c[iu] = rng.random(len(iu[0]))
        costs[r] = c + c.T
    return PbsInstance(tree, N, costs)


def uniform_costs(tree: PbsTree, N: int, value: float = 1.0) -> PbsInstance:
    c = np.full((N, N), float(value))
    np.fill_diagonal(c, 0.0)
    return PbsInstance(tree, N, {r: c for r, _ in tree.edges})


# Instance shapes used by the benchmark command and the gradient-variance table.
BENCHMARK_SHAPES: dict[str, tuple[tuple[tuple[int, int], ...], int]] = {
    "star4-n4": (((1, 0), (2, 0), (3, 0)), 4),
    "star4-n5": (((1, 0), (2, 0), (3, 0)), 5),
    "star4-n6": (((1, 0), (2, 0), (3, 0)), 6),
    "tree4-n4": (((1, 0), (2, 0), (3, 1)), 4),
    "tree5-n5": (((1, 0), (2, 0), (3, 0), (4, 1)), 5),
    "tree7-n4": (((1, 0), (2, 0), (3, 0), (4, 1), (5, 1), (6, 1)), 4),
}

VARIANCE_ROWS: tuple[tuple[tuple[tuple[int, int], ...], int], ...] = (
    (((1, 0), (2, 0), (3, 1)), 3),
    (((1, 0), (2, 0), (3, 1)), 4),
    (((1, 0), (2, 0), (3, 1), (4, 2)), 4),
    (((1, 0), (2, 0), (3, 1), (4, 2), (5, 4)), 4),
)


def shape_tree(name: str) -> tuple[PbsTree, int]:
    edges, N = BENCHMARK_SHAPES[name]
    return PbsTree.from_edges(edges), N
