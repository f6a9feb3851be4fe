"""Exact classical PBS solvers and tree-cropping decomposition."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .model import (
    DEFAULT_ENUM_BUDGET,
    Assignment,
    PbsError,
    PbsInstance,
    PbsTree,
    cost,
    cost_many,
    enumerate_feasible,
)


def brute_force(inst: PbsInstance, budget: int = DEFAULT_ENUM_BUDGET) -> tuple[Assignment, float]:
    """Minimum over the enumerated feasible set; ties go to the lexicographically smallest."""
    inst.require_solvable()
    feasible = np.array(enumerate_feasible(inst.tree, inst.N, budget), dtype=np.intp)
    costs = cost_many(feasible.reshape(-1, inst.M), inst)
    k = int(np.argmin(costs))
    return tuple(int(v) for v in feasible[k]), float(costs[k])


@dataclass
class DpTable:
    heights: tuple[int, ...]
    # values[x][i]: cheapest cost of the subtree below x given f(x) = i
    values: dict[int, np.ndarray]
    # back[x][i]: sites of pred(x) (ascending labels) achieving values[x][i]
    back: dict[int, list[tuple[int, ...]]]
    work: int  # number of predecessor-site tuples scored


def dp_table(inst: PbsInstance) -> DpTable:
    """Bottom-up tables over nodes in order of increasing height.

    For each node ``x`` and site ``i`` every injective tuple of predecessor
    sites avoiding ``i`` is scored; tuples are scanned lexicographically and
    the first minimum is kept.
    """
    inst.require_solvable()
    tree, N = inst.tree, inst.N
    heights = tree.heights
    values: dict[int, np.ndarray] = {}
    back: dict[int, list[tuple[int, ...]]] = {}
    work = 0
    tuples_by_d: dict[int, np.ndarray] = {}
    for x in sorted(range(tree.node_count), key=lambda v: (heights[v], v)):
        P = tree.preds[x]
        d = len(P)
        if d == 0:
            values[x] = np.zeros(N)
            back[x] = [()] * N
            continue
        if d not in tuples_by_d:
            tuples_by_d[d] = np.array(list(permutations(range(N), d)), dtype=np.intp).reshape(-1, d)
        T = tuples_by_d[d]
        # w[k][j, i]: subtree value of P[k] at site j plus edge cost to x at site i
        w = [values[y][:, None] + inst.costs[y] for y in P]
        vals = np.empty(N)
        bk = []
        for i in range(N):
            rows = T[~np.any(T == i, axis=1)]
            total = np.zeros(len(rows))
            for k in range(d):
                total = total + w[k][rows[:, k], i]
            best = int(np.argmin(total))
            vals[i] = total[best]
            bk.append(tuple(int(v) for v in rows[best]))
            work += len(rows)
        values[x] = vals
        back[x] = bk
    return DpTable(heights, values, back, work)


def reconstruct(tree: PbsTree, table: DpTable, root_site: int) -> Assignment:
    f = [-1] * tree.node_count
    f[tree.root] = root_site
    stack = [tree.root]
    while stack:
        x = stack.pop()
        for y, j in zip(tree.preds[x], table.back[x][f[x]]):
            f[y] = j
            stack.append(y)
    return tuple(f)


def dp_solve(inst: PbsInstance) -> tuple[Assignment, float]:
    """Optimal assignment via tree dynamic programming, ``O(M * N^(m+1))``.

    The reported cost is re-evaluated on the reconstructed assignment with the
    same summation as :func:`cost`, so it is comparable bit-for-bit.
    """
    table = dp_table(inst)
    root_site = int(np.argmin(table.values[inst.tree.root]))
    f = reconstruct(inst.tree, table, root_site)
    return f, cost(f, inst)


def dp_solve_fixed_root(inst: PbsInstance, i: int, table: DpTable | None = None) -> float:
    """Optimal cost subject to the root being placed at site ``i``."""
    if not 0 <= i < inst.N:
        raise PbsError(f"site {i} outside 0..{inst.N - 1}")
    table = table or dp_table(inst)
    return cost(reconstruct(inst.tree, table, i), inst)


def fixed_root_assignment(inst: PbsInstance, i: int, table: DpTable | None = None) -> Assignment:
    table = table or dp_table(inst)
    return reconstruct(inst.tree, table, i)


@dataclass
class Decomposition:
    """Contracted instance plus one cropped sub-instance per crop node.

    ``*_nodes[k]`` is the original label of node ``k`` in the relabelled instance.
    """

    contracted: PbsInstance
    contracted_nodes: tuple[int, ...]
    subs: dict[int, PbsInstance]
    sub_nodes: dict[int, tuple[int, ...]]
    subtree_costs: dict[int, np.ndarray]  # crop node -> c_i^r for every site i
    sub_tables: dict[int, DpTable]


def _induced(inst: PbsInstance, nodes: list[int], allow_asymmetric: bool = False, costs=None):
    nodes = sorted(nodes)
    relabel = {v: k for k, v in enumerate(nodes)}
    edges = [(relabel[r], relabel[s]) for r, s in inst.tree.edges if r in relabel and s in relabel]
    tree = PbsTree(len(nodes), tuple(edges))
    src = costs if costs is not None else inst.costs
    c = {relabel[r]: src[r] for r, s in inst.tree.edges if r in relabel and s in relabel}
    return PbsInstance(tree, inst.N, c, allow_asymmetric=allow_asymmetric), tuple(nodes)


def _check_crops(tree: PbsTree, crops: list[int]) -> None:
    for r in crops:
        if not 0 <= r < tree.node_count:
            raise PbsError(f"crop node {r} is not in the tree")
        if r == tree.root:
            raise PbsError("cannot crop at the root")
    for a in crops:
        for b in crops:
            if a != b and tree.is_ancestor(a, b):
                raise PbsError(f"crop subtrees at {a} and {b} overlap")


def decompose(inst: PbsInstance, crop_nodes) -> Decomposition:
    """Crop every subtree rooted at ``crop_nodes`` and contract it to its root.

    The contracted cost of a crop node ``r`` becomes
    ``c_hat[i, j] = c^r[i, j] + c_i^r`` with ``c_i^r`` the optimal subtree cost
    for ``f(r) = i``; it is generally asymmetric.
    """
    tree = inst.tree
    crops = sorted(set(int(r) for r in crop_nodes))
    _check_crops(tree, crops)
    removed: set[int] = set()
    subs, sub_nodes, sub_costs, tables = {}, {}, {}, {}
    new_costs = dict(inst.costs)
    for r in crops:
        nodes = tree.subtree(r)
        if len(nodes) == 1:
            warnings.warn(f"crop node {r} is a leaf; decomposition is the identity", stacklevel=2)
        sub, labels = _induced(inst, nodes)
        table = dp_table(sub)
        cr = np.array([dp_solve_fixed_root(sub, i, table) for i in range(inst.N)])
        subs[r], sub_nodes[r], sub_costs[r], tables[r] = sub, labels, cr, table
        new_costs[r] = inst.costs[r] + cr[:, None]
        removed.update(v for v in nodes if v != r)
    keep = [v for v in range(tree.node_count) if v not in removed]
    contracted, labels = _induced(inst, keep, allow_asymmetric=True, costs=new_costs)
    return Decomposition(contracted, labels, subs, sub_nodes, sub_costs, tables)


def crop(inst: PbsInstance, r: int) -> tuple[PbsInstance, PbsInstance]:
    """``(P', P_hat)``: the subtree at ``r`` and the tree with it contracted."""
    dec = decompose(inst, [r])
    return dec.subs[r], dec.contracted


def solve_decomposed(inst: PbsInstance, crop_nodes=()) -> tuple[Assignment, float]:
    inst.require_solvable()
    dec = decompose(inst, crop_nodes)
    f_hat, _ = dp_solve(dec.contracted)
    f = [-1] * inst.M
    for k, v in enumerate(dec.contracted_nodes):
        f[v] = f_hat[k]
    for r, sub in dec.subs.items():
        labels = dec.sub_nodes[r]
        g = fixed_root_assignment(sub, f[r], dec.sub_tables[r])
        for k, v in enumerate(labels):
            f[v] = g[k]
    f = tuple(f)
    return f, cost(f, inst)


def suggest_crops(tree: PbsTree, degree_threshold: int) -> list[int]:
    """Topmost non-root, non-leaf nodes whose subtrees have max in-degree within the threshold."""
    if degree_threshold < 1:
        raise PbsError("degree threshold must be at least 1")
    sub_max = [0] * tree.node_count
    for x in tree.postorder():
        sub_max[x] = max([len(tree.preds[x])] + [sub_max[y] for y in tree.preds[x]])
    picked = []
    frontier = list(tree.preds[tree.root])
    while frontier:
        x = frontier.pop(0)
        if not tree.preds[x]:
            continue
        if sub_max[x] <= degree_threshold:
            picked.append(x)
        else:
            frontier.extend(tree.preds[x])
    return sorted(picked)
