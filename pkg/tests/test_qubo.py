from itertools import product

import numpy as np
import pytest

from pbs_cqaoa.model import PbsError, PbsInstance, PbsTree, cost, enumerate_feasible, is_feasible, random_costs
from pbs_cqaoa.qubo import build_qubo, default_penalty, onehot, read_triplets

EDGE = PbsInstance(PbsTree.from_edges([(1, 0)]), 2, {1: [[0.0, 5.0], [5.0, 0.0]]})


def test_feasible_point_has_no_penalty():
    q = build_qubo(EDGE, 7.0, 11.0, 13.0)
    assert q.value(onehot([0, 1], 2)) == 5.0


def test_parent_clash_fires_c2_once():
    q = build_qubo(EDGE, 7.0, 11.0, 13.0)
    assert q.value(onehot([0, 0], 2)) == 11.0


def test_all_zero_pays_one_hot_penalty_per_part():
    q = build_qubo(EDGE, 7.0, 11.0, 13.0)
    assert q.value(np.zeros(4)) == 14.0


def test_rejects_non_positive():
    with pytest.raises(PbsError):
        build_qubo(EDGE, 0.0, 1.0, 1.0)


def _direct_q(inst, x, lams):
    """Evaluate cost plus the three penalty sums straight from their definitions."""
    N, tree = inst.N, inst.tree
    X = np.asarray(x).reshape(tree.node_count, N)
    c = sum(inst.costs[r][i, j] * X[r, i] * X[s, j] for r, s in tree.edges for i in range(N) for j in range(N) if i != j)
    c1 = sum((X[r].sum() - 1) ** 2 for r in range(tree.node_count))
    c2 = sum(X[r, i] * X[s, i] for r, s in tree.edges for i in range(N))
    c3 = sum(X[r, i] * X[s, i] for r, s in tree.sibling_pairs for i in range(N))
    return c + lams[0] * c1 + lams[1] * c2 + lams[2] * c3


def test_matches_direct_expansion_on_all_bitstrings():
    inst = random_costs(PbsTree.from_edges([(1, 0), (2, 0)]), 3, 4)
    lams = (1.5, 2.5, 3.5)
    q = build_qubo(inst, *lams)
    for bits in product((0, 1), repeat=9):
        assert q.value(bits) == pytest.approx(_direct_q(inst, bits, lams), abs=1e-12)


def test_feasible_agreement_and_infeasible_gap():
    inst = random_costs(PbsTree.from_edges([(1, 0), (2, 0), (3, 0)]), 4, 2)
    lam = default_penalty(inst)
    q = build_qubo(inst, lam, lam, lam)
    for f in enumerate_feasible(inst.tree, 4):
        assert abs(q.value(onehot(f, 4)) - cost(f, inst)) <= 1e-12
    for f in product(range(4), repeat=4):
        if not is_feasible(f, inst.tree, 4):
            cost_term = _direct_q(inst, onehot(f, 4), (0, 0, 0))
            assert q.value(onehot(f, 4)) >= cost_term + lam - 1e-12


def test_triplet_roundtrip():
    q = build_qubo(random_costs(PbsTree.from_edges([(1, 0)]), 2, 0), 1.0, 2.0, 3.0)
    text = q.to_triplets()
    assert text.startswith("offset ")
    offset, coeffs = read_triplets(text)
    assert offset == q.offset and coeffs == q.coeffs
    assert q.num_vars == 4 and all(i <= j < 4 for i, j in coeffs)
