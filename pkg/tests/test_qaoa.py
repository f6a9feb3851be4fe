import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbs_cqaoa.model import VARIANCE_ROWS, PbsInstance, PbsTree, cost, enumerate_feasible, random_costs, uniform_costs
from pbs_cqaoa.qaoa import (
    FeasibleBasis,
    FullBackend,
    QaoaParams,
    RunConfig,
    SubspaceBackend,
    circuit_mixer_big_mcp,
    circuit_mixer_reduced,
    gradient_variance,
    optimize,
    projector_mixer,
    projector_mixer_full,
    qaoa_state,
    success_probability,
    tqa_init,
)
from pbs_cqaoa.sim import apply_mcp0, basis_state, run_circuit, zero_state
from pbs_cqaoa.stateprep import feasible_indices, prepared_state

EDGE = PbsTree.from_edges([(1, 0)])
STAR = PbsTree.from_edges([(1, 0), (2, 0), (3, 0)])
CHAIN3 = PbsTree.from_edges([(1, 0), (2, 1)])
VAR12 = PbsTree.from_edges(VARIANCE_ROWS[0][0])


def rand_vec(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def embed(sub, tree, N):
    full = np.zeros(1 << (tree.node_count * N), dtype=complex)
    full[FeasibleBasis(random_costs(tree, N, 0)).basis_indices()] = sub
    return full


class TestProjectorMixer:
    def test_beta_zero(self):
        s = rand_vec(7, 0)
        np.testing.assert_allclose(projector_mixer(s, 0.0), s, atol=1e-15)

    def test_uniform_eigenvector(self):
        u = np.full(6, 1 / math.sqrt(6), dtype=complex)
        np.testing.assert_allclose(projector_mixer(u, 1.1), np.exp(1.1j) * u, atol=1e-14)

    def test_matches_big_mcp_on_subspace(self):
        basis = FeasibleBasis(random_costs(EDGE, 2, 0))
        s = rand_vec(len(basis), 3)
        circ = circuit_mixer_big_mcp(EDGE, 2, math.pi / 3)
        full = run_circuit(circ, embed(s, EDGE, 2))
        np.testing.assert_allclose(full[basis.basis_indices()], projector_mixer(s, math.pi / 3), atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 20), st.floats(-7, 7))
    def test_unitary(self, n, beta):
        s = rand_vec(n, n)
        assert abs(np.linalg.norm(projector_mixer(s, beta)) - 1) < 1e-12


class TestBigMcp:
    def test_identity_at_zero(self):
        s = rand_vec(16, 1)
        np.testing.assert_allclose(run_circuit(circuit_mixer_big_mcp(EDGE, 2, 0.0), s), s, atol=1e-10)

    @pytest.mark.parametrize("tree,N", [(EDGE, 2), (CHAIN3, 3)])
    def test_infeasible_states_fixed(self, tree, N):
        circ = circuit_mixer_big_mcp(tree, N, 1.234)
        feas = set(feasible_indices(tree, N).tolist())
        n = tree.node_count * N
        for x in range(0, 1 << n, max(1, (1 << n) // 64)):
            if x in feas:
                continue
            out = run_circuit(circ, basis_state(n, x))
            assert abs(out[x] - 1) < 1e-10

    @pytest.mark.parametrize("tree,N", [(EDGE, 2), (CHAIN3, 3), (PbsTree.from_edges([(1, 0), (2, 0)]), 3)])
    def test_equals_projector_on_full_space(self, tree, N):
        psi = prepared_state(tree, N)
        beta = 0.8
        circ = circuit_mixer_big_mcp(tree, N, beta)
        for seed in range(4):
            s = rand_vec(len(psi), seed)
            np.testing.assert_allclose(run_circuit(circ, s), projector_mixer_full(s, psi, beta), atol=1e-9)


class TestReducedMixer:
    def test_identity_at_zero(self):
        s = rand_vec(1 << 9, 2)
        np.testing.assert_allclose(run_circuit(circuit_mixer_reduced(CHAIN3, 3, 0.0), s), s, atol=1e-10)

    def test_tag_phase_on_all_zero(self):
        circ = circuit_mixer_reduced(CHAIN3, 3, 0.9)
        tag = [g for g in circ.gates if g.name == "MCP0"]
        assert len(tag) == 3
        s = zero_state(9)
        for g in tag:
            apply_mcp0(s, g.qubits, g.angle)
        assert s[0] == pytest.approx(np.exp(0.9j))
        # a single occupied register drops that register's share
        s = basis_state(9, 1 << 4)
        for g in tag:
            apply_mcp0(s, g.qubits, g.angle)
        assert s[1 << 4] == pytest.approx(np.exp(0.6j))

    def test_preserves_feasible_space(self):
        psi = prepared_state(STAR, 4)
        out = run_circuit(circuit_mixer_reduced(STAR, 4, 1.7), psi)
        feas = feasible_indices(STAR, 4)
        assert abs(np.linalg.norm(out[feas]) - 1) < 1e-10


@pytest.mark.parametrize("mixer", ["projector", "big_mcp", "reduced"])
def test_partial_mixing(mixer):
    inst = random_costs(CHAIN3, 3, 0)
    engine = FullBackend(inst, mixer)
    for x in engine.feasible_idx[:4]:
        for beta in (0.3, math.pi, 5.9):
            out = engine.mix(basis_state(9, int(x)), beta)
            assert abs(out[x]) < 1 - 1e-6


class TestPhaseSeparator:
    def test_gamma_zero_and_inverse(self):
        inst = random_costs(CHAIN3, 3, 1)
        eng = FullBackend(inst)
        s = eng.initial_state()
        np.testing.assert_allclose(eng.phase_separator(s.copy(), 0.0), s, atol=1e-15)
        back = eng.phase_separator(eng.phase_separator(s.copy(), 0.6), -0.6)
        np.testing.assert_allclose(back, s, atol=1e-12)

    def test_backends_agree(self):
        inst = random_costs(PbsTree.from_edges([(1, 0), (2, 0)]), 3, 2)
        full, sub = FullBackend(inst), SubspaceBackend(inst)
        a = full.phase_separator(full.initial_state(), 0.77)
        b = sub.phase_separator(sub.initial_state(), 0.77)
        np.testing.assert_allclose(a, embed(b, inst.tree, 3), atol=1e-10)


class TestTqa:
    def test_p1(self):
        p = tqa_init(1, 0.75)
        assert p.gammas == (0.75,) and p.betas == (0.0,)

    def test_p2(self):
        p = tqa_init(2, 1.0)
        assert p.gammas == (0.5, 1.0) and p.betas == (0.5, 0.0)

    def test_small_dt_keeps_uniform(self):
        inst = random_costs(STAR, 4, 0)
        dist = qaoa_state(inst, tqa_init(3, 1e-12)).distribution
        np.testing.assert_allclose(dist, 1 / 24, atol=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError):
            tqa_init(0)
        with pytest.raises(ValueError):
            QaoaParams((0.1,), (0.1, 0.2))


class TestQaoaState:
    def test_zero_params_uniform(self):
        inst = random_costs(STAR, 4, 0)
        dist = qaoa_state(inst, QaoaParams((0.0,), (0.0,))).distribution
        np.testing.assert_allclose(dist, 1 / 24, atol=1e-12)

    def test_baseline_p_alpha(self):
        inst = random_costs(STAR, 4, 5)
        costs = [cost(f, inst) for f in enumerate_feasible(STAR, 4)]
        expected = sum(c < 1.1 * min(costs) for c in costs) / 24
        dist = qaoa_state(inst, None).distribution
        assert success_probability(dist, FeasibleBasis(inst).costs) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("tree,N", [(EDGE, 2), (CHAIN3, 3)])
    @pytest.mark.parametrize("mixer", ["projector", "big_mcp", "reduced"])
    def test_leakage_and_normalization(self, tree, N, mixer):
        inst = random_costs(tree, N, 9)
        params = QaoaParams.from_vector(np.random.default_rng(1).uniform(0, 2 * np.pi, 4))
        st_ = qaoa_state(inst, params, backend="full", mixer=mixer)
        assert st_.leakage <= 1e-9
        assert abs(st_.distribution.sum() - 1) <= 1e-9

    @pytest.mark.parametrize("tree,N", [(EDGE, 2), (CHAIN3, 3)])
    def test_subspace_equals_full_big_mcp(self, tree, N):
        inst = random_costs(tree, N, 4)
        params = QaoaParams.from_vector(np.random.default_rng(2).uniform(0, 2 * np.pi, 6))
        a = qaoa_state(inst, params).distribution
        b = qaoa_state(inst, params, backend="full", mixer="big_mcp").distribution
        np.testing.assert_allclose(a, b, atol=1e-8)

    def test_subspace_rejects_other_mixers(self):
        with pytest.raises(ValueError):
            SubspaceBackend(random_costs(EDGE, 2, 0), "reduced")


def star_with_known_optimum():
    c = np.ones((4, 4))
    np.fill_diagonal(c, 0)
    costs = {}
    for r in (1, 2, 3):
        m = c.copy()
        m[r, 0] = m[0, r] = 0.5
        costs[r] = m
    return PbsInstance(STAR, 4, costs)


class TestSuccessProbability:
    def test_uniform_unique_optimum(self):
        inst = star_with_known_optimum()
        basis = FeasibleBasis(inst)
        assert basis.c_min == 1.5 and np.sort(basis.costs)[1] >= 2.5
        assert success_probability(np.full(24, 1 / 24), basis.costs) == pytest.approx(1 / 24)

    def test_infinite_alpha(self):
        assert success_probability([0.2, 0.8], [1.0, 9.0], math.inf) == 1.0

    def test_point_mass(self):
        assert success_probability([0.0, 1.0, 0.0], [3.0, 1.0, 2.0]) == 1.0

    def test_strict(self):
        assert success_probability([0.5, 0.5], [1.0, 1.1], 0.1) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            success_probability([], [])


def asymmetric_pair():
    return PbsInstance(EDGE, 2, {1: [[0.0, 1.0], [3.0, 0.0]]}, allow_asymmetric=True)


class TestOptimize:
    def test_two_state_concentrates(self):
        inst = asymmetric_pair()
        res = optimize(inst, 1, RunConfig(p=1))
        best = int(np.argmin(res.basis.costs))
        assert res.distribution[best] > 0.99
        assert res.p_alpha == pytest.approx(res.distribution[best])

    def test_never_worse_and_budget(self):
        inst = random_costs(STAR, 4, 3)
        cfg = RunConfig(p=2, max_iter=30)
        res = optimize(inst, 2, cfg)
        assert res.expectation <= res.initial_expectation + 1e-12
        assert len(res.trace) <= 30 + 2 * 2 + 1
        assert res.expectation == pytest.approx(min(v for _, v in res.trace), abs=1e-12)
        assert abs(res.distribution.sum() - 1) < 1e-9
        assert res.p_alpha == pytest.approx(success_probability(res.distribution, res.basis.costs))

    def test_deterministic(self):
        inst = random_costs(STAR, 4, 3)
        a = optimize(inst, 2, RunConfig(p=2, max_iter=20)).to_dict()
        b = optimize(inst, 2, RunConfig(p=2, max_iter=20)).to_dict()
        assert a == b

    def test_grid_and_shots(self):
        inst = random_costs(STAR, 4, 3)
        cfg = RunConfig(p=1, max_iter=10, delta_t_grid=True, shots=200, seed=4)
        a, b = optimize(inst, 1, cfg), optimize(inst, 1, cfg)
        assert a.to_dict() == b.to_dict()

    def test_full_backend_reduced(self):
        inst = random_costs(CHAIN3, 3, 0)
        res = optimize(inst, 1, RunConfig(p=1, backend="full", mixer="reduced", max_iter=10))
        assert res.leakage <= 1e-9 and res.expectation <= res.initial_expectation + 1e-12

    def test_top_k(self):
        res = optimize(random_costs(STAR, 4, 3), 1, RunConfig(p=1, max_iter=5))
        top = res.top_k(3)
        assert len(top) == 3 and top[0]["probability"] >= top[1]["probability"]


class TestRunConfig:
    def test_roundtrip(self, tmp_path):
        cfg = RunConfig(p=2, mixer="big_mcp", backend="full", seed=9)
        path = tmp_path / "cfg.json"
        import json

        path.write_text(json.dumps(cfg.to_dict()))
        assert RunConfig.from_json(path) == cfg

    @pytest.mark.parametrize(
        "kw", [{"mixer": "nope"}, {"backend": "gpu"}, {"mixer": "reduced"}, {"p": 0}, {"max_iter": -1}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)


class TestGradientVariance:
    def test_constant_cost(self):
        inst = uniform_costs(STAR, 4, 2.0)
        assert gradient_variance(inst, 2, samples=20) <= 1e-12

    def test_eps_consistency(self):
        inst = random_costs(VAR12, 3, 0)
        a = gradient_variance(inst, 3, eps=1e-4, seed=1)
        b = gradient_variance(inst, 3, eps=2e-4, seed=1)
        assert a > 0 and abs(a - b) / a < 0.01

    def test_reproducible(self):
        inst = random_costs(VAR12, 3, 0)
        assert gradient_variance(inst, 2, samples=10, seed=5) == gradient_variance(inst, 2, samples=10, seed=5)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            gradient_variance(random_costs(EDGE, 2, 0), 1, samples=1)
