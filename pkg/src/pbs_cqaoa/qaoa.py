"""Constrained QAOA over the feasible PBS subspace.

Two backends share one interface:

* ``subspace`` keeps an ``|F|``-dimensional amplitude vector over the
  enumerated feasible assignments and applies the projector mixer in closed
  form.
* ``full`` simulates all ``M*N`` qubits, starting from the prepared state and
  realising the mixer either in closed form (``projector``), as the
  state-preparation-conjugated zero-controlled phase on every qubit
  (``big_mcp``), or with one zero-controlled phase per register (``reduced``).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .model import PbsInstance, PbsTree, cost_many, enumerate_feasible
from .sim import (
    Circuit,
    PhasePolynomial,
    RegisterLayout,
    apply_diagonal_phase,
    apply_mcp0,
    check_capacity,
    invert_circuit,
    run_circuit,
)
from .stateprep import prepare_pbs_circuit

MIXERS = ("projector", "big_mcp", "reduced")
BACKENDS = ("subspace", "full")
DELTA_T_GRID = (0.25, 0.5, 0.75, 1.0)


class FeasibleBasis:
    """Feasible assignments in lexicographic order with their costs."""

    def __init__(self, inst: PbsInstance):
        inst.require_solvable()
        self.inst = inst
        self.assignments = np.array(enumerate_feasible(inst.tree, inst.N), dtype=np.intp).reshape(
            -1, inst.M
        )
        self.costs = cost_many(self.assignments, inst)
        self.index = {tuple(int(v) for v in row): k for k, row in enumerate(self.assignments)}

    def __len__(self) -> int:
        return len(self.assignments)

    @property
    def c_min(self) -> float:
        return float(self.costs.min())

    def basis_indices(self) -> np.ndarray:
        """Full-register basis index of every feasible assignment, in basis order."""
        return RegisterLayout(self.inst.M, self.inst.N).encode_many(self.assignments)


@dataclass(frozen=True)
class QaoaParams:
    gammas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas) or not self.gammas:
            raise ValueError("need p >= 1 gammas and the same number of betas")

    @property
    def p(self) -> int:
        return len(self.gammas)

    def vector(self) -> np.ndarray:
        """``[gamma_1..gamma_p, beta_1..beta_p]``; the last entry is ``beta_p``."""
        return np.array(self.gammas + self.betas)

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "QaoaParams":
        x = list(x)
        p = len(x) // 2
        return cls(tuple(x[:p]), tuple(x[p:]))


def tqa_init(p: int, delta_t: float = 0.75) -> QaoaParams:
    """Linear annealing schedule ``gamma_k = k/p*dt``, ``beta_k = (1 - k/p)*dt``."""
    if p < 1 or delta_t <= 0:
        raise ValueError("tqa_init needs p >= 1 and delta_t > 0")
    ks = [k / p for k in range(1, p + 1)]
    return QaoaParams(tuple(s * delta_t for s in ks), tuple((1 - s) * delta_t for s in ks))


# ---------------------------------------------------------------- operators


def projector_mixer(s: np.ndarray, beta: float) -> np.ndarray:
    """``(1 - (1 - e^{i beta}) |u><u|) s`` with ``u`` uniform over the subspace."""
    return s - (1 - np.exp(1j * beta)) * s.mean()


def projector_mixer_full(state: np.ndarray, psi_f: np.ndarray, beta: float) -> np.ndarray:
    """Same operator on the full register, given the prepared state ``psi_f``."""
    return state - (1 - np.exp(1j * beta)) * np.vdot(psi_f, state) * psi_f


def cost_polynomial(inst: PbsInstance) -> PhasePolynomial:
    """Transport cost as a quadratic polynomial in the one-hot qubits."""
    layout = RegisterLayout(inst.M, inst.N)
    terms: dict[tuple[int, ...], float] = {}
    for r, s in inst.tree.edges:
        c = inst.costs[r]
        for i in range(inst.N):
            for j in range(inst.N):
                if i != j and c[i, j] != 0.0:
                    a, b = sorted((layout.qubit(r, i), layout.qubit(s, j)))
                    terms[(a, b)] = terms.get((a, b), 0.0) + float(c[i, j])
    return PhasePolynomial(terms)


def circuit_mixer_big_mcp(tree: PbsTree, N: int, beta: float, limit: int | None = None) -> Circuit:
    """``U_prep . MCP0(beta, all qubits) . U_prep^dagger`` as a gate list."""
    check_capacity(tree.node_count * N, limit)
    prep = prepare_pbs_circuit(tree, N).circuit
    c = invert_circuit(prep)
    c.mcp0(beta, range(prep.num_qubits))
    return c.extend(prep)


def circuit_mixer_reduced(tree: PbsTree, N: int, beta: float, limit: int | None = None) -> Circuit:
    """One ``MCP0(beta/M)`` per register between ``U_prep^dagger`` and ``U_prep``.

    An all-zero register array collects the full phase ``e^{i beta}``.
    """
    check_capacity(tree.node_count * N, limit)
    prep = prepare_pbs_circuit(tree, N).circuit
    layout = RegisterLayout(tree.node_count, N)
    c = invert_circuit(prep)
    for r in range(tree.node_count):
        c.mcp0(beta / tree.node_count, layout.register(r))
    return c.extend(prep)


# ---------------------------------------------------------------- backends


class SubspaceBackend:
    name = "subspace"

    def __init__(self, inst: PbsInstance, mixer: str = "projector", basis: FeasibleBasis | None = None):
        if mixer != "projector":
            raise ValueError("the subspace backend only implements the projector mixer")
        self.inst = inst
        self.mixer = mixer
        self.basis = basis or FeasibleBasis(inst)

    def initial_state(self) -> np.ndarray:
        K = len(self.basis)
        return np.full(K, 1 / math.sqrt(K), dtype=complex)

    def phase_separator(self, s: np.ndarray, gamma: float) -> np.ndarray:
        return s * np.exp(-1j * gamma * self.basis.costs)

    def mix(self, s: np.ndarray, beta: float) -> np.ndarray:
        return projector_mixer(s, beta)

    def feasible_amplitudes(self, s: np.ndarray) -> np.ndarray:
        return s


class FullBackend:
    name = "full"

    def __init__(
        self,
        inst: PbsInstance,
        mixer: str = "projector",
        basis: FeasibleBasis | None = None,
        limit: int | None = None,
    ):
        if mixer not in MIXERS:
            raise ValueError(f"unknown mixer {mixer!r}")
        inst.require_solvable()
        self.n = inst.M * inst.N
        check_capacity(self.n, limit)
        self.inst = inst
        self.mixer = mixer
        self.basis = basis or FeasibleBasis(inst)
        self.layout = RegisterLayout(inst.M, inst.N)
        self.prep = prepare_pbs_circuit(inst.tree, inst.N).circuit
        self.unprep = invert_circuit(self.prep)
        self.poly = cost_polynomial(inst)
        self.feasible_idx = self.basis.basis_indices()
        self._psi_f = run_circuit(self.prep, self._zero())

    def _zero(self) -> np.ndarray:
        s = np.zeros(1 << self.n, dtype=complex)
        s[0] = 1.0
        return s

    def initial_state(self) -> np.ndarray:
        return self._psi_f.copy()

    def phase_separator(self, s: np.ndarray, gamma: float) -> np.ndarray:
        return apply_diagonal_phase(s, self.poly, gamma)

    def mix(self, s: np.ndarray, beta: float) -> np.ndarray:
        if self.mixer == "projector":
            return projector_mixer_full(s, self._psi_f, beta)
        run_circuit(self.unprep, s, inplace=True)
        if self.mixer == "big_mcp":
            apply_mcp0(s, range(self.n), beta)
        else:
            for r in range(self.inst.M):
                apply_mcp0(s, self.layout.register(r), beta / self.inst.M)
        return run_circuit(self.prep, s, inplace=True)

    def feasible_amplitudes(self, s: np.ndarray) -> np.ndarray:
        return s[self.feasible_idx]


def make_backend(inst: PbsInstance, backend: str = "subspace", mixer: str = "projector", basis=None):
    if backend == "subspace":
        return SubspaceBackend(inst, mixer, basis)
    if backend == "full":
        return FullBackend(inst, mixer, basis)
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class QaoaState:
    state: np.ndarray
    distribution: np.ndarray  # probabilities aligned with FeasibleBasis order
    leakage: float  # probability outside the feasible encodings
    expectation: float


def evolve(backend, params: QaoaParams | None) -> np.ndarray:
    s = backend.initial_state()
    if params is not None:
        for g, b in zip(params.gammas, params.betas):
            s = backend.phase_separator(s, g)
            s = backend.mix(s, b)
    return s


def qaoa_state(
    inst: PbsInstance,
    params: QaoaParams | None,
    backend: str = "subspace",
    mixer: str = "projector",
    engine=None,
) -> QaoaState:
    """Run ``p`` alternating layers from the feasible superposition.

    ``params=None`` is the zero-layer baseline (the uniform superposition).
    """
    engine = engine or make_backend(inst, backend, mixer)
    s = evolve(engine, params)
    probs = np.abs(engine.feasible_amplitudes(s)) ** 2
    leakage = max(0.0, float(np.sum(np.abs(s) ** 2) - probs.sum()))
    return QaoaState(s, probs, leakage, float(probs @ engine.basis.costs))


def success_probability(
    distribution: np.ndarray, costs: np.ndarray, alpha: float = 0.1, c_min: float | None = None
) -> float:
    """Probability of sampling ``f`` with ``C(f) < (1 + alpha) * C_min``."""
    distribution = np.asarray(distribution, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if distribution.size == 0:
        raise ValueError("empty distribution")
    c_min = float(costs.min()) if c_min is None else c_min
    threshold = math.inf if math.isinf(alpha) else (1 + alpha) * c_min
    return float(distribution[costs < threshold].sum())


# ---------------------------------------------------------------- optimisation


@dataclass
class RunConfig:
    """Serializable QAOA run configuration."""

    p: int = 3
    mixer: str = "projector"
    backend: str = "subspace"
    max_iter: int = 100
    delta_t: float = 0.75
    delta_t_grid: bool = False
    alpha: float = 0.1
    seed: int = 0
    simplex_step: float = 0.25
    shots: int | None = None
    instance: str | None = None

    def __post_init__(self) -> None:
        if self.mixer not in MIXERS:
            raise ValueError(f"mixer must be one of {MIXERS}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.backend == "subspace" and self.mixer != "projector":
            raise ValueError("the subspace backend only implements the projector mixer")
        if self.p < 1 or self.max_iter < 0:
            raise ValueError("need p >= 1 and max_iter >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class QaoaResult:
    params: QaoaParams
    distribution: np.ndarray
    expectation: float
    p_alpha: float
    alpha: float
    c_min: float
    initial_expectation: float
    trace: list[tuple[int, float]] = field(default_factory=list)
    basis: FeasibleBasis | None = field(default=None, repr=False)
    leakage: float = 0.0

    def top_k(self, k: int = 10) -> list[dict]:
        order = np.argsort(-self.distribution, kind="stable")[:k]
        return [
            {
                "assignment": [int(v) for v in self.basis.assignments[j]],
                "probability": float(self.distribution[j]),
                "cost": float(self.basis.costs[j]),
            }
            for j in order
        ]

    def to_dict(self, top_k: int = 10, include_distribution: bool = False) -> dict:
        out = {
            "params": {"gamma": list(self.params.gammas), "beta": list(self.params.betas)},
            "expectation": self.expectation,
            "initial_expectation": self.initial_expectation,
            "P_alpha": self.p_alpha,
            "alpha": self.alpha,
            "C_min": self.c_min,
            "num_feasible": int(self.distribution.size),
            "leakage": self.leakage,
            "top_k": self.top_k(top_k),
            "trace": [{"evaluation": i, "objective": v} for i, v in self.trace],
        }
        if include_distribution:
            out["distribution"] = [
                {"assignment": [int(v) for v in a], "probability": float(q)}
                for a, q in zip(self.basis.assignments, self.distribution)
            ]
        return out


class _Budget(Exception):
    pass


def optimize(inst: PbsInstance, p: int, config: RunConfig | None = None) -> QaoaResult:
    """Nelder-Mead over ``2p`` angles starting from the TQA schedule.

    The objective is the exact expectation of the cost (or a seeded shot
    estimate when ``config.shots`` is set).  At most ``max_iter`` evaluations
    are spent beyond the initial simplex; the best parameters seen are returned.
    """
    config = config or RunConfig(p=p)
    engine = make_backend(inst, config.backend, config.mixer)
    basis = engine.basis
    rng = np.random.default_rng(config.seed)

    def expectation(x: np.ndarray) -> float:
        return qaoa_state(inst, QaoaParams.from_vector(x), engine=engine).expectation

    def objective(x: np.ndarray) -> float:
        if config.shots is None:
            return expectation(x)
        probs = qaoa_state(inst, QaoaParams.from_vector(x), engine=engine).distribution
        probs = np.clip(probs, 0, None)
        counts = rng.multinomial(config.shots, probs / probs.sum())
        return float(counts @ basis.costs) / config.shots

    if config.delta_t_grid:
        starts = [tqa_init(p, dt).vector() for dt in DELTA_T_GRID]
        x0 = min(starts, key=objective)
    else:
        x0 = tqa_init(p, config.delta_t).vector()

    limit = config.max_iter + 2 * p + 1
    trace: list[tuple[int, float]] = []
    best = {"x": x0.copy(), "f": math.inf}

    def tracked(x: np.ndarray) -> float:
        if len(trace) >= limit:
            raise _Budget
        f = objective(x)
        trace.append((len(trace), f))
        if f < best["f"]:
            best["x"], best["f"] = np.array(x, copy=True), f
        return f

    simplex = np.vstack([x0] + [x0 + config.simplex_step * e for e in np.eye(2 * p)])
    try:
        minimize(
            tracked,
            x0,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxfev": limit, "xatol": 1e-8, "fatol": 1e-12},
        )
    except _Budget:
        pass

    params = QaoaParams.from_vector(best["x"])
    final = qaoa_state(inst, params, engine=engine)
    return QaoaResult(
        params=params,
        distribution=final.distribution,
        expectation=final.expectation,
        p_alpha=success_probability(final.distribution, basis.costs, config.alpha, basis.c_min),
        alpha=config.alpha,
        c_min=basis.c_min,
        initial_expectation=expectation(x0),
        trace=trace,
        basis=basis,
        leakage=final.leakage,
    )


def gradient_variance(
    inst: PbsInstance,
    p: int,
    samples: int = 100,
    eps: float = 1e-4,
    seed: int = 0,
    backend: str = "subspace",
    mixer: str = "projector",
) -> float:
    """Sample variance of the forward-difference derivative along ``beta_p``.

    Parameter vectors are drawn uniformly from ``[0, 2*pi)^(2p)``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    engine = make_backend(inst, backend, mixer)
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 2 * math.pi, size=(samples, 2 * p))
    grads = np.empty(samples)
    for k, theta in enumerate(thetas):
        shifted = theta.copy()
        shifted[-1] += eps
        e0 = qaoa_state(inst, QaoaParams.from_vector(theta), engine=engine).expectation
        e1 = qaoa_state(inst, QaoaParams.from_vector(shifted), engine=engine).expectation
        grads[k] = (e1 - e0) / eps
    return float(np.var(grads, ddof=1))
