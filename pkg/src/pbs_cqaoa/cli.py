"""``pbs-cqaoa`` command line: solve instances and rerun the benchmark studies.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .classical import brute_force, dp_solve, solve_decomposed, suggest_crops
from .model import (
    BENCHMARK_SHAPES,
    VARIANCE_ROWS,
    BudgetExceededError,
    PbsError,
    PbsTree,
    count_feasible,
    load_instance,
    log10_count_feasible,
    random_costs,
    random_tree,
    shape_tree,
)
from .qaoa import (
    BACKENDS,
    MIXERS,
    FeasibleBasis,
    QaoaParams,
    RunConfig,
    gradient_variance,
    optimize,
    qaoa_state,
    success_probability,
)
from .qubo import build_qubo, default_penalty
from .sim import CapacityError

log = logging.getLogger("pbs_cqaoa")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def resolve_instance(args: argparse.Namespace, seed: int | None = None):
    """Instance from ``--instance``, ``--random M N SEED`` or ``--shape NAME``.

    ``seed`` overrides the cost seed for generated instances.
    """
    if args.instance:
        path = Path(args.instance)
        if not path.is_file():
            raise UsageError(f"instance file not found: {path}")
        return load_instance(path)
    if args.random:
        M, N, s = args.random
        s = s if seed is None else seed
        tree = random_tree(M, max(1, N - 1), s)
        return random_costs(tree, N, s)
    if args.shape:
        tree, N = shape_tree(args.shape)
        return random_costs(tree, N, args.seed if seed is None else seed)
    raise UsageError("one of --instance, --random or --shape is required")


def _config_record(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], config: dict) -> None:
    """CSV with a leading ``# config:`` provenance comment, then the header row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    config = json.loads(lines[0][len("# config: "):])
    return config, list(csv.DictReader(lines[1:]))


def _run_config(args: argparse.Namespace, p: int) -> RunConfig:
    return RunConfig(
        p=p,
        mixer=args.mixer,
        backend=args.backend,
        max_iter=args.max_iter,
        delta_t=args.delta_t,
        delta_t_grid=args.delta_t_grid,
        alpha=args.alpha,
        seed=args.seed,
        instance=args.instance,
    )


# ---------------------------------------------------------------- commands


def cmd_solve(args: argparse.Namespace) -> dict:
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise UsageError(f"config file not found: {cfg_path}")
        run = RunConfig.from_json(cfg_path)
        if run.instance and not args.instance:
            args.instance = run.instance
        args.quantum = True
    inst = resolve_instance(args)
    config = _config_record(args)
    t0 = time.perf_counter()
    if args.quantum:
        run = RunConfig.from_json(args.config) if args.config else _run_config(args, args.p)
        res = optimize(inst, run.p, run)
        record = {"solver": "qaoa", "run_config": run.to_dict()}
        record.update(res.to_dict(top_k=args.top_k, include_distribution=True))
    else:
        crops = args.crop
        if args.decompose is not None:
            crops = suggest_crops(inst.tree, args.decompose)
        if crops:
            f, c = solve_decomposed(inst, crops)
            kind = "dp_decomposed"
        elif args.brute_force:
            f, c = brute_force(inst)
            kind = "brute_force"
        else:
            f, c = dp_solve(inst)
            kind = "dp"
        record = {"solver": kind, "assignment": list(f), "cost": c, "crops": list(crops or [])}
    record["wall_time_s"] = time.perf_counter() - t0
    record["config"] = config
    out = _out_dir(args) / "result.json"
    out.write_text(json.dumps(record, indent=2))
    print(json.dumps({k: record[k] for k in record if k not in ("distribution", "trace")}, indent=2))
    return record


def cmd_benchmark(args: argparse.Namespace) -> dict:
    config = _config_record(args)
    seeds = args.seeds or [args.seed]
    layers = args.layers
    palpha_rows, hist_rows = [], []
    for seed in seeds:
        inst = resolve_instance(args, seed if not args.instance else None)
        basis = FeasibleBasis(inst)
        log.info("seed %d: |F| = %d", seed, len(basis))
        results = {}
        for p in sorted(set(layers) | {3}):
            if p == 0:
                st = qaoa_state(inst, None, args.backend, args.mixer)
                probs, expectation = st.distribution, st.expectation
            else:
                run = _run_config(args, p)
                run.seed = seed
                res = optimize(inst, p, run)
                probs, expectation = res.distribution, res.expectation
            results[p] = probs
            if p in layers:
                pa = success_probability(probs, basis.costs, args.alpha, basis.c_min)
                palpha_rows.append((p, pa, expectation, seed, len(basis)))
        for c, q in cost_histogram(results[3], basis.costs):
            hist_rows.append((c, q, seed))
    out = _out_dir(args)
    write_csv(out / "palpha.csv", ("layers", "P_alpha", "expectation", "seed", "num_feasible"), palpha_rows, config)
    write_csv(out / "cost_hist.csv", ("cost_bin", "aggregated_probability", "seed"), hist_rows, config)
    for row in palpha_rows:
        print(f"seed={row[3]} layers={row[0]} |F|={row[4]} P_alpha={row[1]:.6f} <C>={row[2]:.6f}")
    return {"palpha": palpha_rows, "cost_hist": hist_rows}


def cost_histogram(probs: np.ndarray, costs: np.ndarray, decimals: int = 9) -> list[tuple[float, float]]:
    """Probability aggregated over assignments sharing a cost value (rounded)."""
    keys = np.round(costs, decimals)
    uniq, inv = np.unique(keys, return_inverse=True)
    agg = np.bincount(inv, weights=probs, minlength=len(uniq))
    return [(float(c), float(q)) for c, q in zip(uniq, agg)]


def dims_rows(m_min: int, m_max: int, trees: int, model: str, seed: int) -> list[tuple]:
    rows = []
    for M in range(m_min, m_max + 1):
        N = M // 2
        cap = max(1, N - 1)
        logs = [log10_count_feasible(random_tree(M, cap, seed + k, model), N) for k in range(trees)]
        full = M * N * math.log10(2)
        mean_feasible = float(np.mean(logs))
        rows.append((M, full, mean_feasible, full - mean_feasible))
    return rows


def cmd_dims(args: argparse.Namespace) -> dict:
    rows = dims_rows(args.m_min, args.m_max, args.trees, args.tree_model, args.seed)
    write_csv(
        _out_dir(args) / "dims.csv",
        ("M", "log10_full_space", "log10_mean_feasible", "gap"),
        rows,
        _config_record(args),
    )
    for M, full, feas, gap in rows:
        print(f"M={M:3d} N={M // 2:3d} log10|H|={full:8.3f} log10|F|={feas:8.3f} gap={gap:8.3f}")
    return {"rows": rows}


def variance_rows(rows, p: int, samples: int, eps: float, seed: int, backend: str) -> list[tuple]:
    out = []
    for edges, N in rows:
        tree = PbsTree.from_edges(edges)
        inst = random_costs(tree, N, seed)
        var = gradient_variance(inst, p, samples, eps, seed, backend=backend)
        out.append((tree.node_count * N, count_feasible(tree, N), var, samples, eps))
    return out


def cmd_variance(args: argparse.Namespace) -> dict:
    rows = variance_rows(VARIANCE_ROWS, args.p, args.samples, args.eps, args.seed, args.backend)
    write_csv(
        _out_dir(args) / "variance.csv",
        ("N_q", "F_size", "variance", "samples", "epsilon"),
        rows,
        _config_record(args),
    )
    for nq, F, var, *_ in rows:
        print(f"N_q={nq:3d} |F|={F:5d} Var={var:.6e}")
    return {"rows": rows}


def cmd_export_qubo(args: argparse.Namespace) -> dict:
    inst = resolve_instance(args)
    lam = default_penalty(inst)
    lams = [lam if v is None else v for v in (args.lambda1, args.lambda2, args.lambda3)]
    model = build_qubo(inst, *lams)
    out = _out_dir(args) / "qubo.txt"
    header = "# config: " + json.dumps(_config_record(args), sort_keys=True) + "\n"
    out.write_text(header + model.to_triplets())
    print(f"wrote {out} ({model.num_vars} variables, {len(model.coeffs)} terms, lambdas={lams})")
    return {"path": str(out), "lambdas": lams}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--instance", metavar="FILE", help="JSON instance file")
    src.add_argument("--random", nargs=3, type=int, metavar=("M", "N", "SEED"), help="random tree and costs")
    src.add_argument("--shape", choices=sorted(BENCHMARK_SHAPES), help="benchmark tree shape with seeded random costs")
    common.add_argument("--layers", type=_int_list, default=[0, 1, 2, 3, 4, 5], help="comma-separated layer counts")
    common.add_argument("--alpha", type=float, default=0.1)
    common.add_argument("--mixer", choices=MIXERS, default="projector")
    common.add_argument("--backend", choices=BACKENDS, default="subspace")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="results", metavar="DIR")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--delta-t", type=float, default=0.75)
    common.add_argument("--delta-t-grid", action="store_true", help="pick the best TQA step from a small grid")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pbs-cqaoa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one instance")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--classical", action="store_true", help="dynamic programming (default)")
    mode.add_argument("--quantum", action="store_true", help="constrained QAOA")
    p.add_argument("-p", type=int, default=3, help="QAOA layers")
    p.add_argument("--config", metavar="FILE", help="QAOA run configuration JSON")
    p.add_argument("--brute-force", action="store_true")
    p.add_argument("--crop", type=_int_list, default=None, help="crop nodes for decomposition")
    p.add_argument("--decompose", type=int, default=None, metavar="DEG", help="crop by max-degree threshold")
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("benchmark", parents=[common], help="P_alpha versus layers and p=3 cost histogram")
    p.add_argument("--seeds", type=_int_list, default=None, help="cost seeds (generated instances)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("dims", parents=[common], help="full versus feasible state-space dimension")
    p.add_argument("--m-min", type=int, default=4)
    p.add_argument("--m-max", type=int, default=20)
    p.add_argument("--trees", type=int, default=30)
    p.add_argument("--tree-model", choices=("branching", "attachment"), default="branching")
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("variance", parents=[common], help="gradient variance over the benchmark rows")
    p.add_argument("-p", type=int, default=3, help="QAOA layers")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-4)
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("export-qubo", parents=[common], help="write the penalty QUBO as sparse triplets")
    for k in (1, 2, 3):
        p.add_argument(f"--lambda{k}", type=float, default=None)
    p.set_defaults(func=cmd_export_qubo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (UsageError, PbsError, CapacityError, BudgetExceededError, ValueError) as exc:
        print(f"pbs-cqaoa: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"pbs-cqaoa: runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
