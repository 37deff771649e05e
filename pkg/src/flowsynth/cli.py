"""Command-line entry points: train, evaluate, build-testset, synthesize, oracle."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .env import RewardConfig, rollout_batch
from .errors import FlowsynthError
from .evaluation import build_test_set, evaluate, load_test_set, save_test_set, write_report
from .gates import (circuit_from_json, circuit_matrix, circuit_to_json, gate_set,
                    matrix_from_json)
from .policy import TorchPolicy, load_checkpoint
from .search import bfs_min_length, enumerate_solutions
from .training import load_train_config, train


def _load_target_file(path: str) -> tuple[np.ndarray, int]:
    """Accept either a circuit JSON file or a matrix JSON file."""
    text = Path(path).read_text()
    obj = json.loads(text)
    if "gates" in obj:
        circuit, n = circuit_from_json(text)
        return circuit_matrix(circuit, n), n
    if "matrix" in obj:
        m = matrix_from_json(text)
        return m, int(obj["n"])
    raise FlowsynthError(f"{path} is neither a circuit file nor a matrix file")


def _parse_lengths(spec: str) -> range:
    """'A..B' inclusive, or a single integer."""
    if ".." in spec:
        lo, hi = spec.split("..")
        return range(int(lo), int(hi) + 1)
    v = int(spec)
    return range(v, v + 1)


def cmd_train(args) -> int:
    cfg = load_train_config(args.config)
    path = train(cfg, resume=args.resume)
    print(json.dumps({"checkpoint": str(path), "metrics": str(Path(cfg.out_dir) / "metrics.csv")}))
    return 0


def cmd_build_testset(args) -> int:
    gs = gate_set(args.gate_set)
    rng = np.random.default_rng(args.seed)
    ts = build_test_set(_parse_lengths(args.lengths), args.per_length, gs, args.n,
                        rng, oracle_cap=args.oracle_cap, seed=args.seed)
    save_test_set(ts, args.out)
    print(json.dumps({"test_set": args.out, "targets": len(ts.targets)}))
    return 0


def cmd_evaluate(args) -> int:
    net, space, _ = load_checkpoint(args.checkpoint)
    ts = load_test_set(args.test_set)
    cfg = RewardConfig(l_max=args.l_max)
    rng = np.random.default_rng(args.seed)
    report = evaluate(TorchPolicy(net), space, ts, args.k_max, cfg, rng)
    paths = write_report(report, args.out)
    print(json.dumps({
        "overall_success_rate": report.success_rate(),
        "mean_attempts": report.mean_attempts(),
        "out": {k: str(v) for k, v in paths.items()},
    }))
    return 0


def cmd_synthesize(args) -> int:
    net, space, _ = load_checkpoint(args.checkpoint)
    target, n = _load_target_file(args.target)
    if n != space.n:
        raise FlowsynthError(f"target has n={n} but checkpoint was trained with n={space.n}")
    cfg = RewardConfig(l_max=args.l_max)
    rng = np.random.default_rng(args.seed)
    trajs = rollout_batch(TorchPolicy(net), space, [target] * args.k_max, cfg, rng)
    successes = [t for t in trajs if t.success]
    if not successes:
        print(json.dumps({"success": False, "attempts": args.k_max}))
        return 1
    best = min(successes, key=lambda t: len(t.actions))
    circuit = [space.actions[a] for a in best.actions]
    print(circuit_to_json(circuit, space.n))
    return 0


def cmd_oracle(args) -> int:
    target, n = _load_target_file(args.target)
    gs = gate_set(args.gate_set)
    result = bfs_min_length(target, gs, n, l_cap=args.cap,
                            node_budget=args.node_budget,
                            allow_arity_pruning=True)
    out = {
        "min_length": result.min_length,
        "witness": None if result.witness is None else
            [{"g": g.gate_name, "q": list(g.qubits)} for g in result.witness],
        "count_at_min": result.count_at_min,
    }
    if args.enumerate:
        sols = enumerate_solutions(target, gs, n, l_cap=args.cap, limit=args.limit,
                                   node_budget=args.node_budget, allow_arity_pruning=True)
        out["solutions"] = [[{"g": g.gate_name, "q": list(g.qubits)} for g in s]
                            for s in sols]
        out["solution_count"] = len(sols)
    print(json.dumps(out, ensure_ascii=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowsynth",
        description="Exact unitary synthesis with a flow-network policy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy from a YAML config")
    p.add_argument("--config", required=True, help="YAML file covering every config field")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-testset", help="generate a benchmark test set")
    p.add_argument("--lengths", required=True, help="inclusive range, e.g. 1..4")
    p.add_argument("--per-length", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gate-set", default="G1", choices=["G1", "G2"])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--oracle-cap", type=int, default=4)
    p.set_defaults(func=cmd_build_testset)

    p = sub.add_parser("evaluate", help="run a checkpoint over a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-set", required=True)
    p.add_argument("--k-max", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--l-max", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synthesize", help="print the best circuit found for one target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True, help="circuit or matrix JSON file")
    p.add_argument("--k-max", type=int, default=256)
    p.add_argument("--l-max", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("oracle", help="exhaustive minimal-length search for one target")
    p.add_argument("--target", required=True, help="circuit or matrix JSON file")
    p.add_argument("--gate-set", required=True, choices=["G1", "G2"])
    p.add_argument("--cap", type=int, required=True)
    p.add_argument("--enumerate", action="store_true")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--node-budget", type=int, default=2_000_000)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlowsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
