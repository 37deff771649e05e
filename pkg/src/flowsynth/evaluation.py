"""Test-set construction, batched policy evaluation, and report emission.

Metrics mirror the usual synthesis benchmarks: success rate per reference
length, sampling attempts to first success, a reference-vs-synthesized
length confusion matrix, and a histogram of distinct correct circuits per
target. Reference lengths come from the exhaustive oracle when the search
fits its budget ("oracle" provenance, true minimal lengths) and fall back to
the generating depth otherwise ("generation-depth" provenance).
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .env import RewardConfig, rollout_batch
from .errors import BudgetExceeded, ValidationError
from .gates import (ActionSpace, GateInstance, GateSet, action_space, circuit_matrix,
                    gate_set, normalize_gate_name, random_target)
from .search import DEFAULT_NODE_BUDGET, bfs_min_length, canonical_key

plt.rcParams["svg.hashsalt"] = "flowsynth"

ORACLE = "oracle"
GENERATION_DEPTH = "generation-depth"


@dataclass
class TestTarget:
    __test__ = False  # keep pytest from collecting this as a test class

    circuit: list[GateInstance]
    generation_depth: int
    reference_length: int
    provenance: str  # "oracle" | "generation-depth"

    def matrix(self, n: int, gs: GateSet) -> np.ndarray:
        return circuit_matrix(self.circuit, n, gs)


@dataclass
class TestSet:
    __test__ = False  # keep pytest from collecting this as a test class

    gate_set_name: str
    gate_set_members: tuple[str, ...]
    n: int
    seed: int
    oracle_cap: int
    targets: list[TestTarget]

    def resolve_gate_set(self) -> GateSet:
        if self.gate_set_name in ("G1", "G2"):
            return gate_set(self.gate_set_name)
        return GateSet(self.gate_set_name, self.gate_set_members)


def build_test_set(lengths, per_length: int, gs: GateSet, n: int,
                   rng: np.random.Generator, oracle_cap: int = 4,
                   node_budget: int = DEFAULT_NODE_BUDGET,
                   seed: int | None = None,
                   allow_arity_pruning: bool = False) -> TestSet:
    """Distinct random targets per reference length, deterministically.

    Targets inside one length bucket are deduplicated by canonical key and
    regenerated on collision; if the pool of distinct depth-L unitaries is
    smaller than ``per_length`` (short depths on small gate sets), the bucket
    is capped at what exists and a warning is emitted.
    """
    space = action_space(gs, n, allow_arity_pruning)
    targets: list[TestTarget] = []
    for length in lengths:
        seen: set[bytes] = set()
        bucket = 0
        attempts_left = 200 * per_length
        while bucket < per_length:
            if attempts_left <= 0:
                warnings.warn(
                    f"bucket for depth {length} capped at {bucket} distinct targets "
                    f"(requested {per_length})"
                )
                break
            attempts_left -= 1
            matrix, circuit = random_target(length, gs, n, rng, space=space)
            key = canonical_key(matrix)
            if key in seen:
                continue
            seen.add(key)
            bucket += 1
            reference, provenance = length, GENERATION_DEPTH
            if length <= oracle_cap:
                try:
                    res = bfs_min_length(matrix, gs, n, l_cap=oracle_cap,
                                         node_budget=node_budget, space=space)
                    if res.min_length is not None:
                        reference, provenance = res.min_length, ORACLE
                except BudgetExceeded:
                    pass
            targets.append(TestTarget(circuit=list(circuit), generation_depth=length,
                                      reference_length=reference, provenance=provenance))
    return TestSet(gate_set_name=gs.name, gate_set_members=gs.members, n=n,
                   seed=-1 if seed is None else seed, oracle_cap=oracle_cap,
                   targets=targets)


def save_test_set(ts: TestSet, path) -> None:
    """Header line with set-level metadata, then one JSON line per target."""
    with open(path, "w") as fh:
        fh.write(json.dumps({
            "kind": "testset", "gate_set": ts.gate_set_name,
            "members": list(ts.gate_set_members), "n": ts.n,
            "seed": ts.seed, "oracle_cap": ts.oracle_cap,
        }, ensure_ascii=False) + "\n")
        for t in ts.targets:
            fh.write(json.dumps({
                "circuit": {"gates": [{"g": g.gate_name, "q": list(g.qubits)}
                                      for g in t.circuit], "n": ts.n},
                "generation_depth": t.generation_depth,
                "reference_length": t.reference_length,
                "provenance": t.provenance,
            }, ensure_ascii=False) + "\n")


def load_test_set(path) -> TestSet:
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    head = json.loads(lines[0])
    if head.get("kind") != "testset":
        raise ValidationError(f"{path} does not look like a test-set file")
    targets = []
    for line in lines[1:]:
        obj = json.loads(line)
        circuit = [GateInstance(normalize_gate_name(e["g"]), tuple(e["q"]))
                   for e in obj["circuit"]["gates"]]
        targets.append(TestTarget(
            circuit=circuit,
            generation_depth=obj["generation_depth"],
            reference_length=obj["reference_length"],
            provenance=obj["provenance"],
        ))
    return TestSet(gate_set_name=head["gate_set"], gate_set_members=tuple(head["members"]),
                   n=head["n"], seed=head["seed"], oracle_cap=head["oracle_cap"],
                   targets=targets)


@dataclass
class TargetResult:
    reference_length: int
    provenance: str
    generation_depth: int
    success: bool
    attempts: int                      # 1-based index of first success; k_max+1 if none
    shortest_length: int | None
    solutions: list[tuple[int, ...]]   # distinct successful action-index sequences

    @property
    def distinct_solutions(self) -> int:
        return len(self.solutions)


@dataclass
class EvalReport:
    k_max: int
    results: list[TargetResult]

    def reference_lengths(self) -> list[int]:
        return sorted({r.reference_length for r in self.results})

    def success_rate(self, length: int | None = None) -> float:
        rs = [r for r in self.results if length is None or r.reference_length == length]
        return float(np.mean([r.success for r in rs])) if rs else 0.0

    def mean_attempts(self, length: int | None = None) -> float:
        """Mean attempts-to-first-success over *successful* targets; nan if none."""
        rs = [r for r in self.results
              if r.success and (length is None or r.reference_length == length)]
        return float(np.mean([r.attempts for r in rs])) if rs else float("nan")

    def n_failed(self, length: int | None = None) -> int:
        return sum(1 for r in self.results
                   if not r.success and (length is None or r.reference_length == length))


def evaluate(policy, space: ActionSpace, ts: TestSet, k_max: int,
             cfg: RewardConfig, rng: np.random.Generator) -> EvalReport:
    """Draw up to k_max rollouts per target.

    The attempt counter stops at the first success, but sampling continues to
    k_max so distinct solutions can be counted from the full budget.
    """
    gs = ts.resolve_gate_set()
    if gs.members != space.gate_set.members or ts.n != space.n:
        raise ValidationError("test set and action space disagree on gate set or qubit count")
    results = []
    for target in ts.targets:
        matrix = target.matrix(ts.n, gs)
        trajs = rollout_batch(policy, space, [matrix] * k_max, cfg, rng)
        succ_idx = [i for i, t in enumerate(trajs) if t.success]
        solutions: list[tuple[int, ...]] = []
        seen = set()
        for i in succ_idx:
            key = tuple(trajs[i].actions)
            if key not in seen:
                seen.add(key)
                solutions.append(key)
        results.append(TargetResult(
            reference_length=target.reference_length,
            provenance=target.provenance,
            generation_depth=target.generation_depth,
            success=bool(succ_idx),
            attempts=(succ_idx[0] + 1) if succ_idx else k_max + 1,
            shortest_length=min(len(trajs[i].actions) for i in succ_idx) if succ_idx else None,
            solutions=solutions,
        ))
    return EvalReport(k_max=k_max, results=results)


def length_confusion(report: EvalReport, provenance: str | None = None):
    """Row-normalized reference-length vs shortest-synthesized-length matrix.

    Returns (ref_lengths, synth_lengths, matrix, below_diagonal_mass). Rows
    with no successful target stay all-zero and are excluded from the
    below-diagonal mass, which is the fraction of successful targets whose
    shortest solution beats the reference length.
    """
    rs = [r for r in report.results
          if r.success and (provenance is None or r.provenance == provenance)]
    if not rs:
        return [], [], np.zeros((0, 0)), 0.0
    ref_lengths = sorted({r.reference_length for r in rs})
    synth_lengths = sorted({r.shortest_length for r in rs})
    m = np.zeros((len(ref_lengths), len(synth_lengths)))
    below = 0
    for r in rs:
        m[ref_lengths.index(r.reference_length), synth_lengths.index(r.shortest_length)] += 1
        if r.shortest_length < r.reference_length:
            below += 1
    sums = m.sum(axis=1, keepdims=True)
    normalized = np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)
    return ref_lengths, synth_lengths, normalized, below / len(rs)


def diversity_histogram(report: EvalReport) -> dict[int, int]:
    """Distinct-successful-circuit counts -> number of targets."""
    hist: dict[int, int] = {}
    for r in report.results:
        hist[r.distinct_solutions] = hist.get(r.distinct_solutions, 0) + 1
    return dict(sorted(hist.items()))


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Write metrics/confusion/diversity CSVs, SVG plots, and a text summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["reference_length", "n_targets", "n_success", "success_rate",
                    "mean_attempts_successful", "n_failed"])
        for length in report.reference_lengths():
            n_targets = sum(1 for r in report.results if r.reference_length == length)
            n_success = sum(1 for r in report.results
                            if r.reference_length == length and r.success)
            w.writerow([length, n_targets, n_success,
                        repr(report.success_rate(length)),
                        repr(report.mean_attempts(length)),
                        report.n_failed(length)])
    paths["metrics"] = metrics_path

    ref_lengths, synth_lengths, matrix, below = length_confusion(report)
    confusion_path = out / "confusion.csv"
    with open(confusion_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["reference_length"] + [f"synth_{k}" for k in synth_lengths])
        for i, length in enumerate(ref_lengths):
            w.writerow([length] + [repr(float(v)) for v in matrix[i]])
    paths["confusion"] = confusion_path

    diversity_path = out / "diversity.csv"
    hist = diversity_histogram(report)
    with open(diversity_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distinct_solutions", "n_targets"])
        for count, n_targets in hist.items():
            w.writerow([count, n_targets])
    paths["diversity"] = diversity_path

    _, _, _, below_oracle = length_confusion(report, provenance=ORACLE)
    summary_path = out / "summary.txt"
    with open(summary_path, "w") as fh:
        fh.write(f"targets evaluated: {len(report.results)}\n")
        fh.write(f"sample budget per target (k_max): {report.k_max}\n")
        fh.write(f"overall success rate: {report.success_rate()!r}\n")
        fh.write(f"mean attempts to first success (successful targets only): "
                 f"{report.mean_attempts()!r}\n")
        fh.write(f"failed targets: {report.n_failed()}\n")
        fh.write(f"below-reference length fraction, all provenances: {below!r}\n")
        fh.write(f"below-reference length fraction, oracle provenance: {below_oracle!r}\n")
        fh.write("attempts convention: first-success index, averaged over successful "
                 "targets; failures are counted separately, not averaged in.\n")
    paths["summary"] = summary_path

    paths.update(_write_plots(report, out, ref_lengths, synth_lengths, matrix, hist))
    return paths


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _write_plots(report, out: Path, ref_lengths, synth_lengths, matrix, hist) -> dict[str, Path]:
    paths = {}
    lengths = report.reference_lengths()

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(lengths, [report.success_rate(k) for k in lengths], marker="o")
    ax.set_xlabel("reference length")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths["success_plot"] = out / "success_vs_length.svg"
    _save_svg(fig, paths["success_plot"])

    fig, ax = plt.subplots(figsize=(5, 3.5))
    attempts = [report.mean_attempts(k) for k in lengths]
    ax.plot(lengths, attempts, marker="s", color="tab:orange")
    ax.set_xlabel("reference length")
    ax.set_ylabel("mean attempts to first success")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths["attempts_plot"] = out / "attempts_vs_length.svg"
    _save_svg(fig, paths["attempts_plot"])

    fig, ax = plt.subplots(figsize=(4.5, 4))
    if len(ref_lengths):
        im = ax.imshow(matrix, cmap="viridis", vmin=0.0, vmax=1.0, origin="upper")
        ax.set_xticks(range(len(synth_lengths)), synth_lengths)
        ax.set_yticks(range(len(ref_lengths)), ref_lengths)
        fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("synthesized length")
    ax.set_ylabel("reference length")
    fig.tight_layout()
    paths["confusion_plot"] = out / "confusion.svg"
    _save_svg(fig, paths["confusion_plot"])

    fig, ax = plt.subplots(figsize=(5, 3.5))
    if hist:
        ax.bar(list(hist.keys()), list(hist.values()), color="tab:green")
    ax.set_xlabel("distinct correct circuits per target")
    ax.set_ylabel("targets")
    fig.tight_layout()
    paths["diversity_plot"] = out / "diversity.svg"
    _save_svg(fig, paths["diversity_plot"])
    return paths
