"""Exhaustive ground truth: minimal circuit lengths and solution enumeration.

Breadth-first search over gate sequences, deduplicating partial products by a
canonical fingerprint that is invariant under global phase. At desk scale
this gives true minimal lengths, which is a stronger reference than any
heuristic compiler baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, ValidationError
from .gates import ActionSpace, GateInstance, GateSet, action_space, fidelity

DEFAULT_NODE_BUDGET = 2_000_000
MATCH_FIDELITY = 0.999


def canonical_key(matrix: np.ndarray, tol: float = 1e-6, decimals: int = 6) -> bytes:
    """Phase-fixed, rounded fingerprint of a unitary.

    The first row-major entry with modulus above ``tol`` is rotated onto the
    positive real axis, every component is rounded, and the result serialized.
    Equal keys imply the unitaries agree up to global phase within rounding.
    """
    flat = matrix.ravel()
    idx = np.flatnonzero(np.abs(flat) > tol)
    if idx.size == 0:
        raise ValidationError("matrix has no entry above tolerance; not a unitary")
    pivot = flat[idx[0]]
    fixed = matrix * (pivot.conj() / abs(pivot))
    # +0.0 folds any -0.0 produced by rounding into +0.0 for stable bytes
    re = np.round(fixed.real, decimals) + 0.0
    im = np.round(fixed.imag, decimals) + 0.0
    return re.tobytes() + im.tobytes()


@dataclass
class OracleResult:
    min_length: int | None  # None means "not found within cap"
    witness: list[GateInstance] | None
    count_at_min: int


def _check_budget(count: int, budget: int) -> None:
    if count > budget:
        raise BudgetExceeded(f"search expanded {count} nodes, budget is {budget}")


def bfs_min_length(target: np.ndarray, gs: GateSet, n: int, l_cap: int,
                   node_budget: int = DEFAULT_NODE_BUDGET,
                   prune: bool = True,
                   space: ActionSpace | None = None,
                   allow_arity_pruning: bool = False) -> OracleResult:
    """Shortest gate sequence whose product matches the target.

    Matching means fidelity > 0.999 against the target; the visited set keys
    on canonical_key of the partial product, which merges phase-equivalent
    prefixes and cannot change the minimal length. ``count_at_min`` counts
    the distinct minimal sequences the pruned search still reaches.
    """
    space = space if space is not None else action_space(gs, n, allow_arity_pruning)
    if len(space) ** l_cap > node_budget:
        raise BudgetExceeded(
            f"|A|^l_cap = {len(space)}^{l_cap} exceeds node budget {node_budget}"
        )
    d = 2**n
    identity = np.eye(d, dtype=np.complex128)
    if fidelity(target, identity) > MATCH_FIDELITY:
        return OracleResult(min_length=0, witness=[], count_at_min=1)

    mats = space.matrices
    visited = {canonical_key(identity)}
    frontier: list[tuple[list[int], np.ndarray]] = [([], identity)]
    expanded = 0
    for length in range(1, l_cap + 1):
        matches: list[list[int]] = []
        next_frontier: list[tuple[list[int], np.ndarray]] = []
        for seq, prod in frontier:
            for a in range(len(mats)):
                expanded += 1
                _check_budget(expanded, node_budget)
                new_prod = mats[a] @ prod
                new_seq = seq + [a]
                if fidelity(target, new_prod) > MATCH_FIDELITY:
                    matches.append(new_seq)
                    continue
                if prune:
                    key = canonical_key(new_prod)
                    if key in visited:
                        continue
                    visited.add(key)
                next_frontier.append((new_seq, new_prod))
        if matches:
            witness = [space.actions[a] for a in matches[0]]
            return OracleResult(min_length=length, witness=witness,
                                count_at_min=len(matches))
        frontier = next_frontier
    return OracleResult(min_length=None, witness=None, count_at_min=0)


def enumerate_solutions(target: np.ndarray, gs: GateSet, n: int, l_cap: int,
                        limit: int | None = None,
                        node_budget: int = DEFAULT_NODE_BUDGET,
                        space: ActionSpace | None = None,
                        allow_arity_pruning: bool = False) -> list[list[GateInstance]]:
    """All gate sequences of length <= l_cap matching the target.

    Sequences are distinct as sequences (no pruning at all) and returned in
    (length, lexicographic action index) order, truncated at ``limit``.
    """
    space = space if space is not None else action_space(gs, n, allow_arity_pruning)
    if sum(len(space) ** k for k in range(l_cap + 1)) > node_budget:
        raise BudgetExceeded(
            f"full enumeration to cap {l_cap} exceeds node budget {node_budget}"
        )
    d = 2**n
    mats = space.matrices
    solutions: list[list[GateInstance]] = []
    frontier: list[tuple[list[int], np.ndarray]] = [([], np.eye(d, dtype=np.complex128))]
    if fidelity(target, frontier[0][1]) > MATCH_FIDELITY:
        solutions.append([])
        if limit is not None and len(solutions) >= limit:
            return solutions
    for _ in range(l_cap):
        next_frontier = []
        for seq, prod in frontier:
            for a in range(len(mats)):
                new_prod = mats[a] @ prod
                new_seq = seq + [a]
                if fidelity(target, new_prod) > MATCH_FIDELITY:
                    solutions.append([space.actions[i] for i in new_seq])
                    if limit is not None and len(solutions) >= limit:
                        return solutions
                next_frontier.append((new_seq, new_prod))
        frontier = next_frontier
    return solutions
