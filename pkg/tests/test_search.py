import numpy as np
import pytest

from flowsynth.errors import BudgetExceeded
from flowsynth.gates import (GateInstance, action_space, base_matrix, circuit_matrix,
                             fidelity, gate_set, random_target)
from flowsynth.search import bfs_min_length, canonical_key, enumerate_solutions

G1 = gate_set("G1")
HZ = gate_set("HZ", members=("H", "Z"))
H_ONLY = gate_set("Honly", members=("H",))


# ---------------------------------------------------------------------------
# canonical keys
# ---------------------------------------------------------------------------

def test_key_is_phase_invariant():
    eye = np.eye(2, dtype=complex)
    assert canonical_key(eye) == canonical_key(np.exp(1j * np.pi / 3) * eye)
    s = base_matrix("S")
    assert canonical_key(s) == canonical_key(np.exp(1j * np.pi / 4) * s)


def test_key_separates_distinct_unitaries():
    assert canonical_key(np.eye(2, dtype=complex)) != canonical_key(base_matrix("X"))
    assert canonical_key(base_matrix("S")) != canonical_key(base_matrix("Z"))


def test_key_stability_under_float_noise():
    rng = np.random.default_rng(0)
    for _ in range(50):
        u, _ = random_target(8, G1, 2, rng)
        phi = rng.uniform(0, 2 * np.pi)
        noisy = np.exp(1j * phi) * u + (rng.normal(size=(4, 4)) * 1e-12)
        assert canonical_key(u) == canonical_key(noisy)


def test_key_equality_implies_high_fidelity():
    # spot check over a frontier of random products
    rng = np.random.default_rng(1)
    pool = [random_target(int(rng.integers(1, 5)), G1, 2, rng)[0] for _ in range(300)]
    keys = [canonical_key(u) for u in pool]
    by_key = {}
    for u, k in zip(pool, keys):
        by_key.setdefault(k, []).append(u)
    checked = 0
    for group in by_key.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                assert fidelity(group[i], group[j]) > 0.9999
                checked += 1
    assert checked > 0  # the pool does contain coincidences


# ---------------------------------------------------------------------------
# minimal-length search
# ---------------------------------------------------------------------------

def test_identity_has_min_length_zero():
    res = bfs_min_length(np.eye(2), G1, 1, l_cap=3, allow_arity_pruning=True)
    assert res.min_length == 0 and res.witness == []


def test_z_is_found_at_length_one():
    res = bfs_min_length(base_matrix("Z"), G1, 1, l_cap=3, allow_arity_pruning=True)
    assert res.min_length == 1
    assert res.witness == [GateInstance("Z", (0,))]


def test_t_squared_is_s():
    target = base_matrix("T") @ base_matrix("T")
    res = bfs_min_length(target, G1, 1, l_cap=3, allow_arity_pruning=True)
    assert res.min_length == 1
    assert res.witness == [GateInstance("S", (0,))]


def test_witness_reproduces_target():
    rng = np.random.default_rng(2)
    for _ in range(10):
        target, _ = random_target(3, G1, 2, rng)
        res = bfs_min_length(target, G1, 2, l_cap=3)
        assert res.min_length is not None and res.min_length <= 3
        assert fidelity(target, circuit_matrix(res.witness, 2, G1)) > 0.999


def test_min_length_not_found_within_cap():
    # a depth-4 CNOT-rich target usually needs more than 1 gate
    target = circuit_matrix([GateInstance("CNOT", (0, 1)), GateInstance("H", (0,)),
                             GateInstance("CNOT", (1, 0)), GateInstance("T", (1,))], 2, G1)
    res = bfs_min_length(target, G1, 2, l_cap=1)
    assert res.min_length is None and res.witness is None


def test_budget_guard_raises():
    with pytest.raises(BudgetExceeded):
        bfs_min_length(np.eye(4), G1, 2, l_cap=6, node_budget=1000)


def test_pruning_soundness_on_n1():
    rng = np.random.default_rng(3)
    space = action_space(G1, 1, allow_arity_pruning=True)
    for _ in range(15):
        target, _ = random_target(int(rng.integers(1, 5)), G1, 1, rng, space=space)
        pruned = bfs_min_length(target, G1, 1, l_cap=4, prune=True, space=space)
        full = bfs_min_length(target, G1, 1, l_cap=4, prune=False, space=space)
        assert pruned.min_length == full.min_length


def test_min_length_is_lower_bound_vs_enumeration():
    rng = np.random.default_rng(4)
    space = action_space(G1, 1, allow_arity_pruning=True)
    for _ in range(10):
        target, _ = random_target(int(rng.integers(1, 5)), G1, 1, rng, space=space)
        res = bfs_min_length(target, G1, 1, l_cap=4, space=space)
        sols = enumerate_solutions(target, G1, 1, l_cap=4, space=space)
        if res.min_length is None:
            assert sols == []
        else:
            assert min(len(s) for s in sols) == res.min_length


# ---------------------------------------------------------------------------
# solution enumeration
# ---------------------------------------------------------------------------

def test_enumerate_identity_with_h_only():
    sols = enumerate_solutions(np.eye(2), H_ONLY, 1, l_cap=2)
    assert sols == [[], [GateInstance("H", (0,)), GateInstance("H", (0,))]]


def test_enumerate_z_contains_both_routes():
    sols = enumerate_solutions(base_matrix("Z"), G1, 1, l_cap=2, allow_arity_pruning=True)
    assert [GateInstance("Z", (0,))] in sols
    assert [GateInstance("S", (0,)), GateInstance("S", (0,))] in sols


def test_enumerated_solutions_all_check_out():
    rng = np.random.default_rng(5)
    target, _ = random_target(2, G1, 1, rng,
                              space=action_space(G1, 1, allow_arity_pruning=True))
    sols = enumerate_solutions(target, G1, 1, l_cap=3, allow_arity_pruning=True)
    assert sols, "depth-2 target must be solvable within cap 3"
    for s in sols:
        assert fidelity(target, circuit_matrix(s, 1, G1)) > 0.999
    as_tuples = [tuple(s) for s in sols]
    assert len(set(as_tuples)) == len(as_tuples)
    assert as_tuples == sorted(as_tuples, key=len)  # ordered by length


def test_enumerate_respects_limit():
    sols = enumerate_solutions(np.eye(2), HZ, 1, l_cap=4, limit=3)
    assert len(sols) == 3


def test_enumerate_budget_guard():
    with pytest.raises(BudgetExceeded):
        enumerate_solutions(np.eye(4), G1, 2, l_cap=8, node_budget=10_000)


def test_toy_target_z_has_unique_solution_within_two():
    sols = enumerate_solutions(base_matrix("Z"), HZ, 1, l_cap=2)
    assert sols == [[GateInstance("Z", (0,))]]
