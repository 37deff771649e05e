import numpy as np
import pytest

from flowsynth.env import (RewardConfig, SynthesisState, Trajectory, is_success, reset,
                           residual_trace_fidelity, reward, rollout, rollout_batch, step,
                           uniform_policy)
from flowsynth.errors import ContractViolation, ValidationError
from flowsynth.gates import (GateInstance, action_space, base_matrix, circuit_matrix,
                             embed_gate, fidelity, gate_set, random_target)

G1 = gate_set("G1")
CFG = RewardConfig(l_max=6)


def space_n(n):
    return action_space(G1, n, allow_arity_pruning=(n == 1))


# ---------------------------------------------------------------------------
# reset / step / success / reward
# ---------------------------------------------------------------------------

def test_reset_identity_is_already_successful():
    s = reset(np.eye(4))
    assert s.step_count == 0 and s.circuit_so_far == ()
    assert is_success(s, CFG)


def test_reset_keeps_target_as_residual():
    target = np.kron(base_matrix("X"), np.eye(2))
    s = reset(target)
    assert np.array_equal(s.residual, target)
    assert not is_success(s, CFG)


def test_reset_rejects_non_unitary():
    with pytest.raises(ValidationError):
        reset(np.ones((2, 2), dtype=complex))


def test_reset_preserves_residual_invariant():
    rng = np.random.default_rng(0)
    target, _ = random_target(4, G1, 2, rng)
    s = reset(target)
    assert np.max(np.abs(s.residual @ circuit_matrix(s.circuit_so_far, 2, G1) - target)) < 1e-8


def test_step_inverts_single_gate_target():
    space = space_n(1)
    h = space.index(GateInstance("H", (0,)))
    s = reset(embed_gate(GateInstance("H", (0,)), 1))
    s = step(space, s, h, CFG)
    assert s.step_count == 1
    assert is_success(s, CFG)
    assert np.max(np.abs(s.residual - np.eye(2))) < 1e-12


def test_step_two_s_gates_invert_z():
    space = space_n(1)
    s_idx = space.index(GateInstance("S", (0,)))
    st = reset(base_matrix("Z"))
    st = step(space, st, s_idx, CFG)
    assert not is_success(st, CFG)
    st = step(space, st, s_idx, CFG)
    assert is_success(st, CFG)
    assert np.max(np.abs(st.residual - np.eye(2))) < 1e-12


def test_step_on_terminal_state_raises():
    space = space_n(2)
    s = reset(np.eye(4))
    with pytest.raises(ContractViolation):
        step(space, s, 0, CFG)


def test_step_keeps_residual_unitary_and_invariant():
    rng = np.random.default_rng(1)
    space = space_n(2)
    target, _ = random_target(3, G1, 2, rng)
    s = reset(target)
    for _ in range(4):
        if is_success(s, CFG):
            break
        a = int(rng.integers(len(space)))
        s = step(space, s, a, CFG)
        v = circuit_matrix(s.circuit_so_far, 2, G1)
        assert np.max(np.abs(s.residual @ v - target)) < 1e-8
        assert np.max(np.abs(s.residual @ s.residual.conj().T - np.eye(4))) < 1e-9


def test_success_boundary_is_strict():
    # |tr|/d exactly at the threshold must not count as success
    boundary = SynthesisState(residual=np.diag([0.999, 0.999]).astype(complex),
                              step_count=0, circuit_so_far=())
    assert residual_trace_fidelity(boundary.residual) == 0.999
    assert not is_success(boundary, CFG)


def test_success_is_global_phase_invariant():
    for phi in (0.3, 1.0, np.pi):
        s = SynthesisState(residual=np.exp(1j * phi) * np.eye(4), step_count=0,
                           circuit_so_far=())
        assert is_success(s, CFG)


def _traj(fid, n_actions, l_max=6):
    return Trajectory(target=np.eye(2), actions=[0] * n_actions,
                      states=[np.eye(2)] * (n_actions + 1), success=fid > 0.999,
                      terminal_fidelity=fid, reward=0.0, log_probs=[0.0] * n_actions)


def test_reward_values_are_exact():
    assert reward(_traj(0.9999, 6), CFG) == 100.0
    assert reward(_traj(0.5, 6), CFG) == 1e-4
    assert reward(_traj(0.999, 6), CFG) == 1e-4  # strict inequality at the boundary
    assert reward(_traj(1.0, 0), CFG) == 100.0


def test_reward_requires_terminal_trajectory():
    with pytest.raises(ContractViolation):
        reward(_traj(0.5, 2), CFG)  # 2 < l_max and not successful


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

def test_rollout_identity_target_is_empty_success():
    space = space_n(2)
    t = rollout(uniform_policy(len(space)), space, np.eye(4), CFG,
                np.random.default_rng(2))
    assert t.actions == [] and t.success and t.reward == 100.0
    assert len(t.states) == 1 and t.log_probs == []


def test_rollout_uniform_policy_finds_single_gate_target():
    # the 1-step solution alone gives per-rollout success probability >= 1/14,
    # so 1024 independent rollouts fail together with probability < 1e-33
    space = space_n(2)
    target = np.kron(base_matrix("H"), np.eye(2))
    rng = np.random.default_rng(3)
    trajs = rollout_batch(uniform_policy(len(space)), space, [target] * 1024, CFG, rng)
    assert any(t.success for t in trajs)


def test_rollout_respects_l_max_and_finite_log_probs():
    space = space_n(2)
    rng = np.random.default_rng(4)
    targets = [random_target(int(rng.integers(1, 5)), G1, 2, rng)[0] for _ in range(64)]
    trajs = rollout_batch(uniform_policy(len(space)), space, targets, CFG, rng)
    for t in trajs:
        assert len(t.actions) <= CFG.l_max
        assert len(t.states) == len(t.actions) + 1
        assert np.all(np.isfinite(t.log_probs))
        assert t.reward in (100.0, 1e-4)


def test_rollout_residual_invariant_and_success_equivalence():
    space = space_n(2)
    rng = np.random.default_rng(5)
    targets = [random_target(int(rng.integers(1, 5)), G1, 2, rng)[0] for _ in range(50)]
    trajs = rollout_batch(uniform_policy(len(space)), space, targets, CFG, rng)
    for t in trajs:
        circuit = [space.actions[a] for a in t.actions]
        for k, s in enumerate(t.states):
            v = circuit_matrix(circuit[:k], 2, G1)
            assert np.max(np.abs(s @ v - t.target)) < 1e-8
            direct = fidelity(t.target, v)
            assert abs(residual_trace_fidelity(s) - direct) < 1e-12


def test_rollout_stops_at_first_success():
    space = space_n(2)
    rng = np.random.default_rng(6)
    targets = [random_target(int(rng.integers(1, 4)), G1, 2, rng)[0] for _ in range(100)]
    trajs = rollout_batch(uniform_policy(len(space)), space, targets, CFG, rng)
    for t in trajs:
        for s in t.states[:-1]:
            assert residual_trace_fidelity(s) <= CFG.fidelity_threshold
        if t.success:
            assert residual_trace_fidelity(t.states[-1]) > CFG.fidelity_threshold


def test_rollout_deterministic_under_seed():
    space = space_n(2)
    target, _ = random_target(3, G1, 2, np.random.default_rng(7))
    a = rollout(uniform_policy(len(space)), space, target, CFG, np.random.default_rng(8))
    b = rollout(uniform_policy(len(space)), space, target, CFG, np.random.default_rng(8))
    assert a.actions == b.actions and a.reward == b.reward


def test_reward_image_is_two_valued():
    space = space_n(2)
    rng = np.random.default_rng(9)
    targets = [random_target(int(rng.integers(1, 5)), G1, 2, rng)[0] for _ in range(200)]
    trajs = rollout_batch(uniform_policy(len(space)), space, targets, CFG, rng)
    assert set(t.reward for t in trajs) <= {100.0, 1e-4}


def test_markov_dynamics_bitwise():
    space = space_n(2)
    rng = np.random.default_rng(10)
    target, _ = random_target(3, G1, 2, rng)
    s1 = reset(target)
    s2 = SynthesisState(residual=target.copy(), step_count=3,
                        circuit_so_far=(GateInstance("H", (0,)),) * 3)
    a = 5
    n1 = step(space, s1, a, CFG)
    n2 = step(space, s2, a, CFG)
    assert np.array_equal(n1.residual, n2.residual)
