"""Residual-state MDP for exact synthesis.

The state is the unitary residual s_t = U @ V_t†, where U is the target and
V_t the circuit built so far. Applying gate ``a`` updates V to ``a @ V`` and
the residual to ``s @ a†``, so the dynamics depend on the residual alone.
The episode ends at the first state whose residual trace passes the fidelity
threshold, or after ``l_max`` gates; the terminal reward is two-valued.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ValidationError
from .gates import ActionSpace, GateInstance, assert_unitary

DEFAULT_SUCCESS_REWARD = 100.0
DEFAULT_EPSILON_REWARD = 1e-4
DEFAULT_FIDELITY_THRESHOLD = 0.999


@dataclass(frozen=True)
class RewardConfig:
    success_reward: float = DEFAULT_SUCCESS_REWARD
    epsilon_reward: float = DEFAULT_EPSILON_REWARD
    fidelity_threshold: float = DEFAULT_FIDELITY_THRESHOLD
    l_max: int = 12

    def __post_init__(self):
        if not self.success_reward > self.epsilon_reward > 0:
            raise ValidationError("need success_reward > epsilon_reward > 0")
        if not 0 < self.fidelity_threshold < 1:
            raise ValidationError("fidelity_threshold must lie in (0, 1)")
        if self.l_max < 1:
            raise ValidationError("l_max must be >= 1")


@dataclass(frozen=True)
class SynthesisState:
    residual: np.ndarray
    step_count: int
    circuit_so_far: tuple[GateInstance, ...]


@dataclass
class Trajectory:
    """One complete episode, with cached per-step data."""

    target: np.ndarray
    actions: list[int]
    states: list[np.ndarray]  # residuals s_0 .. s_f
    success: bool
    terminal_fidelity: float
    reward: float
    log_probs: list[float]

    def __len__(self) -> int:
        return len(self.actions)

    def is_terminal(self, cfg: RewardConfig) -> bool:
        return self.success or len(self.actions) >= cfg.l_max


def reset(target: np.ndarray) -> SynthesisState:
    """Initial state: residual equals the target, empty circuit."""
    assert_unitary(target)
    return SynthesisState(residual=target.copy(), step_count=0, circuit_so_far=())


def residual_trace_fidelity(residual: np.ndarray) -> float:
    """|tr(s)| / d; equals F(U, V_t) by trace cyclicity."""
    return float(np.abs(np.trace(residual)) / residual.shape[0])


def is_success(state: SynthesisState, cfg: RewardConfig) -> bool:
    """Strict threshold test on the residual's normalized trace."""
    return residual_trace_fidelity(state.residual) > cfg.fidelity_threshold


def step(space: ActionSpace, state: SynthesisState, action_index: int,
         cfg: RewardConfig) -> SynthesisState:
    """Apply one gate: circuit grows, residual loses the gate from the right."""
    if is_success(state, cfg) or state.step_count >= cfg.l_max:
        raise ContractViolation("step() called on a terminal state")
    if not 0 <= action_index < len(space):
        raise ValidationError(f"action index {action_index} out of range")
    gate_dagger = space.matrices[action_index].conj().T
    return SynthesisState(
        residual=state.residual @ gate_dagger,
        step_count=state.step_count + 1,
        circuit_so_far=state.circuit_so_far + (space.actions[action_index],),
    )


def reward(traj: Trajectory, cfg: RewardConfig) -> float:
    """Two-valued terminal reward with a strict fidelity threshold."""
    if not traj.is_terminal(cfg):
        raise ContractViolation("reward() called on a non-terminal trajectory")
    if traj.terminal_fidelity > cfg.fidelity_threshold:
        return cfg.success_reward
    return cfg.epsilon_reward


def uniform_policy(n_actions: int):
    """Batched policy callable assigning 1/|A| to every action."""
    def policy(residuals: np.ndarray) -> np.ndarray:
        b = residuals.shape[0]
        return np.full((b, n_actions), 1.0 / n_actions)
    return policy


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; robust to probabilities summing to 1 only within fp error
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"),
                   len(probs) - 1))


def rollout_batch(policy, space: ActionSpace, targets, cfg: RewardConfig,
                  rng: np.random.Generator) -> list[Trajectory]:
    """Roll out one episode per target, advancing all of them in lockstep.

    ``policy`` maps a stacked array of residuals (B, d, d) to action
    probabilities (B, |A|). At each step the still-active episodes are
    evaluated in one batch and their actions sampled in ascending episode
    order, so results are reproducible for a fixed rng.
    """
    states = [reset(u) for u in targets]
    trajs = [
        Trajectory(target=u.copy(), actions=[], states=[s.residual.copy()],
                   success=is_success(s, cfg), terminal_fidelity=0.0,
                   reward=0.0, log_probs=[])
        for u, s in zip(targets, states)
    ]
    active = [i for i, t in enumerate(trajs) if not t.success]
    dagger_mats = space.matrices.conj().transpose(0, 2, 1)

    for _ in range(cfg.l_max):
        if not active:
            break
        batch = np.stack([states[i].residual for i in active])
        probs = np.asarray(policy(batch))
        still_active = []
        for row, i in enumerate(active):
            a = _sample_index(probs[row], rng)
            trajs[i].actions.append(a)
            trajs[i].log_probs.append(float(np.log(probs[row][a])))
            states[i] = SynthesisState(
                residual=states[i].residual @ dagger_mats[a],
                step_count=states[i].step_count + 1,
                circuit_so_far=states[i].circuit_so_far + (space.actions[a],),
            )
            trajs[i].states.append(states[i].residual.copy())
            if is_success(states[i], cfg):
                trajs[i].success = True
            else:
                still_active.append(i)
        active = still_active

    for t, s in zip(trajs, states):
        t.terminal_fidelity = residual_trace_fidelity(s.residual)
        t.reward = reward(t, cfg)
    return trajs


def rollout(policy, space: ActionSpace, target: np.ndarray, cfg: RewardConfig,
            rng: np.random.Generator) -> Trajectory:
    """Single-episode convenience wrapper around rollout_batch."""
    return rollout_batch(policy, space, [target], cfg, rng)[0]


def target_key(target: np.ndarray) -> str:
    """Short content hash of a target matrix, for debug dumps."""
    return hashlib.sha256(np.ascontiguousarray(target).tobytes()).hexdigest()[:16]


def dump_trajectories(trajs, path) -> None:
    """Debug dump: one JSON line per trajectory."""
    with open(path, "w") as fh:
        for t in trajs:
            fh.write(json.dumps({
                "target": target_key(t.target),
                "actions": t.actions,
                "terminal_fidelity": t.terminal_fidelity,
                "reward": t.reward,
            }) + "\n")
