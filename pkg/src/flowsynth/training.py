"""Trajectory-balance training with a learned log partition function.

Each step samples a fresh batch of random targets, rolls them out with the
current policy, and minimizes the squared trajectory-balance residual

    (log Z + sum_t log P_F(a_t | s_t) - log R(tau))^2

averaged over the batch. The backward-policy term is dropped (uniform
backward assumption), so a converged model samples complete gate sequences
with probability proportional to their trajectory reward — which is what the
enumerable-toy tests check.
"""
from __future__ import annotations

import csv
import math
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from .env import RewardConfig, Trajectory, dump_trajectories, rollout_batch
from .errors import ContractViolation, TrainingDiverged, ValidationError
from .gates import ActionSpace, GateSet, action_space, gate_set, random_target
from .policy import EncoderConfig, PolicyNet, TorchPolicy, init_policy, load_checkpoint, \
    residuals_to_tensor, save_checkpoint


@dataclass(frozen=True)
class ReplayConfig:
    enabled: bool = False
    capacity: int = 10_000
    resample_fraction: float = 0.5


@dataclass(frozen=True)
class TrainConfig:
    n: int = 2
    gate_set: str | tuple[str, ...] = "G1"
    seed: int = 0
    n_iters: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-4
    depth_range: tuple[int, int] = (1, 4)
    grad_clip: float = 10.0
    dtype: str = "float64"
    out_dir: str = "runs/default"
    checkpoint_every: int = 1000
    reward: RewardConfig = field(default_factory=RewardConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)

    def __post_init__(self):
        if self.n_iters < 1 or self.batch_size < 1:
            raise ValidationError("n_iters and batch_size must be >= 1")
        lo, hi = self.depth_range
        if not (1 <= lo <= hi <= self.reward.l_max):
            raise ValidationError(
                f"depth_range {self.depth_range} must lie within [1, l_max={self.reward.l_max}]"
            )

    def resolve_gate_set(self) -> GateSet:
        if isinstance(self.gate_set, str):
            return gate_set(self.gate_set)
        return gate_set("custom", members=self.gate_set)

    def torch_dtype(self) -> torch.dtype:
        return {"float64": torch.float64, "float32": torch.float32}[self.dtype]


def train_config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["depth_range"] = list(cfg.depth_range)
    if not isinstance(cfg.gate_set, str):
        d["gate_set"] = list(cfg.gate_set)
    return d


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    if "reward" in d:
        d["reward"] = RewardConfig(**d["reward"])
    if "encoder" in d:
        d["encoder"] = EncoderConfig(**d["encoder"])
    if "replay" in d:
        d["replay"] = ReplayConfig(**d["replay"])
    if "depth_range" in d:
        d["depth_range"] = tuple(d["depth_range"])
    if "gate_set" in d and not isinstance(d["gate_set"], str):
        d["gate_set"] = tuple(d["gate_set"])
    return TrainConfig(**d)


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        return train_config_from_dict(yaml.safe_load(fh))


def save_train_config(cfg: TrainConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(train_config_to_dict(cfg), fh, sort_keys=False, allow_unicode=True)


class ReplayBuffer:
    """FIFO ring with uniform (with-replacement) resampling."""

    def __init__(self, capacity: int):
        self._items: deque[Trajectory] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, trajs) -> None:
        self._items.extend(trajs)

    def sample(self, k: int, rng: np.random.Generator) -> list[Trajectory]:
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]


def trajectory_log_probs(net: PolicyNet, trajs) -> torch.Tensor:
    """Per-trajectory sum of log forward probabilities of the taken actions,
    recomputed from the current parameters in one batched forward pass."""
    owner, states, taken = [], [], []
    for ti, t in enumerate(trajs):
        for si, a in enumerate(t.actions):
            owner.append(ti)
            states.append(t.states[si])
            taken.append(a)
    total = torch.zeros(len(trajs), dtype=net.dtype)
    if not states:
        return total
    x = residuals_to_tensor(np.stack(states), net.dtype)
    logp = torch.log_softmax(net(x), dim=-1)
    per_step = logp[torch.arange(len(taken)), torch.tensor(taken)]
    return total.index_add(0, torch.tensor(owner), per_step)


def trajectory_log_prob(net: PolicyNet, traj: Trajectory) -> float:
    """Log probability of a single trajectory under the current parameters."""
    with torch.no_grad():
        return float(trajectory_log_probs(net, [traj])[0])


def tb_residuals(log_z: torch.Tensor, log_probs: torch.Tensor,
                 log_rewards: torch.Tensor) -> torch.Tensor:
    return log_z + log_probs - log_rewards


def tb_loss(net: PolicyNet, trajs, reward_cfg: RewardConfig | None = None) -> torch.Tensor:
    """Mean squared trajectory-balance residual over the batch."""
    if reward_cfg is not None:
        for t in trajs:
            if not t.is_terminal(reward_cfg):
                raise ContractViolation("tb_loss batch contains a non-terminal trajectory")
    log_probs = trajectory_log_probs(net, trajs)
    log_rewards = torch.tensor([math.log(t.reward) for t in trajs], dtype=net.dtype)
    return (tb_residuals(net.log_z.to(net.dtype), log_probs, log_rewards) ** 2).mean()


def default_target_sampler(space: ActionSpace, depth_range: tuple[int, int]):
    """Fresh random-circuit targets with depth drawn uniformly from the range."""
    lo, hi = depth_range

    def sampler(rng: np.random.Generator) -> np.ndarray:
        depth = int(rng.integers(lo, hi + 1))
        matrix, _ = random_target(depth, space.gate_set, space.n, rng, space=space)
        return matrix

    return sampler


def fixed_target_sampler(target: np.ndarray):
    def sampler(rng: np.random.Generator) -> np.ndarray:
        return target
    return sampler


def _dump_diagnostics(net, space, cfg: TrainConfig, batch, step: int) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / f"diverged_step{step}.npz", net, space, cfg.seed)
    dump_trajectories(batch, out / f"diverged_step{step}_batch.jsonl")
    return out


def train_step(net: PolicyNet, optimizer: torch.optim.Optimizer, space: ActionSpace,
               cfg: TrainConfig, rng: np.random.Generator,
               replay_buffer: ReplayBuffer | None = None,
               target_sampler=None, step_index: int = 0) -> dict:
    """One optimization step; returns scalar metrics for logging."""
    sampler = target_sampler or default_target_sampler(space, cfg.depth_range)
    targets = [sampler(rng) for _ in range(cfg.batch_size)]
    policy = TorchPolicy(net)
    fresh = rollout_batch(policy, space, targets, cfg.reward, rng)

    batch = fresh
    if cfg.replay.enabled and replay_buffer is not None:
        replay_buffer.push(fresh)
        k_re = int(cfg.batch_size * cfg.replay.resample_fraction)
        if k_re > 0:
            batch = fresh[: cfg.batch_size - k_re] + replay_buffer.sample(k_re, rng)

    loss = tb_loss(net, batch, cfg.reward)
    optimizer.zero_grad()
    if not torch.isfinite(loss):
        _dump_diagnostics(net, space, cfg, batch, step_index)
        raise TrainingDiverged(f"non-finite loss at step {step_index}")
    loss.backward()
    for name, p in net.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            _dump_diagnostics(net, space, cfg, batch, step_index)
            raise TrainingDiverged(f"non-finite gradient in {name!r} at step {step_index}")
    torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.grad_clip)
    optimizer.step()

    return {
        "loss": float(loss.detach()),
        "success_rate": float(np.mean([t.success for t in fresh])),
        "log_z": float(net.log_z.detach()),
        "mean_length": float(np.mean([len(t) for t in fresh])),
    }


METRICS_FIELDS = ("step", "loss", "success_rate", "log_z", "mean_length")


def train(cfg: TrainConfig, target_sampler=None, resume: str | None = None) -> Path:
    """Full training run; writes metrics.csv and periodic checkpoints,
    returns the final checkpoint path."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gs = cfg.resolve_gate_set()
    space = action_space(gs, cfg.n, allow_arity_pruning=True)
    net = init_policy(cfg.encoder, len(space), cfg.n, cfg.seed, dtype=cfg.torch_dtype())
    if resume is not None:
        resumed, resumed_space, _ = load_checkpoint(resume)
        if resumed_space.sha256() != space.sha256():
            raise ValidationError("resume checkpoint was trained on a different action space")
        net.load_state_dict(resumed.state_dict())
        net = net.to(cfg.torch_dtype())
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate,
                                 betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.replay.capacity) if cfg.replay.enabled else None

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for step_index in range(cfg.n_iters):
            m = train_step(net, optimizer, space, cfg, rng, replay_buffer=buffer,
                           target_sampler=target_sampler, step_index=step_index)
            writer.writerow([step_index, repr(m["loss"]), repr(m["success_rate"]),
                             repr(m["log_z"]), repr(m["mean_length"])])
            fh.flush()
            if cfg.checkpoint_every and (step_index + 1) % cfg.checkpoint_every == 0:
                _atomic_checkpoint(out_dir / f"checkpoint_step{step_index + 1}.npz",
                                   net, space, cfg.seed)

    final_path = out_dir / "checkpoint_final.npz"
    _atomic_checkpoint(final_path, net, space, cfg.seed)
    return final_path


def _atomic_checkpoint(path: Path, net, space, seed) -> None:
    tmp = path.with_suffix(".tmp")
    save_checkpoint(tmp, net, space, seed)
    os.replace(tmp, path)
