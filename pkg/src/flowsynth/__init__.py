"""Exact unitary synthesis with a flow-network policy over discrete gate sets.

The package splits into:
  * :mod:`flowsynth.gates` — exact complex gate algebra and action spaces;
  * :mod:`flowsynth.env` — the residual-state MDP with its sparse reward;
  * :mod:`flowsynth.policy` — the CNN/attention encoder and policy head;
  * :mod:`flowsynth.training` — trajectory-balance training;
  * :mod:`flowsynth.search` — exhaustive minimal-length ground truth;
  * :mod:`flowsynth.evaluation` — benchmark construction, metrics, reports;
  * :mod:`flowsynth.cli` — the ``flowsynth`` command.
"""

__version__ = "0.1.0"

from .env import RewardConfig, Trajectory, rollout, rollout_batch
from .gates import GateInstance, GateSet, action_space, fidelity, gate_set, random_target
from .policy import EncoderConfig, PolicyNet, TorchPolicy, init_policy, load_checkpoint
from .search import bfs_min_length, canonical_key, enumerate_solutions
from .training import TrainConfig, tb_loss, train

__all__ = [
    "RewardConfig", "Trajectory", "rollout", "rollout_batch",
    "GateInstance", "GateSet", "action_space", "fidelity", "gate_set", "random_target",
    "EncoderConfig", "PolicyNet", "TorchPolicy", "init_policy", "load_checkpoint",
    "bfs_min_length", "canonical_key", "enumerate_solutions",
    "TrainConfig", "tb_loss", "train",
]
