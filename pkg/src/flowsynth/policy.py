"""Forward-policy network: hybrid CNN/attention encoder over the residual.

The residual matrix enters as a 2-channel (real, imaginary) image of size
d x d. A 1x1 convolution lifts it to d1 channels, fixed 2D sinusoidal
positions are added, and a stack of pre-norm self-attention layers runs over
the row-major token sequence. A stride-2 convolution halves the resolution
while doubling channels, a second attention stack runs at the coarse scale,
a 1x1 convolution maps to the final embedding width, and mean pooling over
tokens yields the state vector consumed by the MLP policy head.

``log_z`` (the learned log partition function) lives on the same module so a
single optimizer covers every learnable scalar.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, ValidationError
from .gates import ActionSpace, GateSet, action_space, gate_set


@dataclass(frozen=True)
class EncoderConfig:
    d1: int = 64          # channels after the 1x1 stem
    d2: int = 128         # channels after the stride-2 downsample
    d_emb: int = 256      # final embedding width
    attn_depth: int = 4   # attention layers per stage
    attn_heads: int = 8
    mlp_hidden: int = 128  # policy-head hidden width

    def __post_init__(self):
        for name in ("d1", "d2", "d_emb", "attn_depth", "attn_heads", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.d1 % self.attn_heads or self.d2 % self.attn_heads:
            raise ConfigurationError("d1 and d2 must be divisible by attn_heads")
        if self.d1 % 4:
            raise ConfigurationError("d1 must be divisible by 4 (2D positional encoding)")

    @classmethod
    def reduced(cls) -> "EncoderConfig":
        """Small desk-scale configuration; a supported setting, not a test stub."""
        return cls(d1=8, d2=16, d_emb=16, attn_depth=1, attn_heads=2, mlp_hidden=32)


def sinusoidal_positions_2d(channels: int, height: int, width: int) -> torch.Tensor:
    """Fixed 2D positional encoding: first half of the channels encodes the
    row index, second half the column index, each as standard sin/cos pairs.
    Shape (channels, height, width)."""
    if channels % 4:
        raise ConfigurationError("positional encoding needs channels divisible by 4")
    half = channels // 2
    freq = torch.exp(torch.arange(0, half, 2, dtype=torch.float64)
                     * (-math.log(10000.0) / half))
    pe = torch.zeros(channels, height, width, dtype=torch.float64)
    rows = torch.arange(height, dtype=torch.float64)[:, None] * freq[None, :]  # (H, half/2)
    cols = torch.arange(width, dtype=torch.float64)[:, None] * freq[None, :]
    pe[0:half:2] = torch.sin(rows).T[:, :, None]
    pe[1:half:2] = torch.cos(rows).T[:, :, None]
    pe[half::2] = torch.sin(cols).T[:, None, :]
    pe[half + 1::2] = torch.cos(cols).T[:, None, :]
    return pe


class SelfAttention(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, c = x.shape
        hd = c // self.heads
        q, k, v = self.qkv(x).reshape(b, t, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(hd), dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, c)
        return self.proj(out)


class AttentionLayer(nn.Module):
    """Pre-norm attention + feed-forward (x4 expansion), both residual."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.attn = SelfAttention(channels, heads)
        self.norm2 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(
            nn.Linear(channels, 4 * channels),
            nn.GELU(),
            nn.Linear(4 * channels, channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class AttentionStage(nn.Module):
    """Runs attention layers over the row-major token view of a feature map."""

    def __init__(self, channels: int, heads: int, depth: int):
        super().__init__()
        self.layers = nn.ModuleList(AttentionLayer(channels, heads) for _ in range(depth))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = x.flatten(2).transpose(1, 2)  # (B, H*W, C), row-major
        for layer in self.layers:
            tokens = layer(tokens)
        return tokens.transpose(1, 2).reshape(b, c, h, w)


class UnitaryEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, n: int):
        super().__init__()
        d = 2**n
        if d < 2 or d % 2:
            raise ConfigurationError(f"state side {d} must be even and >= 2")
        self.d = d
        self.stem = nn.Conv2d(2, cfg.d1, kernel_size=1)
        self.register_buffer("pos", sinusoidal_positions_2d(cfg.d1, d, d)[None])
        self.stage1 = AttentionStage(cfg.d1, cfg.attn_heads, cfg.attn_depth)
        self.down = nn.Conv2d(cfg.d1, cfg.d2, kernel_size=2, stride=2)
        self.stage2 = AttentionStage(cfg.d2, cfg.attn_heads, cfg.attn_depth)
        self.out_proj = nn.Conv2d(cfg.d2, cfg.d_emb, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != (self.d, self.d) or x.shape[1] != 2:
            raise ValidationError(f"expected (B, 2, {self.d}, {self.d}), got {tuple(x.shape)}")
        x = self.stem(x) + self.pos
        x = self.stage1(x)
        x = self.down(x)
        x = self.stage2(x)
        x = self.out_proj(x)
        return x.flatten(2).mean(dim=2)  # (B, d_emb)


class PolicyNet(nn.Module):
    """Encoder + MLP head producing action logits, plus the learned log Z."""

    def __init__(self, cfg: EncoderConfig, n_actions: int, n: int,
                 dtype: torch.dtype = torch.float64):
        super().__init__()
        self.cfg = cfg
        self.n = n
        self.n_actions = n_actions
        self.encoder = UnitaryEncoder(cfg, n)
        self.head = nn.Sequential(
            nn.Linear(cfg.d_emb, cfg.mlp_hidden),
            nn.ReLU(),
            nn.Linear(cfg.mlp_hidden, n_actions),
        )
        self.log_z = nn.Parameter(torch.zeros((), dtype=torch.float64))
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.head[0].weight.dtype

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def logits(self, z: torch.Tensor, n_actions_expected: int | None = None) -> torch.Tensor:
        if n_actions_expected is not None and n_actions_expected != self.n_actions:
            raise ConfigurationError(
                f"head emits {self.n_actions} logits, caller expected {n_actions_expected}"
            )
        return self.head(z)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.logits(self.encode(x))


def state_tensor(residual: np.ndarray) -> np.ndarray:
    """2 x d x d real view of a residual: channel 0 real parts, channel 1 imaginary."""
    return np.stack([residual.real, residual.imag]).astype(np.float64)


def residuals_to_tensor(residuals: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    """(B, d, d) complex -> (B, 2, d, d) torch tensor."""
    arr = np.stack([residuals.real, residuals.imag], axis=1)
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)


def init_policy(cfg: EncoderConfig, n_actions: int, n: int, seed: int,
                dtype: torch.dtype = torch.float64) -> PolicyNet:
    """Deterministic initialization.

    Linear/conv weights are fan-in-scaled uniform, biases zero, normalization
    gains one, log_z zero. The starting policy is near-uniform over actions
    (logits are small but not exactly zero).
    """
    net = PolicyNet(cfg, n_actions, n, dtype=dtype)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, (nn.Linear, nn.Conv2d)):
                w = module.weight
                fan_in = w.shape[1] * (w[0, 0].numel() if w.dim() == 4 else 1)
                bound = 1.0 / math.sqrt(fan_in)
                # sample in float64 then cast, so the stream is dtype-independent
                sample = torch.empty(w.shape, dtype=torch.float64).uniform_(
                    -bound, bound, generator=gen)
                w.copy_(sample.to(w.dtype))
                module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
        net.log_z.zero_()
    return net


class TorchPolicy:
    """Numpy-facing adapter so environment rollouts can sample from the net."""

    def __init__(self, net: PolicyNet):
        self.net = net

    def __call__(self, residuals: np.ndarray) -> np.ndarray:
        x = residuals_to_tensor(residuals, self.net.dtype)
        with torch.no_grad():
            probs = torch.softmax(self.net(x), dim=-1)
        return probs.double().numpy()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, net: PolicyNet, space: ActionSpace, seed: int) -> None:
    """Self-describing .npz: named float64 tensors plus a JSON metadata entry."""
    meta = {
        "encoder": asdict(net.cfg),
        "n_actions": net.n_actions,
        "n": net.n,
        "gate_set_name": space.gate_set.name,
        "gate_set_members": list(space.gate_set.members),
        "action_space_sha256": space.sha256(),
        "seed": seed,
        "dtype": str(net.dtype).replace("torch.", ""),
    }
    arrays = {
        name: p.detach().cpu().double().numpy()
        for name, p in net.named_parameters()
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[PolicyNet, ActionSpace, dict]:
    """Rebuild the net and its action space; the stored enumeration hash must match."""
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"]))
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    name = meta["gate_set_name"]
    gs = gate_set(name) if name in ("G1", "G2") else GateSet(name, tuple(meta["gate_set_members"]))
    space = action_space(gs, meta["n"], allow_arity_pruning=True)
    if space.sha256() != meta["action_space_sha256"]:
        raise ValidationError("checkpoint action-space hash does not match this enumeration")
    dtype = getattr(torch, meta["dtype"])
    net = PolicyNet(EncoderConfig(**meta["encoder"]), meta["n_actions"], meta["n"], dtype=dtype)
    with torch.no_grad():
        for pname, param in net.named_parameters():
            if pname not in arrays:
                raise ValidationError(f"checkpoint is missing tensor {pname!r}")
            value = torch.from_numpy(arrays[pname])
            if tuple(value.shape) != tuple(param.shape):
                raise ValidationError(f"tensor {pname!r} has shape {tuple(value.shape)}, "
                                      f"expected {tuple(param.shape)}")
            param.copy_(value.to(param.dtype))
    return net, space, meta
