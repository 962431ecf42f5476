"""Decoder-only sequence model with summed token/position/type/task/domain
embeddings.

The input embedding at position i is
``tok[t_i] + pos[i] + type[y_i] + task[k_i] + domain[d_i]``; row 0 of each of
the type/task/domain tables is the reserved unknown row, which is what the
no-prompt ablation variant receives at every position.  Parameter shapes are
fixed by the config and initialization is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn


class ModelConfigError(ValueError):
    """Invalid model configuration; message lists every violated constraint."""


class EmbeddingRangeError(ValueError):
    def __init__(self, kind: str, position: int, value: int, limit: int):
        super().__init__(f"{kind} id {value} at position {position} outside [0, {limit})")
        self.position = position


@dataclass
class ModelConfig:
    vocab_size: int
    width: int = 64
    layers: int = 2
    heads: int = 4
    ffn_width: int = 256
    max_positions: int = 512
    n_types: int = 5    # 4 dialog types + reserved unknown row
    n_tasks: int = 5    # 4 sub-tasks + reserved unknown row
    n_domains: int = 7  # general + 5 domains + reserved unknown row
    dropout: float = 0.0
    seed: int = 0
    dtype: str = "float32"

    def validate(self) -> None:
        problems = []
        if self.vocab_size < 4:
            problems.append("vocab_size must cover the reserved special tokens")
        if self.width <= 0 or self.layers <= 0 or self.heads <= 0 or self.ffn_width <= 0:
            problems.append("width, layers, heads and ffn_width must be positive")
        if self.heads > 0 and self.width % self.heads != 0:
            problems.append(f"width {self.width} not divisible by head count {self.heads}")
        if self.max_positions <= 0:
            problems.append("max_positions must be positive")
        for name in ("n_types", "n_tasks", "n_domains"):
            if getattr(self, name) < 2:
                problems.append(f"{name} must include at least one real id plus the unknown row")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"unsupported dtype {self.dtype!r}")
        if problems:
            raise ModelConfigError("; ".join(problems))

    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)

    def parameter_count(self) -> int:
        """Closed-form count of trainable scalars for this shape."""
        d, f, v = self.width, self.ffn_width, self.vocab_size
        emb = d * (v + self.max_positions + self.n_types + self.n_tasks + self.n_domains)
        per_layer = (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d
        return emb + self.layers * per_layer + 2 * d + (d * v + v)


class _Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.width
        self.heads = config.heads
        self.head_dim = d // config.heads
        self.ln_attn = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.ln_ffn = nn.LayerNorm(d)
        self.fc_in = nn.Linear(d, config.ffn_width)
        self.fc_out = nn.Linear(config.ffn_width, d)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor,
                kv: tuple[torch.Tensor, torch.Tensor] | None = None):
        bsz, t, d = x.shape
        q, k, v = self.qkv(self.ln_attn(x)).chunk(3, dim=-1)
        shape = (bsz, t, self.heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        if kv is not None:
            k = torch.cat([kv[0], k], dim=2)
            v = torch.cat([kv[1], v], dim=2)
        total = k.size(2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        # causal: query i (offset by cached length) sees keys j <= i + total - t
        mask = torch.arange(total, device=x.device)[None, :] > (
            torch.arange(t, device=x.device)[:, None] + (total - t))
        att = att.masked_fill(mask, float("-inf")).softmax(dim=-1)
        y = (att @ v).transpose(1, 2).reshape(bsz, t, d)
        x = x + self.drop(self.proj(y))
        x = x + self.drop(self.fc_out(torch.nn.functional.gelu(self.fc_in(self.ln_ffn(x)))))
        return x, (k, v)


class SequenceModel(nn.Module):
    """Causal LM over input(+)target concatenations; supports KV caching."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.width
        self.tok_emb = nn.Embedding(config.vocab_size, d)
        self.pos_emb = nn.Embedding(config.max_positions, d)
        self.type_emb = nn.Embedding(config.n_types, d)
        self.task_emb = nn.Embedding(config.n_tasks, d)
        self.domain_emb = nn.Embedding(config.n_domains, d)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.layers))
        self.ln_final = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.vocab_size)
        self.drop = nn.Dropout(config.dropout)
        self.stage_history: list[dict] = []
        self.optimizer_state: dict[str, torch.Tensor] = {}
        self.to(config.torch_dtype())

    def _check_range(self, ids: torch.Tensor, kind: str, limit: int) -> None:
        flat = ids.reshape(-1)
        bad = (flat < 0) | (flat >= limit)
        if bad.any():
            position = int(bad.nonzero()[0])
            raise EmbeddingRangeError(kind, position, int(flat[position]), limit)

    def embed_ids(self, tokens: torch.Tensor, types: torch.Tensor, tasks: torch.Tensor,
                  domains: torch.Tensor, pos_offset: int = 0) -> torch.Tensor:
        """Summed embedding; unknown ids (0) select the reserved rows."""
        cfg = self.config
        self._check_range(tokens, "token", cfg.vocab_size)
        self._check_range(types, "type", cfg.n_types)
        self._check_range(tasks, "task", cfg.n_tasks)
        self._check_range(domains, "domain", cfg.n_domains)
        t = tokens.size(-1)
        if pos_offset + t > cfg.max_positions:
            raise EmbeddingRangeError("position", pos_offset + t - 1,
                                      pos_offset + t - 1, cfg.max_positions)
        positions = torch.arange(pos_offset, pos_offset + t, device=tokens.device)
        return (self.tok_emb(tokens) + self.pos_emb(positions)
                + self.type_emb(types) + self.task_emb(tasks) + self.domain_emb(domains))

    def forward(self, tokens, types, tasks, domains, pos_offset: int = 0, cache=None):
        h = self.drop(self.embed_ids(tokens, types, tasks, domains, pos_offset))
        new_cache = []
        for i, block in enumerate(self.blocks):
            h, kv = block(h, cache[i] if cache is not None else None)
            new_cache.append(kv)
        return self.head(self.ln_final(h)), new_cache

    def loss(self, tokens, types, tasks, domains, loss_mask) -> torch.Tensor:
        """Mean next-token cross-entropy over positions where loss_mask[i+1]."""
        logits, _ = self.forward(tokens[:, :-1], types[:, :-1], tasks[:, :-1], domains[:, :-1])
        labels = tokens[:, 1:]
        mask = loss_mask[:, 1:]
        per_tok = torch.nn.functional.cross_entropy(
            logits.reshape(-1, self.config.vocab_size), labels.reshape(-1), reduction="none")
        mask_flat = mask.reshape(-1).to(per_tok.dtype)
        denom = mask_flat.sum()
        if denom.item() == 0:
            raise ValueError("loss mask selects no target positions")
        return (per_tok * mask_flat).sum() / denom


def build_model(config: ModelConfig) -> SequenceModel:
    """Construct and deterministically initialize a model from its config."""
    config.validate()
    model = SequenceModel(config)
    generator = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for name, param in sorted(model.named_parameters()):
            if "ln_" in name:
                if name.endswith("weight"):
                    param.fill_(1.0)
                else:
                    param.zero_()
            elif name.endswith("bias"):
                param.zero_()
            else:
                values = torch.randn(param.shape, generator=generator, dtype=torch.float64) * 0.02
                param.copy_(values.to(param.dtype))
    return model
