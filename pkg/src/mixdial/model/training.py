"""Two-stage training schedule: prompting on external corpora, then
fine-tuning on the target mixed-type corpus.

All parameters, including the prompt-related embedding rows, are updated in
both stages.  Runs are deterministic per seed: initialization, batch order
and the step-by-step loss log all reproduce exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import torch

from ..linearize import EOS, PAD, TARGET, FormattedInput, SequenceGrammar, Vocab
from .net import SequenceModel


class DivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"training loss became non-finite at step {step}")
        self.step = step


@dataclass
class TaskExample:
    """One formatted training or evaluation instance."""

    input: FormattedInput
    target: list[str]
    task: str
    session_id: str = ""
    turn_index: int = -1


@dataclass
class TrainConfig:
    stage: str = "finetune"      # prompt | finetune
    variant: str = "mt"          # mt | no-prompt
    learning_rate: float = 3e-3
    batch_size: int = 16
    steps: int = 400
    grad_clip: float = 1.0
    eval_interval: int = 50
    warmup_steps: int = 40
    seed: int = 0

    def validate(self) -> None:
        if self.stage not in ("prompt", "finetune"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.variant not in ("mt", "no-prompt"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if min(self.batch_size, self.steps, self.eval_interval) <= 0:
            raise ValueError("batch size, steps and eval interval must be positive")
        if self.grad_clip <= 0 or self.warmup_steps < 0:
            raise ValueError("grad_clip must be positive and warmup_steps non-negative")


@dataclass
class StageLog:
    stage: str
    losses: list[tuple[int, float]] = field(default_factory=list)


def encode_batch(examples: list[TaskExample], vocab: Vocab, model: SequenceModel,
                 grammar: SequenceGrammar | None = None) -> dict[str, torch.Tensor]:
    """input (+) [target] (+) target (+) [eos], padded; loss over target+eos."""
    grammar = grammar or SequenceGrammar()
    pad_id = vocab.index[PAD]
    target_id = vocab.index[TARGET]
    eos_id = vocab.index[EOS]
    rows = []
    for ex in examples:
        target_tokens = ex.target[: grammar.max_target_len]
        tok = vocab.encode(ex.input.tokens) + [target_id] + vocab.encode(target_tokens) + [eos_id]
        n_in = len(ex.input.tokens)
        n_out = len(tok) - n_in
        typ = ex.input.type_ids + [ex.input.type_ids[-1] if ex.input.type_ids else 0] * n_out
        tsk = ex.input.task_ids + [ex.input.task_ids[-1] if ex.input.task_ids else 0] * n_out
        dom = ex.input.domain_ids + [ex.input.domain_ids[-1] if ex.input.domain_ids else 0] * n_out
        mask = [0] * (n_in + 1) + [1] * (n_out - 1)  # [target] itself is input
        rows.append((tok, typ, tsk, dom, mask))
    width = min(max(len(r[0]) for r in rows), model.config.max_positions)

    def pad(seq, value):
        seq = seq[:width]
        return seq + [value] * (width - len(seq))

    batch = {
        "tokens": torch.tensor([pad(r[0], pad_id) for r in rows], dtype=torch.long),
        "types": torch.tensor([pad(r[1], 0) for r in rows], dtype=torch.long),
        "tasks": torch.tensor([pad(r[2], 0) for r in rows], dtype=torch.long),
        "domains": torch.tensor([pad(r[3], 0) for r in rows], dtype=torch.long),
        "loss_mask": torch.tensor([pad(r[4], 0) for r in rows], dtype=torch.long),
    }
    return batch


def batches_for(examples: list[TaskExample], cfg: TrainConfig) -> list[list[TaskExample]]:
    """Deterministic batch order: reshuffle per epoch from the stage seed.

    Within a shuffled window of eight batches, examples are grouped by
    length so padding stays cheap; batch order is then reshuffled, all from
    the same seed, so runs reproduce step for step.
    """
    rng = random.Random(cfg.seed)
    pool: list[TaskExample] = []
    needed = cfg.steps * cfg.batch_size
    while len(pool) < needed:
        epoch = list(examples)
        rng.shuffle(epoch)
        pool.extend(epoch)
    batches: list[list[TaskExample]] = []
    window = cfg.batch_size * 8
    for start in range(0, needed, window):
        chunk = pool[start: start + window]
        chunk.sort(key=lambda ex: len(ex.input.tokens) + len(ex.target))
        for i in range(0, len(chunk), cfg.batch_size):
            batch = chunk[i: i + cfg.batch_size]
            if len(batch) == cfg.batch_size:
                batches.append(batch)
    rng.shuffle(batches)
    return batches[: cfg.steps]


def _lr_at(step: int, cfg: TrainConfig) -> float:
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    return cfg.learning_rate


def train_stage(model: SequenceModel, examples: list[TaskExample], cfg: TrainConfig,
                vocab: Vocab, grammar: SequenceGrammar | None = None,
                corpus_id: str = "") -> StageLog:
    """Run cfg.steps optimizer steps and append the stage to the history."""
    cfg.validate()
    if not examples:
        raise ValueError("training corpus is empty")
    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    log = StageLog(stage=cfg.stage)
    model.train()
    window: list[float] = []
    for step, batch_examples in enumerate(batches_for(examples, cfg)):
        batch = encode_batch(batch_examples, vocab, model, grammar)
        for group in optimizer.param_groups:
            group["lr"] = _lr_at(step, cfg)
        optimizer.zero_grad(set_to_none=True)
        loss = model.loss(batch["tokens"], batch["types"], batch["tasks"],
                          batch["domains"], batch["loss_mask"])
        if not torch.isfinite(loss):
            raise DivergenceError(step)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()
        window.append(float(loss.detach()))
        if (step + 1) % cfg.eval_interval == 0 or step + 1 == cfg.steps:
            log.losses.append((step + 1, sum(window) / len(window)))
            window = []
    model.stage_history.append({
        "stage": cfg.stage,
        "variant": cfg.variant,
        "corpus": corpus_id,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "final_loss": log.losses[-1][1] if log.losses else None,
    })
    model.optimizer_state = _flatten_optimizer_state(model, optimizer)
    model.eval()
    return log


def _flatten_optimizer_state(model: SequenceModel, optimizer: torch.optim.Adam) -> dict[str, torch.Tensor]:
    names = {id(p): n for n, p in model.named_parameters()}
    out: dict[str, torch.Tensor] = {}
    for param, state in optimizer.state.items():
        name = names[id(param)]
        out[f"{name}.exp_avg"] = state["exp_avg"].detach().clone()
        out[f"{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().clone()
        out[f"{name}.step"] = torch.as_tensor(float(state["step"]))
    return out


def continual_train(model: SequenceModel, external: dict[str, list[TaskExample]],
                    target: list[TaskExample], prompt_cfg: TrainConfig,
                    finetune_cfg: TrainConfig, vocab: Vocab,
                    grammar: SequenceGrammar | None = None,
                    mixing: str = "shuffled") -> list[StageLog]:
    """Stage 1 on the external single-type corpora, stage 2 on the target.

    With mixing="shuffled" (default) stage 1 sees one concatenated pool;
    "sequential" runs one prompt stage per external corpus in name order,
    splitting the step budget evenly.
    """
    if not external:
        raise ValueError("continual training needs at least one external corpus")
    logs: list[StageLog] = []
    if mixing == "shuffled":
        pool = [ex for name in sorted(external) for ex in external[name]]
        logs.append(train_stage(model, pool, prompt_cfg, vocab, grammar,
                                corpus_id="external:" + "+".join(sorted(external))))
    elif mixing == "sequential":
        names = sorted(external)
        per = max(1, prompt_cfg.steps // len(names))
        for name in names:
            cfg = TrainConfig(**{**prompt_cfg.__dict__, "steps": per})
            logs.append(train_stage(model, external[name], cfg, vocab, grammar,
                                    corpus_id=f"external:{name}"))
    else:
        raise ValueError(f"unknown mixing {mixing!r}")
    logs.append(train_stage(model, target, finetune_cfg, vocab, grammar, corpus_id="target:train"))
    return logs
