"""Autoregressive decoding with a per-beam KV cache.

Greedy decoding is beam search with width 1, so the two are identical by
construction; fixed-seed sampling is also deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..linearize import EOS, TARGET, FormattedInput, Vocab
from .net import SequenceModel


@dataclass
class DecodeConfig:
    mode: str = "greedy"  # greedy | beam | sample
    beam_width: int = 1
    max_new_tokens: int = 288
    temperature: float = 1.0
    seed: int = 0


def _input_tensors(fi: FormattedInput, vocab: Vocab) -> dict[str, torch.Tensor]:
    target_id = vocab.index[TARGET]
    tok = vocab.encode(fi.tokens) + [target_id]
    last = lambda ids: ids[-1] if ids else 0
    return {
        "tokens": torch.tensor([tok], dtype=torch.long),
        "types": torch.tensor([fi.type_ids + [last(fi.type_ids)]], dtype=torch.long),
        "tasks": torch.tensor([fi.task_ids + [last(fi.task_ids)]], dtype=torch.long),
        "domains": torch.tensor([fi.domain_ids + [last(fi.domain_ids)]], dtype=torch.long),
    }


@torch.no_grad()
def generate(model: SequenceModel, fi: FormattedInput, vocab: Vocab,
             config: DecodeConfig | None = None) -> list[str]:
    """Decode a target continuation for a formatted input; [eos] is stripped."""
    config = config or DecodeConfig()
    model.eval()
    eos_id = vocab.index[EOS]
    base = _input_tensors(fi, vocab)
    prefix_len = base["tokens"].size(1)
    budget = min(config.max_new_tokens,
                 model.config.max_positions - prefix_len)
    if budget <= 0:
        return []
    const_ids = {k: base[k][:, -1:] for k in ("types", "tasks", "domains")}

    logits, cache = model(base["tokens"], base["types"], base["tasks"], base["domains"])
    logprobs = torch.log_softmax(logits[:, -1, :].double() / config.temperature, dim=-1)

    if config.mode == "sample":
        generator = torch.Generator().manual_seed(config.seed)
        out: list[int] = []
        position = prefix_len
        while len(out) < budget:
            token = int(torch.multinomial(logprobs.exp(), 1, generator=generator))
            if token == eos_id:
                break
            out.append(token)
            step = torch.tensor([[token]], dtype=torch.long)
            logits, cache = model(step, const_ids["types"], const_ids["tasks"],
                                  const_ids["domains"], pos_offset=position, cache=cache)
            logprobs = torch.log_softmax(logits[:, -1, :].double() / config.temperature, dim=-1)
            position += 1
        return vocab.decode(out)

    width = 1 if config.mode == "greedy" else max(1, config.beam_width)
    beams = [{"tokens": [], "score": 0.0, "cache": cache, "logprobs": logprobs[0], "done": False}]
    for offset in range(budget):
        candidates = []
        for beam in beams:
            if beam["done"]:
                candidates.append((beam["score"], None, beam))
                continue
            top = torch.topk(beam["logprobs"], width)
            for logp, token in zip(top.values.tolist(), top.indices.tolist()):
                candidates.append((beam["score"] + logp, token, beam))
        candidates.sort(key=lambda c: (-c[0], c[1] if c[1] is not None else -1))
        next_beams = []
        for score, token, beam in candidates[:width]:
            if token is None:
                next_beams.append(beam)
                continue
            if token == eos_id:
                next_beams.append({"tokens": beam["tokens"], "score": score,
                                   "cache": None, "logprobs": None, "done": True})
                continue
            step = torch.tensor([[token]], dtype=torch.long)
            logits, new_cache = model(step, const_ids["types"], const_ids["tasks"],
                                      const_ids["domains"], pos_offset=prefix_len + offset,
                                      cache=beam["cache"])
            next_beams.append({
                "tokens": beam["tokens"] + [token],
                "score": score,
                "cache": new_cache,
                "logprobs": torch.log_softmax(logits[0, -1, :].double(), dim=-1),
                "done": False,
            })
        beams = next_beams
        if all(b["done"] for b in beams):
            break
    best = max(beams, key=lambda b: b["score"])
    return vocab.decode(best["tokens"])
