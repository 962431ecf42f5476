"""Automatic evaluation metrics for the four benchmark sub-tasks.

Every metric is a pure function of its aligned inputs; identical inputs give
bitwise-identical outputs, and corpus-level values never depend on segment
order.  Scores that can degenerate (CIDEr on an all-identical reference
corpus, Distinct on an empty token stream) stay defined and are flagged in
the report instead of raising.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .schema import DialogAct, DialogState, Ontology, flatten_state

CIDER_MAX_ORDER = 4
METEOR_PENALTY_WEIGHT = 0.5
METEOR_PENALTY_POWER = 3
METEOR_RECALL_WEIGHT = 9  # F-mean = 10PR / (R + 9P)


class MetricsError(ValueError):
    """Misaligned or empty inputs; scoring cannot proceed."""


def _check_aligned(preds, golds, what: str) -> None:
    if len(preds) != len(golds):
        raise MetricsError(f"{what}: {len(preds)} predictions vs {len(golds)} references")
    if not golds:
        raise MetricsError(f"{what}: empty corpus")


# ---------------------------------------------------------------------------
# State metrics
# ---------------------------------------------------------------------------


def joint_accuracy(preds: list[DialogState], golds: list[DialogState]) -> float:
    """Fraction of turns whose full triplet set matches gold exactly."""
    _check_aligned(preds, golds, "joint accuracy")
    hits = sum(flatten_state(p) == flatten_state(g) for p, g in zip(preds, golds))
    return hits / len(golds)


def _fixed_keys(ontology: Ontology) -> set[tuple[str, str]]:
    keys = {("general", f"general//{slot}") for slot in ontology.general_slots}
    for domain in ontology.non_general_domains():
        keys |= {(domain, f"semi//{slot}") for slot in ontology.schemas[domain].informable}
    return keys


def slot_accuracy(preds: list[DialogState], golds: list[DialogState], ontology: Ontology) -> float:
    """Per-triplet comparison averaged over turns.

    The per-turn key set is the union of keys present in either state plus
    the ontology-fixed semi/general keys, with an implicit "none" value for
    absent keys.
    """
    _check_aligned(preds, golds, "slot accuracy")
    fixed = _fixed_keys(ontology)
    total = 0.0
    for pred, gold in zip(preds, golds):
        pmap = {(d, path): v for d, path, v in flatten_state(pred)}
        gmap = {(d, path): v for d, path, v in flatten_state(gold)}
        keys = set(pmap) | set(gmap) | fixed
        if not keys:
            total += 1.0
            continue
        hits = sum(pmap.get(k, "none") == gmap.get(k, "none") for k in keys)
        total += hits / len(keys)
    return total / len(golds)


def header_accuracy(preds: list[str | None], golds: list[str]) -> float:
    """Per-turn accuracy of one header field; a missing header is incorrect."""
    _check_aligned(preds, golds, "header accuracy")
    return sum(p is not None and p == g for p, g in zip(preds, golds)) / len(golds)


type_accuracy = header_accuracy
domain_accuracy = header_accuracy


def act_accuracy(preds: list[DialogAct], golds: list[DialogAct]) -> float:
    """Fraction of turns whose predicted item set equals gold exactly."""
    _check_aligned(preds, golds, "act accuracy")
    return sum(p.items == g.items for p, g in zip(preds, golds)) / len(golds)


# ---------------------------------------------------------------------------
# Generation metrics
# ---------------------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hyps: list[list[str]], refs: list[list[str]], n: int = 1, smooth: bool = False) -> float:
    """Corpus BLEU over orders 1..n with clipped precision and brevity penalty.

    Exact zeros are reported unless add-one smoothing is enabled.
    """
    _check_aligned(hyps, refs, "bleu")
    clipped = [0] * n
    totals = [0] * n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for k in range(1, n + 1):
            hyp_counts = _ngrams(hyp, k)
            ref_counts = _ngrams(ref, k)
            totals[k - 1] += sum(hyp_counts.values())
            clipped[k - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    if hyp_len == 0:
        return 0.0
    precisions = []
    for c, t in zip(clipped, totals):
        if smooth:
            precisions.append((c + 1) / (t + 1))
        elif t == 0 or c == 0:
            return 0.0
        else:
            precisions.append(c / t)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(sum(math.log(p) for p in precisions) / n)


def _meteor_chunks(hyp: list[str], ref: list[str], matches: int) -> int:
    """Minimal chunk count over maximal exact-match alignments.

    Exact search with memoized backtracking; falls back to a greedy
    closest-position alignment when the duplicate structure makes the exact
    search too wide (> ~200k states), which synthetic utterances never hit.
    """
    need = {t: min(c, Counter(ref)[t]) for t, c in Counter(hyp).items() if Counter(ref)[t]}
    positions = {t: [j for j, tok in enumerate(ref) if tok == t] for t in need}

    width = 1.0
    for t, cnt in need.items():
        width *= math.comb(len(positions[t]), cnt) * math.factorial(cnt)
        if width > 200_000:
            return _meteor_chunks_greedy(hyp, ref)

    best = [matches]  # upper bound: every match its own chunk

    def walk(i: int, remaining: dict[str, int], used: frozenset[int],
             last_j: int, chunks: int, matched: int) -> None:
        if chunks >= best[0]:
            return
        if matched == matches:
            best[0] = min(best[0], chunks)
            return
        if i >= len(hyp):
            return
        token = hyp[i]
        if remaining.get(token, 0) > 0:
            surplus = sum(remaining.values()) < (len(hyp) - i)
            for j in positions[token]:
                if j in used:
                    continue
                new_chunks = chunks + (0 if j == last_j + 1 else 1)
                next_remaining = dict(remaining)
                next_remaining[token] -= 1
                walk(i + 1, next_remaining, used | {j}, j, new_chunks, matched + 1)
            if surplus and Counter(hyp[i + 1:])[token] >= remaining[token]:
                walk(i + 1, remaining, used, -10, chunks, matched)  # leave i unmatched
        else:
            walk(i + 1, remaining, used, -10, chunks, matched)

    walk(0, dict(need), frozenset(), -10, 0, 0)
    return best[0]


def _meteor_chunks_greedy(hyp: list[str], ref: list[str]) -> int:
    used: set[int] = set()
    chunks = 0
    last_j = -10
    ref_counts = Counter(ref)
    budget = {t: min(c, ref_counts[t]) for t, c in Counter(hyp).items()}
    for i, token in enumerate(hyp):
        if budget.get(token, 0) <= 0:
            last_j = -10
            continue
        candidates = [j for j, tok in enumerate(ref) if tok == token and j not in used]
        if not candidates:
            last_j = -10
            continue
        j = next((j for j in candidates if j == last_j + 1), candidates[0])
        used.add(j)
        budget[token] -= 1
        chunks += 0 if j == last_j + 1 else 1
        last_j = j
    return max(chunks, 1)


def meteor(hyps: list[list[str]], refs: list[list[str]]) -> float:
    """Exact-match METEOR: F-mean 10PR/(R+9P), chunk penalty 0.5*(ch/m)^3.

    Corpus score is the mean of segment scores; a segment with no common
    unigrams scores 0.
    """
    _check_aligned(hyps, refs, "meteor")
    total = 0.0
    for hyp, ref in zip(hyps, refs):
        hyp_counts, ref_counts = Counter(hyp), Counter(ref)
        matches = sum(min(c, ref_counts[t]) for t, c in hyp_counts.items())
        if matches == 0 or not hyp or not ref:
            continue
        precision = matches / len(hyp)
        recall = matches / len(ref)
        fmean = (10 * precision * recall) / (recall + METEOR_RECALL_WEIGHT * precision)
        chunks = _meteor_chunks(hyp, ref, matches)
        penalty = METEOR_PENALTY_WEIGHT * (chunks / matches) ** METEOR_PENALTY_POWER
        total += fmean * (1.0 - penalty)
    return total / len(hyps)


def cider_degenerate(refs: list[list[str]]) -> bool:
    """True when idf carries no information: all reference segments identical."""
    return len({tuple(r) for r in refs}) < 2


def cider(hyps: list[list[str]], refs: list[list[str]]) -> float:
    """CIDEr over 1..4-grams: clipped, length-normalized tf-idf cosine, x10.

    idf comes from the reference corpus; candidate-only n-grams get the
    maximal idf log(N).  A degenerate (all-identical-reference) corpus is
    defined but carries no signal; see cider_degenerate for the report flag.
    """
    _check_aligned(hyps, refs, "cider")
    n_refs = len(refs)
    doc_freq: list[Counter] = [Counter() for _ in range(CIDER_MAX_ORDER)]
    for ref in refs:
        for k in range(1, CIDER_MAX_ORDER + 1):
            for gram in set(_ngrams(ref, k)):
                doc_freq[k - 1][gram] += 1

    def tfidf(tokens: list[str], k: int) -> dict[tuple, float]:
        counts = _ngrams(tokens, k)
        return {
            g: c * (math.log(n_refs) - math.log(max(1.0, doc_freq[k - 1][g])))
            for g, c in counts.items()
        }

    total = 0.0
    for hyp, ref in zip(hyps, refs):
        score = 0.0
        for k in range(1, CIDER_MAX_ORDER + 1):
            v_hyp = tfidf(hyp, k)
            v_ref = tfidf(ref, k)
            norm_hyp = math.sqrt(sum(x * x for x in v_hyp.values()))
            norm_ref = math.sqrt(sum(x * x for x in v_ref.values()))
            if norm_hyp == 0.0 or norm_ref == 0.0:
                continue
            dot = sum(min(v_hyp[g], v_ref[g]) * v_ref[g] for g in v_hyp if g in v_ref)
            score += dot / (norm_hyp * norm_ref)
        total += 10.0 * score / CIDER_MAX_ORDER
    return total / len(hyps)


def distinct_n(corpus: list[list[str]], n: int = 1) -> float:
    """Corpus-level unique-n-gram ratio; 0 when there are no n-grams at all."""
    if not corpus:
        raise MetricsError("distinct: empty corpus")
    unique: set[tuple] = set()
    total = 0
    for tokens in corpus:
        grams = _ngrams(tokens, n)
        unique.update(grams)
        total += sum(grams.values())
    return len(unique) / total if total else 0.0


def distinct_empty(corpus: list[list[str]], n: int = 1) -> bool:
    return all(len(tokens) < n for tokens in corpus)


# ---------------------------------------------------------------------------
# Hallucination and success
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mention:
    """One informed value found in a generated response."""

    domain: str
    entity: str
    slot: str
    value: str


def mention_is_true(mention: Mention, kb) -> bool:
    """A mention is KB-true when the topic entity carries exactly that value."""
    if mention.domain not in kb.entities or mention.entity not in kb.entities[mention.domain]:
        return False
    entity = kb.entities[mention.domain][mention.entity]
    if mention.slot == "name":
        return mention.value == entity.name
    return entity.attributes.get(mention.slot) == mention.value


def hallucination_accuracy(mention_lists: list[list[Mention]], kb) -> float:
    """Fraction of informed values that match the knowledge base exactly.

    Turns that inform nothing contribute nothing; an empty mention pool
    scores 1.0 (nothing asserted, nothing wrong).
    """
    mentions = [m for turn in mention_lists for m in turn]
    if not mentions:
        return 1.0
    return sum(mention_is_true(m, kb) for m in mentions) / len(mentions)


def success_score(mention_lists: list[list[Mention]], kb, final_state: DialogState) -> float:
    """0 unless the session's final state holds a completed order; otherwise
    the session's information accuracy."""
    booked = any(ds.booked for ds in final_state.domains.values())
    if not booked:
        return 0.0
    return hallucination_accuracy(mention_lists, kb)


# ---------------------------------------------------------------------------
# Significance utility
# ---------------------------------------------------------------------------


def paired_sign_test(a: list[float], b: list[float]) -> float:
    """Two-sided sign test p-value for paired per-session scores."""
    _check_aligned(a, b, "sign test")
    wins = sum(x > y for x, y in zip(a, b))
    losses = sum(x < y for x, y in zip(a, b))
    n = wins + losses
    if n == 0:
        return 1.0
    k = min(wins, losses)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n
    return min(1.0, 2 * tail)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    task: str
    values: dict[str, float]
    counts: dict[str, int]
    flags: dict[str, bool] = field(default_factory=dict)
    per_session: dict[str, dict[str, float]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "values": self.values,
            "counts": self.counts,
            "flags": self.flags,
            "per_session": self.per_session,
            "config": self.config,
        }


TABLE_COLUMNS = {
    "dst": ["Type Acc.", "Domain Acc.", "Slot Acc.", "Joint Acc."],
    "dap": ["Act Acc.", "BLEU-1/2"],
    "rg": ["BLEU-1/2", "METEOR", "CIDER", "Dist-1/2", "Hallu.", "Suc."],
    "e2e": ["BLEU-1/2", "METEOR", "CIDER", "Dist-1/2", "Hallu.", "Suc."],
}

_COLUMN_KEYS = {
    "Type Acc.": ("type_acc",),
    "Domain Acc.": ("domain_acc",),
    "Slot Acc.": ("slot_acc",),
    "Joint Acc.": ("joint_acc",),
    "Act Acc.": ("act_acc",),
    "BLEU-1/2": ("bleu1", "bleu2"),
    "METEOR": ("meteor",),
    "CIDER": ("cider",),
    "Dist-1/2": ("dist1", "dist2"),
    "Hallu.": ("hallu",),
    "Suc.": ("suc",),
}


def render_table(reports: dict[str, MetricsReport], method: str = "model") -> str:
    """Benchmark-style summary: one block per task, columns fixed per task."""
    lines = []
    for task in ("dst", "dap", "rg", "e2e"):
        if task not in reports:
            continue
        report = reports[task]
        columns = TABLE_COLUMNS[task]
        header = " | ".join([f"{'Method':12s}"] + [f"{c:>12s}" for c in columns])
        cells = []
        for column in columns:
            keys = _COLUMN_KEYS[column]
            cells.append("/".join(f"{report.values[k]:.3f}" for k in keys))
        row = " | ".join([f"{method:12s}"] + [f"{c:>12s}" for c in cells])
        lines += [f"[{task.upper()}]", header, "-" * len(header), row, ""]
    return "\n".join(lines)
