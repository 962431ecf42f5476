"""Token-sequence grammar for states, acts, knowledge and task inputs.

Structured objects are rendered as flat whitespace-token sequences so one
sequence model can consume and produce all of them.  The grammar relies on
a reserved special-token inventory (segment markers, separators, prompt
tokens, placeholders) that must stay disjoint from the content vocabulary;
given that, every serialized form has exactly one parse.

Parsing of model output never hard-fails: unparseable segments are dropped
and counted in a ParseReport so evaluation can score every turn.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .schema import (
    ATTITUDE_SLOT,
    GENERAL,
    ActItem,
    DialogAct,
    DialogState,
    DomainState,
    EntityState,
    Ontology,
    norm_value,
)

DIALOG_TYPES = ("chitchat", "qa", "knowledge", "task")
TASKS = ("dst", "dap", "rg", "e2e")

PAD = "[pad]"
EOS = "[eos]"
TARGET = "[target]"
UNKNOWN = "[unknown]"
USER = "[user]"
WIZARD = "[wizard]"
STATE_OPEN, STATE_CLOSE = "[state]", "[/state]"
ACT_OPEN, ACT_CLOSE = "[act]", "[/act]"
KB_OPEN, KB_CLOSE = "[kb]", "[/kb]"
TURN_TYPE, TURN_DOMAIN = "[turn-type]", "[turn-domain]"
SEP = ";"
DOT = "."
ASSIGN = "="

# Prompt prefixes per dialog type; the chat marker is our own addition so
# that every type gets a distinguishable prefix.
PROMPT_TOKENS: dict[str, tuple[str, ...]] = {
    "chitchat": ("[chat]",),
    "qa": ("[question]", "[answer]"),
    "knowledge": ("[knowledge]",),
    "task": ("[domain]", "[slot]", "[value]"),
}

# Reserved id 0 of each embedding table is the unknown row.
UNKNOWN_ID = 0
TYPE_IDS = {t: i + 1 for i, t in enumerate(DIALOG_TYPES)}
TASK_IDS = {t: i + 1 for i, t in enumerate(TASKS)}

_SECTIONS = (GENERAL, "semi", "entities", "booked")


class GrammarError(ValueError):
    """Raised for unusable grammar inputs (unknown type, over-long extras)."""


@dataclass
class ParseReport:
    """What parsing had to throw away; empty report means a clean parse."""

    dropped: int = 0
    header_missing: bool = False

    def clean(self) -> bool:
        return self.dropped == 0 and not self.header_missing


@dataclass(frozen=True)
class SequenceGrammar:
    """Special-token inventory plus sequence-length policy.

    Truncation removes whole context turns starting from the oldest; the
    prompt prefix and extras segments are never truncated.
    """

    max_len: int = 512
    max_target_len: int = 288

    def special_tokens(self, ontology: Ontology | None = None) -> list[str]:
        tokens = [
            PAD, EOS, TARGET, UNKNOWN, USER, WIZARD,
            STATE_OPEN, STATE_CLOSE, ACT_OPEN, ACT_CLOSE, KB_OPEN, KB_CLOSE,
            TURN_TYPE, TURN_DOMAIN, SEP, DOT, ASSIGN,
        ]
        for prompt in PROMPT_TOKENS.values():
            for tok in prompt:
                if tok not in tokens:
                    tokens.append(tok)
        if ontology is not None:
            for domain in ontology.non_general_domains():
                for slot in ontology.schemas[domain].slots:
                    tokens.append(placeholder(domain, slot))
        return tokens


def domain_ids(ontology: Ontology) -> dict[str, int]:
    """Domain-id map: 0 is reserved unknown, general is 1, rest follow."""
    return {d: i + 1 for i, d in enumerate(ontology.domains)}


def prompt_prefix(dialog_type: str | None) -> list[str]:
    """Prompt tokens for a dialog type; None means the unknown marker."""
    if dialog_type is None:
        return [UNKNOWN]
    if dialog_type not in PROMPT_TOKENS:
        raise GrammarError(f"unknown dialog type {dialog_type!r}")
    return list(PROMPT_TOKENS[dialog_type])


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocab:
    """Token/id table; id order is fixed at build time and versioned on disk."""

    tokens: list[str]
    version: int = 1
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise GrammarError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, special_tokens: list[str], content_tokens: set[str]) -> "Vocab":
        clash = content_tokens & set(special_tokens)
        if clash:
            raise GrammarError(f"content tokens collide with special tokens: {sorted(clash)[:5]}")
        return cls(tokens=list(special_tokens) + sorted(content_tokens))

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.index[UNKNOWN]
        return [self.index.get(t, unk) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        payload = {"version": self.version, "tokens": self.tokens}
        Path(path).write_text(json.dumps(payload, indent=0) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tokens=payload["tokens"], version=payload["version"])


# ---------------------------------------------------------------------------
# State serialization
# ---------------------------------------------------------------------------


def _leaf_rows(state: DialogState) -> list[tuple[str, str, str, str, str]]:
    rows = []
    for slot, value in state.general.items():
        rows.append((GENERAL, GENERAL, "", slot, value))
    for domain, dstate in state.domains.items():
        for slot, value in dstate.semi.items():
            rows.append((domain, "semi", "", slot, value))
        for name, ent in dstate.entities.items():
            for slot, value in ent.attributes.items():
                rows.append((domain, "entities", name, slot, value))
        for idx, order in enumerate(dstate.booked):
            for slot, value in order.items():
                rows.append((domain, "booked", str(idx), slot, value))
    return sorted(rows)


def serialize_state(state: DialogState) -> list[str]:
    """Canonical token form: sorted ``domain . section [. qualifier] . slot = value``
    segments between state markers.  Equal states serialize identically.
    Entities with no recorded attributes produce no segment.
    """
    tokens = [STATE_OPEN]
    for domain, section, qualifier, slot, value in _leaf_rows(state):
        tokens.append(domain)
        tokens += [DOT, section]
        if qualifier:
            tokens.append(DOT)
            tokens += qualifier.split()
        tokens += [DOT, slot, ASSIGN]
        tokens += value.split()
        tokens.append(SEP)
    tokens.append(STATE_CLOSE)
    return tokens


def _split_on(tokens: list[str], sep: str) -> list[list[str]]:
    parts: list[list[str]] = [[]]
    for tok in tokens:
        if tok == sep:
            parts.append([])
        else:
            parts[-1].append(tok)
    return parts


def _segment_body(tokens: list[str], open_tok: str, close_tok: str) -> list[str]:
    """Content between the first marker pair, or the whole list if unmarked."""
    if open_tok in tokens:
        start = tokens.index(open_tok) + 1
        end = tokens.index(close_tok, start) if close_tok in tokens[start:] else len(tokens)
        return tokens[start:end]
    return [t for t in tokens if t != close_tok]


def parse_state(tokens: list[str]) -> tuple[DialogState, ParseReport]:
    """Invert serialize_state; unparseable segments are dropped and counted."""
    report = ParseReport()
    body = _segment_body(tokens, STATE_OPEN, STATE_CLOSE)
    general: dict[str, str] = {}
    domains: dict[str, DomainState] = {}
    booked_slots: dict[tuple[str, int], dict[str, str]] = {}
    for segment in _split_on(body, SEP):
        if not segment:
            continue
        if ASSIGN not in segment:
            report.dropped += 1
            continue
        cut = segment.index(ASSIGN)
        path, value_tokens = segment[:cut], segment[cut + 1:]
        value = norm_value(" ".join(value_tokens))
        components = _split_on(path, DOT)
        if not value or len(components) not in (3, 4) or any(not c for c in components):
            report.dropped += 1
            continue
        (dom_c, sec_c), slot_c = components[:2], components[-1]
        qualifier = " ".join(components[2]) if len(components) == 4 else ""
        if len(dom_c) != 1 or len(sec_c) != 1 or len(slot_c) != 1:
            report.dropped += 1
            continue
        domain, section, slot = dom_c[0], sec_c[0], slot_c[0]
        if section not in _SECTIONS or (qualifier == "") != (section in (GENERAL, "semi")):
            report.dropped += 1
            continue
        if section == GENERAL:
            if domain != GENERAL:
                report.dropped += 1
                continue
            general[slot] = value
        elif section == "semi":
            domains.setdefault(domain, DomainState()).semi[slot] = value
        elif section == "entities":
            ent = domains.setdefault(domain, DomainState()).entities.setdefault(qualifier, EntityState())
            ent.attributes[slot] = value
        else:
            if not qualifier.isdigit():
                report.dropped += 1
                continue
            booked_slots.setdefault((domain, int(qualifier)), {})[slot] = value
    for (domain, idx), order in sorted(booked_slots.items()):
        domains.setdefault(domain, DomainState()).booked.append(order)
    state = DialogState(general=general, domains=domains).prune()
    return state, report


# ---------------------------------------------------------------------------
# Act serialization
# ---------------------------------------------------------------------------


def serialize_act(act: DialogAct) -> list[str]:
    """Canonical act form: sorted ``domain intent [slot] [= value]`` segments."""
    tokens = [ACT_OPEN]
    for item in act.sorted_items():
        tokens += [item.domain, item.intent]
        if item.slot or item.value:
            if item.slot:
                tokens.append(item.slot)
            tokens.append(ASSIGN)
            tokens += item.value.split()
        tokens.append(SEP)
    tokens.append(ACT_CLOSE)
    return tokens


def parse_act(tokens: list[str]) -> tuple[DialogAct, ParseReport]:
    """Invert serialize_act; unparseable segments are dropped and counted."""
    report = ParseReport()
    items = set()
    for segment in _split_on(_segment_body(tokens, ACT_OPEN, ACT_CLOSE), SEP):
        if not segment:
            continue
        if len(segment) < 2 or ASSIGN in segment[:2]:
            report.dropped += 1
            continue
        domain, intent, rest = segment[0], segment[1], segment[2:]
        if not rest:
            items.add(ActItem(domain, intent))
            continue
        if rest[0] == ASSIGN:
            slot, value_tokens = "", rest[1:]
        elif len(rest) >= 2 and rest[1] == ASSIGN:
            slot, value_tokens = rest[0], rest[2:]
        else:
            report.dropped += 1
            continue
        if ASSIGN in value_tokens:
            report.dropped += 1
            continue
        items.add(ActItem(domain, intent, slot, " ".join(value_tokens)))
    return DialogAct(frozenset(items)), report


# ---------------------------------------------------------------------------
# DST target: per-turn header (active type, active domain) plus the state
# ---------------------------------------------------------------------------


def serialize_dst_target(dialog_type: str, domain: str, state: DialogState) -> list[str]:
    return [TURN_TYPE, dialog_type, TURN_DOMAIN, domain] + serialize_state(state)


def parse_dst_target(tokens: list[str]) -> tuple[str | None, str | None, DialogState, ParseReport]:
    turn_type = turn_domain = None
    if len(tokens) >= 2 and tokens[0] == TURN_TYPE:
        turn_type = tokens[1] if tokens[1] in DIALOG_TYPES else None
    if len(tokens) >= 4 and tokens[2] == TURN_DOMAIN and not tokens[3].startswith("["):
        turn_domain = tokens[3]
    state, report = parse_state(tokens)
    report.header_missing = turn_type is None or turn_domain is None
    return turn_type, turn_domain, state, report


# ---------------------------------------------------------------------------
# Delexicalization
# ---------------------------------------------------------------------------


def placeholder(domain: str, slot: str) -> str:
    return f"[value_{domain}_{slot}]"


def delexicalize(act: DialogAct) -> DialogAct:
    """Replace every slot value with its (domain, slot) placeholder."""
    items = set()
    for item in act.items:
        if item.slot and item.value:
            items.add(ActItem(item.domain, item.intent, item.slot, placeholder(item.domain, item.slot)))
        else:
            items.add(item)
    return DialogAct(frozenset(items))


def _value_queues(act: DialogAct) -> dict[str, list[str]]:
    queues: dict[str, list[str]] = {}
    for item in act.sorted_items():
        if item.slot and item.value:
            queues.setdefault(placeholder(item.domain, item.slot), []).append(item.value)
    return queues


def relexicalize(tokens: list[str], act: DialogAct) -> tuple[list[str], int]:
    """Fill placeholders from the act, in canonical act order per slot.

    Extra occurrences of a covered placeholder reuse its last value;
    placeholders the act does not cover stay verbatim and are counted.
    """
    queues = _value_queues(act)
    out: list[str] = []
    unmatched = 0
    for tok in tokens:
        queue = queues.get(tok)
        if queue is None:
            if tok.startswith("[value_"):
                unmatched += 1
            out.append(tok)
            continue
        value = queue.pop(0) if len(queue) > 1 else queue[0]
        out += value.split()
    return out, unmatched


def delexicalize_utterance(tokens: list[str], act: DialogAct) -> list[str]:
    """Replace act-value token runs in an utterance with placeholders.

    Longest values match first; scanning is left to right, so a response
    that mentions same-slot values in canonical act order round-trips
    exactly through relexicalize.
    """
    spans = []
    for item in act.sorted_items():
        if item.slot and item.value:
            spans.append((item.value.split(), placeholder(item.domain, item.slot)))
    spans.sort(key=lambda s: -len(s[0]))
    out: list[str] = []
    i = 0
    while i < len(tokens):
        hit = next(
            (span for span in spans if tokens[i:i + len(span[0])] == span[0]),
            None,
        )
        if hit:
            out.append(hit[1])
            i += len(hit[0])
        else:
            out.append(tokens[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# Task input formatting
# ---------------------------------------------------------------------------


@dataclass
class FormattedInput:
    """Token sequence plus the parallel per-position id sequences."""

    tokens: list[str]
    type_ids: list[int]
    task_ids: list[int]
    domain_ids: list[int]

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if not (len(self.type_ids) == len(self.task_ids) == len(self.domain_ids) == n):
            raise GrammarError("parallel id sequences must match the token sequence length")

    def __len__(self) -> int:
        return len(self.tokens)


def render_knowledge(items: list[list[str]]) -> list[str]:
    """Join pre-tokenized knowledge items into one marked segment."""
    tokens = [KB_OPEN]
    for item in items:
        tokens += item
        tokens.append(SEP)
    tokens.append(KB_CLOSE)
    return tokens


def format_task_input(
    task: str,
    context: list[tuple[str, list[str]]],
    ontology: Ontology,
    grammar: SequenceGrammar | None = None,
    dialog_type: str | None = None,
    active_domain: str | None = None,
    state: DialogState | None = None,
    knowledge: list[list[str]] | None = None,
    act: DialogAct | None = None,
    prompting: bool = True,
) -> FormattedInput:
    """Assemble the model input for one benchmark task.

    ``context`` is the full turn history, oldest first, as (speaker, tokens)
    pairs; the newest turns that fit the length budget are kept.  Extras per
    task: DST takes the recent state, DAP the current state plus retrieved
    knowledge, RG the delexicalized act; E2E takes context only and carries
    unknown type/domain ids.  With ``prompting`` off (the ablation variant)
    no prompt prefix is emitted and every id is the reserved unknown id.
    """
    if task not in TASKS:
        raise GrammarError(f"unknown task {task!r}")
    grammar = grammar or SequenceGrammar()
    if task == "e2e":
        dialog_type = active_domain = None

    head: list[str] = []
    if prompting:
        head += prompt_prefix(dialog_type)
    if task == "dst":
        head += serialize_state(state if state is not None else DialogState())
    elif task == "dap":
        head += serialize_state(state if state is not None else DialogState())
        head += render_knowledge(knowledge or [])
    elif task == "rg":
        head += serialize_act(act if act is not None else DialogAct())

    budget = grammar.max_len - len(head)
    if budget < 0:
        raise GrammarError(
            f"prompt and extras need {len(head)} tokens but max_len is {grammar.max_len}"
        )
    kept: list[list[str]] = []
    used = 0
    for speaker, utterance in reversed(context):
        turn = [USER if speaker == "user" else WIZARD] + list(utterance)
        if used + len(turn) > budget:
            break
        kept.append(turn)
        used += len(turn)
    tokens = head + [tok for turn in reversed(kept) for tok in turn]

    if prompting:
        type_id = TYPE_IDS.get(dialog_type, UNKNOWN_ID) if dialog_type else UNKNOWN_ID
        task_id = TASK_IDS[task]
        dom_id = domain_ids(ontology).get(active_domain, UNKNOWN_ID) if active_domain else UNKNOWN_ID
    else:
        type_id = task_id = dom_id = UNKNOWN_ID
    n = len(tokens)
    return FormattedInput(tokens, [type_id] * n, [task_id] * n, [dom_id] * n)


def format_task_target(
    task: str,
    state: DialogState | None = None,
    dialog_type: str | None = None,
    active_domain: str | None = None,
    act: DialogAct | None = None,
    response: list[str] | None = None,
) -> list[str]:
    """The gold output sequence for one benchmark task."""
    if task == "dst":
        return serialize_dst_target(dialog_type or "", active_domain or "", state or DialogState())
    if task == "dap":
        return serialize_act(act if act is not None else DialogAct())
    if task in ("rg", "e2e"):
        return list(response or [])
    raise GrammarError(f"unknown task {task!r}")
