"""Corpus assembly and line-delimited file I/O.

A corpus directory holds the ontology, knowledge base, templates, the
train/dev/test splits, the four single-type external corpora used by the
prompt stage, the token vocabulary and a provenance record.  Sessions are
stored one JSON object per line (UTF-8).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..linearize import SequenceGrammar, Vocab
from ..schema import (
    DialogAct,
    DialogState,
    Edit,
    Ontology,
    default_ontology,
)
from .config import GeneratorConfig
from .kb import KnowledgeBase, build_kb, child_seed
from .simulate import DialogSession, Turn, simulate_dialog
from .templates import (
    Template,
    default_rules,
    enumerate_templates,
    single_type_rules,
    template_from_dict,
    template_to_dict,
)

EXTERNAL_TYPES = ("task", "knowledge", "qa", "chitchat")


class CorpusFormatError(ValueError):
    """A corpus file failed to parse; names file, line and field."""

    def __init__(self, path: str | Path, line: int, fieldname: str, message: str):
        super().__init__(f"{path}:{line}: field {fieldname!r}: {message}")
        self.path = str(path)
        self.line = line
        self.field = fieldname


@dataclass
class CorpusSplit:
    train: list[DialogSession] = field(default_factory=list)
    dev: list[DialogSession] = field(default_factory=list)
    test: list[DialogSession] = field(default_factory=list)
    external: dict[str, list[DialogSession]] = field(default_factory=dict)

    def target_sessions(self) -> list[DialogSession]:
        return [*self.train, *self.dev, *self.test]

    def named_splits(self) -> dict[str, list[DialogSession]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


@dataclass
class CorpusStats:
    sessions: int
    utterances: int
    tokens: int
    avg_utt_per_dialog: float
    avg_tokens_per_utt: float
    sessions_with_type: dict[str, int]

    def table(self) -> str:
        lines = [
            f"{'# Dialogs':24s} {self.sessions}",
            f"{'# Utt.':24s} {self.utterances}",
            f"{'Avg. utt. per dialog':24s} {self.avg_utt_per_dialog:.1f}",
            f"{'# Tokens':24s} {self.tokens}",
            f"{'Avg. tokens per utt.':24s} {self.avg_tokens_per_utt:.1f}",
        ]
        for name, count in sorted(self.sessions_with_type.items()):
            lines.append(f"{'# ' + name.capitalize():24s} {count}")
        return "\n".join(lines)


def corpus_stats(sessions: list[DialogSession]) -> CorpusStats:
    utterances = sum(len(s.turns) for s in sessions)
    tokens = sum(len(t.utterance) for s in sessions for t in s.turns)
    with_type = {t: 0 for t in EXTERNAL_TYPES}
    for session in sessions:
        for dialog_type in session.dialog_types():
            with_type[dialog_type] = with_type.get(dialog_type, 0) + 1
    return CorpusStats(
        sessions=len(sessions),
        utterances=utterances,
        tokens=tokens,
        avg_utt_per_dialog=utterances / len(sessions) if sessions else 0.0,
        avg_tokens_per_utt=tokens / utterances if utterances else 0.0,
        sessions_with_type=with_type,
    )


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


@dataclass
class GeneratedCorpus:
    ontology: Ontology
    kb: KnowledgeBase
    templates: dict[str, list[Template]]  # "target" plus one list per external type
    split: CorpusSplit
    config: GeneratorConfig
    seed: int


def _simulate_block(templates: list[Template], count: int, kb: KnowledgeBase,
                    config: GeneratorConfig, ontology: Ontology, seed: int,
                    prefix: str, phrasing: str | None = None) -> list[DialogSession]:
    style = config.style
    if phrasing is not None and phrasing != style.phrasing:
        style = dataclasses.replace(style, phrasing=phrasing)
    sessions = []
    for i in range(count):
        template = templates[i % len(templates)]
        session = simulate_dialog(template, kb, style,
                                  child_seed(seed, "session", prefix, i), ontology)
        session.session_id = f"{prefix}-{i}"
        sessions.append(session)
    return sessions


def generate_corpus(config: GeneratorConfig, seed: int | None = None,
                    ontology: Ontology | None = None) -> GeneratedCorpus:
    """KB, templates and simulated sessions for every split, from one seed."""
    config.validate()
    seed = config.seed if seed is None else seed
    ontology = ontology or default_ontology()
    kb = build_kb(config, seed, ontology)

    total = config.train_sessions + config.dev_sessions + config.test_sessions
    rules = dataclasses.replace(default_rules(config.qa_rate, config.interruption_rate),
                                max_steps=config.max_template_steps)
    target_templates = enumerate_templates(kb, rules, child_seed(seed, "target"),
                                           max(total, 1), config, ontology)
    templates: dict[str, list[Template]] = {"target": target_templates}

    split = CorpusSplit()
    offset = 0
    for name, count in (("train", config.train_sessions),
                        ("dev", config.dev_sessions),
                        ("test", config.test_sessions)):
        block = _simulate_block(target_templates[offset:] + target_templates[:offset],
                                count, kb, config, ontology, seed, name)
        offset = (offset + count) % max(len(target_templates), 1)
        getattr(split, name).extend(block)

    for dialog_type in EXTERNAL_TYPES:
        ext_rules = single_type_rules(dialog_type)
        ext_templates = enumerate_templates(kb, ext_rules, child_seed(seed, "ext", dialog_type),
                                            max(config.external_sessions, 1), config, ontology)
        templates[dialog_type] = ext_templates
        if ext_templates:
            split.external[dialog_type] = _simulate_block(
                ext_templates, config.external_sessions, kb, config, ontology, seed,
                f"ext-{dialog_type}", phrasing="external")
        else:
            split.external[dialog_type] = []
    return GeneratedCorpus(ontology, kb, templates, split, config, seed)


def build_vocab(corpus: GeneratedCorpus, grammar: SequenceGrammar | None = None) -> Vocab:
    """Content tokens from KB, ontology and sessions behind the reserved specials."""
    grammar = grammar or SequenceGrammar()
    content: set[str] = set()
    ontology = corpus.ontology
    content.update(ontology.domains)
    content.update(("semi", "entities", "booked"))
    content.update(str(d) for d in range(10))
    content.update(t for t in ("chitchat", "qa", "knowledge", "task"))
    for domain in ontology.non_general_domains():
        ds = ontology.schemas[domain]
        content.update(ds.slots)
        content.update(ds.intents)
    content.update(ontology.general_slots)
    content.update(ontology.general_intents)
    content.add("_attitude")
    content.update(("positive", "negative"))
    for domain_entities in corpus.kb.entities.values():
        for ent in domain_entities.values():
            content.update(ent.name.split())
            for value in ent.attributes.values():
                content.update(value.split())
            for snippet in ent.snippets:
                content.update(snippet.tokens)
            for pair in ent.qa_pairs:
                content.update(pair.question)
                content.update(pair.answer)
    for sessions in (corpus.split.target_sessions(), *corpus.split.external.values()):
        for session in sessions:
            for turn in session.turns:
                content.update(turn.utterance)
    return Vocab.build(grammar.special_tokens(ontology), content)


# ---------------------------------------------------------------------------
# Session (de)serialization
# ---------------------------------------------------------------------------


def turn_to_dict(turn: Turn) -> dict:
    return {
        "speaker": turn.speaker,
        "utterance": list(turn.utterance),
        "dialog_type": turn.dialog_type,
        "domain": turn.domain,
        "delta": [e.to_list() for e in turn.delta],
        "state": turn.state.to_dict(),
        "act": turn.act.to_list() if turn.act is not None else None,
        "grounding": list(turn.grounding),
        "factual": turn.factual,
    }


def turn_from_dict(data: dict) -> Turn:
    return Turn(
        speaker=data["speaker"],
        utterance=list(data["utterance"]),
        dialog_type=data["dialog_type"],
        domain=data["domain"],
        delta=[Edit.from_list(e) for e in data["delta"]],
        state=DialogState.from_dict(data["state"]),
        act=DialogAct.from_list(data["act"]) if data["act"] is not None else None,
        grounding=list(data["grounding"]),
        factual=data["factual"],
    )


def session_to_dict(session: DialogSession) -> dict:
    return {
        "session_id": session.session_id,
        "template_id": session.template_id,
        "turns": [turn_to_dict(t) for t in session.turns],
        "completed_orders": session.completed_orders,
    }


def session_from_dict(data: dict) -> DialogSession:
    return DialogSession(
        session_id=data["session_id"],
        template_id=data["template_id"],
        turns=[turn_from_dict(t) for t in data["turns"]],
        completed_orders=list(data["completed_orders"]),
    )


def write_sessions(sessions: list[DialogSession], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session_to_dict(session), sort_keys=True) + "\n")


def read_sessions(path: Path) -> list[DialogSession]:
    sessions = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, "-", f"invalid JSON: {exc.msg}") from None
            try:
                sessions.append(session_from_dict(data))
            except (KeyError, TypeError, ValueError) as exc:
                fieldname = exc.args[0] if isinstance(exc, KeyError) else "-"
                raise CorpusFormatError(path, lineno, str(fieldname), str(exc)) from None
    return sessions


# ---------------------------------------------------------------------------
# Directory layout
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def config_hash(config: GeneratorConfig) -> str:
    return hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode()).hexdigest()


def write_corpus(corpus: GeneratedCorpus, out_dir: str | Path,
                 grammar: SequenceGrammar | None = None) -> CorpusStats:
    """Write every corpus artifact plus a provenance record; returns stats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.ontology.save(out / "ontology.json")
    corpus.kb.save(out / "kb.json")
    with (out / "templates.jsonl").open("w", encoding="utf-8") as fh:
        for group, templates in sorted(corpus.templates.items()):
            for template in templates:
                row = template_to_dict(template)
                row["group"] = group
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    for name, sessions in corpus.split.named_splits().items():
        write_sessions(sessions, out / f"{name}.jsonl")
    for dialog_type, sessions in sorted(corpus.split.external.items()):
        write_sessions(sessions, out / f"external_{dialog_type}.jsonl")
    vocab = build_vocab(corpus, grammar)
    vocab.save(out / "vocab.json")
    corpus.config.save(out / "generator_config.json")
    stats = corpus_stats(corpus.split.target_sessions())

    files = sorted(p.name for p in out.glob("*.json*") if p.name != "meta.json")
    digests = {name: _sha256(out / name) for name in files}
    meta = {
        "kind": "corpus",
        "seed": corpus.seed,
        "config_hash": config_hash(corpus.config),
        "files": digests,
        "stats": {
            "sessions": stats.sessions,
            "utterances": stats.utterances,
            "tokens": stats.tokens,
            "avg_utt_per_dialog": stats.avg_utt_per_dialog,
            "avg_tokens_per_utt": stats.avg_tokens_per_utt,
            "sessions_with_type": stats.sessions_with_type,
        },
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats


def read_corpus(corpus_dir: str | Path) -> CorpusSplit:
    d = Path(corpus_dir)
    split = CorpusSplit(
        train=read_sessions(d / "train.jsonl"),
        dev=read_sessions(d / "dev.jsonl"),
        test=read_sessions(d / "test.jsonl"),
    )
    for path in sorted(d.glob("external_*.jsonl")):
        dialog_type = path.stem.removeprefix("external_")
        split.external[dialog_type] = read_sessions(path)
    return split


def read_templates(corpus_dir: str | Path) -> dict[str, list[Template]]:
    templates: dict[str, list[Template]] = {}
    path = Path(corpus_dir) / "templates.jsonl"
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                templates.setdefault(row["group"], []).append(template_from_dict(row))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusFormatError(path, lineno, "-", str(exc)) from None
    return templates


def corpus_fingerprint(corpus_dir: str | Path) -> str:
    """Digest of the whole corpus directory, as recorded by meta.json."""
    meta = json.loads((Path(corpus_dir) / "meta.json").read_text(encoding="utf-8"))
    payload = json.dumps(meta["files"], sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def verify_corpus_dir(corpus_dir: str | Path) -> list[str]:
    """Provenance check: recompute file digests against meta.json."""
    d = Path(corpus_dir)
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    problems = []
    for name, digest in meta["files"].items():
        path = d / name
        if not path.exists():
            problems.append(f"missing file {name}")
        elif _sha256(path) != digest:
            problems.append(f"digest mismatch for {name}")
    return problems
