"""Benchmark pipelines: DST, DAP, RG and E2E prediction over gold sessions.

Each pipeline walks a session's wizard turns, formats the task input, decodes
the model and parses the output into an alignable PredictionRecord.  Records
embed their gold objects, so a record file plus the knowledge base is all the
scoring stage needs; third-party systems can be scored by emitting the same
line-delimited format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics as M
from .corpus.kb import KnowledgeBase
from .corpus.retrieve import retrieve_coarse_knowledge
from .corpus.simulate import DialogSession, Turn
from .linearize import (
    STATE_OPEN,
    FormattedInput,
    SequenceGrammar,
    Vocab,
    delexicalize,
    delexicalize_utterance,
    format_task_input,
    parse_act,
    parse_dst_target,
    relexicalize,
    serialize_act,
    serialize_dst_target,
)
from .metrics import Mention, MetricsReport
from .model.decode import DecodeConfig, generate
from .model.net import SequenceModel
from .model.training import TaskExample
from .schema import DialogAct, DialogState, Ontology

TASK_NAMES = ("dst", "dap", "rg", "e2e")


@dataclass
class PredictionRecord:
    session_id: str
    turn_index: int
    task: str
    predicted: dict
    gold: dict
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "task": self.task,
            "predicted": self.predicted,
            "gold": self.gold,
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionRecord":
        return cls(**data)


def write_records(records: list[PredictionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[PredictionRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(PredictionRecord.from_dict(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _context(session: DialogSession, upto: int) -> list[tuple[str, list[str]]]:
    return [(t.speaker, t.utterance) for t in session.turns[:upto]]


def _gold_target_state(session: DialogSession, wizard_index: int) -> DialogState:
    """Current state at prediction time: after the preceding user turn."""
    return session.turns[wizard_index - 1].state if wizard_index > 0 else DialogState()


def topic_entity(turn: Turn) -> tuple[str, str]:
    """(domain, entity) the wizard turn grounds on; empty when none."""
    for item_id in turn.grounding:
        parts = item_id.split("/")
        if len(parts) >= 3:
            return parts[0], parts[1]
    if turn.act is not None:
        for item in turn.act.sorted_items():
            if item.slot == "name" and item.value:
                return item.domain, item.value
    return "", ""


def build_value_index(kb: KnowledgeBase) -> list[tuple[tuple[str, ...], str, str]]:
    """(value tokens, slot, value) for every attribute value and entity name,
    longest token run first, ties by value string for determinism."""
    seen: dict[str, str] = {}
    for domain in kb.domains():
        for name in kb.names(domain):
            ent = kb.get(domain, name)
            seen.setdefault(ent.name, "name")
            for slot in sorted(ent.attributes):
                seen.setdefault(ent.attributes[slot], slot)
    index = [(tuple(value.split()), slot, value) for value, slot in seen.items()]
    index.sort(key=lambda row: (-len(row[0]), row[2]))
    return index


def extract_mentions(tokens: list[str], value_index, domain: str, entity: str) -> list[Mention]:
    """Non-overlapping longest-first scan for knowledge-base value strings.

    Placeholder tokens are skipped; each hit becomes an informed mention
    attributed to the turn's topic entity.
    """
    mentions = []
    i = 0
    while i < len(tokens):
        if tokens[i].startswith("["):
            i += 1
            continue
        hit = next((row for row in value_index if tuple(tokens[i:i + len(row[0])]) == row[0]), None)
        if hit is None:
            i += 1
            continue
        _, slot, value = hit
        mentions.append(Mention(domain=domain, entity=entity, slot=slot, value=value))
        i += len(hit[0])
    return mentions


def _decode(model: SequenceModel, fi: FormattedInput, vocab: Vocab,
            decode_cfg: DecodeConfig | None) -> list[str]:
    return generate(model, fi, vocab, decode_cfg or DecodeConfig())


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def run_dst(model: SequenceModel, session: DialogSession, vocab: Vocab, ontology: Ontology,
            grammar: SequenceGrammar | None = None, mode: str = "rollout",
            prompting: bool = True, decode_cfg: DecodeConfig | None = None) -> list[PredictionRecord]:
    """One record per wizard turn; the recent-state input is the previous
    prediction in rollout mode and the gold previous state in oracle mode."""
    if mode not in ("rollout", "oracle-state"):
        raise ValueError(f"unknown DST mode {mode!r}")
    grammar = grammar or SequenceGrammar()
    records = []
    rolled: DialogState = DialogState()
    previous_gold = DialogState()
    for i in session.wizard_turns():
        turn = session.turns[i]
        recent = previous_gold if mode == "oracle-state" else rolled
        fi = format_task_input("dst", _context(session, i), ontology, grammar,
                               dialog_type=turn.dialog_type, active_domain=turn.domain,
                               state=recent, prompting=prompting)
        output = _decode(model, fi, vocab, decode_cfg)
        pred_type, pred_domain, pred_state, report = parse_dst_target(output)
        unparseable = STATE_OPEN not in output
        if unparseable:
            pred_state = recent.copy()
        gold_state = _gold_target_state(session, i)
        records.append(PredictionRecord(
            session_id=session.session_id,
            turn_index=i,
            task="dst",
            predicted={"type": pred_type, "domain": pred_domain,
                       "state": pred_state.to_dict()},
            gold={"type": turn.dialog_type, "domain": turn.domain,
                  "state": gold_state.to_dict()},
            report={"dropped": report.dropped, "header_missing": report.header_missing,
                    "unparseable": unparseable,
                    "input_matches_gold": recent == previous_gold},
        ))
        rolled = pred_state
        previous_gold = gold_state
    return records


def run_dap(model: SequenceModel, session: DialogSession, vocab: Vocab, ontology: Ontology,
            kb: KnowledgeBase, grammar: SequenceGrammar | None = None,
            knowledge_scope: str = "session", prompting: bool = True,
            decode_cfg: DecodeConfig | None = None) -> list[PredictionRecord]:
    """Per wizard turn: context + gold current state + retrieved coarse knowledge."""
    grammar = grammar or SequenceGrammar()
    if knowledge_scope not in ("session", "turn"):
        raise ValueError(f"unknown knowledge scope {knowledge_scope!r}")
    session_items = retrieve_coarse_knowledge(session.final_state(), kb)
    records = []
    for i in session.wizard_turns():
        turn = session.turns[i]
        state = _gold_target_state(session, i)
        items = session_items if knowledge_scope == "session" else retrieve_coarse_knowledge(state, kb)
        fi = format_task_input("dap", _context(session, i), ontology, grammar,
                               dialog_type=turn.dialog_type, active_domain=turn.domain,
                               state=state, knowledge=[list(item.tokens) for item in items],
                               prompting=prompting)
        output = _decode(model, fi, vocab, decode_cfg)
        pred_act, report = parse_act(output)
        records.append(PredictionRecord(
            session_id=session.session_id,
            turn_index=i,
            task="dap",
            predicted={"act": pred_act.to_list()},
            gold={"act": turn.act.to_list() if turn.act else []},
            report={"dropped": report.dropped},
        ))
    return records


def run_rg(model: SequenceModel, session: DialogSession, vocab: Vocab, ontology: Ontology,
           kb: KnowledgeBase, grammar: SequenceGrammar | None = None, prompting: bool = True,
           decode_cfg: DecodeConfig | None = None) -> list[PredictionRecord]:
    """Per wizard turn: context + delexicalized gold act; output is
    relexicalized with the gold act before scoring."""
    grammar = grammar or SequenceGrammar()
    value_index = build_value_index(kb)
    records = []
    for i in session.wizard_turns():
        turn = session.turns[i]
        act = turn.act or DialogAct()
        fi = format_task_input("rg", _context(session, i), ontology, grammar,
                               dialog_type=turn.dialog_type, active_domain=turn.domain,
                               act=delexicalize(act), prompting=prompting)
        output = _decode(model, fi, vocab, decode_cfg)
        response, unmatched = relexicalize(output, act)
        domain, entity = topic_entity(turn)
        mentions = extract_mentions(response, value_index, domain, entity)
        records.append(PredictionRecord(
            session_id=session.session_id,
            turn_index=i,
            task="rg",
            predicted={"response": response, "raw": output,
                       "mentions": [m.__dict__ for m in mentions]},
            gold={"response": list(turn.utterance)},
            report={"unmatched_placeholders": unmatched},
        ))
    return records


def run_e2e(model: SequenceModel, session: DialogSession, vocab: Vocab, ontology: Ontology,
            kb: KnowledgeBase, grammar: SequenceGrammar | None = None, prompting: bool = True,
            decode_cfg: DecodeConfig | None = None) -> list[PredictionRecord]:
    """Per wizard turn: context only; type/domain ids are the unknown row."""
    grammar = grammar or SequenceGrammar()
    value_index = build_value_index(kb)
    records = []
    for i in session.wizard_turns():
        turn = session.turns[i]
        fi = format_task_input("e2e", _context(session, i), ontology, grammar,
                               prompting=prompting)
        output = _decode(model, fi, vocab, decode_cfg)
        domain, entity = topic_entity(turn)
        mentions = extract_mentions(output, value_index, domain, entity)
        records.append(PredictionRecord(
            session_id=session.session_id,
            turn_index=i,
            task="e2e",
            predicted={"response": output, "mentions": [m.__dict__ for m in mentions]},
            gold={"response": list(turn.utterance)},
            report={},
        ))
    return records


RUNNERS = {"dst": run_dst, "dap": run_dap, "rg": run_rg, "e2e": run_e2e}


def run_task(task: str, model: SequenceModel, sessions: list[DialogSession], vocab: Vocab,
             ontology: Ontology, kb: KnowledgeBase, grammar: SequenceGrammar | None = None,
             prompting: bool = True, decode_cfg: DecodeConfig | None = None,
             dst_mode: str = "rollout") -> list[PredictionRecord]:
    records: list[PredictionRecord] = []
    for session in sessions:
        if task == "dst":
            records += run_dst(model, session, vocab, ontology, grammar,
                               mode=dst_mode, prompting=prompting, decode_cfg=decode_cfg)
        elif task == "dap":
            records += run_dap(model, session, vocab, ontology, kb, grammar,
                               prompting=prompting, decode_cfg=decode_cfg)
        elif task == "rg":
            records += run_rg(model, session, vocab, ontology, kb, grammar,
                              prompting=prompting, decode_cfg=decode_cfg)
        elif task == "e2e":
            records += run_e2e(model, session, vocab, ontology, kb, grammar,
                               prompting=prompting, decode_cfg=decode_cfg)
        else:
            raise ValueError(f"unknown task {task!r}")
    return records


# ---------------------------------------------------------------------------
# Training examples
# ---------------------------------------------------------------------------


def examples_from_session(session: DialogSession, ontology: Ontology, kb: KnowledgeBase,
                          grammar: SequenceGrammar | None = None,
                          tasks: tuple[str, ...] = TASK_NAMES,
                          prompting: bool = True) -> list[TaskExample]:
    """Teacher-forced task examples for every wizard turn of a session."""
    grammar = grammar or SequenceGrammar()
    session_items = retrieve_coarse_knowledge(session.final_state(), kb)
    examples = []
    previous_gold = DialogState()
    for i in session.wizard_turns():
        turn = session.turns[i]
        context = _context(session, i)
        gold_state = _gold_target_state(session, i)
        act = turn.act or DialogAct()
        if "dst" in tasks:
            fi = format_task_input("dst", context, ontology, grammar,
                                   dialog_type=turn.dialog_type, active_domain=turn.domain,
                                   state=previous_gold, prompting=prompting)
            target = serialize_dst_target(turn.dialog_type, turn.domain, gold_state)
            examples.append(TaskExample(fi, target, "dst", session.session_id, i))
        if "dap" in tasks:
            fi = format_task_input("dap", context, ontology, grammar,
                                   dialog_type=turn.dialog_type, active_domain=turn.domain,
                                   state=gold_state,
                                   knowledge=[list(item.tokens) for item in session_items],
                                   prompting=prompting)
            examples.append(TaskExample(fi, serialize_act(act), "dap", session.session_id, i))
        if "rg" in tasks:
            fi = format_task_input("rg", context, ontology, grammar,
                                   dialog_type=turn.dialog_type, active_domain=turn.domain,
                                   act=delexicalize(act), prompting=prompting)
            target = delexicalize_utterance(turn.utterance, act)
            examples.append(TaskExample(fi, target, "rg", session.session_id, i))
        if "e2e" in tasks:
            fi = format_task_input("e2e", context, ontology, grammar, prompting=prompting)
            examples.append(TaskExample(fi, list(turn.utterance), "e2e", session.session_id, i))
        previous_gold = gold_state
    return examples


def examples_from_sessions(sessions: list[DialogSession], ontology: Ontology, kb: KnowledgeBase,
                           grammar: SequenceGrammar | None = None,
                           tasks: tuple[str, ...] = TASK_NAMES,
                           prompting: bool = True) -> list[TaskExample]:
    out: list[TaskExample] = []
    for session in sessions:
        out += examples_from_session(session, ontology, kb, grammar, tasks, prompting)
    return out


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def _mentions_of(record: PredictionRecord) -> list[Mention]:
    return [Mention(**m) for m in record.predicted.get("mentions", [])]


def score_records(task: str, records: list[PredictionRecord], ontology: Ontology,
                  kb: KnowledgeBase | None = None,
                  final_states: dict[str, DialogState] | None = None,
                  gold_final_states: dict[str, DialogState] | None = None,
                  smooth_bleu: bool = False) -> MetricsReport:
    """Aggregate one task's records into a MetricsReport.

    For RG/E2E success, the per-session final predicted state comes from
    ``final_states`` (a DST rollout) when provided; otherwise the gold final
    state is used and flagged.
    """
    if not records:
        raise M.MetricsError(f"{task}: no records to score")
    counts = {"turns": len(records),
              "sessions": len({r.session_id for r in records}),
              "unparseable": sum(1 for r in records
                                 if r.report.get("unparseable") or r.report.get("dropped", 0) > 0)}
    flags: dict[str, bool] = {}
    values: dict[str, float] = {}
    per_session: dict[str, dict[str, float]] = {}

    if task == "dst":
        preds = [DialogState.from_dict(r.predicted["state"]) for r in records]
        golds = [DialogState.from_dict(r.gold["state"]) for r in records]
        values["joint_acc"] = M.joint_accuracy(preds, golds)
        values["slot_acc"] = M.slot_accuracy(preds, golds, ontology)
        values["type_acc"] = M.type_accuracy([r.predicted["type"] for r in records],
                                             [r.gold["type"] for r in records])
        values["domain_acc"] = M.domain_accuracy([r.predicted["domain"] for r in records],
                                                 [r.gold["domain"] for r in records])
        for sid in sorted({r.session_id for r in records}):
            sub = [r for r in records if r.session_id == sid]
            per_session[sid] = {"joint_acc": M.joint_accuracy(
                [DialogState.from_dict(r.predicted["state"]) for r in sub],
                [DialogState.from_dict(r.gold["state"]) for r in sub])}
    elif task == "dap":
        preds = [DialogAct.from_list(r.predicted["act"]) for r in records]
        golds = [DialogAct.from_list(r.gold["act"]) for r in records]
        values["act_acc"] = M.act_accuracy(preds, golds)
        hyp = [serialize_act(a) for a in preds]
        ref = [serialize_act(a) for a in golds]
        values["bleu1"] = M.bleu_n(hyp, ref, 1, smooth=smooth_bleu)
        values["bleu2"] = M.bleu_n(hyp, ref, 2, smooth=smooth_bleu)
    elif task in ("rg", "e2e"):
        hyp = [r.predicted["response"] for r in records]
        ref = [r.gold["response"] for r in records]
        values["bleu1"] = M.bleu_n(hyp, ref, 1, smooth=smooth_bleu)
        values["bleu2"] = M.bleu_n(hyp, ref, 2, smooth=smooth_bleu)
        values["meteor"] = M.meteor(hyp, ref)
        values["cider"] = M.cider(hyp, ref)
        flags["cider_degenerate"] = M.cider_degenerate(ref)
        values["dist1"] = M.distinct_n(hyp, 1)
        values["dist2"] = M.distinct_n(hyp, 2)
        flags["distinct_empty"] = M.distinct_empty(hyp, 1)
        if kb is None:
            raise M.MetricsError(f"{task}: hallucination scoring needs the knowledge base")
        values["hallu"] = M.hallucination_accuracy([_mentions_of(r) for r in records], kb)
        session_ids = sorted({r.session_id for r in records})
        flags["success_uses_gold_final_state"] = final_states is None
        success_values = []
        for sid in session_ids:
            sub = [r for r in records if r.session_id == sid]
            mentions = [_mentions_of(r) for r in sub]
            if final_states is not None and sid in final_states:
                final = final_states[sid]
            elif gold_final_states is not None and sid in gold_final_states:
                final = gold_final_states[sid]
            else:
                raise M.MetricsError(f"{task}: no final state available for session {sid}")
            suc = M.success_score(mentions, kb, final)
            success_values.append(suc)
            per_session[sid] = {"suc": suc,
                                "hallu": M.hallucination_accuracy(mentions, kb)}
        values["suc"] = sum(success_values) / len(success_values)
    else:
        raise ValueError(f"unknown task {task!r}")

    return MetricsReport(task=task, values=values, counts=counts, flags=flags,
                         per_session=per_session,
                         config={"smooth_bleu": smooth_bleu})
