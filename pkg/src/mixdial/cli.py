"""Command-line entry point: gen-data, train, eval, chat, report.

One RunConfig drives everything; values resolve as flags > config file >
built-in defaults, and the default config path can be set through the
MIXDIAL_CONFIG environment variable.  Every artifact embeds the seed and
the hash of the config that produced it, so provenance is checkable
end-to-end (``mixdial report --check-provenance``).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from .corpus import (
    ConfigError,
    CorpusFormatError,
    GeneratorConfig,
    corpus_fingerprint,
    corpus_stats,
    generate_corpus,
    read_corpus,
    verify_corpus_dir,
    write_corpus,
)
from .corpus.kb import KnowledgeBase
from .linearize import GrammarError, SequenceGrammar, Vocab, serialize_state
from .metrics import MetricsReport, render_table
from .model import (
    DivergenceError,
    ModelConfig,
    ModelConfigError,
    TrainConfig,
    build_model,
    continual_train,
    load_checkpoint,
    save_checkpoint,
    train_stage,
)
from .model.decode import DecodeConfig
from .model.net import SequenceModel
from .schema import DialogState, Ontology
from .tasks import TASK_NAMES, run_task, score_records, write_records
from . import tasks as task_mod

ENV_CONFIG = "MIXDIAL_CONFIG"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


@dataclasses.dataclass
class RunConfig:
    corpus_dir: str = "runs/corpus"
    checkpoint_dir: str = "runs/checkpoints"
    report_dir: str = "runs/reports"
    seed: int = 13
    variant: str = "mt"
    generator: GeneratorConfig = dataclasses.field(default_factory=GeneratorConfig)
    model: dict = dataclasses.field(default_factory=lambda: {
        "width": 64, "layers": 2, "heads": 4, "ffn_width": 256,
        "max_positions": 768, "dropout": 0.0,
    })
    train: dict = dataclasses.field(default_factory=lambda: {
        "prompt": {"learning_rate": 3e-3, "batch_size": 16, "steps": 300,
                   "eval_interval": 50, "warmup_steps": 30},
        "finetune": {"learning_rate": 3e-3, "batch_size": 16, "steps": 300,
                     "eval_interval": 50, "warmup_steps": 30},
    })
    grammar: dict = dataclasses.field(default_factory=lambda: {
        "max_len": 448, "max_target_len": 288,
    })
    eval: dict = dataclasses.field(default_factory=lambda: {
        "dst_mode": "rollout", "knowledge_scope": "session",
        "max_sessions": 0,  # 0 = whole split
    })

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["generator"] = self.generator.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        base = cls()
        merged = base.to_dict()
        _deep_update(merged, data)
        generator = GeneratorConfig.from_dict(merged.pop("generator"))
        return cls(generator=generator, **merged)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def sequence_grammar(self) -> SequenceGrammar:
        return SequenceGrammar(**self.grammar)

    def train_config(self, stage: str, variant: str) -> TrainConfig:
        return TrainConfig(stage=stage, variant=variant, seed=self.seed, **self.train[stage])


def _deep_update(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value


def load_run_config(args: argparse.Namespace) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        config = RunConfig.from_dict(data)
    else:
        config = RunConfig()
    for flag in ("corpus_dir", "checkpoint_dir", "report_dir", "seed", "variant"):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, flag, value)
    return config


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    corpus = generate_corpus(config.generator, seed=config.seed)
    stats = write_corpus(corpus, config.corpus_dir, config.sequence_grammar())
    print(f"corpus written to {config.corpus_dir}")
    print(stats.table())
    for dialog_type, sessions in sorted(corpus.split.external.items()):
        print(f"{'# External ' + dialog_type:24s} {len(sessions)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _load_corpus_assets(config: RunConfig):
    corpus_dir = Path(config.corpus_dir)
    if not corpus_dir.exists():
        raise CorpusFormatError(corpus_dir, 0, "-", "corpus directory missing; run gen-data first")
    ontology = Ontology.load(corpus_dir / "ontology.json")
    vocab = Vocab.load(corpus_dir / "vocab.json")
    kb = KnowledgeBase.load(corpus_dir / "kb.json")
    split = read_corpus(corpus_dir)
    return ontology, vocab, kb, split


def checkpoint_path(config: RunConfig, variant: str) -> Path:
    return Path(config.checkpoint_dir) / f"{variant}.ckpt"


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    variant = config.variant
    prompting = variant == "mt"
    grammar = config.sequence_grammar()
    ontology, vocab, kb, split = _load_corpus_assets(config)
    if not split.train:
        raise CorpusFormatError(config.corpus_dir, 0, "train", "empty training split")

    model_config = ModelConfig(vocab_size=len(vocab), seed=config.seed, **config.model)
    external = {
        name: task_mod.examples_from_sessions(sessions, ontology, kb, grammar,
                                              prompting=prompting)
        for name, sessions in split.external.items() if sessions
    }
    target = task_mod.examples_from_sessions(split.train, ontology, kb, grammar,
                                             prompting=prompting)

    ckpt_path = checkpoint_path(config, variant)
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    stage = args.stage
    logs = []
    if stage == "both":
        model = build_model(model_config)
        logs = continual_train(model, external, target,
                               config.train_config("prompt", variant),
                               config.train_config("finetune", variant),
                               vocab, grammar, mixing=args.mixing)
    elif stage == "prompt":
        model = build_model(model_config)
        pool = [ex for name in sorted(external) for ex in external[name]]
        logs = [train_stage(model, pool, config.train_config("prompt", variant), vocab,
                            grammar, corpus_id="external:" + "+".join(sorted(external)))]
    else:  # finetune
        if ckpt_path.exists():
            model = load_checkpoint(ckpt_path).build()
        else:
            model = build_model(model_config)
        logs = [train_stage(model, target, config.train_config("finetune", variant),
                            vocab, grammar, corpus_id="target:train")]

    provenance = {
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "corpus_fingerprint": corpus_fingerprint(config.corpus_dir),
    }
    save_checkpoint(model, ckpt_path, provenance=provenance)
    log_path = ckpt_path.with_suffix(".losses.json")
    log_path.write_text(json.dumps(
        [{"stage": log.stage, "losses": log.losses} for log in logs], indent=2) + "\n",
        encoding="utf-8")
    for log in logs:
        final = log.losses[-1][1] if log.losses else float("nan")
        print(f"stage {log.stage}: final loss {final:.4f}")
    print(f"checkpoint written to {ckpt_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _final_states_from_dst(records) -> dict[str, DialogState]:
    finals: dict[str, DialogState] = {}
    for record in records:
        finals[record.session_id] = DialogState.from_dict(record.predicted["state"])
    return finals


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    variant = config.variant
    prompting = variant == "mt"
    grammar = config.sequence_grammar()
    ontology, vocab, kb, split = _load_corpus_assets(config)
    ckpt_path = checkpoint_path(config, variant)
    checkpoint = load_checkpoint(ckpt_path)
    if checkpoint.config.vocab_size != len(vocab):
        raise ModelConfigError(
            f"checkpoint vocab size {checkpoint.config.vocab_size} != corpus vocab {len(vocab)}")
    model = checkpoint.build()

    sessions = split.named_splits()[args.split]
    limit = config.eval["max_sessions"]
    if limit:
        sessions = sessions[:limit]
    if not sessions:
        raise CorpusFormatError(config.corpus_dir, 0, args.split, "empty evaluation split")

    requested = list(TASK_NAMES) if args.task == "all" else [args.task]
    decode_cfg = DecodeConfig(max_new_tokens=grammar.max_target_len)
    report_dir = Path(config.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    gold_finals = {s.session_id: s.final_state() for s in sessions}
    records_by_task = {}
    for task in requested:
        records_by_task[task] = run_task(
            task, model, sessions, vocab, ontology, kb, grammar,
            prompting=prompting, decode_cfg=decode_cfg,
            dst_mode=config.eval["dst_mode"])

    predicted_finals = (_final_states_from_dst(records_by_task["dst"])
                        if "dst" in records_by_task else None)
    provenance = {
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "checkpoint": _sha256_file(ckpt_path),
        "corpus_fingerprint": corpus_fingerprint(config.corpus_dir),
    }
    reports: dict[str, MetricsReport] = {}
    for task, records in records_by_task.items():
        record_path = report_dir / f"{variant}_{args.split}_{task}.records.jsonl"
        write_records(records, record_path)
        report = score_records(task, records, ontology, kb,
                               final_states=predicted_finals,
                               gold_final_states=gold_finals)
        reports[task] = report
        payload = report.to_dict()
        payload["provenance"] = provenance
        payload["variant"] = variant
        payload["split"] = args.split
        (report_dir / f"{variant}_{args.split}_{task}.report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    table = render_table(reports, method=variant)
    (report_dir / f"{variant}_{args.split}_summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# chat
# ---------------------------------------------------------------------------


def cmd_chat(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    variant = config.variant
    prompting = variant == "mt"
    grammar = config.sequence_grammar()
    ontology, vocab, kb, _ = _load_corpus_assets(config)
    model = load_checkpoint(checkpoint_path(config, variant)).build()
    decode_cfg = DecodeConfig(max_new_tokens=grammar.max_target_len)

    from .corpus.simulate import DialogSession, Turn
    from .corpus import write_sessions
    from .linearize import format_task_input, parse_dst_target
    from .model.decode import generate

    context: list[tuple[str, list[str]]] = []
    turns: list[Turn] = []
    rolled = DialogState()
    for line in sys.stdin:
        utterance = line.strip().casefold().split()
        if not utterance:
            continue
        context.append(("user", utterance))
        fi = format_task_input("e2e", context, ontology, grammar, prompting=prompting)
        response = generate(model, fi, vocab, decode_cfg)
        context.append(("wizard", response))
        if args.show_state:
            dst_in = format_task_input("dst", context, ontology, grammar,
                                       dialog_type=None, active_domain=None,
                                       state=rolled, prompting=prompting)
            output = generate(model, dst_in, vocab, decode_cfg)
            _, _, rolled, _ = parse_dst_target(output)
            print("state:", " ".join(serialize_state(rolled)))
        print("wizard:", " ".join(response))
        # transcript turns mirror the corpus schema so eval machinery can
        # replay them; the rolled-out state stands in for gold annotation
        turns.append(Turn(speaker="user", utterance=utterance, dialog_type="chitchat",
                          domain="general", delta=[], state=rolled.copy()))
        turns.append(Turn(speaker="wizard", utterance=response, dialog_type="chitchat",
                          domain="general", delta=[], state=rolled.copy(), act=None,
                          grounding=[], factual=True))
    if args.transcript:
        path = Path(args.transcript)
        path.parent.mkdir(parents=True, exist_ok=True)
        session = DialogSession(session_id="chat-0", template_id="chat", turns=turns)
        write_sessions([session], path)
        print(f"transcript written to {path}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    report_dir = Path(config.report_dir)
    reports_by_variant: dict[str, dict[str, MetricsReport]] = {}
    for path in sorted(report_dir.glob("*.report.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        variant = payload.get("variant", "model")
        split = payload.get("split", "?")
        report = MetricsReport(
            task=payload["task"], values=payload["values"], counts=payload["counts"],
            flags=payload.get("flags", {}), per_session=payload.get("per_session", {}),
            config=payload.get("config", {}))
        reports_by_variant.setdefault(f"{variant}:{split}", {})[report.task] = report
    if not reports_by_variant:
        print("no reports found", file=sys.stderr)
        return EXIT_DATA
    for key, reports in sorted(reports_by_variant.items()):
        print(f"== {key} ==")
        print(render_table(reports, method=key.split(":")[0]))

    if args.check_provenance:
        problems = verify_provenance(config)
        if problems:
            for problem in problems:
                print(f"provenance: {problem}", file=sys.stderr)
            return EXIT_DATA
        print("provenance: all chains verified")
    return EXIT_OK


def verify_provenance(config: RunConfig) -> list[str]:
    """Recompute digests along corpus -> checkpoint -> report chains."""
    problems = verify_corpus_dir(config.corpus_dir)
    fingerprint = corpus_fingerprint(config.corpus_dir)
    from .model.checkpoint import read_header
    checkpoints = {}
    for path in sorted(Path(config.checkpoint_dir).glob("*.ckpt")):
        header = read_header(path)
        checkpoints[path.name] = _sha256_file(path)
        recorded = header.get("provenance", {}).get("corpus_fingerprint")
        if recorded and recorded != fingerprint:
            problems.append(f"{path.name}: corpus fingerprint mismatch")
    for path in sorted(Path(config.report_dir).glob("*.report.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        prov = payload.get("provenance", {})
        if prov.get("corpus_fingerprint") and prov["corpus_fingerprint"] != fingerprint:
            problems.append(f"{path.name}: corpus fingerprint mismatch")
        recorded_ckpt = prov.get("checkpoint")
        if recorded_ckpt and recorded_ckpt not in checkpoints.values():
            problems.append(f"{path.name}: checkpoint digest not found among checkpoints")
    return problems


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixdial",
        description="Mixed-type dialog framework: data generation, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"run-config JSON (default: ${ENV_CONFIG})")
        p.add_argument("--corpus-dir", dest="corpus_dir")
        p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
        p.add_argument("--report-dir", dest="report_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=["mt", "no-prompt"])

    p = sub.add_parser("gen-data", help="generate KB, templates and annotated sessions")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run the two-stage training schedule")
    common(p)
    p.add_argument("--stage", choices=["prompt", "finetune", "both"], default="both")
    p.add_argument("--mixing", choices=["shuffled", "sequential"], default="shuffled")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run benchmark tasks and write reports")
    common(p)
    p.add_argument("--task", choices=[*TASK_NAMES, "all"], default="all")
    p.add_argument("--split", choices=["train", "dev", "test"], default="dev")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chat", help="interactive end-to-end REPL on stdin")
    common(p)
    p.add_argument("--show-state", action="store_true")
    p.add_argument("--transcript", help="write the session transcript here on exit")
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("report", help="render stored reports side by side")
    common(p)
    p.add_argument("--check-provenance", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelConfigError, GrammarError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CorpusFormatError):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
