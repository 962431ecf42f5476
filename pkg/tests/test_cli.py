import json
import sys

import pytest

from mixdial import cli
from mixdial.corpus import read_sessions
from mixdial.model.checkpoint import read_header


TINY = {
    "generator": {
        "entity_counts": {"hotel": 4, "attraction": 4, "restaurant": 3, "food": 4, "movie": 3},
        "train_sessions": 10, "dev_sessions": 3, "test_sessions": 3, "external_sessions": 3,
    },
    "train": {
        "prompt": {"steps": 4, "batch_size": 4, "eval_interval": 2},
        "finetune": {"steps": 4, "batch_size": 4, "eval_interval": 2},
    },
    "eval": {"max_sessions": 2},
    "seed": 5,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = dict(TINY)
    config["corpus_dir"] = str(root / "corpus")
    config["checkpoint_dir"] = str(root / "ckpt")
    config["report_dir"] = str(root / "reports")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config))
    assert cli.main(["gen-data", "--config", str(config_path)]) == 0
    assert cli.main(["train", "--config", str(config_path), "--stage", "both"]) == 0
    return root, config_path


class TestGenData:
    def test_deterministic_across_runs(self, tmp_path):
        config = dict(TINY)
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        for out in (out1, out2):
            config["corpus_dir"] = str(out)
            path = tmp_path / "cfg.json"
            path.write_text(json.dumps(config))
            assert cli.main(["gen-data", "--config", str(path)]) == 0
        for p1 in sorted(out1.iterdir()):
            assert p1.read_bytes() == (out2 / p1.name).read_bytes(), p1.name

    def test_prints_table2_style_stats(self, workdir, capsys):
        root, config_path = workdir
        assert cli.main(["gen-data", "--config", str(config_path)]) == 0
        out = capsys.readouterr().out
        for needle in ("# Dialogs", "Avg. utt. per dialog", "Avg. tokens per utt.",
                       "# Chitchat", "# Qa", "# Task"):
            assert needle in out

    def test_full_validation_sweep(self, workdir, ontology):
        from mixdial.schema import DialogState, apply_delta, validate_act, validate_state
        root, _ = workdir
        for split in ("train", "dev", "test"):
            for session in read_sessions(root / "corpus" / f"{split}.jsonl"):
                state = DialogState()
                for turn in session.turns:
                    assert validate_state(turn.state, ontology).ok
                    state = apply_delta(state, turn.delta, ontology)
                    assert state == turn.state
                    if turn.act is not None:
                        assert validate_act(turn.act, ontology).ok


class TestTrain:
    def test_history_has_both_stages(self, workdir):
        root, _ = workdir
        header = read_header(root / "ckpt" / "mt.ckpt")
        assert [h["stage"] for h in header["stage_history"]] == ["prompt", "finetune"]

    def test_loss_log_written(self, workdir):
        root, _ = workdir
        log = json.loads((root / "ckpt" / "mt.losses.json").read_text())
        assert [entry["stage"] for entry in log] == ["prompt", "finetune"]
        assert all(entry["losses"] for entry in log)

    def test_no_prompt_variant_trains(self, workdir):
        root, config_path = workdir
        assert cli.main(["train", "--config", str(config_path),
                         "--variant", "no-prompt", "--stage", "both"]) == 0
        header = read_header(root / "ckpt" / "no-prompt.ckpt")
        assert all(h["variant"] == "no-prompt" for h in header["stage_history"])

    def test_missing_corpus_is_data_error(self, tmp_path):
        config = dict(TINY)
        config["corpus_dir"] = str(tmp_path / "nope")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_DATA


class TestEval:
    def test_task_all_emits_four_reports(self, workdir):
        root, config_path = workdir
        assert cli.main(["eval", "--config", str(config_path), "--task", "all",
                         "--split", "dev"]) == 0
        for task in ("dst", "dap", "rg", "e2e"):
            assert (root / "reports" / f"mt_dev_{task}.report.json").exists()
            assert (root / "reports" / f"mt_dev_{task}.records.jsonl").exists()

    def test_rerun_reproduces_reports_byte_identically(self, workdir):
        root, config_path = workdir
        target = root / "reports" / "mt_dev_dst.report.json"
        first = target.read_bytes()
        assert cli.main(["eval", "--config", str(config_path), "--task", "dst",
                         "--split", "dev"]) == 0
        assert target.read_bytes() == first

    def test_summary_columns_match_benchmark_headers(self, workdir):
        root, config_path = workdir
        assert cli.main(["eval", "--config", str(config_path), "--task", "all",
                         "--split", "dev"]) == 0
        text = (root / "reports" / "mt_dev_summary.txt").read_text()
        for needle in ("Type Acc.", "Domain Acc.", "Slot Acc.", "Joint Acc.",
                       "Act Acc.", "BLEU-1/2", "METEOR", "CIDER", "Dist-1/2",
                       "Hallu.", "Suc."):
            assert needle in text

    def test_missing_checkpoint_is_data_error(self, workdir, tmp_path):
        root, config_path = workdir
        config = json.loads(config_path.read_text())
        config["checkpoint_dir"] = str(tmp_path / "empty")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        assert cli.main(["eval", "--config", str(path)]) == cli.EXIT_DATA


class TestChat:
    def test_empty_stdin_clean_exit_empty_transcript(self, workdir, tmp_path, monkeypatch):
        root, config_path = workdir
        transcript = tmp_path / "t.jsonl"
        monkeypatch.setattr(sys, "stdin", open(os_devnull(), "r"))
        assert cli.main(["chat", "--config", str(config_path),
                         "--transcript", str(transcript)]) == 0
        assert read_sessions(transcript) != []  # one (empty) session record
        assert read_sessions(transcript)[0].turns == []

    def test_transcript_replays_through_scoring(self, workdir, tmp_path, monkeypatch):
        import io
        root, config_path = workdir
        transcript = tmp_path / "chat.jsonl"
        monkeypatch.setattr(sys, "stdin", io.StringIO("hello there\nfind me a hotel\n"))
        assert cli.main(["chat", "--config", str(config_path), "--show-state",
                         "--transcript", str(transcript)]) == 0
        sessions = read_sessions(transcript)
        assert len(sessions) == 1 and len(sessions[0].turns) == 4

        from mixdial.corpus.kb import KnowledgeBase
        from mixdial.linearize import Vocab
        from mixdial.model import load_checkpoint
        from mixdial.schema import Ontology
        from mixdial.tasks import run_e2e, score_records
        corpus = root / "corpus"
        ontology = Ontology.load(corpus / "ontology.json")
        vocab = Vocab.load(corpus / "vocab.json")
        kb = KnowledgeBase.load(corpus / "kb.json")
        model = load_checkpoint(root / "ckpt" / "mt.ckpt").build()
        records = run_e2e(model, sessions[0], vocab, ontology, kb)
        report = score_records("e2e", records, ontology, kb,
                               gold_final_states={"chat-0": sessions[0].final_state()})
        assert set(report.values) >= {"bleu1", "bleu2", "meteor", "cider", "hallu", "suc"}

    def test_show_state_prints_parseable_state(self, workdir, monkeypatch, capsys):
        import io
        root, config_path = workdir
        monkeypatch.setattr(sys, "stdin", io.StringIO("hello\n"))
        assert cli.main(["chat", "--config", str(config_path), "--show-state"]) == 0
        out = capsys.readouterr().out
        state_lines = [l for l in out.splitlines() if l.startswith("state:")]
        assert state_lines
        from mixdial.linearize import parse_state
        tokens = state_lines[0].removeprefix("state:").split()
        parse_state(tokens)  # must not raise


def os_devnull():
    import os
    return os.devnull


class TestReport:
    def test_renders_and_verifies_provenance(self, workdir, capsys):
        root, config_path = workdir
        assert cli.main(["report", "--config", str(config_path),
                         "--check-provenance"]) == 0
        out = capsys.readouterr().out
        assert "provenance: all chains verified" in out
        assert "Joint Acc." in out

    def test_tampered_corpus_fails_provenance(self, workdir, tmp_path, capsys):
        import shutil
        root, config_path = workdir
        copy = tmp_path / "run"
        shutil.copytree(root, copy)
        (copy / "corpus" / "kb.json").write_text("{}")
        config = json.loads((copy / "config.json").read_text())
        config["corpus_dir"] = str(copy / "corpus")
        config["checkpoint_dir"] = str(copy / "ckpt")
        config["report_dir"] = str(copy / "reports")
        path = copy / "cfg2.json"
        path.write_text(json.dumps(config))
        assert cli.main(["report", "--config", str(path),
                         "--check-provenance"]) == cli.EXIT_DATA


class TestConfigHandling:
    def test_flag_overrides_file(self, workdir, tmp_path):
        root, config_path = workdir
        loaded = cli.load_run_config(
            cli.build_parser().parse_args(
                ["gen-data", "--config", str(config_path), "--seed", "99"]))
        assert loaded.seed == 99
        assert loaded.generator.train_sessions == 10  # from file

    def test_env_var_supplies_default_config(self, workdir, monkeypatch):
        root, config_path = workdir
        monkeypatch.setenv(cli.ENV_CONFIG, str(config_path))
        loaded = cli.load_run_config(cli.build_parser().parse_args(["gen-data"]))
        assert loaded.seed == TINY["seed"]

    def test_defaults_without_any_config(self, monkeypatch):
        monkeypatch.delenv(cli.ENV_CONFIG, raising=False)
        loaded = cli.load_run_config(cli.build_parser().parse_args(["gen-data"]))
        assert loaded.generator.train_sessions == 350
        assert loaded.variant == "mt"

    def test_invalid_generator_config_is_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"generator": {"entity_counts": {"hotel": 0}},
                                    "corpus_dir": str(tmp_path / "c")}))
        assert cli.main(["gen-data", "--config", str(path)]) == cli.EXIT_CONFIG
