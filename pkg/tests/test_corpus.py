import json
import random

import pytest

from mixdial.corpus import (
    ConfigError,
    CorpusFormatError,
    GeneratorConfig,
    KnowledgeBase,
    build_kb,
    build_vocab,
    check_template,
    corpus_stats,
    default_rules,
    enumerate_templates,
    generate_corpus,
    read_corpus,
    read_sessions,
    retrieve_coarse_knowledge,
    simulate_dialog,
    single_type_rules,
    verify_corpus_dir,
    write_corpus,
    write_sessions,
)
from mixdial.corpus.templates import SubScenario, Template
from mixdial.linearize import serialize_state
from mixdial.schema import DialogState, default_ontology


class TestBuildKb:
    def test_counts_and_invariants(self, small_config, ontology):
        kb = build_kb(small_config, seed=13, ontology=ontology)
        assert kb.size() == sum(small_config.entity_counts.values())
        for domain, ents in kb.entities.items():
            for name, ent in ents.items():
                assert ent.name == name and ent.domain == domain
                for snippet in ent.snippets:
                    assert snippet.value == ent.attributes[snippet.slot]
                    assert set(name.split()) <= set(snippet.tokens)
                for pair in ent.qa_pairs:
                    assert pair.value == ent.attributes[pair.slot]
                    assert pair.value in " ".join(pair.answer)

    def test_deterministic_bytes(self, small_config, ontology, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        build_kb(small_config, seed=13, ontology=ontology).save(a)
        build_kb(small_config, seed=13, ontology=ontology).save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_content(self, small_config, ontology):
        a = build_kb(small_config, seed=13, ontology=ontology)
        b = build_kb(small_config, seed=14, ontology=ontology)
        assert a.to_dict() != b.to_dict()

    def test_default_proportions_follow_scaled_counts(self):
        counts = GeneratorConfig().entity_counts
        assert counts == {"hotel": 23, "attraction": 9, "restaurant": 3, "food": 40, "movie": 5}

    def test_zero_entity_count_rejected(self, small_config):
        bad = GeneratorConfig(entity_counts={"hotel": 0})
        with pytest.raises(ConfigError):
            build_kb(bad, seed=1)


class TestTemplates:
    def test_empty_kb_gives_no_templates(self, small_config):
        kb = KnowledgeBase(entities={})
        assert enumerate_templates(kb, default_rules(), seed=1, n=10, config=small_config) == []

    def test_all_outputs_pass_checker(self, small_corpus):
        rules = default_rules()
        for template in small_corpus.templates["target"]:
            assert check_template(template, rules)

    def test_table_pattern_among_outputs(self, ontology):
        config = GeneratorConfig()
        kb = build_kb(config, seed=13, ontology=ontology)
        templates = enumerate_templates(kb, default_rules(), seed=13, n=1000, config=config)
        pattern = [("chitchat", "greeting"), ("chitchat", "decision"), ("task", "seek"),
                   ("knowledge", "discuss"), ("task", "book")]
        hits = [
            t for t in templates
            if [(s.dialog_type, s.goal) for s in t.steps] == pattern
            and t.steps[2].domain == "attraction"
        ]
        assert hits, "greeting->decision->seek(attraction)->knowledge->book not found"

    def test_unintroduced_entity_rejected(self):
        t = Template("x", 0, (
            SubScenario("chitchat", "greeting"),
            SubScenario("knowledge", "discuss", "attraction", "ghost entity"),
        ))
        rules = default_rules()
        assert not check_template(t, rules)

    def test_single_step_rejected(self):
        t = Template("x", 0, (SubScenario("chitchat", "greeting"),))
        assert not check_template(t, default_rules())

    def test_deterministic_per_seed(self, small_config, ontology):
        kb = build_kb(small_config, seed=5, ontology=ontology)
        a = enumerate_templates(kb, default_rules(), seed=9, n=30, config=small_config)
        b = enumerate_templates(kb, default_rules(), seed=9, n=30, config=small_config)
        assert [t.signature() for t in a] == [t.signature() for t in b]


class TestSimulate:
    def test_turn_types_follow_template_order(self, small_corpus, ontology, small_config):
        kb = small_corpus.kb
        template = Template("two-step", 0, (
            SubScenario("chitchat", "greeting"),
            SubScenario("task", "seek", "hotel", kb.names("hotel")[0],
                        (("price", kb.get("hotel", kb.names("hotel")[0]).attributes["price"]),)),
        ))
        session = simulate_dialog(template, kb, small_config.style, seed=3, ontology=ontology)
        types = [t.dialog_type for t in session.turns]
        switch = types.index("task")
        assert all(t == "chitchat" for t in types[:switch])
        assert all(t == "task" for t in types[switch:])

    def test_speakers_alternate_starting_with_user(self, small_corpus):
        for session in small_corpus.split.target_sessions():
            for i, turn in enumerate(session.turns):
                assert turn.speaker == ("user" if i % 2 == 0 else "wizard")

    def test_deterministic_per_seed(self, small_corpus, small_config, ontology):
        template = small_corpus.templates["target"][0]
        a = simulate_dialog(template, small_corpus.kb, small_config.style, 99, ontology)
        b = simulate_dialog(template, small_corpus.kb, small_config.style, 99, ontology)
        assert a == b

    def test_wizard_informs_match_kb(self, small_corpus):
        """Gold sessions are hallucination-free: informed values come from the KB."""
        kb = small_corpus.kb
        for session in small_corpus.split.target_sessions():
            for turn in session.turns:
                if turn.act is None:
                    continue
                for item in turn.act.items:
                    if item.intent in ("inform", "recommend") and item.slot and item.domain != "general":
                        if item.slot == "name":
                            assert item.value in kb.entities[item.domain]
                        else:
                            values = {e.attributes.get(item.slot)
                                      for e in kb.entities[item.domain].values()}
                            assert item.value in values

    def test_factual_flags_all_true(self, small_corpus):
        for session in small_corpus.split.target_sessions():
            for turn in session.turns:
                if turn.speaker == "wizard":
                    assert turn.factual is True

    def test_completed_orders_match_final_state(self, small_corpus):
        for session in small_corpus.split.target_sessions():
            booked = []
            final = session.final_state()
            for domain in sorted(final.domains):
                for order in final.domain(domain).booked:
                    booked.append({"domain": domain, "order": dict(sorted(order.items()))})
            recorded = sorted(session.completed_orders, key=lambda o: (o["domain"], sorted(o["order"].items())))
            assert sorted(booked, key=lambda o: (o["domain"], sorted(o["order"].items()))) == recorded


class TestRetrieve:
    def test_empty_state_empty_list(self, small_corpus):
        assert retrieve_coarse_knowledge(DialogState(), small_corpus.kb) == []

    def test_item_count_for_one_entity(self, small_corpus, ontology):
        kb = small_corpus.kb
        domain = "hotel"
        name = kb.names(domain)[0]
        ent = kb.get(domain, name)
        state = DialogState()
        state.domains[domain] = state.domain(domain)
        state.domains[domain].entities[name] = type(
            "E", (), {"attributes": {"price": ent.attributes["price"]}})()
        items = retrieve_coarse_knowledge(state, kb)
        assert len(items) == len(ent.attributes) + len(ent.snippets)

    def test_matches_bruteforce_filter_on_200_random_states(self, small_corpus, ontology):
        rng = random.Random(77)
        kb = small_corpus.kb
        sessions = small_corpus.split.target_sessions()
        for _ in range(200):
            session = rng.choice(sessions)
            state = rng.choice(session.turns).state
            items = retrieve_coarse_knowledge(state, kb)
            mentioned = {(d, n) for d, ds in state.domains.items() for n in ds.entities}
            expected_ids = set()
            for domain, name in mentioned:
                if domain in kb.entities and name in kb.entities[domain]:
                    ent = kb.get(domain, name)
                    expected_ids |= {f"{domain}/{name}/attr/{s}" for s in ent.attributes}
                    expected_ids |= {f"{domain}/{name}/snippet/{i}" for i in range(len(ent.snippets))}
            assert {i.item_id for i in items} == expected_ids
            names = [i.entity for i in items]
            assert names == sorted(names)


class TestCorpusIO:
    def test_roundtrip(self, small_corpus, tmp_path):
        write_corpus(small_corpus, tmp_path)
        loaded = read_corpus(tmp_path)
        assert loaded.train == small_corpus.split.train
        assert loaded.dev == small_corpus.split.dev
        assert loaded.test == small_corpus.split.test
        assert loaded.external == small_corpus.split.external

    def test_gold_states_canonical_bytes_preserved(self, small_corpus, tmp_path):
        write_corpus(small_corpus, tmp_path)
        loaded = read_corpus(tmp_path)
        for orig, read in zip(small_corpus.split.train, loaded.train):
            for t_orig, t_read in zip(orig.turns, read.turns):
                assert serialize_state(t_orig.state) == serialize_state(t_read.state)

    def test_truncated_line_names_location(self, tmp_path, small_corpus):
        path = tmp_path / "bad.jsonl"
        write_sessions(small_corpus.split.dev, path)
        lines = path.read_text().splitlines()
        lines[2] = lines[2][: len(lines[2]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusFormatError) as err:
            read_sessions(path)
        assert err.value.line == 3

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        row = {"session_id": "s", "template_id": "t", "turns": [{"speaker": "user"}]}
        path.write_text(json.dumps(row) + "\n")
        with pytest.raises(CorpusFormatError) as err:
            read_sessions(path)
        assert err.value.field == "utterance"

    def test_session_ids_disjoint_across_splits(self, small_corpus):
        ids = [s.session_id for s in small_corpus.split.target_sessions()]
        for sessions in small_corpus.split.external.values():
            ids += [s.session_id for s in sessions]
        assert len(ids) == len(set(ids))

    def test_write_twice_byte_identical(self, small_corpus, tmp_path):
        d1, d2 = tmp_path / "one", tmp_path / "two"
        write_corpus(small_corpus, d1)
        write_corpus(small_corpus, d2)
        for p1 in sorted(d1.iterdir()):
            assert p1.read_bytes() == (d2 / p1.name).read_bytes()

    def test_provenance_check(self, small_corpus, tmp_path):
        write_corpus(small_corpus, tmp_path)
        assert verify_corpus_dir(tmp_path) == []
        (tmp_path / "kb.json").write_text("{}")
        assert any("kb.json" in p for p in verify_corpus_dir(tmp_path))


class TestCorpusShape:
    def test_every_target_session_has_two_dialog_types(self, small_corpus):
        for session in small_corpus.split.target_sessions():
            assert len(session.dialog_types()) >= 2

    def test_externals_single_type(self, small_corpus):
        for dialog_type, sessions in small_corpus.split.external.items():
            for session in sessions:
                assert session.dialog_types() == {dialog_type}

    def test_default_shape_statistics(self):
        corpus = generate_corpus(GeneratorConfig(), seed=13)
        stats = corpus_stats(corpus.split.target_sessions())
        assert 33 * 0.8 <= stats.avg_utt_per_dialog <= 33 * 1.2
        assert 10 * 0.8 <= stats.avg_tokens_per_utt <= 10 * 1.2
        assert all(stats.sessions_with_type[t] > 0 for t in ("chitchat", "qa", "knowledge", "task"))

    def test_generation_deterministic_end_to_end(self, small_config, tmp_path):
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        write_corpus(generate_corpus(small_config, seed=21), d1)
        write_corpus(generate_corpus(small_config, seed=21), d2)
        for p1 in sorted(d1.iterdir()):
            assert p1.read_bytes() == (d2 / p1.name).read_bytes()

    def test_vocab_covers_all_serialized_forms(self, small_corpus):
        from mixdial.linearize import serialize_act, serialize_dst_target
        vocab = build_vocab(small_corpus)
        known = set(vocab.tokens)
        for session in small_corpus.split.target_sessions()[:10]:
            for turn in session.turns:
                assert set(turn.utterance) <= known
                assert set(serialize_state(turn.state)) <= known
                if turn.act is not None:
                    assert set(serialize_act(turn.act)) <= known
                assert set(serialize_dst_target(turn.dialog_type, turn.domain, turn.state)) <= known
