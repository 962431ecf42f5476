import random

import pytest

from helpers import random_act, random_state
from mixdial import linearize as lin
from mixdial.schema import ActItem, DialogAct, DialogState, Edit, SET_SEMI, apply_delta


class TestPromptPrefix:
    def test_knowledge_marker(self):
        assert lin.prompt_prefix("knowledge")[0] == "[knowledge]"

    def test_task_markers(self):
        assert lin.prompt_prefix("task") == ["[domain]", "[slot]", "[value]"]

    def test_qa_markers(self):
        assert lin.prompt_prefix("qa") == ["[question]", "[answer]"]

    def test_chat_marker_single_token(self):
        assert lin.prompt_prefix("chitchat") == ["[chat]"]

    def test_unknown_type_errors(self):
        with pytest.raises(lin.GrammarError):
            lin.prompt_prefix("debate")

    def test_none_maps_to_unknown_marker(self):
        assert lin.prompt_prefix(None) == [lin.UNKNOWN]


class TestStateSerialization:
    def test_empty_state(self):
        tokens = lin.serialize_state(DialogState())
        assert tokens == [lin.STATE_OPEN, lin.STATE_CLOSE]
        state, report = lin.parse_state(tokens)
        assert state == DialogState() and report.clean()

    def test_single_triplet(self, ontology):
        state = apply_delta(DialogState(),
                            [Edit(SET_SEMI, "attraction", slot="rating", value="high")], ontology)
        tokens = lin.serialize_state(state)
        assert tokens == [lin.STATE_OPEN, "attraction", ".", "semi", ".", "rating", "=",
                          "high", ";", lin.STATE_CLOSE]

    def test_roundtrip_1000_random_states(self, ontology):
        rng = random.Random(7)
        for _ in range(1000):
            state = random_state(ontology, rng)
            parsed, report = lin.parse_state(lin.serialize_state(state))
            assert report.clean()
            assert parsed == state

    def test_canonical_form_is_equality_stable(self, ontology):
        delta = [Edit(SET_SEMI, "hotel", slot="price", value="cheap"),
                 Edit(SET_SEMI, "hotel", slot="area", value="north")]
        a = apply_delta(DialogState(), delta, ontology)
        b = apply_delta(DialogState(), list(reversed(delta)), ontology)
        assert a == b
        assert lin.serialize_state(a) == lin.serialize_state(b)

    def test_garbage_dropped_and_counted(self):
        tokens = [lin.STATE_OPEN, "hotel", ".", "semi", ".", "price", "=", "cheap", ";",
                  "broken", "segment", "no", "assign", ";", lin.STATE_CLOSE]
        state, report = lin.parse_state(tokens)
        assert report.dropped == 1
        assert state.domains["hotel"].semi["price"] == "cheap"

    def test_parse_never_raises_on_noise(self):
        rng = random.Random(11)
        alphabet = ["[state]", "[/state]", ".", ";", "=", "hotel", "semi", "x", "1"]
        for _ in range(300):
            tokens = [rng.choice(alphabet) for _ in range(rng.randint(0, 25))]
            lin.parse_state(tokens)


class TestActSerialization:
    def test_empty_act(self):
        tokens = lin.serialize_act(DialogAct())
        assert tokens == [lin.ACT_OPEN, lin.ACT_CLOSE]
        act, report = lin.parse_act(tokens)
        assert act == DialogAct() and report.clean()

    def test_single_item(self):
        act = DialogAct.of(ActItem("attraction", "recommend", "name", "fragrant hills"))
        tokens = lin.serialize_act(act)
        assert tokens == [lin.ACT_OPEN, "attraction", "recommend", "name", "=",
                          "fragrant", "hills", ";", lin.ACT_CLOSE]

    def test_slotless_and_valueless_items(self):
        act = DialogAct.of(ActItem("general", "greet"),
                           ActItem("hotel", "request", "price"))
        parsed, report = lin.parse_act(lin.serialize_act(act))
        assert report.clean() and parsed == act

    def test_roundtrip_1000_random_acts(self, ontology):
        rng = random.Random(13)
        for _ in range(1000):
            act = random_act(ontology, rng)
            parsed, report = lin.parse_act(lin.serialize_act(act))
            assert report.clean()
            assert parsed == act


class TestDstTarget:
    def test_header_roundtrip(self, ontology):
        rng = random.Random(3)
        state = random_state(ontology, rng)
        tokens = lin.serialize_dst_target("task", "hotel", state)
        t, d, parsed, report = lin.parse_dst_target(tokens)
        assert (t, d) == ("task", "hotel")
        assert parsed == state and report.clean()

    def test_missing_header_flagged(self, ontology):
        tokens = lin.serialize_state(DialogState())
        t, d, _, report = lin.parse_dst_target(tokens)
        assert t is None and d is None and report.header_missing


class TestDelexicalization:
    def test_placeholder_roundtrip(self):
        act = DialogAct.of(ActItem("attraction", "inform", "name", "fragrant hills"))
        delex = lin.delexicalize(act)
        assert list(delex.items)[0].value == "[value_attraction_name]"
        tokens, unmatched = lin.relexicalize(["visit", "[value_attraction_name]", "today"], act)
        assert tokens == ["visit", "fragrant", "hills", "today"] and unmatched == 0

    def test_no_placeholders_unchanged(self):
        act = DialogAct.of(ActItem("hotel", "inform", "price", "cheap"))
        tokens, unmatched = lin.relexicalize(["no", "slots", "here"], act)
        assert tokens == ["no", "slots", "here"] and unmatched == 0

    def test_uncovered_placeholder_counted(self):
        tokens, unmatched = lin.relexicalize(["[value_hotel_price]"], DialogAct())
        assert tokens == ["[value_hotel_price]"] and unmatched == 1

    def test_same_slot_values_fill_in_act_order(self):
        act = DialogAct.of(ActItem("movie", "inform", "genre", "comedy"),
                           ActItem("movie", "recommend", "genre", "drama"))
        ordered = [i.value for i in act.sorted_items()]
        tokens, _ = lin.relexicalize(["[value_movie_genre]", "or", "[value_movie_genre]"], act)
        assert tokens == [ordered[0], "or", ordered[1]]

    def test_delex_utterance_inverse_on_generated_responses(self, ontology, small_corpus):
        checked = 0
        for session in small_corpus.split.target_sessions():
            for turn in session.turns:
                if turn.act is None:
                    continue
                delexed = lin.delexicalize_utterance(turn.utterance, turn.act)
                relexed, unmatched = lin.relexicalize(delexed, turn.act)
                assert unmatched == 0
                assert relexed == turn.utterance
                checked += 1
        assert checked > 100


class TestFormatTaskInput:
    def _context(self):
        return [("user", ["hello", "there"]), ("wizard", ["hi", "friend"]),
                ("user", ["find", "me", "a", "hotel"])]

    def test_dst_layout(self, ontology):
        fi = lin.format_task_input("dst", [("user", ["hello"])], ontology,
                                   dialog_type="task", active_domain="hotel",
                                   state=DialogState())
        assert fi.tokens[:3] == ["[domain]", "[slot]", "[value]"]
        assert lin.STATE_OPEN in fi.tokens and lin.USER in fi.tokens
        assert fi.tokens[-1] == "hello"

    def test_e2e_has_no_extras_and_unknown_ids(self, ontology):
        fi = lin.format_task_input("e2e", self._context(), ontology,
                                   dialog_type="task", active_domain="hotel")
        assert lin.STATE_OPEN not in fi.tokens
        assert lin.ACT_OPEN not in fi.tokens
        assert lin.KB_OPEN not in fi.tokens
        assert fi.tokens[0] == lin.UNKNOWN
        assert set(fi.type_ids) == {lin.UNKNOWN_ID}
        assert set(fi.domain_ids) == {lin.UNKNOWN_ID}
        assert set(fi.task_ids) == {lin.TASK_IDS["e2e"]}

    def test_parallel_lengths_on_1000_random_inputs(self, ontology):
        rng = random.Random(29)
        for _ in range(1000):
            task = rng.choice(lin.TASKS)
            context = [("user" if i % 2 == 0 else "wizard",
                        ["tok"] * rng.randint(1, 12)) for i in range(rng.randint(1, 8))]
            fi = lin.format_task_input(
                task, context, ontology,
                dialog_type=rng.choice(lin.DIALOG_TYPES),
                active_domain=rng.choice(ontology.domains),
                state=random_state(ontology, rng),
                knowledge=[["fact", "one"], ["fact", "two"]],
                act=random_act(ontology, rng),
                prompting=rng.random() < 0.5,
            )
            assert len(fi.tokens) == len(fi.type_ids) == len(fi.task_ids) == len(fi.domain_ids)
            assert len(fi.tokens) <= lin.SequenceGrammar().max_len

    def test_truncation_drops_oldest_turns_only(self, ontology):
        grammar = lin.SequenceGrammar(max_len=18)
        context = [("user", [f"u{i}" for i in range(6)]), ("wizard", [f"w{i}" for i in range(6)]),
                   ("user", ["newest", "turn", "here"])]
        fi = lin.format_task_input("dst", context, ontology, grammar=grammar,
                                   dialog_type="task", active_domain="hotel",
                                   state=DialogState())
        assert "newest" in fi.tokens
        assert "u0" not in fi.tokens
        assert lin.STATE_OPEN in fi.tokens  # extras survive truncation

    def test_overlong_extras_error(self, ontology):
        grammar = lin.SequenceGrammar(max_len=4)
        with pytest.raises(lin.GrammarError):
            lin.format_task_input("dap", self._context(), ontology, grammar=grammar,
                                  dialog_type="task", active_domain="hotel",
                                  state=DialogState(), knowledge=[["a"] * 30])

    def test_no_prompt_variant_strips_prefix(self, ontology):
        fi = lin.format_task_input("dst", self._context(), ontology,
                                   dialog_type="task", active_domain="hotel",
                                   state=DialogState(), prompting=False)
        assert fi.tokens[0] == lin.STATE_OPEN
        assert set(fi.type_ids) == {lin.UNKNOWN_ID}
        assert set(fi.task_ids) == {lin.UNKNOWN_ID}


class TestVocab:
    def test_build_rejects_collisions(self):
        with pytest.raises(lin.GrammarError):
            lin.Vocab.build([lin.PAD, lin.EOS], {"word", lin.PAD})

    def test_encode_decode(self):
        vocab = lin.Vocab.build([lin.PAD, lin.EOS, lin.UNKNOWN], {"b", "a"})
        ids = vocab.encode(["a", "b", "zzz"])
        assert vocab.decode(ids) == ["a", "b", lin.UNKNOWN]

    def test_save_load_stable(self, tmp_path, small_corpus):
        from mixdial.corpus import build_vocab
        vocab = build_vocab(small_corpus)
        path = tmp_path / "vocab.json"
        vocab.save(path)
        assert lin.Vocab.load(path).tokens == vocab.tokens
