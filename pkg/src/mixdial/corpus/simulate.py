"""Rule-based user/wizard simulation of fully annotated dialog sessions.

Two scripted agents walk a template's sub-scenarios and emit alternating
turns.  Every turn carries its dialog type, active domain, the minimal state
delta it caused and the cumulative state after it; wizard turns additionally
carry the gold act, grounding knowledge ids and a factual-correctness flag.
Wizard inform/recommend values are always copied from the knowledge base,
so gold sessions are hallucination-free by construction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..schema import (
    GENERAL,
    ActItem,
    DialogAct,
    DialogState,
    Edit,
    Ontology,
    SET_ATTITUDE,
    SET_ENTITY_ATTR,
    SET_GENERAL,
    SET_SEMI,
    APPEND_BOOKED,
    apply_delta,
    diff_states,
)
from .config import StyleConfig
from .kb import BOOKING_POOLS, MOODS, OCCUPATIONS, VALUE_POOLS, Entity, KnowledgeBase
from .templates import SubScenario, Template


class GenerationError(RuntimeError):
    """A template cannot be realized against the given knowledge base."""


@dataclass
class Turn:
    speaker: str  # user | wizard
    utterance: list[str]
    dialog_type: str
    domain: str
    delta: list[Edit]
    state: DialogState
    act: DialogAct | None = None
    grounding: list[str] = field(default_factory=list)
    factual: bool | None = None


@dataclass
class DialogSession:
    session_id: str
    template_id: str
    turns: list[Turn]
    completed_orders: list[dict] = field(default_factory=list)

    def wizard_turns(self) -> list[int]:
        return [i for i, t in enumerate(self.turns) if t.speaker == "wizard"]

    def dialog_types(self) -> set[str]:
        return {t.dialog_type for t in self.turns}

    def final_state(self) -> DialogState:
        return self.turns[-1].state if self.turns else DialogState()


USER_NAMES = ["alex", "jamie", "kim", "lee", "sam"]

_T = {
    "greet_user": [
        "hello there i am feeling {mood} these days",
        "hi i have been rather {mood} lately you know",
    ],
    "greet_wizard": [
        "hi there nice to meet you how can i help",
        "hello welcome here tell me what you are after",
    ],
    "profile_user": [
        "i work as a {occupation} and it keeps me busy",
        "being a {occupation} takes most of my time honestly",
    ],
    "profile_wizard": [
        "i see being a {occupation} sounds quite demanding indeed",
        "that is interesting a {occupation} must see a lot",
    ],
    "name_user": [
        "by the way you can call me {username}",
        "oh and my name is {username} nice talking",
    ],
    "name_wizard": [
        "nice to meet you {username} how can i assist",
        "good to know {username} i am here to help",
    ],
    "smalltalk_user": [
        "anyway i could use some change in my routine",
        "life has been the same thing every single day",
    ],
    "smalltalk_wizard": [
        "i understand a little novelty never hurts anyone",
        "sure i am happy to help you find something",
    ],
    "decision_user": [
        "i have no real plan for this weekend yet",
        "i cannot decide what to do with my time",
    ],
    "decision_wizard": [
        "maybe you could explore a nice {domain} around here",
        "how about trying some {domain} to lift your spirits",
    ],
    "decision_user2": [
        "that actually sounds like a lovely idea indeed",
        "good point i would enjoy something like that",
    ],
    "decision_wizard2": [
        "great then let us look for a good one",
        "nice we can pick one out together now",
    ],
    "seek_user": [
        "i am looking for a {domain} with {constraints}",
        "could you find me a {domain} with {constraints}",
        "i want a {domain} that offers {constraints}",
    ],
    "seek_nooffer_user": [
        "i am looking for a {domain} with {slot} {value}",
    ],
    "seek_nooffer_wizard": [
        "sorry i could not find any {domain} like that",
        "i am afraid nothing matches that {slot} requirement here",
    ],
    "seek_revise_user": [
        "then {slot} {value} would also be fine for me",
        "no problem {slot} {value} works for me too",
    ],
    "recommend_wizard": [
        "how about {name} it has a {value} {slot}",
        "i would recommend {name} since its {slot} is {value}",
        "you could try {name} known for a {value} {slot}",
    ],
    "reject_user": [
        "i have been there before please find me another",
        "that one does not really appeal to me honestly",
    ],
    "accept_user": [
        "{name} sounds great i think i like it",
        "nice {name} seems exactly right for me thanks",
    ],
    "ack_wizard": [
        "glad you like it do you want more details",
        "great choice just ask if you need anything else",
    ],
    "discuss_user_first": [
        "could you tell me a bit more about {name}",
        "do you know {name} i heard about it recently",
    ],
    "discuss_user_more": [
        "what else should i know about this place then",
        "interesting please share some more details with me",
        "go on i would love to hear more",
    ],
    "discuss_wizard_attr": [
        "sure the {slot} of {name} is {value} actually",
        "well people note that its {slot} is {value}",
    ],
    "book_user": [
        "please book {name} for me right away",
        "i would like to book {name} now please",
    ],
    "book_request_wizard": [
        "sure i just need the {slots} to proceed",
        "happy to help could you give me the {slots}",
    ],
    "book_inform_user": [
        "{fills} please and thank you",
    ],
    "book_done_wizard": [
        "all set your order for {name} is placed",
        "done i have completed the {name} booking for you",
    ],
    "interrupt_user": [
        "by the way i am feeling {mood} right now",
        "oh wait i just turned rather {mood} somehow",
    ],
    "interrupt_wizard": [
        "good to know now let us get back on track",
        "noted friend so where were we just now",
    ],
    "farewell_user": [
        "that is all for today thank you and goodbye",
        "thanks a lot you helped me so much goodbye",
    ],
    "farewell_wizard": [
        "you are welcome have a wonderful day ahead",
        "my pleasure come back any time goodbye now",
    ],
}


# Alternate wordings for the stand-in external corpora: single-type corpora
# collected elsewhere would not share the target corpus's phrasing.
_T_EXTERNAL = {
    "greet_user": [
        "good day to you i have been {mood} recently",
        "greetings my week has turned out rather {mood}",
    ],
    "greet_wizard": [
        "welcome in what may i do for you",
        "greetings traveler state your wish and i shall assist",
    ],
    "profile_user": [
        "my job as a {occupation} fills every hour",
        "a {occupation} by trade and always short on rest",
    ],
    "profile_wizard": [
        "ah the {occupation} life certainly demands a lot",
        "understood a {occupation} deserves a proper break then",
    ],
    "name_user": [
        "folks around here call me {username} by the way",
        "the name is {username} pleased to make your acquaintance",
    ],
    "name_wizard": [
        "a pleasure {username} consider me at your service",
        "duly noted {username} let us carry on then",
    ],
    "smalltalk_user": [
        "every week repeats itself and i grow restless",
        "routine has swallowed my days whole lately friend",
    ],
    "smalltalk_wizard": [
        "variety is the cure i can offer plenty",
        "then let us shake that routine up properly",
    ],
    "decision_user": [
        "no schedule binds me this weekend and ideas escape me",
        "my calendar sits empty and i lack inspiration",
    ],
    "decision_wizard": [
        "perhaps a fine {domain} would restore your spirits",
        "consider treating yourself to some {domain} this time",
    ],
    "decision_user2": [
        "a splendid thought i shall entertain it gladly",
        "yes that suggestion suits my mood rather well",
    ],
    "decision_wizard2": [
        "excellent we shall hunt down a worthy one",
        "very well the search begins at once friend",
    ],
    "seek_user": [
        "kindly locate a {domain} offering {constraints} for me",
        "i require a {domain} featuring {constraints} if possible",
    ],
    "seek_nooffer_user": [
        "kindly locate a {domain} offering {slot} {value} for me",
    ],
    "seek_nooffer_wizard": [
        "alas no {domain} in my records matches that",
        "my registry lists no such {slot} i fear",
    ],
    "seek_revise_user": [
        "very well settle for {slot} {value} instead then",
        "in that case {slot} {value} shall do nicely",
    ],
    "recommend_wizard": [
        "may i present {name} boasting a {value} {slot}",
        "consider {name} whose {slot} stands at {value}",
    ],
    "reject_user": [
        "alas i know that one too well already",
        "that choice leaves me cold show me another",
    ],
    "accept_user": [
        "{name} strikes me as splendid i approve wholeheartedly",
        "very well {name} wins my favor this time",
    ],
    "ack_wizard": [
        "a fine pick say the word for more",
        "splendid choice friend further details await your request",
    ],
    "discuss_user_first": [
        "enlighten me further regarding {name} if you would",
        "pray tell what should one know of {name}",
    ],
    "discuss_user_more": [
        "continue i am eager for every last detail",
        "and what else does your registry say there",
    ],
    "discuss_wizard_attr": [
        "records show the {slot} of {name} as {value}",
        "per my registry its {slot} stands at {value}",
    ],
    "book_user": [
        "arrange a booking at {name} on my behalf",
        "secure {name} for me without delay if possible",
    ],
    "book_request_wizard": [
        "certainly provide the {slots} and i shall proceed",
        "gladly i must first note down the {slots}",
    ],
    "book_inform_user": [
        "{fills} and do make it official",
    ],
    "book_done_wizard": [
        "consider it settled {name} awaits your arrival now",
        "the {name} reservation stands confirmed and recorded friend",
    ],
    "interrupt_user": [
        "pardon the detour my mood just went {mood}",
        "one moment i suddenly feel rather {mood} now",
    ],
    "interrupt_wizard": [
        "noted well then back to the matter at hand",
        "so be it now returning to our business",
    ],
    "farewell_user": [
        "my thanks for everything farewell until next time",
        "that settles all i needed farewell kind helper",
    ],
    "farewell_wizard": [
        "farewell friend may the road treat you kindly",
        "until next time it was a true pleasure",
    ],
}


class _Sim:
    def __init__(self, template: Template, kb: KnowledgeBase, style: StyleConfig,
                 seed: int, ontology: Ontology):
        self.template = template
        self.kb = kb
        self.style = style
        self.table = _T_EXTERNAL if style.phrasing == "external" else _T
        self.rng = random.Random(seed)
        self.ontology = ontology
        self.state = DialogState()
        self.turns: list[Turn] = []
        self.completed_orders: list[dict] = []
        self.informed: dict[str, set[str]] = {}  # entity -> slots already told
        self.used_snippets: dict[str, set[int]] = {}
        self.used_qa: dict[str, set[int]] = {}

    # -- low-level emission ---------------------------------------------

    def say(self, text: str, **kw) -> list[str]:
        return text.format(**kw).split()

    def pick(self, key: str, **kw) -> list[str]:
        return self.say(self.rng.choice(self.table[key]), **kw)

    def emit(self, speaker: str, utterance: list[str], dialog_type: str, domain: str,
             edits: list[Edit], act: DialogAct | None = None,
             grounding: list[str] | None = None) -> None:
        new_state = apply_delta(self.state, edits, self.ontology)
        delta = diff_states(self.state, new_state)
        self.state = new_state
        self.turns.append(Turn(
            speaker=speaker,
            utterance=utterance,
            dialog_type=dialog_type,
            domain=domain,
            delta=delta,
            state=new_state.copy(),
            act=act,
            grounding=list(grounding or []),
            factual=True if speaker == "wizard" else None,
        ))

    def user(self, utterance: list[str], dialog_type: str, domain: str,
             edits: list[Edit] | None = None) -> None:
        self.emit("user", utterance, dialog_type, domain, edits or [])

    def wizard(self, utterance: list[str], dialog_type: str, domain: str,
               act: DialogAct, edits: list[Edit] | None = None,
               grounding: list[str] | None = None) -> None:
        self.emit("wizard", utterance, dialog_type, domain, edits or [], act, grounding)

    def rounds(self, span: tuple[int, int]) -> int:
        return self.rng.randint(span[0], span[1])

    # -- entity helpers ---------------------------------------------------

    def entity(self, step: SubScenario) -> Entity:
        try:
            return self.kb.get(step.domain, step.entity)
        except KeyError as exc:
            raise GenerationError(str(exc)) from None

    def inform_edit(self, ent: Entity, slot: str) -> Edit:
        return Edit(SET_ENTITY_ATTR, ent.domain, slot=slot,
                    value=ent.attributes[slot], entity=ent.name)

    def mark_informed(self, ent: Entity, slot: str) -> None:
        self.informed.setdefault(ent.name, set()).add(slot)

    def fresh_slot(self, ent: Entity) -> str | None:
        seen = self.informed.get(ent.name, set())
        for slot in sorted(ent.attributes):
            if slot not in seen:
                return slot
        return None

    # -- sub-scenario scripts ---------------------------------------------

    def run(self) -> DialogSession:
        next_domains = [s.domain for s in self.template.steps if s.goal == "seek"]
        for idx, step in enumerate(self.template.steps):
            handler = getattr(self, f"_do_{step.goal}")
            if step.goal == "decision":
                handler(step, next_domains[0] if next_domains else "attraction")
            else:
                handler(step)
            if step.goal == "seek" and next_domains:
                next_domains.pop(0)
        return DialogSession(
            session_id="",
            template_id=self.template.template_id,
            turns=self.turns,
            completed_orders=self.completed_orders,
        )

    def _do_greeting(self, step: SubScenario) -> None:
        mood = self.rng.choice(MOODS)
        self.user(self.pick("greet_user", mood=mood), "chitchat", GENERAL,
                  [Edit(SET_GENERAL, GENERAL, slot="mood", value=mood)])
        self.wizard(self.pick("greet_wizard"), "chitchat", GENERAL,
                    DialogAct.of(ActItem(GENERAL, "greet")))
        extra = self.rounds(self.style.greeting_rounds) - 1
        fillers = ["profile", "name", "smalltalk"]
        self.rng.shuffle(fillers)
        for filler in fillers[:extra]:
            if filler == "profile":
                occ = self.rng.choice(OCCUPATIONS)
                self.user(self.pick("profile_user", occupation=occ), "chitchat", GENERAL,
                          [Edit(SET_GENERAL, GENERAL, slot="occupation", value=occ)])
                self.wizard(self.pick("profile_wizard", occupation=occ), "chitchat", GENERAL,
                            DialogAct.of(ActItem(GENERAL, "chitchat")))
            elif filler == "name":
                username = self.rng.choice(USER_NAMES)
                self.user(self.pick("name_user", username=username), "chitchat", GENERAL,
                          [Edit(SET_GENERAL, GENERAL, slot="name", value=username)])
                self.wizard(self.pick("name_wizard", username=username), "chitchat", GENERAL,
                            DialogAct.of(ActItem(GENERAL, "chitchat")))
            else:
                self.user(self.pick("smalltalk_user"), "chitchat", GENERAL)
                self.wizard(self.pick("smalltalk_wizard"), "chitchat", GENERAL,
                            DialogAct.of(ActItem(GENERAL, "chitchat")))

    def _do_decision(self, step: SubScenario, upcoming_domain: str) -> None:
        self.user(self.pick("decision_user"), "chitchat", GENERAL)
        self.wizard(self.pick("decision_wizard", domain=upcoming_domain), "chitchat", GENERAL,
                    DialogAct.of(ActItem(GENERAL, "chitchat")))
        if self.rounds(self.style.decision_rounds) > 1:
            self.user(self.pick("decision_user2"), "chitchat", GENERAL)
            self.wizard(self.pick("decision_wizard2"), "chitchat", GENERAL,
                        DialogAct.of(ActItem(GENERAL, "chitchat")))

    def _unused_value(self, domain: str, slot: str) -> str | None:
        used = {e.attributes.get(slot) for e in self.kb.entities[domain].values()}
        free = [v for v in VALUE_POOLS.get(slot, []) if v not in used]
        return self.rng.choice(free) if free else None

    def _do_seek(self, step: SubScenario) -> None:
        ent = self.entity(step)
        domain = step.domain
        constraints = dict(step.constraints)
        first_slot = sorted(constraints)[0]

        off_value = (self._unused_value(domain, first_slot)
                     if self.rng.random() < self.style.no_offer_prob else None)
        if off_value is not None:
            self.user(self.pick("seek_nooffer_user", domain=domain, slot=first_slot, value=off_value),
                      "task", domain, [Edit(SET_SEMI, domain, slot=first_slot, value=off_value)])
            self.wizard(self.pick("seek_nooffer_wizard", domain=domain, slot=first_slot),
                        "task", domain, DialogAct.of(ActItem(domain, "no-offer")))
            self.user(self.pick("seek_revise_user", slot=first_slot, value=constraints[first_slot]),
                      "task", domain, [Edit(SET_SEMI, domain, slot=first_slot, value=constraints[first_slot])])
        else:
            rendered = " and ".join(f"{slot} {value}" for slot, value in sorted(constraints.items()))
            self.user(self.pick("seek_user", domain=domain, constraints=rendered), "task", domain,
                      [Edit(SET_SEMI, domain, slot=s, value=v) for s, v in sorted(constraints.items())])


        decoys = [e for e in self.kb.find(domain, constraints) if e.name != ent.name]
        if self.rng.random() < self.style.reject_prob and decoys:
            decoy = decoys[0]
            slot = first_slot
            self.wizard(self.pick("recommend_wizard", name=decoy.name, slot=slot, value=decoy.attributes[slot]),
                        "task", domain,
                        DialogAct.of(ActItem(domain, "recommend", "name", decoy.name),
                                     ActItem(domain, "inform", slot, decoy.attributes[slot])),
                        [self.inform_edit(decoy, slot)],
                        [f"{domain}/{decoy.name}/attr/{slot}"])
            self.mark_informed(decoy, slot)
            self.user(self.pick("reject_user"), "task", domain,
                      [Edit(SET_ATTITUDE, domain, value="negative", entity=decoy.name)])
        slot = sorted(constraints)[-1]
        self.wizard(self.pick("recommend_wizard", name=ent.name, slot=slot, value=ent.attributes[slot]),
                    "task", domain,
                    DialogAct.of(ActItem(domain, "recommend", "name", ent.name),
                                 ActItem(domain, "inform", slot, ent.attributes[slot])),
                    [self.inform_edit(ent, slot)],
                    [f"{domain}/{ent.name}/attr/{slot}"])
        self.mark_informed(ent, slot)
        self.user(self.pick("accept_user", name=ent.name), "task", domain,
                  [Edit(SET_ATTITUDE, domain, value="positive", entity=ent.name)])
        self.wizard(self.pick("ack_wizard"), "task", domain,
                    DialogAct.of(ActItem(GENERAL, "acknowledge")))

    def _do_discuss(self, step: SubScenario) -> None:
        ent = self.entity(step)
        domain = step.domain
        for round_idx in range(self.rounds(self.style.discuss_rounds)):
            key = "discuss_user_first" if round_idx == 0 else "discuss_user_more"
            self.user(self.pick(key, name=ent.name), "knowledge", domain)
            used = self.used_snippets.setdefault(ent.name, set())
            snippet_idx = next((i for i, s in enumerate(ent.snippets) if i not in used), None)
            if snippet_idx is not None:
                used.add(snippet_idx)
                snippet = ent.snippets[snippet_idx]
                self.wizard(list(snippet.tokens), "knowledge", domain,
                            DialogAct.of(ActItem(domain, "inform", snippet.slot, snippet.value)),
                            [self.inform_edit(ent, snippet.slot)],
                            [f"{domain}/{ent.name}/snippet/{snippet_idx}"])
                self.mark_informed(ent, snippet.slot)
                continue
            slot = self.fresh_slot(ent) or sorted(ent.attributes)[0]
            self.wizard(self.pick("discuss_wizard_attr", name=ent.name, slot=slot, value=ent.attributes[slot]),
                        "knowledge", domain,
                        DialogAct.of(ActItem(domain, "inform", slot, ent.attributes[slot])),
                        [self.inform_edit(ent, slot)],
                        [f"{domain}/{ent.name}/attr/{slot}"])
            self.mark_informed(ent, slot)

    def _do_ask_fact(self, step: SubScenario) -> None:
        ent = self.entity(step)
        domain = step.domain
        for _ in range(self.rounds(self.style.ask_rounds)):
            used = self.used_qa.setdefault(ent.name, set())
            qa_idx = next((i for i, _ in enumerate(ent.qa_pairs) if i not in used), None)
            if qa_idx is None:
                break
            used.add(qa_idx)
            pair = ent.qa_pairs[qa_idx]
            self.user(list(pair.question), "qa", domain)
            self.wizard(list(pair.answer), "qa", domain,
                        DialogAct.of(ActItem(domain, "inform", pair.slot, pair.value)),
                        [self.inform_edit(ent, pair.slot)],
                        [f"{domain}/{ent.name}/qa/{qa_idx}"])
            self.mark_informed(ent, pair.slot)

    def _do_book(self, step: SubScenario) -> None:
        ent = self.entity(step)
        domain = step.domain
        required = [s for s in self.ontology.schemas[domain].book_required if s != "name"]
        self.user(self.pick("book_user", name=ent.name), "task", domain)
        slot_list = " and the ".join(required)
        self.wizard(self.pick("book_request_wizard", slots=slot_list), "task", domain,
                    DialogAct.of(*(ActItem(domain, "request", slot) for slot in required)))
        fills = {slot: self.rng.choice(BOOKING_POOLS[slot]) for slot in required}
        rendered = " and ".join(f"the {slot} is {value}" for slot, value in fills.items())
        self.user(self.pick("book_inform_user", fills=rendered), "task", domain,
                  [Edit(SET_SEMI, domain, slot=s, value=v) for s, v in fills.items()])
        order = {"name": ent.name, **fills}
        self.wizard(self.pick("book_done_wizard", name=ent.name), "task", domain,
                    DialogAct.of(ActItem(domain, "inform", "name", ent.name)),
                    [Edit(APPEND_BOOKED, domain, order=tuple(order.items()))])
        self.completed_orders.append({"domain": domain, "order": dict(sorted(order.items()))})

    def _do_interrupt(self, step: SubScenario) -> None:
        mood = self.rng.choice(MOODS)
        self.user(self.pick("interrupt_user", mood=mood), "chitchat", GENERAL,
                  [Edit(SET_GENERAL, GENERAL, slot="mood", value=mood)])
        self.wizard(self.pick("interrupt_wizard"), "chitchat", GENERAL,
                    DialogAct.of(ActItem(GENERAL, "chitchat")))

    def _do_farewell(self, step: SubScenario) -> None:
        self.user(self.pick("farewell_user"), "chitchat", GENERAL)
        self.wizard(self.pick("farewell_wizard"), "chitchat", GENERAL,
                    DialogAct.of(ActItem(GENERAL, "bye")))


def simulate_dialog(template: Template, kb: KnowledgeBase, style: StyleConfig,
                    seed: int, ontology: Ontology) -> DialogSession:
    """Simulate one fully annotated session; deterministic per seed."""
    return _Sim(template, kb, style, seed, ontology).run()
