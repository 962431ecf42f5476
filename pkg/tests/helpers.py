"""Shared randomized-object builders for property-style tests."""

from __future__ import annotations

import random

from mixdial.schema import (
    APPEND_BOOKED,
    ATTITUDE_SLOT,
    GENERAL,
    SET_ATTITUDE,
    SET_ENTITY_ATTR,
    SET_GENERAL,
    SET_SEMI,
    ActItem,
    DialogAct,
    DialogState,
    Edit,
    Ontology,
    apply_delta,
)

_WORDS = ["miravel", "tosano", "golden", "palace", "lotus", "harbor", "kiri", "anor",
          "sunny", "garden", "velu", "zenqu"]
_VALUES = ["cheap", "expensive", "north", "south", "high", "low", "five", "free",
           "sweet", "comedy", "monday", "noon", "duo", "small", "golden palace",
           "sunny lotus", "2018"]


def rand_name(rng: random.Random) -> str:
    if rng.random() < 0.3:
        return f"{rng.choice(_WORDS)} {rng.choice(_WORDS)}"
    return rng.choice(_WORDS) + rng.choice(["", "a", "o", "ix"])


def rand_value(rng: random.Random) -> str:
    return rng.choice(_VALUES)


def random_state(ontology: Ontology, rng: random.Random) -> DialogState:
    """A random ontology-valid state; mentioned entities carry >= 1 attribute."""
    edits: list[Edit] = []
    for slot in ontology.general_slots:
        if rng.random() < 0.4:
            edits.append(Edit(SET_GENERAL, GENERAL, slot=slot, value=rand_value(rng)))
    for domain in ontology.non_general_domains():
        if rng.random() < 0.5:
            continue
        schema = ontology.schemas[domain]
        for slot in schema.slots:
            if rng.random() < 0.25:
                edits.append(Edit(SET_SEMI, domain, slot=slot, value=rand_value(rng)))
        for _ in range(rng.randint(0, 2)):
            name = rand_name(rng)
            attrs = [s for s in schema.entity_attrs if rng.random() < 0.5] or [schema.entity_attrs[0]]
            for slot in attrs:
                edits.append(Edit(SET_ENTITY_ATTR, domain, slot=slot, value=rand_value(rng), entity=name))
            if rng.random() < 0.5:
                edits.append(Edit(SET_ATTITUDE, domain, value=rng.choice(["positive", "negative"]), entity=name))
        for _ in range(rng.randint(0, 1)):
            order = {slot: rand_value(rng) for slot in schema.book_required}
            if rng.random() < 0.4:
                extra = [s for s in schema.slots if s not in order]
                if extra:
                    order[rng.choice(extra)] = rand_value(rng)
            edits.append(Edit(APPEND_BOOKED, domain, order=tuple(order.items())))
    return apply_delta(DialogState(), edits, ontology)


def evolve_state(state: DialogState, ontology: Ontology, rng: random.Random) -> DialogState:
    """A reachable successor: growth, overwrites and removals of leaves."""
    edits: list[Edit] = []
    for slot, value in list(state.general.items()):
        roll = rng.random()
        if roll < 0.15:
            edits.append(Edit(SET_GENERAL, GENERAL, slot=slot, value=""))  # removal
        elif roll < 0.35:
            edits.append(Edit(SET_GENERAL, GENERAL, slot=slot, value=rand_value(rng)))
    for domain in ontology.non_general_domains():
        dstate = state.domain(domain)
        schema = ontology.schemas[domain]
        for slot in list(dstate.semi):
            roll = rng.random()
            if roll < 0.15:
                edits.append(Edit(SET_SEMI, domain, slot=slot, value=""))
            elif roll < 0.35:
                edits.append(Edit(SET_SEMI, domain, slot=slot, value=rand_value(rng)))
        for name, ent in dstate.entities.items():
            for slot in list(ent.attributes):
                if slot != ATTITUDE_SLOT and rng.random() < 0.2:
                    edits.append(Edit(SET_ENTITY_ATTR, domain, slot=slot, value=rand_value(rng), entity=name))
        if rng.random() < 0.3:
            name = rand_name(rng)
            edits.append(Edit(SET_ENTITY_ATTR, domain, slot=schema.entity_attrs[0],
                              value=rand_value(rng), entity=name))
        if rng.random() < 0.2:
            order = {slot: rand_value(rng) for slot in schema.book_required}
            edits.append(Edit(APPEND_BOOKED, domain, order=tuple(order.items())))
        if rng.random() < 0.3 and rng.random() < 0.5:
            edits.append(Edit(SET_SEMI, domain, slot=schema.slots[0], value=rand_value(rng)))
    return apply_delta(state, edits, ontology)


def random_act(ontology: Ontology, rng: random.Random) -> DialogAct:
    items = set()
    for _ in range(rng.randint(0, 4)):
        domain = rng.choice(ontology.domains)
        intent = rng.choice(ontology.intents_for(domain))
        if domain == GENERAL:
            items.add(ActItem(domain, intent))
            continue
        schema = ontology.schemas[domain]
        if intent == "request":
            items.add(ActItem(domain, intent, rng.choice(schema.slots)))
        elif intent == "no-offer":
            items.add(ActItem(domain, intent))
        else:
            items.add(ActItem(domain, intent, rng.choice(schema.slots), rand_value(rng)))
    return DialogAct(frozenset(items))
