"""Seeded synthetic knowledge base: entities, attributes, snippets, QA pairs."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..schema import Ontology, default_ontology
from .config import ConfigError, GeneratorConfig

# Attribute value pools.  Pools are pairwise disjoint across slots so that a
# value string found in a generated response maps back to one slot, and they
# never overlap the user-side booking value pools below.
VALUE_POOLS: dict[str, list[str]] = {
    "price": ["cheap", "moderate", "expensive", "luxury"],
    "area": ["north", "south", "east", "west", "downtown"],
    "stars": ["two", "three", "four", "five"],
    "rating": ["low", "medium", "high", "top"],
    "fee": ["free", "ten", "twenty", "fifty"],
    "hours": ["morning", "daytime", "evening", "allday"],
    "cuisine": ["sichuan", "cantonese", "italian", "seafood", "hotpot", "bakery"],
    "taste": ["sweet", "spicy", "salty", "sour", "savory"],
    "region": ["northern", "southern", "coastal", "highland"],
    "calories": ["150", "200", "300", "450"],
    "genre": ["comedy", "drama", "action", "romance", "scifi", "documentary"],
    "year": ["1995", "2003", "2010", "2018", "2021"],
}

# Booking slots are filled by the user, never stored on entities.
BOOKING_POOLS: dict[str, list[str]] = {
    "checkin": ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"],
    "date": ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"],
    "nights": ["single", "double", "triple"],
    "time": ["noon", "dusk", "dawn", "midnight"],
    "people": ["solo", "duo", "trio", "quartet"],
    "tickets": ["solo", "duo", "trio", "quartet"],
    "seats": ["solo", "duo", "trio", "quartet"],
    "showtime": ["matinee", "premiere", "lateshow"],
    "amount": ["small", "large", "jumbo"],
}

MOODS = ["happy", "bored", "anxious", "tired", "excited"]
OCCUPATIONS = ["teacher", "engineer", "doctor", "artist", "chef"]

_NAME_SYLLABLES = ["mi", "ra", "vel", "to", "sa", "no", "lu", "ki", "an", "dor",
                   "be", "la", "zen", "qu", "or", "ta", "ven", "su", "ri", "mo"]
_NAME_ADJECTIVES = ["golden", "silver", "sunny", "royal", "grand", "lucky", "jade", "amber"]
_NAME_NOUNS = ["palace", "garden", "tower", "harbor", "lotus", "panda", "dragon", "lantern"]

_SNIPPET_FORMS = [
    "{name} is well known for its {slot} of {value}",
    "many visitors say the {slot} at {name} is {value}",
    "{name} stands out because its {slot} is {value}",
    "people often mention that {name} has a {value} {slot}",
]
_QA_QUESTION_FORMS = [
    "what is the {slot} of {name}",
    "could you tell me the {slot} of {name}",
]
_QA_ANSWER_FORMS = [
    "the {slot} of {name} is {value}",
    "as far as i know its {slot} is {value}",
]


def child_seed(master: int, *tags: str | int) -> int:
    """Stable derived seed so independent pieces can be generated in parallel."""
    key = f"{master}/" + "/".join(str(t) for t in tags)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


@dataclass
class Snippet:
    slot: str
    value: str
    tokens: list[str]


@dataclass
class QAPair:
    slot: str
    value: str
    question: list[str]
    answer: list[str]


@dataclass
class Entity:
    name: str
    domain: str
    attributes: dict[str, str]
    snippets: list[Snippet] = field(default_factory=list)
    qa_pairs: list[QAPair] = field(default_factory=list)


@dataclass
class KnowledgeBase:
    entities: dict[str, dict[str, Entity]]  # domain -> name -> entity

    def get(self, domain: str, name: str) -> Entity:
        try:
            return self.entities[domain][name]
        except KeyError:
            raise KeyError(f"no entity {name!r} in domain {domain!r}") from None

    def domains(self) -> list[str]:
        return sorted(self.entities)

    def names(self, domain: str) -> list[str]:
        return sorted(self.entities.get(domain, {}))

    def find(self, domain: str, constraints: dict[str, str]) -> list[Entity]:
        """Entities whose attributes satisfy every constraint, name-sorted."""
        out = []
        for name in self.names(domain):
            ent = self.entities[domain][name]
            if all(ent.attributes.get(slot) == value for slot, value in constraints.items()):
                out.append(ent)
        return out

    def size(self) -> int:
        return sum(len(d) for d in self.entities.values())

    def to_dict(self) -> dict:
        return {
            domain: {
                name: {
                    "attributes": ent.attributes,
                    "snippets": [{"slot": s.slot, "value": s.value, "tokens": s.tokens} for s in ent.snippets],
                    "qa_pairs": [
                        {"slot": q.slot, "value": q.value, "question": q.question, "answer": q.answer}
                        for q in ent.qa_pairs
                    ],
                }
                for name, ent in sorted(ents.items())
            }
            for domain, ents in sorted(self.entities.items())
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeBase":
        entities: dict[str, dict[str, Entity]] = {}
        for domain, ents in data.items():
            entities[domain] = {}
            for name, spec in ents.items():
                entities[domain][name] = Entity(
                    name=name,
                    domain=domain,
                    attributes=dict(spec["attributes"]),
                    snippets=[Snippet(s["slot"], s["value"], list(s["tokens"])) for s in spec["snippets"]],
                    qa_pairs=[
                        QAPair(q["slot"], q["value"], list(q["question"]), list(q["answer"]))
                        for q in spec["qa_pairs"]
                    ],
                )
        return cls(entities=entities)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=0, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _coin_name(rng: random.Random, taken: set[str]) -> str:
    for _ in range(1000):
        if rng.random() < 0.5:
            name = "".join(rng.choice(_NAME_SYLLABLES) for _ in range(rng.randint(2, 3)))
        else:
            name = f"{rng.choice(_NAME_ADJECTIVES)} {rng.choice(_NAME_NOUNS)}"
        if name not in taken:
            taken.add(name)
            return name
    raise ConfigError("name space exhausted; lower the entity counts")


def build_kb(config: GeneratorConfig, seed: int, ontology: Ontology | None = None) -> KnowledgeBase:
    """Deterministically synthesize a knowledge base for the configured domains."""
    config.validate()
    ontology = ontology or default_ontology()
    for domain in config.entity_counts:
        if not ontology.has_domain(domain):
            raise ConfigError(f"domain {domain!r} not in the ontology")
    taken_names: set[str] = set()
    entities: dict[str, dict[str, Entity]] = {}
    for domain in sorted(config.entity_counts):
        rng = random.Random(child_seed(seed, "kb", domain))
        schema = ontology.schemas[domain]
        entities[domain] = {}
        for _ in range(config.entity_counts[domain]):
            name = _coin_name(rng, taken_names)
            attributes: dict[str, str] = {}
            for slot in schema.entity_attrs:
                if slot not in VALUE_POOLS:
                    raise ConfigError(f"no value pool for slot {slot!r}")
                attributes[slot] = rng.choice(VALUE_POOLS[slot])
            snippet_slots = rng.sample(list(attributes), k=min(2, len(attributes)))
            snippets = [
                Snippet(slot, attributes[slot],
                        rng.choice(_SNIPPET_FORMS).format(name=name, slot=slot, value=attributes[slot]).split())
                for slot in snippet_slots
            ]
            qa_slots = rng.sample(list(attributes), k=min(2, len(attributes)))
            qa_pairs = [
                QAPair(slot, attributes[slot],
                       rng.choice(_QA_QUESTION_FORMS).format(name=name, slot=slot).split(),
                       rng.choice(_QA_ANSWER_FORMS).format(name=name, slot=slot, value=attributes[slot]).split())
                for slot in qa_slots
            ]
            entities[domain][name] = Entity(name, domain, attributes, snippets, qa_pairs)
    return KnowledgeBase(entities=entities)
