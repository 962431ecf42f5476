"""Unified dialog state and dialog act schema.

Every dialog type shares one state space: a ``general`` domain holding
user-profile slots, and per-domain sections ``booked`` (completed orders),
``semi`` (constraints gathered so far) and ``entities`` (every entity
mentioned, with its recorded attributes and an optional ``_attitude``).
Acts are sets of (domain, intent, slot, value) items.

All operations are pure functions over value-like objects: they never
mutate their inputs, so they are safe for unrestricted concurrent use.
Values are compared after trimming surrounding whitespace and case-folding;
the normalized form is what gets stored.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

GENERAL = "general"
ATTITUDE_SLOT = "_attitude"
ATTITUDES = ("positive", "negative")

# Closed intent inventory for non-general domains.
CORE_INTENTS = ("request", "inform", "recommend", "no-offer")
# Default inventory for the general domain; extensible via the ontology file.
DEFAULT_GENERAL_INTENTS = ("greet", "bye", "thank", "chitchat", "acknowledge")

# Edit kinds understood by apply_delta.
SET_GENERAL = "set_general"
SET_SEMI = "set_semi"
SET_ENTITY_ATTR = "set_entity_attr"
SET_ATTITUDE = "set_attitude"
APPEND_BOOKED = "append_booked"
EDIT_KINDS = (SET_GENERAL, SET_SEMI, SET_ENTITY_ATTR, SET_ATTITUDE, APPEND_BOOKED)


def norm_value(value: str) -> str:
    """Canonical value form: surrounding whitespace trimmed, case-folded."""
    return value.strip().casefold()


class SchemaError(ValueError):
    """Raised for structurally unusable schema inputs (not mere violations)."""


class EditError(SchemaError):
    """An edit in a delta cannot be applied; carries the offending index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"edit {index}: {message}")
        self.index = index


class DiffError(SchemaError):
    """The target state is not reachable from the source state by any delta."""


# ---------------------------------------------------------------------------
# Ontology
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSchema:
    """Slot and intent inventory for one non-general domain."""

    slots: tuple[str, ...]
    informable: tuple[str, ...]
    book_required: tuple[str, ...]
    entity_attrs: tuple[str, ...]
    intents: tuple[str, ...] = CORE_INTENTS


@dataclass(frozen=True)
class Ontology:
    """Domain, slot, intent and attitude inventories for the whole corpus."""

    domains: tuple[str, ...]
    general_slots: tuple[str, ...]
    general_intents: tuple[str, ...]
    schemas: dict[str, DomainSchema]
    attitudes: tuple[str, ...] = ATTITUDES

    def __post_init__(self) -> None:
        if GENERAL not in self.domains:
            raise SchemaError("ontology must contain the 'general' domain")
        missing = [d for d in self.non_general_domains() if d not in self.schemas]
        if missing:
            raise SchemaError(f"domains without a schema: {missing}")

    def non_general_domains(self) -> tuple[str, ...]:
        return tuple(d for d in self.domains if d != GENERAL)

    def has_domain(self, domain: str) -> bool:
        return domain in self.domains

    def slot_inventory(self, domain: str) -> tuple[str, ...]:
        if domain == GENERAL:
            return self.general_slots
        return self.schemas[domain].slots

    def intents_for(self, domain: str) -> tuple[str, ...]:
        if domain == GENERAL:
            return self.general_intents
        return self.schemas[domain].intents

    def validate(self) -> "ValidationReport":
        """Well-formedness: subset relations and the closed attitude set."""
        violations = []
        if tuple(sorted(self.attitudes)) != tuple(sorted(ATTITUDES)):
            violations.append(
                Violation(GENERAL, "attitudes", "attitude value set must be exactly {positive, negative}")
            )
        for domain, ds in self.schemas.items():
            for name, subset in (
                ("informable", ds.informable),
                ("book_required", ds.book_required),
                ("entity_attrs", ds.entity_attrs),
            ):
                extra = [s for s in subset if s not in ds.slots]
                if extra:
                    violations.append(
                        Violation(domain, name, f"slots {extra} missing from the domain slot inventory")
                    )
        return ValidationReport(ok=not violations, violations=violations)

    def to_dict(self) -> dict:
        return {
            "attitudes": list(self.attitudes),
            "general": {"slots": list(self.general_slots), "intents": list(self.general_intents)},
            "domains": {
                d: {
                    "slots": list(s.slots),
                    "informable": list(s.informable),
                    "book_required": list(s.book_required),
                    "entity_attrs": list(s.entity_attrs),
                    "intents": list(s.intents),
                }
                for d, s in self.schemas.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Ontology":
        schemas = {
            name: DomainSchema(
                slots=tuple(spec["slots"]),
                informable=tuple(spec["informable"]),
                book_required=tuple(spec["book_required"]),
                entity_attrs=tuple(spec["entity_attrs"]),
                intents=tuple(spec.get("intents", CORE_INTENTS)),
            )
            for name, spec in data["domains"].items()
        }
        return cls(
            domains=(GENERAL, *schemas.keys()),
            general_slots=tuple(data["general"]["slots"]),
            general_intents=tuple(data["general"].get("intents", DEFAULT_GENERAL_INTENTS)),
            schemas=schemas,
            attitudes=tuple(data.get("attitudes", ATTITUDES)),
        )

    def save(self, path: str | Path) -> None:
        # Key order is meaningful: domain ids are assigned in listing order.
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Ontology":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_ontology() -> Ontology:
    """The ontology shipped with the synthetic corpus generator."""

    def ds(informable: list[str], book: list[str], attrs: list[str]) -> DomainSchema:
        slots = tuple(dict.fromkeys([*informable, *book, *attrs]))
        return DomainSchema(
            slots=slots,
            informable=tuple(informable),
            book_required=tuple(book),
            entity_attrs=tuple(attrs),
        )

    schemas = {
        "hotel": ds(["price", "area", "stars"], ["name", "checkin", "nights"], ["price", "area", "stars"]),
        "attraction": ds(["rating", "area", "fee"], ["name", "date", "tickets"], ["rating", "area", "fee"]),
        "restaurant": ds(["cuisine", "area", "price"], ["name", "time", "people"], ["cuisine", "area", "price"]),
        "food": ds(["taste", "region"], ["name", "amount"], ["taste", "region", "calories"]),
        "movie": ds(["genre", "rating"], ["name", "showtime", "seats"], ["genre", "rating", "year"]),
    }
    return Ontology(
        domains=(GENERAL, *schemas.keys()),
        general_slots=("mood", "name", "occupation"),
        general_intents=DEFAULT_GENERAL_INTENTS,
        schemas=schemas,
    )


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass
class EntityState:
    """Attributes recorded for one mentioned entity; may include _attitude."""

    attributes: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "EntityState":
        return EntityState(dict(self.attributes))


@dataclass
class DomainState:
    booked: list[dict[str, str]] = field(default_factory=list)
    semi: dict[str, str] = field(default_factory=dict)
    entities: dict[str, EntityState] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.booked or self.semi or self.entities)


@dataclass
class DialogState:
    """Cumulative session state: general profile slots plus per-domain sections."""

    general: dict[str, str] = field(default_factory=dict)
    domains: dict[str, DomainState] = field(default_factory=dict)

    def copy(self) -> "DialogState":
        return copy.deepcopy(self)

    def domain(self, name: str) -> DomainState:
        """Read access; returns an empty section for untouched domains."""
        return self.domains.get(name, DomainState())

    def prune(self) -> "DialogState":
        """Drop empty domain sections so equal content implies equal objects."""
        self.domains = {d: s for d, s in self.domains.items() if not s.is_empty()}
        return self

    def to_dict(self) -> dict:
        return {
            "general": dict(self.general),
            "domains": {
                d: {
                    "booked": [dict(o) for o in s.booked],
                    "semi": dict(s.semi),
                    "entities": {n: dict(e.attributes) for n, e in s.entities.items()},
                }
                for d, s in self.domains.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DialogState":
        state = cls(
            general={k: norm_value(v) for k, v in data.get("general", {}).items()},
            domains={
                d: DomainState(
                    booked=[{k: norm_value(v) for k, v in o.items()} for o in s.get("booked", [])],
                    semi={k: norm_value(v) for k, v in s.get("semi", {}).items()},
                    entities={
                        n: EntityState({k: norm_value(v) for k, v in attrs.items()})
                        for n, attrs in s.get("entities", {}).items()
                    },
                )
                for d, s in data.get("domains", {}).items()
            },
        )
        return state.prune()


@dataclass(frozen=True)
class ActItem:
    """One communicative unit: (domain, intent, slot, value).

    slot/value may be empty: slotless intents like greet carry neither, and
    request items carry a slot but no value.
    """

    domain: str
    intent: str
    slot: str = ""
    value: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", norm_value(self.value))

    def key(self) -> tuple[str, str, str, str]:
        return (self.domain, self.intent, self.slot, self.value)


@dataclass(frozen=True)
class DialogAct:
    """A system turn's act: an unordered set of ActItems."""

    items: frozenset[ActItem] = frozenset()

    @classmethod
    def of(cls, *items: ActItem) -> "DialogAct":
        return cls(frozenset(items))

    def sorted_items(self) -> list[ActItem]:
        return sorted(self.items, key=ActItem.key)

    def to_list(self) -> list[list[str]]:
        return [[i.domain, i.intent, i.slot, i.value] for i in self.sorted_items()]

    @classmethod
    def from_list(cls, data: list) -> "DialogAct":
        return cls(frozenset(ActItem(*row) for row in data))


@dataclass(frozen=True)
class Edit:
    """One atomic state change; ``order`` is only used by append_booked.

    An empty value on a set_* edit removes the addressed slot if present.
    """

    kind: str
    domain: str
    slot: str = ""
    value: str = ""
    entity: str = ""
    order: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", norm_value(self.value))
        object.__setattr__(
            self, "order", tuple(sorted((k, norm_value(v)) for k, v in self.order))
        )

    def to_list(self) -> list:
        return [self.kind, self.domain, self.entity, self.slot, self.value, [list(kv) for kv in self.order]]

    @classmethod
    def from_list(cls, row: list) -> "Edit":
        kind, domain, entity, slot, value, order = row
        return cls(kind=kind, domain=domain, entity=entity, slot=slot, value=value,
                   order=tuple((k, v) for k, v in order))


StateDelta = list[Edit]


@dataclass(frozen=True)
class Violation:
    domain: str
    path: str
    rule: str

    def __str__(self) -> str:
        return f"[{self.domain}] {self.path}: {self.rule}"


@dataclass
class ValidationReport:
    ok: bool
    violations: list[Violation] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def validate_state(state: DialogState, ontology: Ontology) -> ValidationReport:
    """Check every state invariant; violations are data, not exceptions."""
    v: list[Violation] = []
    for slot in state.general:
        if slot not in ontology.general_slots:
            v.append(Violation(GENERAL, slot, "slot not in general inventory"))
    for domain, dstate in state.domains.items():
        if domain == GENERAL or not ontology.has_domain(domain):
            v.append(Violation(domain, "", "unknown domain"))
            continue
        schema = ontology.schemas[domain]
        for slot in dstate.semi:
            if slot not in schema.slots:
                v.append(Violation(domain, f"semi//{slot}", "slot not in domain inventory"))
        for name, ent in dstate.entities.items():
            for slot, value in ent.attributes.items():
                if slot == ATTITUDE_SLOT:
                    if value not in ontology.attitudes:
                        v.append(Violation(
                            domain, f"entities/{name}/{slot}",
                            "attitude value not in {positive, negative}"))
                elif slot not in schema.entity_attrs:
                    v.append(Violation(domain, f"entities/{name}/{slot}", "slot not an entity attribute"))
        for idx, order in enumerate(dstate.booked):
            for req in schema.book_required:
                if not order.get(req):
                    v.append(Violation(domain, f"booked/{idx}/{req}", "required booking slot missing or empty"))
            for slot in order:
                if slot not in schema.slots:
                    v.append(Violation(domain, f"booked/{idx}/{slot}", "slot not in domain inventory"))
    return ValidationReport(ok=not v, violations=v)


def _check_edit(edit: Edit, index: int, ontology: Ontology | None) -> None:
    if edit.kind not in EDIT_KINDS:
        raise EditError(index, f"unknown edit kind {edit.kind!r}")
    if edit.kind == SET_GENERAL:
        if edit.domain != GENERAL:
            raise EditError(index, "set_general must address the general domain")
        if ontology and edit.slot not in ontology.general_slots:
            raise EditError(index, f"unknown general slot {edit.slot!r}")
        return
    if edit.domain == GENERAL:
        raise EditError(index, f"{edit.kind} cannot address the general domain")
    if ontology:
        if not ontology.has_domain(edit.domain):
            raise EditError(index, f"unknown domain {edit.domain!r}")
        schema = ontology.schemas[edit.domain]
        if edit.kind == SET_SEMI and edit.slot not in schema.slots:
            raise EditError(index, f"unknown slot {edit.slot!r} for domain {edit.domain!r}")
        if edit.kind == SET_ENTITY_ATTR and edit.slot not in schema.entity_attrs:
            raise EditError(index, f"{edit.slot!r} is not an entity attribute of {edit.domain!r}")
        if edit.kind == SET_ATTITUDE and edit.value and edit.value not in ontology.attitudes:
            raise EditError(index, f"attitude {edit.value!r} not in {set(ontology.attitudes)}")
        if edit.kind == APPEND_BOOKED:
            order = dict(edit.order)
            for req in schema.book_required:
                if not order.get(req):
                    raise EditError(index, f"booked order missing required slot {req!r}")
            for slot in order:
                if slot not in schema.slots:
                    raise EditError(index, f"unknown slot {slot!r} in booked order")
    if edit.kind in (SET_ENTITY_ATTR, SET_ATTITUDE) and not edit.entity:
        raise EditError(index, "entity edits need an entity name")


def apply_delta(state: DialogState, delta: StateDelta, ontology: Ontology | None = None) -> DialogState:
    """Fold a delta into a copy of ``state`` (left to right, last write wins).

    The input state is never modified.  With an ontology, every edit is
    checked first and an EditError identifies the offending index.
    """
    for i, edit in enumerate(delta):
        _check_edit(edit, i, ontology)
    out = state.copy()
    for edit in delta:
        if edit.kind == SET_GENERAL:
            if edit.value:
                out.general[edit.slot] = edit.value
            else:
                out.general.pop(edit.slot, None)
            continue
        dstate = out.domains.setdefault(edit.domain, DomainState())
        if edit.kind == SET_SEMI:
            if edit.value:
                dstate.semi[edit.slot] = edit.value
            else:
                dstate.semi.pop(edit.slot, None)
        elif edit.kind in (SET_ENTITY_ATTR, SET_ATTITUDE):
            slot = ATTITUDE_SLOT if edit.kind == SET_ATTITUDE else edit.slot
            if edit.value:
                ent = dstate.entities.setdefault(edit.entity, EntityState())
                ent.attributes[slot] = edit.value
            elif edit.entity in dstate.entities:
                dstate.entities[edit.entity].attributes.pop(slot, None)
        elif edit.kind == APPEND_BOOKED:
            dstate.booked.append(dict(edit.order))
    return out.prune()


def diff_states(prev: DialogState, curr: DialogState) -> StateDelta:
    """A delta taking ``prev`` to ``curr``: apply_delta(prev, diff) == curr.

    States evolve monotonically within a session, so the reachable targets
    are those where prev's booked orders are a prefix of curr's and no
    mentioned entity disappears or is left attribute-less unless it already
    existed; anything else raises DiffError.
    """
    delta: StateDelta = []
    for slot in sorted(set(prev.general) | set(curr.general)):
        if prev.general.get(slot, "") != curr.general.get(slot, ""):
            delta.append(Edit(SET_GENERAL, GENERAL, slot=slot, value=curr.general.get(slot, "")))
    for domain in sorted(set(prev.domains) | set(curr.domains)):
        p, c = prev.domain(domain), curr.domain(domain)
        for slot in sorted(set(p.semi) | set(c.semi)):
            if p.semi.get(slot, "") != c.semi.get(slot, ""):
                delta.append(Edit(SET_SEMI, domain, slot=slot, value=c.semi.get(slot, "")))
        missing = sorted(set(p.entities) - set(c.entities))
        if missing:
            raise DiffError(f"{domain}: entities {missing} cannot be un-mentioned")
        for name in sorted(c.entities):
            pa = p.entities[name].attributes if name in p.entities else {}
            ca = c.entities[name].attributes
            if not ca and name not in p.entities:
                raise DiffError(f"{domain}/{name}: a new entity needs at least one attribute")
            for slot in sorted(set(pa) | set(ca)):
                if pa.get(slot, "") != ca.get(slot, ""):
                    kind = SET_ATTITUDE if slot == ATTITUDE_SLOT else SET_ENTITY_ATTR
                    delta.append(Edit(kind, domain, slot="" if slot == ATTITUDE_SLOT else slot,
                                      value=ca.get(slot, ""), entity=name))
        if p.booked != c.booked[: len(p.booked)]:
            raise DiffError(f"{domain}: booked orders are append-only")
        for order in c.booked[len(p.booked):]:
            delta.append(Edit(APPEND_BOOKED, domain, order=tuple(order.items())))
    return delta


def _iter_leaves(state: DialogState) -> Iterator[tuple[str, str, str, str, str]]:
    """(domain, section, qualifier, slot, value) for every populated leaf."""
    for slot, value in state.general.items():
        yield (GENERAL, GENERAL, "", slot, value)
    for domain, dstate in state.domains.items():
        for slot, value in dstate.semi.items():
            yield (domain, "semi", "", slot, value)
        for name, ent in dstate.entities.items():
            for slot, value in ent.attributes.items():
                yield (domain, "entities", name, slot, value)
        for idx, order in enumerate(dstate.booked):
            for slot, value in order.items():
                yield (domain, "booked", str(idx), slot, value)


def flatten_state(state: DialogState, ontology: Ontology | None = None) -> set[tuple[str, str, str]]:
    """Canonical (domain, slot-path, value) triplets for every populated leaf.

    The slot-path encodes the section as ``section/qualifier/slot`` with the
    qualifier empty for general/semi leaves, the entity name for entity
    attributes, and the order index for booked slots.
    """
    return {
        (domain, f"{section}/{qualifier}/{slot}", value)
        for domain, section, qualifier, slot, value in _iter_leaves(state)
    }


def validate_act(act: DialogAct, ontology: Ontology) -> ValidationReport:
    """Check act invariants: known domains, closed intent sets, known slots."""
    v: list[Violation] = []
    for item in act.sorted_items():
        path = f"{item.domain}/{item.intent}/{item.slot}"
        if not ontology.has_domain(item.domain):
            v.append(Violation(item.domain, path, "unknown domain"))
            continue
        if item.intent not in ontology.intents_for(item.domain):
            v.append(Violation(item.domain, path, f"unknown intent {item.intent!r}"))
        if item.slot and item.slot not in ontology.slot_inventory(item.domain):
            v.append(Violation(item.domain, path, f"unknown slot {item.slot!r}"))
    return ValidationReport(ok=not v, violations=v)
