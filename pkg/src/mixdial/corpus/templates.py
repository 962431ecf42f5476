"""Dialog template enumeration over a declarative transition-rule set.

A template is an ordered list of sub-scenarios, each a (dialog type, goal,
topic) record.  Candidate sequences are sampled from the rule graph and kept
only when the standalone coherence predicate ``check_template`` accepts
them, so every emitted template is guaranteed simulatable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..schema import Ontology, default_ontology
from .config import GeneratorConfig
from .kb import KnowledgeBase, child_seed


@dataclass(frozen=True)
class SubScenario:
    """One step of a template; the structured stand-in for a prose brief."""

    dialog_type: str  # chitchat | qa | knowledge | task
    goal: str         # greeting|decision|interrupt|farewell|seek|book|discuss|ask_fact
    domain: str = ""
    entity: str = ""
    constraints: tuple[tuple[str, str], ...] = ()

    def key(self) -> str:
        return f"{self.dialog_type}:{self.goal}"


@dataclass(frozen=True)
class Template:
    template_id: str
    seed: int
    steps: tuple[SubScenario, ...]

    def signature(self) -> tuple:
        return tuple((s.dialog_type, s.goal, s.domain, s.entity, s.constraints) for s in self.steps)

    def dialog_types(self) -> set[str]:
        return {s.dialog_type for s in self.steps}


@dataclass(frozen=True)
class TransitionRules:
    """Which sub-scenario follows which, plus coherence requirements."""

    allowed: frozenset[tuple[str, str]]
    starts: frozenset[str]
    ends: frozenset[str]
    min_steps: int = 2
    min_distinct_types: int = 2
    require_introduction: bool = True
    max_steps: int = 12


def default_rules(qa_rate: float = 0.3, interruption_rate: float = 0.15) -> TransitionRules:
    """Rules for the mixed-type target corpus.

    The rates only bias sampling; pair admissibility is what check_template
    enforces.  Sampling weights live in _WALK_WEIGHTS below.
    """
    pairs = {
        ("chitchat:greeting", "chitchat:decision"),
        ("chitchat:greeting", "task:seek"),
        ("chitchat:decision", "task:seek"),
        ("task:seek", "knowledge:discuss"),
        ("task:seek", "qa:ask_fact"),
        ("task:seek", "task:book"),
        ("task:seek", "chitchat:interrupt"),
        ("knowledge:discuss", "task:book"),
        ("knowledge:discuss", "qa:ask_fact"),
        ("knowledge:discuss", "chitchat:interrupt"),
        ("qa:ask_fact", "task:book"),
        ("qa:ask_fact", "knowledge:discuss"),
        ("chitchat:interrupt", "task:book"),
        ("chitchat:interrupt", "knowledge:discuss"),
        ("chitchat:interrupt", "qa:ask_fact"),
        ("task:book", "task:seek"),
        ("task:book", "chitchat:farewell"),
    }
    return TransitionRules(
        allowed=frozenset(pairs),
        starts=frozenset({"chitchat:greeting"}),
        ends=frozenset({"task:book", "chitchat:farewell"}),
    )


def single_type_rules(dialog_type: str) -> TransitionRules:
    """Rules for the single-type external corpora used in the prompt stage."""
    graphs = {
        "task": ({("task:seek", "task:book"), ("task:book", "task:seek")},
                 {"task:seek"}, {"task:book"}),
        "knowledge": ({("knowledge:discuss", "knowledge:discuss")},
                      {"knowledge:discuss"}, {"knowledge:discuss"}),
        "qa": ({("qa:ask_fact", "qa:ask_fact")},
               {"qa:ask_fact"}, {"qa:ask_fact"}),
        "chitchat": ({("chitchat:greeting", "chitchat:decision"), ("chitchat:decision", "chitchat:farewell")},
                     {"chitchat:greeting"}, {"chitchat:decision", "chitchat:farewell"}),
    }
    pairs, starts, ends = graphs[dialog_type]
    return TransitionRules(
        allowed=frozenset(pairs),
        starts=frozenset(starts),
        ends=frozenset(ends),
        min_distinct_types=1,
        require_introduction=False,
        max_steps=5,
    )


def check_template(template: Template, rules: TransitionRules) -> bool:
    """Standalone coherence predicate; enumeration output must pass it."""
    steps = template.steps
    if len(steps) < rules.min_steps or len(steps) > rules.max_steps:
        return False
    if len(template.dialog_types()) < rules.min_distinct_types:
        return False
    if steps[0].key() not in rules.starts:
        return False
    for prev, curr in zip(steps, steps[1:]):
        if (prev.key(), curr.key()) not in rules.allowed:
            return False
    if rules.require_introduction:
        introduced: set[str] = set()
        for step in steps:
            if step.dialog_type in ("knowledge", "qa") or step.goal == "book":
                if step.entity not in introduced:
                    return False
            if step.entity:
                introduced.add(step.entity)
    return True


_WALK_WEIGHTS = {
    "chitchat:decision": 1.0,
    "task:seek": 1.2,
    "knowledge:discuss": 1.5,
    "task:book": 1.3,
    "chitchat:farewell": 0.9,
}


def _walk(rng: random.Random, kb: KnowledgeBase, rules: TransitionRules,
          config: GeneratorConfig, ontology: Ontology) -> list[SubScenario] | None:
    domains = [d for d in kb.domains() if kb.names(d)]
    if not domains:
        return None
    steps: list[SubScenario] = []
    key = rng.choice(sorted(rules.starts))
    entity: str | None = None
    domain: str | None = None
    seeks = 0

    def weight(k: str) -> float:
        w = _WALK_WEIGHTS.get(k, 1.0)
        if k == "qa:ask_fact":
            w = max(config.qa_rate * 4.0, 1e-9)
        if k == "chitchat:interrupt":
            w = max(config.interruption_rate * 4.0, 1e-9)
        return w

    while True:
        dialog_type, goal = key.split(":")
        if goal == "seek":
            domain = rng.choice(domains)
            entity = rng.choice(kb.names(domain))
            ent = kb.get(domain, entity)
            informable = [s for s in ontology.schemas[domain].informable if s in ent.attributes]
            n_constraints = 1 + (rng.random() < config.style.second_constraint_prob)
            slots = rng.sample(informable, k=min(n_constraints, len(informable)))
            constraints = tuple((s, ent.attributes[s]) for s in sorted(slots))
            steps.append(SubScenario(dialog_type, goal, domain, entity, constraints))
        elif goal in ("discuss", "ask_fact", "book"):
            if entity is None or domain is None:
                if rules.require_introduction:
                    return None
                domain = rng.choice(domains)
                entity = rng.choice(kb.names(domain))
            steps.append(SubScenario(dialog_type, goal, domain, entity))
            if not rules.require_introduction and goal in ("discuss", "ask_fact"):
                entity = None  # next single-type step may pick a fresh topic
        else:
            steps.append(SubScenario(dialog_type, goal))
        if len(steps) >= rules.max_steps:
            break
        if goal == "seek":
            seeks += 1
        choices = sorted(k2 for k1, k2 in rules.allowed if k1 == key)
        if rules.require_introduction and seeks >= 2:
            choices = [c for c in choices if c != "task:seek"]
        if not choices:
            break
        if key in rules.ends and len(steps) >= rules.min_steps and rng.random() < 0.15:
            break
        key = rng.choices(choices, weights=[weight(c) for c in choices])[0]
    if steps and steps[-1].key() not in rules.ends:
        return None
    return steps


def enumerate_templates(kb: KnowledgeBase, rules: TransitionRules, seed: int, n: int,
                        config: GeneratorConfig | None = None,
                        ontology: Ontology | None = None) -> list[Template]:
    """Sample up to ``n`` distinct rule-respecting templates, deterministically."""
    config = config or GeneratorConfig()
    ontology = ontology or default_ontology()
    templates: list[Template] = []
    seen: set[tuple] = set()
    attempts = 0
    limit = max(n * 60, 1000)
    while len(templates) < n and attempts < limit:
        rng = random.Random(child_seed(seed, "template", attempts))
        attempts += 1
        steps = _walk(rng, kb, rules, config, ontology)
        if steps is None:
            continue
        template = Template(template_id=f"t{seed}-{attempts - 1}", seed=seed, steps=tuple(steps))
        if template.signature() in seen or not check_template(template, rules):
            continue
        seen.add(template.signature())
        templates.append(template)
    return templates


# Serialization --------------------------------------------------------------


def template_to_dict(t: Template) -> dict:
    return {
        "template_id": t.template_id,
        "seed": t.seed,
        "steps": [
            {
                "dialog_type": s.dialog_type,
                "goal": s.goal,
                "domain": s.domain,
                "entity": s.entity,
                "constraints": [list(c) for c in s.constraints],
            }
            for s in t.steps
        ],
    }


def template_from_dict(data: dict) -> Template:
    return Template(
        template_id=data["template_id"],
        seed=data["seed"],
        steps=tuple(
            SubScenario(
                dialog_type=s["dialog_type"],
                goal=s["goal"],
                domain=s.get("domain", ""),
                entity=s.get("entity", ""),
                constraints=tuple((a, b) for a, b in s.get("constraints", [])),
            )
            for s in data["steps"]
        ),
    )
