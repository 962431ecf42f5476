"""Coarse knowledge retrieval: everything known about the mentioned entities."""

from __future__ import annotations

from dataclasses import dataclass

from ..schema import ATTITUDE_SLOT, DialogState
from .kb import KnowledgeBase


@dataclass(frozen=True)
class KnowledgeItem:
    kind: str  # attr | snippet
    domain: str
    entity: str
    item_id: str
    tokens: tuple[str, ...]
    slot: str = ""
    value: str = ""


def retrieve_coarse_knowledge(state: DialogState, kb: KnowledgeBase) -> list[KnowledgeItem]:
    """All attributes and snippets of every entity mentioned in the state.

    Output is de-duplicated and deterministically ordered by (entity name,
    then attribute slot, then snippet index); entities absent from the
    knowledge base contribute nothing.
    """
    mentioned: list[tuple[str, str]] = sorted(
        (name, domain)
        for domain, dstate in state.domains.items()
        for name in dstate.entities
    )
    items: list[KnowledgeItem] = []
    seen: set[str] = set()
    for name, domain in mentioned:
        if domain not in kb.entities or name not in kb.entities[domain]:
            continue
        ent = kb.entities[domain][name]
        for slot in sorted(ent.attributes):
            if slot == ATTITUDE_SLOT:
                continue
            item_id = f"{domain}/{name}/attr/{slot}"
            if item_id in seen:
                continue
            seen.add(item_id)
            tokens = (*name.split(), ".", slot, "=", *ent.attributes[slot].split())
            items.append(KnowledgeItem("attr", domain, name, item_id, tokens,
                                       slot, ent.attributes[slot]))
        for idx, snippet in enumerate(ent.snippets):
            item_id = f"{domain}/{name}/snippet/{idx}"
            if item_id in seen:
                continue
            seen.add(item_id)
            items.append(KnowledgeItem("snippet", domain, name, item_id,
                                       tuple(snippet.tokens), snippet.slot, snippet.value))
    return items
