"""Synthetic corpus: knowledge base, templates, simulation, retrieval, files."""

from .config import ConfigError, GeneratorConfig, StyleConfig
from .corpus_io import (
    CorpusFormatError,
    CorpusSplit,
    CorpusStats,
    GeneratedCorpus,
    build_vocab,
    corpus_fingerprint,
    corpus_stats,
    generate_corpus,
    read_corpus,
    read_sessions,
    read_templates,
    session_from_dict,
    session_to_dict,
    verify_corpus_dir,
    write_corpus,
    write_sessions,
)
from .kb import BOOKING_POOLS, VALUE_POOLS, Entity, KnowledgeBase, QAPair, Snippet, build_kb, child_seed
from .retrieve import KnowledgeItem, retrieve_coarse_knowledge
from .simulate import DialogSession, GenerationError, Turn, simulate_dialog
from .templates import (
    SubScenario,
    Template,
    TransitionRules,
    check_template,
    default_rules,
    enumerate_templates,
    single_type_rules,
)

__all__ = [
    "BOOKING_POOLS",
    "ConfigError",
    "CorpusFormatError",
    "CorpusSplit",
    "CorpusStats",
    "DialogSession",
    "Entity",
    "GeneratedCorpus",
    "GenerationError",
    "GeneratorConfig",
    "KnowledgeBase",
    "KnowledgeItem",
    "QAPair",
    "Snippet",
    "StyleConfig",
    "SubScenario",
    "Template",
    "TransitionRules",
    "Turn",
    "VALUE_POOLS",
    "build_kb",
    "build_vocab",
    "check_template",
    "child_seed",
    "corpus_fingerprint",
    "corpus_stats",
    "default_rules",
    "enumerate_templates",
    "generate_corpus",
    "read_corpus",
    "read_sessions",
    "read_templates",
    "retrieve_coarse_knowledge",
    "session_from_dict",
    "session_to_dict",
    "simulate_dialog",
    "single_type_rules",
    "verify_corpus_dir",
    "write_corpus",
    "write_sessions",
]
