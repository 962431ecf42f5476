"""Generator configuration: entity counts, split sizes and simulation style."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

# Per-domain defaults keep the relative entity proportions of a realistic
# multi-domain knowledge base (1133:435:122:1971:224 scaled down by 50,
# rounded up) at desk scale.
DEFAULT_ENTITY_COUNTS = {
    "hotel": 23,
    "attraction": 9,
    "restaurant": 3,
    "food": 40,
    "movie": 5,
}


class ConfigError(ValueError):
    """Unusable generator configuration."""


@dataclass
class StyleConfig:
    """Knobs shaping the simulated conversations.

    Round ranges are inclusive (lo, hi) counts of user/wizard exchanges per
    sub-scenario; they are calibrated so the default corpus averages about
    33 utterances per dialog and 10 tokens per utterance.
    """

    greeting_rounds: tuple[int, int] = (2, 3)
    decision_rounds: tuple[int, int] = (2, 3)
    seek_extra_rounds: tuple[int, int] = (0, 1)
    discuss_rounds: tuple[int, int] = (2, 5)
    ask_rounds: tuple[int, int] = (1, 2)
    reject_prob: float = 0.25
    no_offer_prob: float = 0.15
    second_constraint_prob: float = 0.5
    phrasing: str = "target"  # target | external


@dataclass
class GeneratorConfig:
    entity_counts: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_ENTITY_COUNTS))
    train_sessions: int = 350
    dev_sessions: int = 50
    test_sessions: int = 105
    external_sessions: int = 40
    qa_rate: float = 0.3
    interruption_rate: float = 0.15
    max_template_steps: int = 12
    seed: int = 13
    style: StyleConfig = field(default_factory=StyleConfig)

    def validate(self) -> None:
        for domain, count in self.entity_counts.items():
            if count < 1:
                raise ConfigError(f"domain {domain!r} needs at least one entity, got {count}")
        for name in ("train_sessions", "dev_sessions", "test_sessions", "external_sessions"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("qa_rate", "interruption_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1]")
        if self.max_template_steps < 2:
            raise ConfigError("max_template_steps must be at least 2")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["style"] = {k: list(v) if isinstance(v, tuple) else v for k, v in data["style"].items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        style_data = dict(data.get("style", {}))
        for key, value in style_data.items():
            if isinstance(value, list):
                style_data[key] = tuple(value)
        fields = {k: v for k, v in data.items() if k != "style"}
        return cls(style=StyleConfig(**style_data), **fields)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
