import pytest

from mixdial.corpus import GeneratorConfig, generate_corpus
from mixdial.schema import default_ontology


@pytest.fixture(scope="session")
def ontology():
    return default_ontology()


@pytest.fixture(scope="session")
def small_config():
    return GeneratorConfig(
        entity_counts={"hotel": 4, "attraction": 4, "restaurant": 3, "food": 4, "movie": 3},
        train_sessions=20,
        dev_sessions=5,
        test_sessions=5,
        external_sessions=4,
    )


@pytest.fixture(scope="session")
def small_corpus(small_config):
    return generate_corpus(small_config, seed=42)
