import numpy as np
import pytest

from kgstruct import datasets
from kgstruct.graph import GraphIndex, from_labeled


@pytest.fixture(scope="session")
def example_kg():
    return datasets.load("example")


@pytest.fixture(scope="session")
def example_index(example_kg):
    return GraphIndex.from_kg(example_kg)


@pytest.fixture(scope="session")
def umls_kg():
    return datasets.load("umls")


@pytest.fixture
def tiny_kg():
    """Five entities, two predicates, a handful of triples in every split."""
    train = [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a"), ("a", "s", "d"), ("d", "r", "e"),
             ("e", "s", "b")]
    valid = [("a", "r", "c")]
    test = [("b", "s", "d"), ("c", "r", "e")]
    return from_labeled(train, valid, test, name="tiny")


def random_triples(rng, n, n_entities, n_predicates):
    return np.column_stack([
        rng.integers(0, n_entities, n),
        rng.integers(0, n_predicates, n),
        rng.integers(0, n_entities, n),
    ]).astype(np.int64)
