"""
Integration tests for schema conformance on real responses.

Collects a corpus of 50 fixture responses, checks that each conforms to
the schema, then corrupts one scalar leaf at a time and checks that the
checker rejects exactly that leaf, reporting its path.
"""

import copy
import logging
import random
import sys
from pathlib import Path
from typing import Any, List, Tuple

import httpx
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from fixture_server import FixtureServer, dataset_generator_recipe
from query_synthesis import parse_query
from runner import RunConfig, execute, generate_cases
from schema_model import ConformanceChecker, derive_response_specs

logger = logging.getLogger(__name__)

pytestmark = pytest.mark.slow

CORPUS_SIZE = 50
WRONG = ["wrong"]


def scalar_leaves(value: Any, path: str = "") -> List[Tuple[str, list]]:
    """(path, key-chain) of every non-null scalar in a response value."""
    leaves = []
    if isinstance(value, dict):
        for key, item in value.items():
            child = f"{path}.{key}" if path else key
            leaves.extend((p, [key, *chain]) for p, chain in scalar_leaves(item, child))
    elif isinstance(value, list):
        for index, item in enumerate(value):
            leaves.extend((p, [index, *chain]) for p, chain in scalar_leaves(item, f"{path}[{index}]"))
    elif value is not None:
        leaves.append((path, []))
    return leaves


def replaced(data: Any, chain: list, new_value: Any) -> Any:
    corrupted = copy.deepcopy(data)
    target = corrupted
    for step in chain[:-1]:
        target = target[step]
    target[chain[-1]] = new_value
    return corrupted


@pytest.fixture(scope="module")
def response_corpus(fixture_schema):
    """Up to CORPUS_SIZE (tree, data) pairs from a healthy fixture, each with a scalar leaf."""
    fixture = FixtureServer()
    cfg = RunConfig(endpoint="http://fixture.test/graphql", num_tests=200, seed=99, max_fields=3)
    corpus = []
    with httpx.Client(transport=httpx.WSGITransport(app=fixture.app)) as client:
        for case in generate_cases(fixture_schema, cfg, dataset_generator_recipe(explore=0.0)):
            result = execute(case.query, cfg, client)
            data = (result.body or {}).get("data")
            if result.status_code == 200 and scalar_leaves(data):
                corpus.append((case.tree, data))
            if len(corpus) == CORPUS_SIZE:
                break
    return corpus


class TestConformanceCorpus:
    """Conformance checking against recorded fixture responses."""

    def test_corpus_is_complete(self, response_corpus):
        assert len(response_corpus) == CORPUS_SIZE

    def test_real_responses_conform(self, response_corpus, fixture_schema):
        checker = ConformanceChecker(derive_response_specs(fixture_schema), strict=True)

        for tree, data in response_corpus:
            assert checker.check_payload(data, tree) == []
        logger.info(f"✓ {len(response_corpus)} real responses conform in strict mode")

    def test_one_corrupted_leaf_is_located(self, response_corpus, fixture_schema, trace_scope_fixture):
        checker = ConformanceChecker(derive_response_specs(fixture_schema))
        rng = random.Random(5)

        with trace_scope_fixture("Corrupt one leaf per response"):
            for tree, data in response_corpus:
                path, chain = rng.choice(scalar_leaves(data))

                violations = checker.check_payload(replaced(data, chain, WRONG), tree)

                assert [v.path for v in violations] == [path], f"{path}: {violations}"
                logger.debug(f"  rejected at {path}: {violations[0].message}")
        logger.info(f"✓ {len(response_corpus)} corrupted responses rejected at the corrupted path")

    def test_every_leaf_of_one_response(self, response_corpus, fixture_schema):
        checker = ConformanceChecker(derive_response_specs(fixture_schema))
        tree, data = max(response_corpus, key=lambda pair: len(scalar_leaves(pair[1])))

        for path, chain in scalar_leaves(data):
            violations = checker.check_payload(replaced(data, chain, WRONG), tree)
            assert [v.path for v in violations] == [path]

    def test_person_pet_payload(self, person_pet_schema):
        checker = ConformanceChecker(derive_response_specs(person_pet_schema))
        person, pet = parse_query("{ person { name age } pet { name } }", person_pet_schema)

        assert checker.check_payload({"person": {"name": "Ada", "age": 36}}, person) == []
        assert checker.check_payload({"pet": None}, pet) == []
        violations = checker.check_payload({"person": {"name": "Ada", "age": "36"}}, person)
        assert [v.path for v in violations] == ["person.age"]
        violations = checker.check_payload({"pet": {"name": "Rex", "age": 3}}, pet)
        assert [v.path for v in violations] == ["pet.age"]
