"""
Integration tests for query generation at scale.

1. 10,000 generated queries parse and validate with graphql-core
2. Cleaning 10,000 random flat lists leaves no childless object, keeps
   every scalar whose ancestors survive, and always yields a buildable tree
"""

import logging
import random
import sys
from pathlib import Path

import pytest
from graphql import build_client_schema, parse, validate

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from fixture_server import dataset_generator_recipe
from query_synthesis import NodeKind, build_tree, clean_flat
from runner import RunConfig, generate_cases
from tests.fixtures.schema_fixtures import random_flat_list
from value_generators import CharsetMode, GeneratorRegistry

logger = logging.getLogger(__name__)

pytestmark = pytest.mark.slow

QUERIES_PER_SETTING = 1250
FLAT_LISTS = 10_000


def _settings():
    for charset in CharsetMode:
        for max_fields in (1, 3):
            for include_mutations in (False, True):
                yield charset, max_fields, include_mutations


class TestGeneratedQueriesAreValid:
    """Every generated query is accepted by the reference parser and validator."""

    @pytest.mark.parametrize("schema_name", ["fixture", "zoo"])
    def test_ten_thousand_queries(self, schema_name, fixture_schema, fixture_introspection,
                                  zoo_schema, zoo_graphql_schema, trace_scope_fixture):
        if schema_name == "fixture":
            schema, oracle, registry = fixture_schema, build_client_schema(fixture_introspection), dataset_generator_recipe()
        else:
            schema, oracle, registry = zoo_schema, zoo_graphql_schema, GeneratorRegistry()

        checked = 0
        with trace_scope_fixture(f"Validate generated queries ({schema_name})"):
            for seed, (charset, max_fields, include_mutations) in enumerate(_settings()):
                cfg = RunConfig(
                    num_tests=QUERIES_PER_SETTING,
                    max_size=100,
                    max_fields=max_fields,
                    seed=seed,
                    charset_mode=charset,
                    include_mutations=include_mutations,
                )
                for case in generate_cases(schema, cfg, registry):
                    errors = validate(oracle, parse(case.query))
                    assert errors == [], f"{case.query}\n{errors}"
                    checked += 1
                logger.info(f"  {charset.value:<12} max_fields={max_fields} mutations={include_mutations}: ok")

        assert checked >= 9_900
        logger.info(f"✓ {checked} generated queries valid against the {schema_name} schema")


class TestCleaningAtScale:
    """Cleaning invariants over many schema-free flat lists."""

    def test_ten_thousand_flat_lists(self):
        rng = random.Random(2024)
        emptied = 0

        for _ in range(FLAT_LISTS):
            nodes = random_flat_list(rng)
            cleaned = clean_flat(nodes)
            if not cleaned:
                emptied += 1
                continue

            referenced = {n.field_id for n in cleaned if n.field_id is not None}
            kept_ids = {n.object_id for n in cleaned if n.object_id is not None}
            assert cleaned[0] is nodes[0]
            assert all(n.object_id in referenced for n in cleaned if n.kind == NodeKind.OBJECT)
            assert all(n.field_id in kept_ids for n in cleaned[1:])
            # scalars are only dropped together with an ancestor
            for node in nodes:
                if node.kind == NodeKind.SCALAR and node.field_id in kept_ids:
                    assert node in cleaned
            assert clean_flat(cleaned) == cleaned
            assert build_tree(cleaned).node_count() == len(cleaned)

        assert 0 < emptied < FLAT_LISTS
        logger.info(f"✓ {FLAT_LISTS} flat lists cleaned ({emptied} emptied entirely)")
