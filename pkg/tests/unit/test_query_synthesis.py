"""Unit tests for flat query generation, cleaning, tree building and printing."""

import logging
import random
import sys
from pathlib import Path

import pytest
from graphql import parse, validate
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from exceptions import EmptySchema, GraphQLPBTError, OrphanNode
from query_synthesis import (
    GenNode,
    NodeKind,
    Operation,
    QueryTree,
    SynthesisConfig,
    build_tree,
    clean_flat,
    generate_flat,
    graphql_literal,
    operation_of,
    parse_query,
    query_envelope,
    quote_string,
    serialize,
)
from schema_model import ObjectSpec, SchemaModel
from tests.fixtures.schema_fixtures import random_flat_list
from value_generators import CharsetMode, EnumValue, GenContext, GeneratorRegistry

logger = logging.getLogger(__name__)


def _leaf(name, parent, type_name="String", **kw):
    return QueryTree(name=name, kind=NodeKind.SCALAR, type_name=type_name, parent_type=parent, **kw)


def _obj(name, type_name, parent, children, **kw):
    return QueryTree(name=name, kind=NodeKind.OBJECT, type_name=type_name, parent_type=parent,
                     children=children, **kw)


def _generate(schema, seed, size=10, max_fields=2, max_iterations=5, include_mutations=False,
              charset=CharsetMode.ALPHANUMERIC, registry=None):
    cfg = SynthesisConfig(max_fields=max_fields, max_iterations=max_iterations, size=size,
                          include_mutations=include_mutations)
    ctx = GenContext.from_seed(seed, size, charset)
    return generate_flat(schema, cfg, registry or GeneratorRegistry(), ctx)


class TestSerialize:
    """Test suite for printing query trees."""

    def test_nested_query_compact_and_pretty(self, type_tracer):
        tree = _obj("person", "Person", "Query", [_obj("pet", "Pet", "Person", [_leaf("name", "Pet")])])

        compact = serialize(tree, pretty=False)
        pretty = serialize(tree)
        type_tracer.trace_call("serialize", args=(tree,), result=pretty)

        assert compact == "{ person { pet { name } } }"
        assert pretty == "{\n  person {\n    pet {\n      name\n    }\n  }\n}"
        logger.info("✓ Nested selection printed compact and indented")

    def test_root_leaf(self):
        assert serialize(_leaf("hello", "Query"), pretty=False) == "{ hello }"

    def test_mutation_with_arguments(self):
        tree = _obj("renamePerson", "Person", "Mutation", [_leaf("name", "Person")],
                    args={"id": "1", "name": "Ann"})

        text = serialize(tree, Operation.MUTATION, pretty=False)

        assert text == 'mutation { renamePerson(id: "1", name: "Ann") { name } }'
        logger.info("✓ Mutation printed with its keyword")

    def test_fragments_follow_plain_fields(self):
        tree = _obj("animal", "Animal", "Query", [
            _leaf("barks", "Dog", "Boolean", fragment_on="Dog"),
            _leaf("__typename", "Animal"),
            _leaf("name", "Animal"),
        ])

        assert serialize(tree, pretty=False) == "{ animal { __typename name ... on Dog { barks } } }"

    def test_literals(self):
        assert graphql_literal(None) == "null"
        assert graphql_literal(True) == "true"
        assert graphql_literal(-12) == "-12"
        assert graphql_literal(2.5) == "2.5"
        assert graphql_literal(EnumValue("DOG")) == "DOG"
        assert graphql_literal("DOG") == '"DOG"'
        assert graphql_literal([1, "a"]) == '[1, "a"]'
        assert graphql_literal({"minAge": 3, "species": [EnumValue("CAT")]}) == "{minAge: 3, species: [CAT]}"
        with pytest.raises(ValueError):
            graphql_literal(float("nan"))
        logger.info("✓ Literals rendered in GraphQL syntax")

    def test_string_escapes(self):
        assert quote_string('a"b\\c') == '"a\\"b\\\\c"'
        assert quote_string("\n\t\x00\x7f") == '"\\n\\t\\u0000\\u007f"'

    @given(st.text(alphabet=st.characters(min_codepoint=0, max_codepoint=255), max_size=40))
    @settings(max_examples=300, deadline=None)
    def test_escaped_strings_parse_back(self, value):
        document = parse("{ f(a: " + quote_string(value) + ") }")

        assert document.definitions[0].selection_set.selections[0].arguments[0].value.value == value

    def test_query_envelope(self):
        assert query_envelope("{ hello }") == {"query": "{ hello }"}


class TestCleaning:
    """Test suite for clean_flat and build_tree."""

    def test_childless_root_cleans_to_empty(self):
        nodes = [
            GenNode(name="person", kind=NodeKind.OBJECT, type_name="Person", parent_type="Query",
                    generation=0, object_id=1),
            GenNode(name="pet", kind=NodeKind.OBJECT, type_name="Pet", parent_type="Person",
                    generation=1, object_id=2, field_id=1),
        ]

        assert clean_flat(nodes) == []
        logger.info("✓ Cascading removal empties a childless root")

    def test_childless_object_removed_siblings_kept(self):
        nodes = [
            GenNode(name="person", kind=NodeKind.OBJECT, type_name="Person", parent_type="Query",
                    generation=0, object_id=1),
            GenNode(name="name", kind=NodeKind.SCALAR, type_name="String", parent_type="Person",
                    generation=1, field_id=1),
            GenNode(name="pet", kind=NodeKind.OBJECT, type_name="Pet", parent_type="Person",
                    generation=1, object_id=2, field_id=1),
        ]

        cleaned = clean_flat(nodes)

        assert [n.name for n in cleaned] == ["person", "name"]
        assert serialize(build_tree(cleaned), pretty=False) == "{ person { name } }"

    def test_leaf_root_survives(self):
        nodes = [GenNode(name="hello", kind=NodeKind.SCALAR, type_name="String", parent_type="Query", generation=0)]

        assert clean_flat(nodes) == nodes

    def test_orphan_detected(self):
        nodes = [
            GenNode(name="person", kind=NodeKind.OBJECT, type_name="Person", parent_type="Query",
                    generation=0, object_id=1),
            GenNode(name="name", kind=NodeKind.SCALAR, type_name="String", parent_type="Person",
                    generation=1, field_id=9),
        ]

        with pytest.raises(OrphanNode) as exc_info:
            build_tree(nodes)
        assert exc_info.value.field_id == 9

    def test_gen_node_id_rules(self):
        with pytest.raises(ValueError):
            GenNode(name="x", kind=NodeKind.OBJECT, type_name="T", parent_type="Query", generation=0)
        with pytest.raises(ValueError):
            GenNode(name="x", kind=NodeKind.SCALAR, type_name="String", parent_type="T", generation=1)

    def test_object_tree_needs_children(self):
        with pytest.raises(ValueError):
            QueryTree(name="person", kind=NodeKind.OBJECT, type_name="Person", parent_type="Query")

    @given(st.integers(min_value=0, max_value=2**32))
    @settings(max_examples=300, deadline=None)
    def test_cleaning_and_building_match_join(self, seed):
        cleaned = clean_flat(random_flat_list(random.Random(seed)))

        assert all(
            any(c.field_id == n.object_id for c in cleaned)
            for n in cleaned if n.kind == NodeKind.OBJECT
        )
        if not cleaned:
            return
        tree = build_tree(cleaned)

        def matches(tree_node, flat_node):
            kids = [n for n in cleaned if n.field_id is not None and n.field_id == flat_node.object_id]
            assert [c.name for c in tree_node.children] == [k.name for k in kids]
            for child, kid in zip(tree_node.children, kids):
                matches(child, kid)

        matches(tree, cleaned[0])
        assert tree.node_count() == len(cleaned)


class TestGenerateFlat:
    """Test suite for generate_flat."""

    def test_structure_invariants(self, zoo_schema):
        for seed in range(200):
            nodes = _generate(zoo_schema, seed, max_fields=3)
            roots = [n for n in nodes if n.generation == 0]
            objects = {n.object_id: n for n in nodes if n.object_id is not None}

            assert len(roots) == 1 and nodes[0] is roots[0]
            assert len(objects) == len([n for n in nodes if n.kind == NodeKind.OBJECT])
            assert max(n.generation for n in nodes) <= 5
            for node in nodes[1:]:
                assert objects[node.field_id].generation == node.generation - 1
            for parent_id in objects:
                children = [n for n in nodes if n.field_id == parent_id]
                assert len([c for c in children if c.name != "__typename"]) <= 3
        logger.info("✓ Flat lists keep one root and well-formed id links")

    def test_size_zero_gives_root_only(self, zoo_schema):
        for seed in range(20):
            nodes = _generate(zoo_schema, seed, size=0)
            assert len(nodes) == 1 and nodes[0].generation == 0

    def test_iterations_bounded_by_size(self, zoo_schema):
        for seed in range(50):
            nodes = _generate(zoo_schema, seed, size=2, max_iterations=5)
            assert max(n.generation for n in nodes) <= 2

    def test_deterministic(self, zoo_schema):
        assert _generate(zoo_schema, 7) == _generate(zoo_schema, 7)

    def test_empty_schema(self):
        schema = SchemaModel(query_root="Query", objects={"Query": ObjectSpec(name="Query")})

        with pytest.raises(EmptySchema):
            _generate(schema, 0)

    def test_mutations_only_when_enabled(self, zoo_schema):
        plain = {_generate(zoo_schema, s)[0].parent_type for s in range(100)}
        mixed = {_generate(zoo_schema, s, include_mutations=True)[0].parent_type for s in range(100)}

        assert plain == {"Query"}
        assert mixed == {"Query", "Mutation"}

    def test_abstract_parents(self, zoo_schema):
        saw_fragment = saw_interface_field = False
        for seed in range(300):
            for node in _generate(zoo_schema, seed, max_fields=3):
                if node.fragment_on is not None:
                    saw_fragment = True
                    assert node.parent_type == node.fragment_on
                    assert zoo_schema.field(node.fragment_on, node.name) is not None
                if node.parent_type == "Animal" and node.name != "__typename":
                    saw_interface_field = True
                    assert node.fragment_on is None

        assert saw_fragment and saw_interface_field
        logger.info("✓ Interface fields selected directly, others through fragments")

    def test_generated_queries_validate(self, zoo_schema, zoo_graphql_schema):
        for seed in range(300):
            charset = CharsetMode.FULL_BYTE if seed % 2 else CharsetMode.ALPHANUMERIC
            cleaned = clean_flat(_generate(zoo_schema, seed, size=1 + seed % 30, max_fields=3,
                                           include_mutations=True, charset=charset))
            if not cleaned:
                continue
            tree = build_tree(cleaned)
            text = serialize(tree, operation_of(tree, zoo_schema))
            errors = validate(zoo_graphql_schema, parse(text))
            assert errors == [], f"{text}\n{errors}"
        logger.info("✓ Generated queries pass graphql-core validation")


class TestParseQuery:
    """Test suite for parse_query."""

    def test_round_trip(self, zoo_schema):
        text = (
            '{\n  people(filter: {minAge: 3, species: [DOG]}, first: 2) {\n    name\n'
            '    pet {\n      species\n    }\n  }\n}'
        )

        trees = parse_query(text, zoo_schema)

        assert len(trees) == 1
        assert trees[0].args["filter"]["species"] == ["DOG"]
        assert isinstance(trees[0].args["filter"]["species"][0], EnumValue)
        assert serialize(trees[0]) == text

    def test_fragment_children(self, zoo_schema):
        tree = parse_query('{ animal(name: "x") { name ... on Cat { lives } } }', zoo_schema)[0]

        assert [(c.name, c.parent_type, c.fragment_on) for c in tree.children] == [
            ("name", "Animal", None),
            ("lives", "Cat", "Cat"),
        ]

    def test_mutation_operation(self, zoo_schema):
        tree = parse_query('mutation { renamePerson(id: "1", name: "B") { id } }', zoo_schema)[0]

        assert tree.parent_type == "Mutation"
        assert operation_of(tree, zoo_schema) == Operation.MUTATION

    @pytest.mark.parametrize("text", [
        "{ person(id: ",
        "{ nothing }",
        "query Q($id: ID!) { person(id: $id) { name } }",
        "{ person(id: \"1\") { ...F } } fragment F on Person { name }",
    ])
    def test_unsupported_or_invalid(self, zoo_schema, text):
        with pytest.raises(GraphQLPBTError):
            parse_query(text, zoo_schema)
