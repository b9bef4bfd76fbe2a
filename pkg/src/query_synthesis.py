"""
Query synthesis: flat node generation, cleaning, tree building, printing.

Queries are generated iteratively instead of by depth-first recursion.
Generation 0 holds one root field; every later generation expands each
object node of the previous generation by drawing a few of its fields.
Object nodes get a unique object id and their fields carry it as their
field id, so the flat list folds back into a tree afterwards.

The number of generations is min(size, max_iterations), which keeps
queries finite even on cyclic schemas.
"""

import itertools
import logging
import math
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

from graphql import GraphQLSyntaxError, parse
from graphql.language import (
    BooleanValueNode,
    EnumValueNode,
    FieldNode,
    FloatValueNode,
    InlineFragmentNode,
    IntValueNode,
    ListValueNode,
    NullValueNode,
    ObjectValueNode,
    OperationDefinitionNode,
    OperationType,
    StringValueNode,
)
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from exceptions import EmptySchema, GraphQLPBTError, OrphanNode
from schema_model import COMPOSITE_KINDS, FieldSpec, ObjectSpec, SchemaModel, TypeKind, root_candidates
from value_generators import EnumValue, GenContext, GeneratorRegistry, gen_argument

logger = logging.getLogger(__name__)

TYPENAME = "__typename"


class NodeKind(str, Enum):
    OBJECT = "OBJECT"
    SCALAR = "SCALAR"
    ENUM = "ENUM"


class Operation(str, Enum):
    QUERY = "query"
    MUTATION = "mutation"


class GenNode(BaseModel):
    """
    One generated query node in the flat list.

    `object_id` is set only on object nodes; `field_id` is the object id of
    the containing node (None for the root). `parent_type` is the type the
    field is selected on: the operation type for the root, the fragment
    type for fields inside an inline fragment.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    kind: NodeKind
    type_name: str
    parent_type: str
    generation: int = Field(ge=0)
    object_id: Optional[int] = None
    field_id: Optional[int] = None
    args: Dict[str, Any] = Field(default_factory=dict)
    fragment_on: Optional[str] = None

    @model_validator(mode="after")
    def _check_ids(self) -> "GenNode":
        if (self.kind == NodeKind.OBJECT) != (self.object_id is not None):
            raise ValueError(f"{self.name}: object_id must be set exactly on object nodes")
        if (self.generation == 0) != (self.field_id is None):
            raise ValueError(f"{self.name}: only generation 0 nodes lack a field_id")
        return self


class QueryTree(BaseModel):
    """Nested selection built from a cleaned flat list."""

    name: str
    kind: NodeKind
    type_name: str
    parent_type: str
    args: Dict[str, Any] = Field(default_factory=dict)
    fragment_on: Optional[str] = None
    children: List["QueryTree"] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_selection(self) -> "QueryTree":
        if self.kind == NodeKind.OBJECT and not self.children:
            raise ValueError(f"object field {self.name} needs a non-empty selection set")
        if self.kind != NodeKind.OBJECT and self.children:
            raise ValueError(f"leaf field {self.name} cannot have a selection set")
        return self

    def walk(self) -> Iterator[Tuple[Optional["QueryTree"], "QueryTree"]]:
        """Yield (parent, node) pairs in pre-order; the root's parent is None."""
        stack: List[Tuple[Optional[QueryTree], QueryTree]] = [(None, self)]
        while stack:
            parent, node = stack.pop()
            yield parent, node
            stack.extend((node, child) for child in reversed(node.children))

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    def depth(self) -> int:
        return 1 + max((child.depth() for child in self.children), default=0)


class SynthesisConfig(BaseModel):
    """Generator parameters for one query."""

    max_fields: PositiveInt = 2
    max_iterations: PositiveInt = 5
    size: int = Field(default=10, ge=0)
    include_mutations: bool = False

    @property
    def effective_iterations(self) -> int:
        return min(self.size, self.max_iterations)


def _node_kind(schema: SchemaModel, type_name: str) -> NodeKind:
    kind = schema.kind_of(type_name)
    if kind in COMPOSITE_KINDS:
        return NodeKind.OBJECT
    if kind == TypeKind.ENUM:
        return NodeKind.ENUM
    return NodeKind.SCALAR


class _FlatGenerator:
    def __init__(
        self,
        schema: SchemaModel,
        cfg: SynthesisConfig,
        registry: GeneratorRegistry,
        ctx: GenContext,
        strict: bool,
    ):
        self.schema = schema
        self.cfg = cfg
        self.registry = registry
        self.ctx = ctx
        self.strict = strict
        self.ids = itertools.count(1)

    def run(self) -> List[GenNode]:
        candidates = root_candidates(self.schema, self.cfg.include_mutations)
        if not candidates:
            raise EmptySchema("Schema has no root fields to query")
        root_type, root_field = candidates[self.ctx.rng.randrange(len(candidates))]
        root = self.make_node(root_field, root_type, generation=0, field_id=None)

        nodes = [root]
        frontier = [root] if root.kind == NodeKind.OBJECT else []
        for generation in range(1, self.cfg.effective_iterations + 1):
            if not frontier:
                break
            added: List[GenNode] = []
            for parent in frontier:
                added.extend(self.expand(parent, generation))
            nodes.extend(added)
            frontier = [n for n in added if n.kind == NodeKind.OBJECT]
        return nodes

    def draw(self, pool: List[FieldSpec]) -> List[FieldSpec]:
        if not pool:
            return []
        count = min(self.ctx.rng.randint(1, self.cfg.max_fields), len(pool))
        return self.ctx.rng.sample(pool, count)

    def expand(self, parent: GenNode, generation: int) -> List[GenNode]:
        spec: ObjectSpec = self.schema.object(parent.type_name)
        if spec.kind == TypeKind.OBJECT:
            return [
                self.make_node(f, spec.name, generation, parent.object_id)
                for f in self.draw(spec.fields)
            ]

        concrete = self.schema.object(self.ctx.rng.choice(spec.possible_types))
        children = [
            GenNode(
                name=TYPENAME,
                kind=NodeKind.SCALAR,
                type_name="String",
                parent_type=spec.name,
                generation=generation,
                field_id=parent.object_id,
            )
        ]
        for f in self.draw(concrete.fields):
            declared = spec.field(f.name) if spec.kind == TypeKind.INTERFACE else None
            if declared is not None:
                children.append(self.make_node(declared, spec.name, generation, parent.object_id))
            else:
                children.append(
                    self.make_node(f, concrete.name, generation, parent.object_id, fragment_on=concrete.name)
                )
        return children

    def make_node(
        self,
        field: FieldSpec,
        parent_type: str,
        generation: int,
        field_id: Optional[int],
        fragment_on: Optional[str] = None,
    ) -> GenNode:
        type_name = field.type.type_name
        kind = _node_kind(self.schema, type_name)
        args: Dict[str, Any] = {}
        for arg in field.args:
            value = gen_argument(
                arg,
                self.registry,
                self.ctx,
                f"{parent_type}.{field.name}.{arg.name}",
                self.schema,
                self.strict,
            )
            if value is not None:
                args[arg.name] = value
        return GenNode(
            name=field.name,
            kind=kind,
            type_name=type_name,
            parent_type=parent_type,
            generation=generation,
            object_id=next(self.ids) if kind == NodeKind.OBJECT else None,
            field_id=field_id,
            args=args,
            fragment_on=fragment_on,
        )


def generate_flat(
    schema: SchemaModel,
    cfg: SynthesisConfig,
    registry: GeneratorRegistry,
    ctx: GenContext,
    strict: bool = False,
) -> List[GenNode]:
    """
    Generate the flat node list of one random query.

    Args:
        schema: Schema to draw fields from
        cfg: Field and iteration limits
        registry: Custom argument generators
        ctx: Seeded generation context
        strict: Reject custom scalars without generators

    Returns:
        Nodes in generation order; generation 0 holds exactly one root.

    Raises:
        EmptySchema: The schema has no root fields
    """
    nodes = _FlatGenerator(schema, cfg, registry, ctx, strict).run()
    logger.debug(
        f"Generated {len(nodes)} nodes over "
        f"{max(n.generation for n in nodes) + 1} generations (size {cfg.size})"
    )
    return nodes


def clean_flat(nodes: List[GenNode]) -> List[GenNode]:
    """
    Remove object nodes without children until none are left.

    Removing a childless object can leave its parent childless, so this
    repeats to a fixpoint. If the root is removed the result is empty.
    """
    alive = list(nodes)
    while True:
        referenced = {n.field_id for n in alive if n.field_id is not None}
        kept = [
            n for n in alive
            if n.kind != NodeKind.OBJECT or n.object_id in referenced
        ]
        if len(kept) == len(alive):
            break
        alive = kept
    if not any(n.generation == 0 for n in alive):
        return []
    return alive


def build_tree(nodes: List[GenNode]) -> QueryTree:
    """
    Fold a cleaned flat list into a QueryTree.

    Nodes are attached from the last generation down to the first using
    the object id to field id relation; children keep flat-list order.

    Raises:
        OrphanNode: A node's field_id matches no object_id
    """
    if not nodes:
        raise ValueError("Cannot build a tree from an empty node list")

    object_ids = {n.object_id for n in nodes if n.object_id is not None}
    children_of: Dict[int, List[int]] = {}
    roots = []
    for index, node in enumerate(nodes):
        if node.field_id is None:
            roots.append(index)
        elif node.field_id not in object_ids:
            raise OrphanNode(node.name, node.field_id)
        else:
            children_of.setdefault(node.field_id, []).append(index)
    if len(roots) != 1:
        raise ValueError(f"Expected exactly one root node, found {len(roots)}")

    built: Dict[int, QueryTree] = {}
    for index in sorted(range(len(nodes)), key=lambda i: nodes[i].generation, reverse=True):
        node = nodes[index]
        kids = children_of.get(node.object_id, []) if node.object_id is not None else []
        built[index] = QueryTree(
            name=node.name,
            kind=node.kind,
            type_name=node.type_name,
            parent_type=node.parent_type,
            args=dict(node.args),
            fragment_on=node.fragment_on,
            children=[built[k] for k in kids],
        )
    return built[roots[0]]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_STRING_ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def quote_string(value: str) -> str:
    """Quote a string as a GraphQL string literal."""
    out = ['"']
    for ch in value:
        if ch in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def graphql_literal(value: Any) -> str:
    """Render a generated JSON value in GraphQL literal syntax."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, EnumValue):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"Non-finite float {value} has no GraphQL literal")
        return repr(value)
    if isinstance(value, str):
        return quote_string(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(graphql_literal(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {graphql_literal(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"Cannot render {type(value).__name__} as a GraphQL literal")


def _field_head(tree: QueryTree) -> str:
    if not tree.args:
        return tree.name
    rendered = ", ".join(f"{name}: {graphql_literal(v)}" for name, v in tree.args.items())
    return f"{tree.name}({rendered})"


def _selection_tokens(children: List[QueryTree]) -> List[str]:
    tokens: List[str] = []
    fragments: Dict[str, List[QueryTree]] = {}
    for child in children:
        if child.fragment_on is None:
            tokens.extend(_field_tokens(child))
        else:
            fragments.setdefault(child.fragment_on, []).append(child)
    for type_name, group in fragments.items():
        tokens.extend([f"... on {type_name}", "{", *_group_tokens(group), "}"])
    return tokens


def _group_tokens(group: List[QueryTree]) -> List[str]:
    tokens: List[str] = []
    for child in group:
        tokens.extend(_field_tokens(child))
    return tokens


def _field_tokens(tree: QueryTree) -> List[str]:
    head = _field_head(tree)
    if not tree.children:
        return [head]
    return [head, "{", *_selection_tokens(tree.children), "}"]


def _layout(tokens: List[str], pretty: bool) -> str:
    if not pretty:
        return " ".join(tokens)
    lines: List[str] = []
    depth = 0
    for token in tokens:
        if token == "{":
            if lines:
                lines[-1] += " {"
            else:
                lines.append("{")
            depth += 1
        elif token == "}":
            depth -= 1
            lines.append("  " * depth + "}")
        else:
            lines.append("  " * depth + token)
    return "\n".join(lines)


def serialize(tree: QueryTree, operation: Operation = Operation.QUERY, pretty: bool = True) -> str:
    """
    Print a QueryTree as GraphQL query text.

    Args:
        tree: Root of the query
        operation: QUERY prints an anonymous `{ ... }`, MUTATION `mutation { ... }`
        pretty: Indented multi-line output; False gives `{ a { b } }`
    """
    tokens = ["{", *_field_tokens(tree), "}"]
    if operation == Operation.MUTATION:
        tokens.insert(0, "mutation")
    return _layout(tokens, pretty)


def operation_of(tree: QueryTree, schema: SchemaModel) -> Operation:
    if schema.mutation_root and tree.parent_type == schema.mutation_root:
        return Operation.MUTATION
    return Operation.QUERY


def query_envelope(text: str) -> Dict[str, str]:
    """Standard HTTP JSON envelope for a GraphQL request."""
    return {"query": text}


# ---------------------------------------------------------------------------
# Parsing recorded queries
# ---------------------------------------------------------------------------


def _literal_value(node: Any) -> Any:
    if isinstance(node, IntValueNode):
        return int(node.value)
    if isinstance(node, FloatValueNode):
        return float(node.value)
    if isinstance(node, StringValueNode):
        return node.value
    if isinstance(node, BooleanValueNode):
        return node.value
    if isinstance(node, NullValueNode):
        return None
    if isinstance(node, EnumValueNode):
        return EnumValue(node.value)
    if isinstance(node, ListValueNode):
        return [_literal_value(v) for v in node.values]
    if isinstance(node, ObjectValueNode):
        return {f.name.value: _literal_value(f.value) for f in node.fields}
    raise GraphQLPBTError(f"Unsupported argument value {type(node).__name__} (variables are not supported)")


def _convert_selection(selection: Any, parent_type: str, schema: SchemaModel, fragment_on: Optional[str]) -> List[QueryTree]:
    if isinstance(selection, InlineFragmentNode):
        target = selection.type_condition.name.value if selection.type_condition else parent_type
        inner_fragment = target if selection.type_condition else fragment_on
        converted: List[QueryTree] = []
        for child in selection.selection_set.selections:
            converted.extend(_convert_selection(child, target, schema, inner_fragment))
        return converted
    if not isinstance(selection, FieldNode):
        raise GraphQLPBTError(f"Unsupported selection {type(selection).__name__} (only fields and inline fragments)")

    name = selection.name.value
    if name == TYPENAME:
        return [QueryTree(name=name, kind=NodeKind.SCALAR, type_name="String",
                          parent_type=parent_type, fragment_on=fragment_on)]
    field = schema.field(parent_type, name)
    if field is None:
        raise GraphQLPBTError(f"Cannot query field '{name}' on type '{parent_type}'")
    type_name = field.type.type_name
    children: List[QueryTree] = []
    if selection.selection_set:
        for child in selection.selection_set.selections:
            children.extend(_convert_selection(child, type_name, schema, None))
    return [QueryTree(
        name=name,
        kind=_node_kind(schema, type_name),
        type_name=type_name,
        parent_type=parent_type,
        args={a.name.value: _literal_value(a.value) for a in selection.arguments or ()},
        fragment_on=fragment_on,
        children=children,
    )]


def parse_query(text: str, schema: SchemaModel) -> List[QueryTree]:
    """
    Parse GraphQL query text into one QueryTree per root field.

    Raises:
        GraphQLPBTError: Syntax errors, unknown fields, named fragments,
                         variables, or an operation type the schema lacks
    """
    try:
        document = parse(text)
    except GraphQLSyntaxError as e:
        raise GraphQLPBTError(f"Invalid GraphQL: {e.message}") from e

    trees: List[QueryTree] = []
    for definition in document.definitions:
        if not isinstance(definition, OperationDefinitionNode):
            raise GraphQLPBTError(f"Unsupported definition {type(definition).__name__}")
        if definition.operation == OperationType.MUTATION:
            root_type = schema.mutation_root
        elif definition.operation == OperationType.QUERY:
            root_type = schema.query_root
        else:
            root_type = None
        if root_type is None:
            raise GraphQLPBTError(f"Schema has no root for {definition.operation.value} operations")
        for selection in definition.selection_set.selections:
            trees.extend(_convert_selection(selection, root_type, schema, None))
    return trees
