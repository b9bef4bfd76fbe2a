"""
Typed schema model built from GraphQL introspection JSON.

This module turns a standard introspection result into an immutable
SchemaModel and derives, for every named type, a response specification
used to check that returned data conforms to the schema.

Only introspection JSON is accepted; SDL text is never parsed here.
"""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from exceptions import DanglingTypeReference, MalformedIntrospection, NoQueryRoot

logger = logging.getLogger(__name__)

BUILTIN_SCALARS = ("Int", "Float", "String", "Boolean", "ID")


class TypeKind(str, Enum):
    """Kinds reported by the introspection `__TypeKind` enum."""

    SCALAR = "SCALAR"
    OBJECT = "OBJECT"
    ENUM = "ENUM"
    INPUT_OBJECT = "INPUT_OBJECT"
    INTERFACE = "INTERFACE"
    UNION = "UNION"
    LIST = "LIST"
    NON_NULL = "NON_NULL"


WRAPPER_KINDS = (TypeKind.LIST, TypeKind.NON_NULL)
COMPOSITE_KINDS = (TypeKind.OBJECT, TypeKind.INTERFACE, TypeKind.UNION)


class TypeRef(BaseModel):
    """A possibly wrapped reference to a named type, e.g. `[User!]!`."""

    model_config = ConfigDict(frozen=True)

    kind: TypeKind
    name: Optional[str] = None
    of_type: Optional["TypeRef"] = None

    @model_validator(mode="after")
    def _check_wrapping(self) -> "TypeRef":
        if self.kind in WRAPPER_KINDS:
            if self.name is not None or self.of_type is None:
                raise ValueError(f"{self.kind.value} must wrap a type and carry no name")
            if self.kind == TypeKind.NON_NULL and self.of_type.kind == TypeKind.NON_NULL:
                raise ValueError("NON_NULL cannot wrap NON_NULL")
        elif not self.name or self.of_type is not None:
            raise ValueError(f"{self.kind.value} reference needs a name and no of_type")
        return self

    @classmethod
    def named(cls, kind: TypeKind, name: str) -> "TypeRef":
        return cls(kind=kind, name=name)

    @classmethod
    def non_null(cls, inner: "TypeRef") -> "TypeRef":
        return cls(kind=TypeKind.NON_NULL, of_type=inner)

    @classmethod
    def list_of(cls, inner: "TypeRef") -> "TypeRef":
        return cls(kind=TypeKind.LIST, of_type=inner)

    @property
    def is_non_null(self) -> bool:
        return self.kind == TypeKind.NON_NULL

    @property
    def named_type(self) -> "TypeRef":
        """The innermost named reference with all wrappers removed."""
        ref = self
        while ref.of_type is not None:
            ref = ref.of_type
        return ref

    @property
    def type_name(self) -> str:
        return self.named_type.name

    def nullable(self) -> "TypeRef":
        return self.of_type if self.is_non_null else self

    def render(self) -> str:
        if self.kind == TypeKind.NON_NULL:
            return f"{self.of_type.render()}!"
        if self.kind == TypeKind.LIST:
            return f"[{self.of_type.render()}]"
        return self.name


class ArgSpec(BaseModel):
    """An argument of a field, or a field of an input object."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    type: TypeRef
    required: bool
    default_present: bool = False


class FieldSpec(BaseModel):
    """A field of an object or interface type."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    type: TypeRef
    args: List[ArgSpec] = Field(default_factory=list)


class ObjectSpec(BaseModel):
    """An object, interface or union type together with its fields."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    fields: List[FieldSpec] = Field(default_factory=list)
    kind: TypeKind = TypeKind.OBJECT
    possible_types: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_shape(self) -> "ObjectSpec":
        if self.kind not in COMPOSITE_KINDS:
            raise ValueError(f"ObjectSpec kind must be composite, got {self.kind.value}")
        abstract = self.kind != TypeKind.OBJECT
        if abstract != bool(self.possible_types):
            raise ValueError(
                f"{self.name}: possible_types must be non-empty exactly for interfaces and unions"
            )
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.name}: duplicate field names")
        return self

    def field(self, name: str) -> Optional[FieldSpec]:
        for spec in self.fields:
            if spec.name == name:
                return spec
        return None

    @property
    def field_names(self) -> List[str]:
        return [f.name for f in self.fields]


class SchemaModel(BaseModel):
    """
    Immutable typed view of a GraphQL schema.

    Meta types (names starting with "__") are kept in `objects` so the
    reference graph stays closed; coverage excludes them.
    """

    model_config = ConfigDict(frozen=True)

    query_root: str
    mutation_root: Optional[str] = None
    objects: Dict[str, ObjectSpec] = Field(default_factory=dict)
    scalars: FrozenSet[str] = frozenset()
    enums: Dict[str, List[str]] = Field(default_factory=dict)
    input_objects: Dict[str, List[ArgSpec]] = Field(default_factory=dict)

    def kind_of(self, type_name: str) -> Optional[TypeKind]:
        if type_name in self.objects:
            return self.objects[type_name].kind
        if type_name in self.scalars:
            return TypeKind.SCALAR
        if type_name in self.enums:
            return TypeKind.ENUM
        if type_name in self.input_objects:
            return TypeKind.INPUT_OBJECT
        return None

    def object(self, type_name: str) -> ObjectSpec:
        return self.objects[type_name]

    def field(self, type_name: str, field_name: str) -> Optional[FieldSpec]:
        spec = self.objects.get(type_name)
        return spec.field(field_name) if spec else None

    @staticmethod
    def is_meta(name: str) -> bool:
        return name.startswith("__")

    def root_types(self) -> List[str]:
        return [name for name in (self.query_root, self.mutation_root) if name]


def _locate_schema(doc: Mapping[str, Any]) -> Mapping[str, Any]:
    if not isinstance(doc, Mapping):
        raise MalformedIntrospection("Introspection document must be a JSON object")
    if "__schema" in doc:
        schema = doc["__schema"]
    elif isinstance(doc.get("data"), Mapping) and "__schema" in doc["data"]:
        schema = doc["data"]["__schema"]
    else:
        raise MalformedIntrospection("Missing '__schema' (expected data.__schema or __schema)")
    if not isinstance(schema, Mapping) or not isinstance(schema.get("types"), list):
        raise MalformedIntrospection("'__schema.types' must be a list")
    return schema


def _parse_type_ref(raw: Any, where: str) -> TypeRef:
    if not isinstance(raw, Mapping) or not raw.get("kind"):
        raise MalformedIntrospection(f"Type reference at {where} has no kind")
    try:
        kind = TypeKind(raw["kind"])
        of_type = raw.get("ofType")
        return TypeRef(
            kind=kind,
            name=raw.get("name"),
            of_type=_parse_type_ref(of_type, where) if of_type else None,
        )
    except (ValueError, ValidationError) as e:
        raise MalformedIntrospection(f"Invalid type reference at {where}: {e}") from e


def _parse_input_value(raw: Mapping[str, Any], where: str) -> ArgSpec:
    name = raw.get("name")
    type_ref = _parse_type_ref(raw.get("type"), f"{where}.{name}")
    return ArgSpec(
        name=name,
        type=type_ref,
        required=type_ref.is_non_null,
        default_present=raw.get("defaultValue") is not None,
    )


def _parse_fields(raw_type: Mapping[str, Any]) -> List[FieldSpec]:
    fields = []
    for raw_field in raw_type.get("fields") or []:
        where = f"{raw_type['name']}.{raw_field.get('name')}"
        fields.append(
            FieldSpec(
                name=raw_field["name"],
                type=_parse_type_ref(raw_field.get("type"), where),
                args=[_parse_input_value(a, where) for a in raw_field.get("args") or []],
            )
        )
    return fields


def _check_closed(model: SchemaModel) -> None:
    """Raise DanglingTypeReference for any type name that does not resolve."""

    def require(type_ref: TypeRef, where: str) -> None:
        if model.kind_of(type_ref.type_name) is None:
            raise DanglingTypeReference(type_ref.type_name, where)

    for obj in model.objects.values():
        for f in obj.fields:
            require(f.type, f"{obj.name}.{f.name}")
            for arg in f.args:
                require(arg.type, f"{obj.name}.{f.name}({arg.name})")
        for possible in obj.possible_types:
            if possible not in model.objects:
                raise DanglingTypeReference(possible, f"{obj.name} possible types")
    for name, fields in model.input_objects.items():
        for arg in fields:
            require(arg.type, f"{name}.{arg.name}")


def parse_introspection(doc: Mapping[str, Any]) -> SchemaModel:
    """
    Parse a standard introspection result into a SchemaModel.

    Args:
        doc: Either the full response `{"data": {"__schema": ...}}` or the
             bare `{"__schema": ...}` object.

    Returns:
        SchemaModel with a closed reference graph.

    Raises:
        MalformedIntrospection: Missing `__schema`, missing kinds, bad shapes
        NoQueryRoot: The query type is absent
        DanglingTypeReference: A reference names an undefined type
    """
    schema = _locate_schema(doc)

    objects: Dict[str, ObjectSpec] = {}
    scalars = set()
    enums: Dict[str, List[str]] = {}
    input_objects: Dict[str, List[ArgSpec]] = {}

    for raw_type in schema["types"]:
        if not isinstance(raw_type, Mapping) or not raw_type.get("kind"):
            raise MalformedIntrospection(f"Type entry without kind: {raw_type!r:.80}")
        name = raw_type.get("name")
        if not name:
            raise MalformedIntrospection("Type entry without name")
        try:
            kind = TypeKind(raw_type["kind"])
        except ValueError as e:
            raise MalformedIntrospection(f"Unknown kind for type {name}: {raw_type['kind']}") from e

        try:
            if kind == TypeKind.SCALAR:
                scalars.add(name)
            elif kind == TypeKind.ENUM:
                enums[name] = [v["name"] for v in raw_type.get("enumValues") or []]
            elif kind == TypeKind.INPUT_OBJECT:
                input_objects[name] = [
                    _parse_input_value(v, name) for v in raw_type.get("inputFields") or []
                ]
            elif kind in COMPOSITE_KINDS:
                objects[name] = ObjectSpec(
                    name=name,
                    kind=kind,
                    fields=_parse_fields(raw_type),
                    possible_types=[p["name"] for p in raw_type.get("possibleTypes") or []],
                )
            else:
                raise MalformedIntrospection(f"Named type {name} cannot have kind {kind.value}")
        except ValidationError as e:
            raise MalformedIntrospection(f"Invalid definition of type {name}: {e}") from e

    # Built-in scalars are implicitly defined even when a document omits them.
    scalars.update(BUILTIN_SCALARS)

    query_root = (schema.get("queryType") or {}).get("name")
    if not query_root or query_root not in objects:
        raise NoQueryRoot(f"Query root type {query_root!r} is not defined")
    mutation_root = (schema.get("mutationType") or {}).get("name")
    if mutation_root and mutation_root not in objects:
        raise DanglingTypeReference(mutation_root, "mutationType")

    model = SchemaModel(
        query_root=query_root,
        mutation_root=mutation_root,
        objects=objects,
        scalars=frozenset(scalars),
        enums=enums,
        input_objects=input_objects,
    )
    _check_closed(model)

    logger.info(
        f"Parsed schema: {len(objects)} composite types, {len(enums)} enums, "
        f"{len(input_objects)} input objects (query root {query_root}, "
        f"mutation root {mutation_root})"
    )
    return model


def load_introspection(path: Union[str, Path]) -> SchemaModel:
    """Read an introspection JSON file and parse it."""
    path = Path(path)
    logger.info(f"Loading introspection from {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedIntrospection(f"{path} is not valid JSON: {e}") from e
    return parse_introspection(doc)


def valid_query_roots(schema: SchemaModel, include_mutations: bool = False) -> List[FieldSpec]:
    """
    Return the fields a query can start from.

    Args:
        schema: Parsed schema
        include_mutations: Also return the mutation root's fields

    Raises:
        NoQueryRoot: If the query root type is missing
    """
    return [field for _, field in root_candidates(schema, include_mutations)]


def root_candidates(schema: SchemaModel, include_mutations: bool = False) -> List[Tuple[str, FieldSpec]]:
    """Root fields paired with the operation type that declares them."""
    if schema.query_root not in schema.objects:
        raise NoQueryRoot(f"Query root type {schema.query_root!r} is not defined")
    candidates = [(schema.query_root, f) for f in schema.objects[schema.query_root].fields]
    if include_mutations and schema.mutation_root:
        candidates.extend(
            (schema.mutation_root, f) for f in schema.objects[schema.mutation_root].fields
        )
    return candidates


# ---------------------------------------------------------------------------
# Response specifications
# ---------------------------------------------------------------------------


class ResponseSpec(BaseModel):
    """Shape that returned JSON for one named type must conform to."""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: TypeKind
    fields: Dict[str, TypeRef] = Field(default_factory=dict)
    possible_types: Tuple[str, ...] = ()
    enum_values: Tuple[str, ...] = ()


class Violation(BaseModel):
    """A single conformance failure located by a JSON path."""

    model_config = ConfigDict(frozen=True)

    path: str
    message: str


def derive_response_specs(schema: SchemaModel) -> Dict[str, ResponseSpec]:
    """
    Derive one ResponseSpec per named output type.

    Object, interface and union types get field maps; scalars and enums get
    leaf specs so that validation needs nothing but the returned mapping.
    """
    specs: Dict[str, ResponseSpec] = {}
    for name in sorted(schema.objects):
        obj = schema.objects[name]
        specs[name] = ResponseSpec(
            name=name,
            kind=obj.kind,
            fields={f.name: f.type for f in obj.fields},
            possible_types=tuple(obj.possible_types),
        )
    for name in sorted(schema.enums):
        specs[name] = ResponseSpec(
            name=name, kind=TypeKind.ENUM, enum_values=tuple(schema.enums[name])
        )
    for name in sorted(schema.scalars):
        specs[name] = ResponseSpec(name=name, kind=TypeKind.SCALAR)
    return specs


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class ConformanceChecker:
    """
    Validates response data against derived response specs.

    Scalars are checked by JSON type (String → string, Int → integer,
    Float → number, Boolean → boolean, ID → string or integer). `null`
    passes unless the type is non-null. When a selection is given, only
    the selected fields may appear; in strict mode every selected field
    must also be present, IDs must be strings and custom scalars must be
    strings.
    """

    def __init__(self, specs: Mapping[str, ResponseSpec], strict: bool = False):
        self.specs = specs
        self.strict = strict

    def check(
        self,
        type_name: str,
        value: Any,
        path: str = "",
        selection: Optional[Sequence[Any]] = None,
    ) -> List[Violation]:
        """Validate `value` as an instance of the named type."""
        violations: List[Violation] = []
        self._check_named(type_name, value, path, selection, violations)
        return violations

    def check_payload(self, data: Any, tree: Any) -> List[Violation]:
        """
        Validate a response `data` object against the query tree it answers.

        The tree's root is looked up on its containing operation type.
        """
        if data is None:
            return []
        violations: List[Violation] = []
        root_spec = self.specs.get(tree.parent_type)
        if root_spec is None:
            return [Violation(path="", message=f"Unknown root type {tree.parent_type}")]
        self._check_object(root_spec, data, "", [tree], violations)
        return violations

    def _check_ref(self, ref: TypeRef, value: Any, path: str, selection, out: List[Violation]) -> None:
        if value is None:
            if ref.is_non_null:
                out.append(Violation(path=path, message=f"null returned for non-null {ref.render()}"))
            return
        if ref.kind == TypeKind.NON_NULL:
            self._check_ref(ref.of_type, value, path, selection, out)
        elif ref.kind == TypeKind.LIST:
            if not isinstance(value, list):
                out.append(Violation(path=path, message=f"expected list for {ref.render()}, got {type(value).__name__}"))
                return
            for index, item in enumerate(value):
                self._check_ref(ref.of_type, item, f"{path}[{index}]", selection, out)
        else:
            self._check_named(ref.name, value, path, selection, out)

    def _check_named(self, type_name: str, value: Any, path: str, selection, out: List[Violation]) -> None:
        spec = self.specs.get(type_name)
        if spec is None:
            out.append(Violation(path=path, message=f"unknown type {type_name}"))
            return
        if value is None:
            return
        if spec.kind == TypeKind.SCALAR:
            message = self._scalar_mismatch(type_name, value)
            if message:
                out.append(Violation(path=path, message=message))
        elif spec.kind == TypeKind.ENUM:
            if value not in spec.enum_values:
                out.append(Violation(path=path, message=f"{value!r} is not a value of enum {type_name}"))
        else:
            self._check_object(spec, value, path, selection, out)

    def _scalar_mismatch(self, type_name: str, value: Any) -> Optional[str]:
        if type_name == "String":
            ok = isinstance(value, str)
        elif type_name == "Int":
            ok = _is_int(value)
        elif type_name == "Float":
            ok = (_is_int(value) or isinstance(value, float)) and math.isfinite(value)
        elif type_name == "Boolean":
            ok = isinstance(value, bool)
        elif type_name == "ID":
            ok = isinstance(value, str) or (not self.strict and _is_int(value))
        elif self.strict:
            ok = isinstance(value, str)
        else:
            ok = isinstance(value, (str, int, float, bool))
        if ok:
            return None
        return f"expected {type_name}, got {type(value).__name__} {value!r:.40}"

    def _check_object(self, spec: ResponseSpec, value: Any, path: str, selection, out: List[Violation]) -> None:
        if not isinstance(value, dict):
            out.append(Violation(path=path, message=f"expected object {spec.name}, got {type(value).__name__}"))
            return

        concrete = spec
        if spec.kind != TypeKind.OBJECT:
            typename = value.get("__typename")
            if typename is not None:
                if typename not in spec.possible_types:
                    out.append(Violation(
                        path=_join(path, "__typename"),
                        message=f"{typename!r} is not a possible type of {spec.name}",
                    ))
                    return
                concrete = self.specs[typename]

        if selection is None:
            selected = None
        else:
            selected = {}
            for child in selection:
                fragment = getattr(child, "fragment_on", None)
                if fragment is None or concrete.kind != TypeKind.OBJECT or fragment == concrete.name:
                    selected.setdefault(child.name, child)

        for key, item in value.items():
            child_path = _join(path, key)
            if key == "__typename":
                if not isinstance(item, str):
                    out.append(Violation(path=child_path, message="__typename must be a string"))
                continue
            if selected is not None and key not in selected:
                out.append(Violation(path=child_path, message=f"field {key} was not requested"))
                continue
            ref = concrete.fields.get(key) or spec.fields.get(key)
            if ref is None and concrete.kind != TypeKind.OBJECT:
                ref = self._abstract_field(concrete, key)
            if ref is None:
                out.append(Violation(path=child_path, message=f"{key} is not a field of {concrete.name}"))
                continue
            child_selection = selected[key].children if selected is not None else None
            self._check_ref(ref, item, child_path, child_selection, out)

        if self.strict and selected is not None:
            for name in selected:
                if name not in value:
                    out.append(Violation(path=_join(path, name), message=f"requested field {name} is missing"))

    def _abstract_field(self, spec: ResponseSpec, key: str) -> Optional[TypeRef]:
        for possible in spec.possible_types:
            ref = self.specs[possible].fields.get(key)
            if ref is not None:
                return ref
        return None
