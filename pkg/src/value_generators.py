"""
Sized, seeded generators for GraphQL argument values.

Every draw goes through a GenContext that owns a seeded random.Random, so
a (seed, size, charset) triple always replays the same values. The size
parameter bounds string lengths, integer magnitudes and list lengths;
ID tokens are capped and mostly ignore it.

Custom generators are looked up in a GeneratorRegistry: a generator for
an exact argument path ("Object.field.arg") wins over one for the type
name, which wins over the built-ins.
"""

import hashlib
import json
import logging
import random
import re
import string
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from exceptions import ConfigurationError, RecursionLimit, UnknownScalar
from schema_model import ArgSpec, SchemaModel, TypeKind, TypeRef

logger = logging.getLogger(__name__)

ALNUM = string.ascii_letters + string.digits
INT_SCALE = 1000
INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1
ID_LENGTH_CAP = 8
OPTIONAL_ARG_PROBABILITY = 0.5
MAX_INPUT_DEPTH = 8


class CharsetMode(str, Enum):
    """Character repertoire for generated strings."""

    ALPHANUMERIC = "alnum"
    FULL_BYTE = "full-byte"


class EnumValue(str):
    """A generated enum value; rendered bare instead of as a string literal."""

    __slots__ = ()


def derive_seed(seed: int, *parts: Any) -> int:
    """
    Derive an independent 64-bit seed from a base seed and a path of parts.

    Uses SHA256 so that (seed, parts) always maps to the same stream on
    every platform and Python version.
    """
    material = ":".join(str(p) for p in (seed, *parts)).encode()
    return int(hashlib.sha256(material).hexdigest()[:16], 16)


@dataclass
class GenContext:
    """Random source, size parameter and charset for one generation."""

    rng: random.Random
    size: int
    charset_mode: CharsetMode = CharsetMode.ALPHANUMERIC

    def __post_init__(self) -> None:
        if self.size < 0:
            raise ValueError(f"size must be non-negative, got {self.size}")

    @classmethod
    def from_seed(
        cls, seed: int, size: int, charset_mode: CharsetMode = CharsetMode.ALPHANUMERIC
    ) -> "GenContext":
        return cls(rng=random.Random(seed), size=size, charset_mode=charset_mode)


GeneratorFn = Callable[[GenContext], Any]


@dataclass
class GeneratorRegistry:
    """User-supplied generators keyed by type name or argument path."""

    by_type_name: Dict[str, GeneratorFn] = field(default_factory=dict)
    by_field_path: Dict[str, GeneratorFn] = field(default_factory=dict)

    def register_type(self, type_name: str, generator: GeneratorFn) -> None:
        self.by_type_name[type_name] = generator

    def register_field(self, field_path: str, generator: GeneratorFn) -> None:
        self.by_field_path[field_path] = generator

    def lookup(self, field_path: Optional[str], type_name: Optional[str]) -> Optional[GeneratorFn]:
        if field_path and field_path in self.by_field_path:
            return self.by_field_path[field_path]
        if type_name and type_name in self.by_type_name:
            return self.by_type_name[type_name]
        return None

    def merged(self, other: "GeneratorRegistry") -> "GeneratorRegistry":
        """A new registry with `other`'s entries layered over this one."""
        return GeneratorRegistry(
            by_type_name={**self.by_type_name, **other.by_type_name},
            by_field_path={**self.by_field_path, **other.by_field_path},
        )


# ---------------------------------------------------------------------------
# Scalars
# ---------------------------------------------------------------------------


def gen_string(ctx: GenContext) -> str:
    length = ctx.rng.randint(0, ctx.size)
    if ctx.charset_mode == CharsetMode.FULL_BYTE:
        return "".join(chr(ctx.rng.randint(0, 255)) for _ in range(length))
    return "".join(ctx.rng.choice(ALNUM) for _ in range(length))


def gen_int(ctx: GenContext) -> int:
    bound = min(ctx.size * INT_SCALE, INT32_MAX)
    return ctx.rng.randint(-bound, bound)


def gen_float(ctx: GenContext) -> float:
    bound = float(max(ctx.size, 1) * INT_SCALE)
    return ctx.rng.uniform(-bound, bound)


def gen_boolean(ctx: GenContext) -> bool:
    return ctx.rng.random() < 0.5


def gen_id(ctx: GenContext) -> str:
    length = ctx.rng.randint(1, max(1, min(ctx.size, ID_LENGTH_CAP)))
    return "".join(ctx.rng.choice(ALNUM) for _ in range(length))


BUILTIN_GENERATORS: Dict[str, GeneratorFn] = {
    "String": gen_string,
    "Int": gen_int,
    "Float": gen_float,
    "Boolean": gen_boolean,
    "ID": gen_id,
}


def gen_scalar(kind: str, ctx: GenContext, strict: bool = False) -> Any:
    """
    Generate a JSON scalar for a built-in or custom scalar type.

    Custom scalars fall back to the String generator unless `strict`.

    Raises:
        UnknownScalar: For a custom scalar in strict mode
    """
    generator = BUILTIN_GENERATORS.get(kind)
    if generator is None:
        if strict:
            raise UnknownScalar(f"No generator for custom scalar {kind}")
        generator = gen_string
    return generator(ctx)


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------


def gen_argument(
    arg: ArgSpec,
    registry: GeneratorRegistry,
    ctx: GenContext,
    field_path: str,
    schema: SchemaModel,
    strict: bool = False,
) -> Optional[Any]:
    """
    Generate a value for one field argument.

    Required arguments always get a value; optional ones are included with
    probability 0.5 and otherwise None is returned (argument omitted).

    Args:
        arg: Argument definition
        registry: Custom generators
        ctx: Generation context (consumed)
        field_path: "Object.field.arg" path used for registry lookups
        schema: Schema for enum values and input object definitions
        strict: Reject custom scalars without a generator

    Raises:
        RecursionLimit: Required input-object nesting exceeds the depth limit
    """
    if not arg.required and ctx.rng.random() >= OPTIONAL_ARG_PROBABILITY:
        return None
    builder = _ValueBuilder(registry, ctx, schema, strict)
    return builder.value(arg.type, field_path, depth=0, at_path=True)


class _ValueBuilder:
    def __init__(self, registry: GeneratorRegistry, ctx: GenContext, schema: SchemaModel, strict: bool):
        self.registry = registry
        self.ctx = ctx
        self.schema = schema
        self.strict = strict

    def value(self, ref: TypeRef, path: str, depth: int, at_path: bool) -> Any:
        if at_path:
            custom = self.registry.by_field_path.get(path)
            if custom is not None:
                return custom(self.ctx)

        if ref.kind == TypeKind.NON_NULL:
            return self.value(ref.of_type, path, depth, at_path=False)
        if ref.kind == TypeKind.LIST:
            if depth >= MAX_INPUT_DEPTH:
                return []
            count = self.ctx.rng.randint(0, self.ctx.size // 4 + 1)
            return [self.value(ref.of_type, path, depth, at_path=False) for _ in range(count)]

        custom = self.registry.by_type_name.get(ref.name)
        if custom is not None:
            return custom(self.ctx)

        kind = self.schema.kind_of(ref.name)
        if kind == TypeKind.ENUM:
            return EnumValue(self.ctx.rng.choice(self.schema.enums[ref.name]))
        if kind == TypeKind.INPUT_OBJECT:
            return self.input_object(ref.name, path, depth + 1)
        return gen_scalar(ref.name, self.ctx, self.strict)

    def input_object(self, type_name: str, path: str, depth: int) -> Dict[str, Any]:
        if depth > MAX_INPUT_DEPTH:
            raise RecursionLimit(
                f"Input object {type_name} at {path} nests deeper than {MAX_INPUT_DEPTH}"
            )
        result: Dict[str, Any] = {}
        for spec in self.schema.input_objects[type_name]:
            sub_path = f"{path}.{spec.name}"
            if spec.required:
                result[spec.name] = self.value(spec.type, sub_path, depth, at_path=True)
            elif depth < MAX_INPUT_DEPTH and self.ctx.rng.random() < OPTIONAL_ARG_PROBABILITY:
                result[spec.name] = self.value(spec.type, sub_path, depth, at_path=True)
        return result


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------

_PLACEHOLDER = re.compile(r"<(int|choice:[^<>]*|alnum:[^<>]*)>")


def compile_recipe(pattern: str) -> GeneratorFn:
    """
    Compile a pattern string into a generator.

    Placeholders:
        <int>          non-negative integer scaled by size
        <choice:a|b|c> one of the listed options
        <alnum:n>      n random alphanumeric characters

    Example:
        compile_recipe("gid://gitlab/<choice:Issue|Project|Group>/<int>")
    """
    pieces: List[Tuple[str, Any]] = []
    position = 0
    for match in _PLACEHOLDER.finditer(pattern):
        if match.start() > position:
            pieces.append(("literal", pattern[position:match.start()]))
        token = match.group(1)
        if token == "int":
            pieces.append(("int", None))
        elif token.startswith("choice:"):
            options = [o for o in token[len("choice:"):].split("|") if o]
            if not options:
                raise ConfigurationError(f"Empty <choice:> placeholder in recipe {pattern!r}")
            pieces.append(("choice", options))
        else:
            count = token[len("alnum:"):]
            if not count.isdigit():
                raise ConfigurationError(f"<alnum:n> needs a number in recipe {pattern!r}")
            pieces.append(("alnum", int(count)))
        position = match.end()
    if position < len(pattern):
        pieces.append(("literal", pattern[position:]))

    def generate(ctx: GenContext) -> str:
        out = []
        for kind, data in pieces:
            if kind == "literal":
                out.append(data)
            elif kind == "int":
                out.append(str(ctx.rng.randint(0, max(ctx.size, 1) * INT_SCALE)))
            elif kind == "choice":
                out.append(ctx.rng.choice(data))
            else:
                out.append("".join(ctx.rng.choice(ALNUM) for _ in range(data)))
        return "".join(out)

    generate.__name__ = f"recipe({pattern})"
    return generate


def registry_from_mapping(config: Dict[str, Any]) -> GeneratorRegistry:
    """Build a registry from `{"types": {...}, "fields": {...}}` recipe tables."""
    unknown = set(config) - {"types", "fields"}
    if unknown:
        raise ConfigurationError(f"Unknown generator sections: {sorted(unknown)}")
    registry = GeneratorRegistry()
    for type_name, pattern in (config.get("types") or {}).items():
        registry.register_type(type_name, compile_recipe(pattern))
    for field_path, pattern in (config.get("fields") or {}).items():
        if field_path.count(".") < 2:
            raise ConfigurationError(f"Field path {field_path!r} must look like Object.field.arg")
        registry.register_field(field_path, compile_recipe(pattern))
    return registry


def load_registry(path: Union[str, Path]) -> GeneratorRegistry:
    """Load recipe tables from a TOML or JSON file."""
    path = Path(path)
    try:
        if path.suffix == ".json":
            config = json.loads(path.read_text(encoding="utf-8"))
        else:
            config = tomllib.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"Cannot parse generator file {path}: {e}") from e
    registry = registry_from_mapping(config)
    logger.info(
        f"Loaded {len(registry.by_type_name)} type and "
        f"{len(registry.by_field_path)} field generators from {path}"
    )
    return registry
