"""
Schema coverage over (object type, field) tuples.

A query covers the tuple [T, f] when it selects field f on an object or
interface T. The universe is every such tuple the schema declares, minus
user filters; meta fields never count. Coverage can be computed online
from generated query trees or offline from recorded queries and the
responses they produced.
"""

import csv
import io
import json
import logging
import threading
from fractions import Fraction
from pathlib import Path
from typing import Any, FrozenSet, Iterable, List, Optional, Sequence, Set, Union

from pydantic import BaseModel, ConfigDict, Field

from exceptions import ConfigurationError, PayloadShapeMismatch, UniverseMismatch
from query_synthesis import QueryTree
from schema_model import SchemaModel, TypeKind

logger = logging.getLogger(__name__)


class CoverageTuple(BaseModel):
    """A field together with the type it is selected on."""

    model_config = ConfigDict(frozen=True)

    object_type: str = Field(min_length=1)
    field: str = Field(min_length=1)

    @property
    def label(self) -> str:
        return f"{self.object_type}.{self.field}"

    def sort_key(self):
        return (self.object_type, self.field)


def _excluded(object_type: str, field: str, schema: SchemaModel, include_roots: bool) -> bool:
    if SchemaModel.is_meta(object_type) or SchemaModel.is_meta(field):
        return True
    return not include_roots and object_type in schema.root_types()


class CoverageState:
    """
    Covered tuples measured against a fixed universe.

    `add` may be called from several threads; the union is taken under a
    lock and tuples outside the universe are ignored.
    """

    def __init__(self, universe: Iterable[CoverageTuple], filters: Iterable[CoverageTuple] = ()):
        self.filters: FrozenSet[CoverageTuple] = frozenset(filters)
        self.universe: FrozenSet[CoverageTuple] = frozenset(universe) - self.filters
        self._covered: Set[CoverageTuple] = set()
        self._lock = threading.Lock()

    @classmethod
    def for_schema(
        cls,
        schema: SchemaModel,
        filters: Iterable[CoverageTuple] = (),
        include_roots: bool = True,
        include_mutations: bool = True,
    ) -> "CoverageState":
        filters = frozenset(filters)
        return cls(schema_tuples(schema, filters, include_roots, include_mutations), filters)

    @property
    def covered(self) -> FrozenSet[CoverageTuple]:
        with self._lock:
            return frozenset(self._covered)

    def add(self, tuples: Iterable[CoverageTuple]) -> int:
        """Mark tuples as covered; returns how many were new."""
        relevant = set(tuples) & self.universe
        with self._lock:
            before = len(self._covered)
            self._covered |= relevant
            return len(self._covered) - before

    def percent(self) -> Fraction:
        return coverage_percent(self)

    def uncovered(self) -> List[CoverageTuple]:
        return sorted(self.universe - self.covered, key=CoverageTuple.sort_key)


def schema_tuples(
    schema: SchemaModel,
    filters: Iterable[CoverageTuple] = (),
    include_roots: bool = True,
    include_mutations: bool = True,
) -> FrozenSet[CoverageTuple]:
    """
    The coverage universe: one tuple per field of every object and interface.

    Args:
        schema: Parsed schema
        filters: Tuples to leave out
        include_roots: Count fields of the query and mutation roots
        include_mutations: Count the mutation root at all (a run that never
                           generates mutations could not reach 100% otherwise)
    """
    filters = frozenset(filters)
    universe = set()
    for name, spec in schema.objects.items():
        if spec.kind == TypeKind.UNION:
            continue
        if not include_mutations and name == schema.mutation_root:
            continue
        for field in spec.fields:
            if _excluded(name, field.name, schema, include_roots):
                continue
            universe.add(CoverageTuple(object_type=name, field=field.name))
    return frozenset(universe - filters)


def query_tuples(tree: QueryTree, schema: SchemaModel, include_roots: bool = True) -> FrozenSet[CoverageTuple]:
    """Tuples selected by a query tree, keyed by each field's containing type."""
    tuples = set()
    for _, node in tree.walk():
        if not _excluded(node.parent_type, node.name, schema, include_roots):
            tuples.add(CoverageTuple(object_type=node.parent_type, field=node.name))
    return frozenset(tuples)


def response_tuples(
    payload: Any,
    tree: QueryTree,
    schema: SchemaModel,
    include_roots: bool = True,
) -> FrozenSet[CoverageTuple]:
    """
    Tuples for fields actually present and non-null in a response `data` object.

    A null value prunes everything below it. The result is always a subset
    of query_tuples(tree).

    Raises:
        PayloadShapeMismatch: The payload has keys the query did not select
    """
    tuples: Set[CoverageTuple] = set()

    def collect(value: Any, selection: Sequence[QueryTree], path: str) -> None:
        if value is None:
            return
        if isinstance(value, list):
            for index, item in enumerate(value):
                collect(item, selection, f"{path}[{index}]")
            return
        if not isinstance(value, dict):
            # scalar where an object was selected; conformance reports it
            return

        typename = value.get("__typename")
        by_name = {}
        for child in selection:
            if child.fragment_on is None or typename is None or child.fragment_on == typename:
                by_name.setdefault(child.name, child)

        for key, item in value.items():
            child = by_name.get(key)
            if child is None:
                raise PayloadShapeMismatch(f"Field {key!r} at {path or '<root>'} was not selected")
            if item is None:
                continue
            if not _excluded(child.parent_type, child.name, schema, include_roots):
                tuples.add(CoverageTuple(object_type=child.parent_type, field=child.name))
            if child.children:
                collect(item, child.children, f"{path}.{key}" if path else key)

    collect(payload, [tree], "")
    return frozenset(tuples)


def coverage_percent(state: CoverageState) -> Fraction:
    """|covered| / |universe|, or 1 for an empty universe."""
    if not state.universe:
        return Fraction(1)
    return Fraction(len(state.covered), len(state.universe))


def merge(a: CoverageState, b: CoverageState) -> CoverageState:
    """
    Union of two states over the same universe.

    Raises:
        UniverseMismatch: The universes differ
    """
    if a.universe != b.universe:
        raise UniverseMismatch(
            f"Cannot merge coverage over {len(a.universe)} and {len(b.universe)} tuple universes"
        )
    merged = CoverageState(a.universe, a.filters | b.filters)
    merged.add(a.covered | b.covered)
    return merged


class CoverageReport(BaseModel):
    universe_size: int
    covered_size: int
    percent: float
    uncovered: List[CoverageTuple] = Field(default_factory=list)

    @classmethod
    def from_state(cls, state: CoverageState) -> "CoverageReport":
        return cls(
            universe_size=len(state.universe),
            covered_size=len(state.covered),
            percent=float(state.percent()),
            uncovered=state.uncovered(),
        )


def tuples_csv(state: CoverageState) -> str:
    """CSV with one row per universe tuple and whether it was covered."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["object_type", "field", "covered"])
    covered = state.covered
    for item in sorted(state.universe, key=CoverageTuple.sort_key):
        writer.writerow([item.object_type, item.field, str(item in covered).lower()])
    return buffer.getvalue()


def parse_tuple(text: str) -> CoverageTuple:
    """Parse `Type.field` or `Type,field`."""
    for separator in (".", ","):
        if separator in text:
            object_type, _, field = text.strip().partition(separator)
            if object_type and field:
                return CoverageTuple(object_type=object_type.strip(), field=field.strip())
    raise ConfigurationError(f"Cannot parse coverage tuple {text!r}; expected Type.field")


def load_filters(path: Optional[Union[str, Path]]) -> FrozenSet[CoverageTuple]:
    """
    Read tuples to exclude from coverage.

    JSON files hold a list of `[type, field]` pairs or `"Type.field"`
    strings; any other file has one `Type.field` per line, `#` comments allowed.
    """
    if path is None:
        return frozenset()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            entries = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Cannot parse filter file {path}: {e}") from e
        filters = set()
        for entry in entries:
            if isinstance(entry, str):
                filters.add(parse_tuple(entry))
            elif isinstance(entry, list) and len(entry) == 2:
                filters.add(CoverageTuple(object_type=entry[0], field=entry[1]))
            else:
                raise ConfigurationError(f"Bad filter entry {entry!r} in {path}")
        result = frozenset(filters)
    else:
        lines = (line.split("#", 1)[0].strip() for line in text.splitlines())
        result = frozenset(parse_tuple(line) for line in lines if line)
    logger.info(f"Loaded {len(result)} coverage filters from {path}")
    return result
