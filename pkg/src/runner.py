"""
The property-based test loop.

For test i of n the runner picks a size (a linear ramp from 1 to max_size,
or a fixed size), generates a query from an RNG seeded by (seed, i),
executes it over HTTP and checks three properties:

- NO_SERVER_ERROR: no 5xx status and no transport failure
- SCHEMA_CONFORMANCE: `data` matches the schema restricted to the selection
- NO_ERRORS_SECTION: a 2xx response carries no `errors`

4xx responses are counted as client errors rather than failures. The
first failure of each property is shrunk to a smaller query that still
fails the same property.
"""

import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Set, Tuple, Union

import httpx
from graphql import get_introspection_query
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from exceptions import (
    ConfigurationError,
    MalformedIntrospection,
    PayloadShapeMismatch,
    ShrinkBudgetExceeded,
)
from query_synthesis import (
    GenNode,
    Operation,
    QueryTree,
    SynthesisConfig,
    build_tree,
    clean_flat,
    generate_flat,
    operation_of,
    query_envelope,
    serialize,
)
from schema_model import ConformanceChecker, ResponseSpec, SchemaModel, TypeKind, TypeRef, derive_response_specs
from tuple_coverage import CoverageReport, CoverageState, CoverageTuple, merge, query_tuples, response_tuples
from value_generators import CharsetMode, EnumValue, GenContext, GeneratorRegistry, derive_seed

logger = logging.getLogger(__name__)

MAX_GENERATION_ATTEMPTS = 100
# sub-selections up to this many nodes are searched exhaustively after greedy shrinking
SMALL_TREE_NODES = 6


class PropertyId(str, Enum):
    NO_SERVER_ERROR = "NO_SERVER_ERROR"
    SCHEMA_CONFORMANCE = "SCHEMA_CONFORMANCE"
    NO_ERRORS_SECTION = "NO_ERRORS_SECTION"


ALL_PROPERTIES = [PropertyId.NO_SERVER_ERROR, PropertyId.SCHEMA_CONFORMANCE, PropertyId.NO_ERRORS_SECTION]


class RunConfig(BaseModel):
    """Everything that determines a run; echoed into its report."""

    endpoint: Optional[str] = None
    num_tests: PositiveInt = 100
    max_size: PositiveInt = 100
    size_fixed: Optional[int] = Field(default=None, ge=0)
    max_fields: PositiveInt = 2
    max_iterations: PositiveInt = 5
    seed: int = Field(default=0, ge=-(2**63), lt=2**64)
    include_mutations: bool = False
    charset_mode: CharsetMode = CharsetMode.ALPHANUMERIC
    enabled_properties: List[PropertyId] = Field(default_factory=lambda: list(ALL_PROPERTIES))
    headers: Dict[str, str] = Field(default_factory=dict)
    timeout: PositiveFloat = 10.0
    workers: PositiveInt = 1
    strict: bool = False
    include_roots: bool = True
    filters: List[CoverageTuple] = Field(default_factory=list)
    shrink_budget: PositiveInt = 200

    @field_validator("enabled_properties")
    @classmethod
    def _normalize_properties(cls, value: List[PropertyId]) -> List[PropertyId]:
        if not value:
            raise ValueError("at least one property must be enabled")
        return [p for p in ALL_PROPERTIES if p in set(value)]

    @field_validator("filters")
    @classmethod
    def _sort_filters(cls, value: List[CoverageTuple]) -> List[CoverageTuple]:
        return sorted(set(value), key=CoverageTuple.sort_key)

    def size_for(self, index: int) -> int:
        """Size of test `index` (1-based)."""
        if self.size_fixed is not None:
            return self.size_fixed
        return max(1, -(-index * self.max_size // self.num_tests))

    def synthesis(self, size: int) -> SynthesisConfig:
        return SynthesisConfig(
            max_fields=self.max_fields,
            max_iterations=self.max_iterations,
            size=size,
            include_mutations=self.include_mutations,
        )

    def coverage_state(self, schema: SchemaModel) -> CoverageState:
        return CoverageState.for_schema(schema, self.filters, self.include_roots, self.include_mutations)


class ExecutionResult(BaseModel):
    status_code: Optional[int] = None
    body: Optional[Dict[str, Any]] = None
    latency: float = 0.0
    transport_error: Optional[str] = None

    @model_validator(mode="after")
    def _exclusive(self) -> "ExecutionResult":
        if self.transport_error is not None and (self.body is not None or self.status_code is not None):
            raise ValueError("a transport error carries no status or body")
        return self

    @property
    def is_client_error(self) -> bool:
        return self.status_code is not None and 400 <= self.status_code < 500


class PropertyVerdict(BaseModel):
    property_id: PropertyId
    passed: bool
    detail: str = ""
    path: Optional[str] = None

    @model_validator(mode="after")
    def _detail_on_failure(self) -> "PropertyVerdict":
        if not self.passed and not self.detail:
            raise ValueError("failed verdicts need a detail")
        return self


class GeneratedCase(BaseModel):
    """One generated test input before execution."""

    index: int
    size: int
    nodes: List[GenNode]
    tree: QueryTree
    operation: Operation
    query: str


class QueryRecord(BaseModel):
    index: int
    size: int
    query: str
    outcome: str
    status_code: Optional[int] = None
    transport_error: Optional[str] = None
    verdicts: List[PropertyVerdict] = Field(default_factory=list)
    tuples: List[CoverageTuple] = Field(default_factory=list)
    response_tuples: List[CoverageTuple] = Field(default_factory=list)
    latency: float = 0.0


class FailureRecord(BaseModel):
    property_id: PropertyId
    index: int
    size: int
    detail: str
    path: Optional[str] = None
    query: str
    original_nodes: int
    shrunk_query: Optional[str] = None
    shrunk_nodes: Optional[int] = None
    shrink_executions: int = 0
    shrink_exhausted: bool = False
    repro_file: Optional[str] = None


class Counts(BaseModel):
    passed: int = 0
    failed: int = 0
    client_errors: int = 0

    @property
    def executed(self) -> int:
        return self.passed + self.failed + self.client_errors

    def tally(self, outcome: str) -> None:
        if outcome == "passed":
            self.passed += 1
        elif outcome == "failed":
            self.failed += 1
        elif outcome == "client_error":
            self.client_errors += 1
        else:
            raise ValueError(f"Unknown outcome {outcome!r}")


class TestReport(BaseModel):
    __test__ = False

    config: RunConfig
    counts: Counts = Field(default_factory=Counts)
    skipped: int = 0
    records: List[QueryRecord] = Field(default_factory=list)
    failures: List[FailureRecord] = Field(default_factory=list)
    coverage: CoverageReport
    response_coverage: CoverageReport
    # front-end settings that shaped the run (schema source, recipes), echoed by the CLI
    cli: Optional[Dict[str, Any]] = None

    @property
    def has_failures(self) -> bool:
        return self.counts.failed > 0

    def query_log(self) -> str:
        return "\n\n".join(record.query for record in self.records)

    def canonical_json(self) -> str:
        """Report JSON without latencies; identical for identical runs."""
        return self.model_dump_json(indent=2, exclude={"records": {"__all__": {"latency"}}})


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_case(
    schema: SchemaModel,
    cfg: RunConfig,
    registry: GeneratorRegistry,
    index: int,
) -> Optional[GeneratedCase]:
    """
    Generate test `index` from its own RNG stream.

    Regenerates from the same stream when cleaning empties the query and
    gives up after MAX_GENERATION_ATTEMPTS.
    """
    size = cfg.size_for(index)
    ctx = GenContext(random.Random(derive_seed(cfg.seed, index)), size, cfg.charset_mode)
    synthesis = cfg.synthesis(size)
    for attempt in range(1, MAX_GENERATION_ATTEMPTS + 1):
        nodes = clean_flat(generate_flat(schema, synthesis, registry, ctx, cfg.strict))
        if not nodes:
            continue
        tree = build_tree(nodes)
        operation = operation_of(tree, schema)
        if attempt > 1:
            logger.debug(f"Test {index}: usable query after {attempt} attempts")
        return GeneratedCase(
            index=index,
            size=size,
            nodes=nodes,
            tree=tree,
            operation=operation,
            query=serialize(tree, operation),
        )
    logger.warning(f"Test {index}: no usable query after {MAX_GENERATION_ATTEMPTS} attempts, skipping")
    return None


def generate_cases(schema: SchemaModel, cfg: RunConfig, registry: GeneratorRegistry) -> List[GeneratedCase]:
    """Generate all test inputs of a run without executing them."""
    cases = []
    for index in range(1, cfg.num_tests + 1):
        case = generate_case(schema, cfg, registry, index)
        if case is not None:
            cases.append(case)
    return cases


# ---------------------------------------------------------------------------
# Execution and properties
# ---------------------------------------------------------------------------


def make_client(cfg: RunConfig, transport: Optional[httpx.BaseTransport] = None) -> httpx.Client:
    return httpx.Client(headers=cfg.headers, timeout=cfg.timeout, transport=transport)


def validate_endpoint(endpoint: str) -> httpx.URL:
    """
    Parse an endpoint URL the way the transport will.

    Raises:
        ConfigurationError: Unparseable URL, non-HTTP scheme or a host
            that cannot be IDNA-encoded (empty or over-long labels)
    """
    try:
        url = httpx.URL(endpoint)
        if url.scheme not in ("http", "https") or not url.host:
            raise ConfigurationError(f"Endpoint {endpoint!r} is not an absolute http(s) URL")
        url.host.encode("idna")
    except (httpx.InvalidURL, ValueError) as e:
        raise ConfigurationError(f"Invalid endpoint {endpoint!r}: {e}") from e
    return url


def execute(query_text: str, cfg: RunConfig, client: Optional[httpx.Client] = None) -> ExecutionResult:
    """
    POST a query to the endpoint and capture status, body and latency.

    Transport failures are returned in `transport_error`, never raised.
    """
    if not cfg.endpoint:
        raise ConfigurationError("No endpoint configured")
    owns_client = client is None
    client = client or make_client(cfg)
    start = time.perf_counter()
    try:
        response = client.post(
            cfg.endpoint,
            json=query_envelope(query_text),
            headers=cfg.headers,
            timeout=cfg.timeout,
        )
    # InvalidURL is not an HTTPError; over-long host labels fail IDNA encoding with UnicodeError
    except (httpx.HTTPError, httpx.InvalidURL, ValueError) as e:
        logger.warning(f"Transport error for {cfg.endpoint}: {e!r}")
        return ExecutionResult(latency=time.perf_counter() - start, transport_error=f"{type(e).__name__}: {e}")
    finally:
        if owns_client:
            client.close()
    latency = time.perf_counter() - start

    try:
        body = response.json()
    except ValueError:
        body = None
    if not isinstance(body, dict):
        body = None
    logger.debug(f"HTTP {response.status_code} in {latency * 1000:.1f} ms")
    return ExecutionResult(status_code=response.status_code, body=body, latency=latency)


def check_properties(
    result: ExecutionResult,
    tree: QueryTree,
    specs: Mapping[str, ResponseSpec],
    enabled: Union[Set[PropertyId], List[PropertyId]],
    strict: bool = False,
) -> List[PropertyVerdict]:
    """Evaluate the enabled properties on one execution result."""
    verdicts = []
    enabled = set(enabled)

    if PropertyId.NO_SERVER_ERROR in enabled:
        if result.transport_error is not None:
            verdicts.append(PropertyVerdict(
                property_id=PropertyId.NO_SERVER_ERROR, passed=False,
                detail=f"transport error: {result.transport_error}",
            ))
        elif result.status_code >= 500:
            verdicts.append(PropertyVerdict(
                property_id=PropertyId.NO_SERVER_ERROR, passed=False,
                detail=f"HTTP {result.status_code}",
            ))
        else:
            verdicts.append(PropertyVerdict(property_id=PropertyId.NO_SERVER_ERROR, passed=True))

    if PropertyId.SCHEMA_CONFORMANCE in enabled:
        verdicts.append(_check_conformance(result, tree, specs, strict))

    if PropertyId.NO_ERRORS_SECTION in enabled:
        errors = (result.body or {}).get("errors")
        success = result.status_code is not None and 200 <= result.status_code < 300
        if success and isinstance(errors, list) and errors:
            first = errors[0] if isinstance(errors[0], dict) else {}
            path = first.get("path")
            verdicts.append(PropertyVerdict(
                property_id=PropertyId.NO_ERRORS_SECTION, passed=False,
                detail=f"{len(errors)} error(s) with HTTP {result.status_code}: {first.get('message', errors[0])}",
                path=".".join(str(p) for p in path) if isinstance(path, list) else None,
            ))
        else:
            verdicts.append(PropertyVerdict(property_id=PropertyId.NO_ERRORS_SECTION, passed=True))

    return verdicts


def _check_conformance(
    result: ExecutionResult,
    tree: QueryTree,
    specs: Mapping[str, ResponseSpec],
    strict: bool,
) -> PropertyVerdict:
    prop = PropertyId.SCHEMA_CONFORMANCE
    if result.transport_error is not None or result.is_client_error:
        return PropertyVerdict(property_id=prop, passed=True, detail="not evaluated")
    if result.body is None:
        return PropertyVerdict(property_id=prop, passed=False, detail="response body is not a JSON object")
    violations = ConformanceChecker(specs, strict).check_payload(result.body.get("data"), tree)
    if not violations:
        return PropertyVerdict(property_id=prop, passed=True)
    first = violations[0]
    extra = f" (+{len(violations) - 1} more)" if len(violations) > 1 else ""
    return PropertyVerdict(property_id=prop, passed=False, detail=f"{first.message}{extra}", path=first.path)


def _outcome(result: ExecutionResult, verdicts: List[PropertyVerdict]) -> str:
    if any(not v.passed for v in verdicts):
        return "failed"
    if result.is_client_error:
        return "client_error"
    return "passed"


# ---------------------------------------------------------------------------
# Shrinking
# ---------------------------------------------------------------------------

NodePath = Tuple[int, ...]


def _paths(tree: QueryTree, prefix: NodePath = ()) -> Iterator[NodePath]:
    yield prefix
    for i, child in enumerate(tree.children):
        yield from _paths(child, prefix + (i,))


def _node_at(tree: QueryTree, path: NodePath) -> QueryTree:
    for i in path:
        tree = tree.children[i]
    return tree


def _replace(tree: QueryTree, path: NodePath, node: Optional[QueryTree]) -> QueryTree:
    """Copy of `tree` with the node at `path` replaced, or removed when node is None."""
    if not path:
        return node
    children = list(tree.children)
    head, rest = path[0], path[1:]
    if not rest and node is None:
        del children[head]
    else:
        children[head] = _replace(children[head], rest, node)
    return tree.model_copy(update={"children": children})


def _subselections(tree: QueryTree, max_nodes: int) -> List[QueryTree]:
    """Every valid sub-selection of `tree` that keeps its root and has at most `max_nodes` nodes."""
    if max_nodes < 1:
        return []
    if not tree.children:
        return [tree]
    combos: List[Tuple[int, List[QueryTree]]] = [(0, [])]
    for child in tree.children:
        options = [(option.node_count(), option) for option in _subselections(child, max_nodes - 1)]
        combos += [
            (size + count, chosen + [option])
            for size, chosen in combos
            for count, option in options
            if size + count <= max_nodes - 1
        ]
    return [tree.model_copy(update={"children": chosen}) for _, chosen in combos if chosen]


def minimal_value(ref: TypeRef, schema: SchemaModel) -> Any:
    """The simplest value of a type: "", 0, 0.0, false, [], the first enum value."""
    if ref.kind == TypeKind.NON_NULL:
        return minimal_value(ref.of_type, schema)
    if ref.kind == TypeKind.LIST:
        return []
    kind = schema.kind_of(ref.name)
    if kind == TypeKind.ENUM:
        return EnumValue(schema.enums[ref.name][0])
    if kind == TypeKind.INPUT_OBJECT:
        return {
            spec.name: minimal_value(spec.type, schema)
            for spec in schema.input_objects[ref.name]
            if spec.required
        }
    return {"Int": 0, "Float": 0.0, "Boolean": False}.get(ref.name, "")


class Shrinker:
    """
    Greedy shrinker for one failing query and one property.

    Steps, repeated until none applies: drop the highest generation,
    remove a non-root subtree, drop an optional argument, replace an
    argument with its minimal value. Each candidate is re-executed and
    kept only if it still fails the same property.

    Greedy removal can settle on a longer failing path when a shorter one
    exists, so the original query's sub-selections of at most
    SMALL_TREE_NODES nodes that are smaller than the greedy result are
    then tried smallest first.
    """

    def __init__(
        self,
        schema: SchemaModel,
        specs: Mapping[str, ResponseSpec],
        run_query: Callable[[str], ExecutionResult],
        property_id: PropertyId,
        budget: int = 200,
        strict: bool = False,
    ):
        self.schema = schema
        self.specs = specs
        self.run_query = run_query
        self.property_id = property_id
        self.budget = budget
        self.strict = strict
        self.executions = 0
        self.best: Optional[QueryTree] = None

    def fails(self, tree: QueryTree) -> bool:
        if self.executions >= self.budget:
            raise ShrinkBudgetExceeded(f"Shrinking used all {self.budget} executions")
        self.executions += 1
        result = self.run_query(serialize(tree, operation_of(tree, self.schema)))
        verdicts = check_properties(result, tree, self.specs, {self.property_id}, self.strict)
        return any(not v.passed for v in verdicts)

    def shrink(self, nodes: List[GenNode], tree: QueryTree) -> Tuple[QueryTree, bool]:
        """Return the smallest failing tree found and whether the budget ran out."""
        self.best = tree
        try:
            self._truncate_generations(nodes, tree)
            self._greedy()
            self._search_small(tree)
        except ShrinkBudgetExceeded as e:
            logger.warning(f"{e}; keeping best query so far ({self.best.node_count()} nodes)")
            return self.best, True
        return self.best, False

    def _truncate_generations(self, nodes: List[GenNode], tree: QueryTree) -> None:
        while True:
            top = max(n.generation for n in nodes)
            if top == 0:
                return
            truncated = clean_flat([n for n in nodes if n.generation < top])
            if not truncated:
                return
            candidate = build_tree(truncated)
            if not self.fails(candidate):
                return
            nodes, self.best = truncated, candidate

    def _greedy(self) -> None:
        improved = True
        while improved:
            improved = False
            for candidate in self._candidates(self.best):
                if self.fails(candidate):
                    self.best = candidate
                    improved = True
                    break

    def _search_small(self, original: QueryTree) -> None:
        limit = min(self.best.node_count() - 1, SMALL_TREE_NODES)
        for candidate in sorted(_subselections(original, limit), key=QueryTree.node_count):
            if self.fails(candidate):
                self.best = candidate
                self._greedy()
                return

    def _candidates(self, tree: QueryTree) -> Iterator[QueryTree]:
        paths = list(_paths(tree))
        for path in paths[1:]:
            parent = _node_at(tree, path[:-1])
            if len(parent.children) > 1:
                yield _replace(tree, path, None)

        for path in paths:
            node = _node_at(tree, path)
            field = self.schema.field(node.parent_type, node.name)
            if field is None:
                continue
            for arg in field.args:
                if arg.name in node.args and not arg.required:
                    args = {k: v for k, v in node.args.items() if k != arg.name}
                    yield _replace(tree, path, node.model_copy(update={"args": args}))

        for path in paths:
            node = _node_at(tree, path)
            field = self.schema.field(node.parent_type, node.name)
            if field is None:
                continue
            for arg in field.args:
                if arg.name not in node.args:
                    continue
                smallest = minimal_value(arg.type, self.schema)
                current = node.args[arg.name]
                if current != smallest or type(current) is not type(smallest):
                    args = {**node.args, arg.name: smallest}
                    yield _replace(tree, path, node.model_copy(update={"args": args}))


def shrink(
    case: GeneratedCase,
    property_id: PropertyId,
    schema: SchemaModel,
    cfg: RunConfig,
    client: Optional[httpx.Client] = None,
) -> Tuple[QueryTree, int, bool]:
    """
    Shrink a failing case against the live endpoint.

    Returns:
        (smallest failing tree, executions used, whether the budget ran out)
    """
    shrinker = Shrinker(
        schema,
        derive_response_specs(schema),
        lambda text: execute(text, cfg, client),
        property_id,
        budget=cfg.shrink_budget,
        strict=cfg.strict,
    )
    tree, exhausted = shrinker.shrink(case.nodes, case.tree)
    logger.info(
        f"Shrunk {property_id.value} failure of test {case.index} from "
        f"{case.tree.node_count()} to {tree.node_count()} nodes in {shrinker.executions} executions"
    )
    return tree, shrinker.executions, exhausted


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def run(
    cfg: RunConfig,
    schema: SchemaModel,
    registry: Optional[GeneratorRegistry] = None,
    client: Optional[httpx.Client] = None,
) -> TestReport:
    """
    Generate, execute and check `cfg.num_tests` queries.

    Args:
        cfg: Run configuration (endpoint required)
        schema: Schema of the endpoint
        registry: Custom argument generators
        client: httpx client to send requests with; created from cfg if omitted

    Returns:
        The run's report; reproducible from (seed, cfg) apart from latencies.

    Raises:
        EmptySchema: The schema has no root fields
        ConfigurationError: No endpoint configured, or it is not a valid URL
    """
    if not cfg.endpoint:
        raise ConfigurationError("A run needs an endpoint")
    validate_endpoint(cfg.endpoint)
    registry = registry or GeneratorRegistry()
    specs = derive_response_specs(schema)
    logger.info(
        f"Starting run: {cfg.num_tests} tests against {cfg.endpoint} "
        f"(seed {cfg.seed}, max_fields {cfg.max_fields}, charset {cfg.charset_mode.value})"
    )

    cases = generate_cases(schema, cfg, registry)
    owns_client = client is None
    client = client or make_client(cfg)
    try:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda case: execute(case.query, cfg, client), cases))

        query_cov = cfg.coverage_state(schema)
        response_cov = cfg.coverage_state(schema)
        report = TestReport(
            config=cfg,
            skipped=cfg.num_tests - len(cases),
            coverage=CoverageReport.from_state(query_cov),
            response_coverage=CoverageReport.from_state(response_cov),
        )
        shrunk: Set[PropertyId] = set()

        for case, result in zip(cases, results):
            verdicts = check_properties(result, case.tree, specs, cfg.enabled_properties, cfg.strict)
            outcome = _outcome(result, verdicts)
            report.counts.tally(outcome)

            covered = query_tuples(case.tree, schema, cfg.include_roots)
            query_cov.add(covered)
            returned = _response_tuples(result, case, schema, cfg.include_roots)
            response_cov.add(returned)

            report.records.append(QueryRecord(
                index=case.index,
                size=case.size,
                query=case.query,
                outcome=outcome,
                status_code=result.status_code,
                transport_error=result.transport_error,
                verdicts=verdicts,
                tuples=sorted(covered, key=CoverageTuple.sort_key),
                response_tuples=sorted(returned, key=CoverageTuple.sort_key),
                latency=result.latency,
            ))

            for verdict in verdicts:
                if verdict.passed:
                    continue
                failure = FailureRecord(
                    property_id=verdict.property_id,
                    index=case.index,
                    size=case.size,
                    detail=verdict.detail,
                    path=verdict.path,
                    query=case.query,
                    original_nodes=case.tree.node_count(),
                )
                if verdict.property_id not in shrunk:
                    shrunk.add(verdict.property_id)
                    logger.info(f"Test {case.index} failed {verdict.property_id.value}: {verdict.detail}")
                    tree, executions, exhausted = shrink(case, verdict.property_id, schema, cfg, client)
                    failure.shrunk_query = serialize(tree, operation_of(tree, schema))
                    failure.shrunk_nodes = tree.node_count()
                    failure.shrink_executions = executions
                    failure.shrink_exhausted = exhausted
                report.failures.append(failure)
    finally:
        if owns_client:
            client.close()

    report.coverage = CoverageReport.from_state(query_cov)
    report.response_coverage = CoverageReport.from_state(response_cov)
    logger.info(
        f"Run finished: {report.counts.passed} passed, {report.counts.failed} failed, "
        f"{report.counts.client_errors} client errors, coverage {report.coverage.percent:.2%}"
    )
    return report


def _response_tuples(
    result: ExecutionResult,
    case: GeneratedCase,
    schema: SchemaModel,
    include_roots: bool,
):
    data = (result.body or {}).get("data")
    if not isinstance(data, dict):
        return frozenset()
    try:
        return response_tuples(data, case.tree, schema, include_roots)
    except PayloadShapeMismatch as e:
        logger.warning(f"Test {case.index}: {e}")
        return frozenset()


def coverage_state_of(report: TestReport, schema: SchemaModel, responses: bool = False) -> CoverageState:
    """Recount a report's coverage from its query records."""
    state = report.config.coverage_state(schema)
    for record in report.records:
        state.add(record.response_tuples if responses else record.tuples)
    return state


def run_campaign(
    cfg: RunConfig,
    schema: SchemaModel,
    registry: Optional[GeneratorRegistry] = None,
    repeat: int = 1,
    client: Optional[httpx.Client] = None,
) -> Tuple[List[TestReport], CoverageReport]:
    """Run `repeat` times with seeds seed, seed+1, ... and merge query coverage."""
    if repeat < 1:
        raise ConfigurationError(f"repeat must be positive, got {repeat}")
    reports = []
    merged: Optional[CoverageState] = None
    for offset in range(repeat):
        report = run(cfg.model_copy(update={"seed": cfg.seed + offset}), schema, registry, client)
        reports.append(report)
        state = coverage_state_of(report, schema)
        merged = state if merged is None else merge(merged, state)
    logger.info(f"Campaign of {repeat} runs reached {float(merged.percent()):.2%} aggregated coverage")
    return reports, CoverageReport.from_state(merged)


def generated_coverage(cases: List[GeneratedCase], schema: SchemaModel, cfg: RunConfig) -> CoverageState:
    state = cfg.coverage_state(schema)
    for case in cases:
        state.add(query_tuples(case.tree, schema, cfg.include_roots))
    return state


def runs_to_full_coverage(
    cfg: RunConfig,
    schema: SchemaModel,
    registry: Optional[GeneratorRegistry] = None,
    max_runs: int = 30,
) -> Optional[int]:
    """
    Number of generation-only runs (seeds seed, seed+1, ...) until the
    merged query coverage reaches 100%, or None within `max_runs`.
    """
    registry = registry or GeneratorRegistry()
    merged = cfg.coverage_state(schema)
    for offset in range(max_runs):
        run_cfg = cfg.model_copy(update={"seed": cfg.seed + offset})
        merged = merge(merged, generated_coverage(generate_cases(schema, run_cfg, registry), schema, cfg))
        if merged.percent() == 1:
            return offset + 1
    return None


def fetch_introspection(
    endpoint: str,
    headers: Optional[Dict[str, str]] = None,
    timeout: float = 10.0,
    client: Optional[httpx.Client] = None,
) -> Dict[str, Any]:
    """
    Fetch the endpoint's schema with the standard introspection query.

    Raises:
        httpx.HTTPError: Transport failure or non-2xx status
        MalformedIntrospection: The response holds no introspection data
        ConfigurationError: The endpoint is not a valid URL
    """
    validate_endpoint(endpoint)
    owns_client = client is None
    client = client or httpx.Client(timeout=timeout)
    try:
        response = client.post(
            endpoint,
            json=query_envelope(get_introspection_query()),
            headers=headers or {},
            timeout=timeout,
        )
        response.raise_for_status()
        body = response.json()
    except ValueError as e:
        raise MalformedIntrospection(f"Introspection response from {endpoint} is not JSON") from e
    finally:
        if owns_client:
            client.close()
    if not isinstance(body, dict) or not isinstance(body.get("data"), dict):
        raise MalformedIntrospection(f"Introspection response from {endpoint} has no data: {str(body)[:200]}")
    logger.info(f"Fetched introspection from {endpoint}")
    return body


def write_repro_files(report: TestReport, out_dir: Union[str, Path]) -> List[Path]:
    """Write every shrunk failure as a standalone .graphql file under `out_dir`."""
    out_dir = Path(out_dir)
    written = []
    for failure in report.failures:
        if failure.shrunk_query is None:
            continue
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{failure.property_id.value.lower()}-test{failure.index}.graphql"
        header = [
            f"# property: {failure.property_id.value}",
            f"# seed: {report.config.seed}",
            f"# test: {failure.index} (size {failure.size})",
            f"# detail: {' '.join(failure.detail.split())}",
        ]
        path.write_text("\n".join(header) + "\n" + failure.shrunk_query + "\n", encoding="utf-8")
        failure.repro_file = str(path)
        written.append(path)
    if written:
        logger.info(f"Wrote {len(written)} repro file(s) to {out_dir}")
    return written
