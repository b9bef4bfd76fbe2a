"""
Command-line entry point.

    python src/cli.py introspect --endpoint URL --out schema.json
    python src/cli.py run --endpoint URL [--schema schema.json] --tests 1000 --out report.json
    python src/cli.py coverage --schema schema.json --corpus queries/
    python src/cli.py report report.json [more.json ...]

Run settings come from built-in defaults, then an optional --config file
(flat TOML or JSON, keys named like the long flags), then the flags.
Exit codes: 0 all properties passed, 1 at least one property failed,
2 configuration or transport error.
"""

import argparse
import json
import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import httpx
from pydantic import BaseModel, Field, ValidationError

from exceptions import ConfigurationError, GraphQLPBTError
from query_synthesis import parse_query
from runner import (
    PropertyId,
    RunConfig,
    TestReport,
    fetch_introspection,
    make_client,
    run,
    run_campaign,
    write_repro_files,
)
from schema_model import SchemaModel, load_introspection, parse_introspection
from tuple_coverage import CoverageReport, CoverageState, load_filters, merge, query_tuples, tuples_csv
from value_generators import CharsetMode, GeneratorRegistry, load_registry

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_ERROR = 2

# flag name -> RunConfig field
RUN_FLAGS = {
    "endpoint": "endpoint",
    "tests": "num_tests",
    "max-size": "max_size",
    "size-fixed": "size_fixed",
    "max-fields": "max_fields",
    "max-iterations": "max_iterations",
    "seed": "seed",
    "include-mutations": "include_mutations",
    "charset": "charset_mode",
    "properties": "enabled_properties",
    "filter-tuples": "filters",
    "include-roots": "include_roots",
    "header": "headers",
    "workers": "workers",
    "timeout": "timeout",
    "strict": "strict",
    "shrink-budget": "shrink_budget",
}
CLI_KEYS = {"schema", "generators", "fixture-recipe", "out", "repro-dir", "repeat", "merge-coverage"}


class CliConfig(BaseModel):
    """Effective configuration of one `run` invocation."""

    subcommand: str = "run"
    run: RunConfig
    schema_path: Optional[str] = None
    config_file: Optional[str] = None
    generators: Optional[str] = None
    fixture_recipe: bool = False
    out: Optional[str] = None
    repro_dir: Optional[str] = None
    repeat: int = Field(default=1, ge=1)
    merge_coverage: bool = False

    def echo(self) -> Dict[str, Any]:
        """Settings echoed into reports; output locations are left out so reruns compare byte for byte."""
        return self.model_dump(mode="json", exclude={"run", "out", "repro_dir"})


def parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def parse_headers(values: Any) -> Dict[str, str]:
    """Accept `K:V` strings (flag form) or a mapping (config file form)."""
    if isinstance(values, dict):
        return {str(k): str(v) for k, v in values.items()}
    headers = {}
    for item in values or []:
        name, sep, value = str(item).partition(":")
        if not sep or not name.strip():
            raise ConfigurationError(f"Header {item!r} must look like Name:Value")
        headers[name.strip()] = value.strip()
    return headers


def parse_properties(value: Any) -> List[PropertyId]:
    items = value.split(",") if isinstance(value, str) else list(value)
    try:
        return [PropertyId(item.strip().upper()) for item in items if item.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Unknown property in {value!r}; choose from {[p.value for p in PropertyId]}") from e


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a flat key-value config; keys may use `-` or `_`."""
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
        raw = json.loads(text) if file_path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"Cannot parse config file {path}: {e}") from e
    config = {key.replace("_", "-"): value for key, value in raw.items()}
    unknown = set(config) - set(RUN_FLAGS) - CLI_KEYS
    if unknown:
        raise ConfigurationError(f"Unknown keys in {path}: {sorted(unknown)}")
    return config


def build_cli_config(args: argparse.Namespace) -> CliConfig:
    """Layer defaults, the config file and command-line flags."""
    settings: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    for key in list(RUN_FLAGS) + sorted(CLI_KEYS):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None and value != []:
            settings[key] = value

    run_fields: Dict[str, Any] = {}
    for key, field in RUN_FLAGS.items():
        if key not in settings:
            continue
        value = settings[key]
        if key == "header":
            value = parse_headers(value)
        elif key == "properties":
            value = parse_properties(value)
        elif key == "filter-tuples":
            value = sorted(load_filters(value), key=lambda t: t.sort_key())
        elif key in ("include-roots", "include-mutations", "strict") and isinstance(value, str):
            try:
                value = parse_bool(value)
            except argparse.ArgumentTypeError as e:
                raise ConfigurationError(f"{key}: {e}") from e
        run_fields[field] = value

    return CliConfig(
        run=RunConfig(**run_fields),
        schema_path=settings.get("schema"),
        config_file=args.config,
        generators=settings.get("generators"),
        fixture_recipe=bool(settings.get("fixture-recipe", False)),
        out=settings.get("out"),
        repro_dir=settings.get("repro-dir"),
        repeat=settings.get("repeat", 1),
        merge_coverage=bool(settings.get("merge-coverage", False)),
    )


def _emit(payload: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(payload + "\n", encoding="utf-8")
        logger.info(f"Wrote {out}")
    else:
        print(payload)


def _load_schema(cli: CliConfig) -> SchemaModel:
    if cli.schema_path:
        return load_introspection(cli.schema_path)
    if not cli.run.endpoint:
        raise ConfigurationError("run needs --schema or an --endpoint to introspect")
    return parse_introspection(fetch_introspection(cli.run.endpoint, cli.run.headers, cli.run.timeout))


def _load_registry(cli: CliConfig) -> GeneratorRegistry:
    registry = GeneratorRegistry()
    if cli.fixture_recipe:
        from fixture_server import dataset_generator_recipe

        registry = registry.merged(dataset_generator_recipe())
    if cli.generators:
        registry = registry.merged(load_registry(cli.generators))
    return registry


def _print_summary(reports: List[TestReport], merged: Optional[CoverageReport]) -> None:
    print("\n" + "=" * 60, file=sys.stderr)
    print("GRAPHQL PROPERTY-BASED TEST RUN", file=sys.stderr)
    print("=" * 60, file=sys.stderr)
    for report in reports:
        counts = report.counts
        print(
            f"seed {report.config.seed}: {counts.passed} passed, {counts.failed} failed, "
            f"{counts.client_errors} client errors, coverage {report.coverage.percent:.2%}",
            file=sys.stderr,
        )
        for failure in report.failures:
            if failure.shrunk_query is not None:
                print(f"  - {failure.property_id.value}: {failure.detail}", file=sys.stderr)
    if merged is not None:
        print(f"Merged coverage: {merged.percent:.2%} of {merged.universe_size} tuples", file=sys.stderr)
    print("=" * 60 + "\n", file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_introspect(args: argparse.Namespace) -> int:
    if not args.endpoint:
        raise ConfigurationError("introspect needs --endpoint")
    body = fetch_introspection(args.endpoint, parse_headers(args.header), args.timeout or 10.0)
    parse_introspection(body)
    _emit(json.dumps(body, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cli = build_cli_config(args)
    schema = _load_schema(cli)
    registry = _load_registry(cli)

    with make_client(cli.run) as client:
        if cli.repeat > 1:
            reports, merged = run_campaign(cli.run, schema, registry, cli.repeat, client)
        else:
            reports, merged = [run(cli.run, schema, registry, client)], None
    for report in reports:
        report.cli = cli.echo()

    repro_dir = Path(cli.repro_dir) if cli.repro_dir else (Path(cli.out).parent if cli.out else Path(".")) / "repro"
    for report in reports:
        write_repro_files(report, repro_dir)

    if len(reports) == 1:
        payload = reports[0].canonical_json()
    else:
        document = {
            "cli": cli.echo(),
            "runs": [json.loads(report.canonical_json()) for report in reports],
        }
        if cli.merge_coverage:
            document["merged_coverage"] = merged.model_dump(mode="json")
        payload = json.dumps(document, indent=2)
    _emit(payload, cli.out)
    _print_summary(reports, merged if cli.merge_coverage else None)

    return EXIT_FAILURES if any(report.has_failures for report in reports) else EXIT_OK


def cmd_coverage(args: argparse.Namespace) -> int:
    if not args.schema:
        raise ConfigurationError("coverage needs --schema")
    schema = load_introspection(args.schema)
    include_roots = args.include_roots if args.include_roots is not None else True
    state = CoverageState.for_schema(schema, load_filters(args.filter_tuples), include_roots)

    files = sorted(Path(args.corpus).glob("**/*.graphql")) if args.corpus else []
    for path in files:
        for tree in parse_query(path.read_text(encoding="utf-8"), schema):
            state.add(query_tuples(tree, schema, include_roots))
    logger.info(f"Measured {len(files)} corpus file(s)")

    if args.csv:
        Path(args.csv).write_text(tuples_csv(state), encoding="utf-8")
    _emit(CoverageReport.from_state(state).model_dump_json(indent=2), args.out)
    return EXIT_OK


def _saved_state(report: TestReport) -> CoverageState:
    filters = set(report.config.filters)
    covered = {t for record in report.records for t in record.tuples} - filters
    state = CoverageState(covered | set(report.coverage.uncovered))
    state.add(covered)
    return state


def _load_reports(path: str) -> List[Tuple[str, TestReport]]:
    """Reports in a saved file: a single run, or a `--repeat` document with a `runs` list."""
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(document, dict) and "runs" in document:
        return [(f"{path} [run {i}]", TestReport.model_validate(saved)) for i, saved in enumerate(document["runs"], start=1)]
    return [(path, TestReport.model_validate(document))]


def cmd_report(args: argparse.Namespace) -> int:
    labelled = [entry for path in args.reports for entry in _load_reports(path)]
    reports = [report for _, report in labelled]
    print("=" * 60)
    for path, report in labelled:
        counts = report.counts
        print(f"{path}")
        print(f"  seed {report.config.seed}, {counts.executed} executed, {report.skipped} skipped")
        print(f"  passed {counts.passed}, failed {counts.failed}, client errors {counts.client_errors}")
        print(f"  query coverage {report.coverage.percent:.2%}, response coverage {report.response_coverage.percent:.2%}")
        for failure in report.failures:
            if failure.shrunk_query is None:
                continue
            print(f"  {failure.property_id.value} at test {failure.index}: {failure.detail}")
            for line in failure.shrunk_query.splitlines():
                print(f"    {line}")
    if len(reports) > 1:
        merged = _saved_state(reports[0])
        for report in reports[1:]:
            merged = merge(merged, _saved_state(report))
        print(f"Merged coverage over {len(reports)} runs: {float(merged.percent()):.2%}")
    print("=" * 60)
    return EXIT_FAILURES if any(report.has_failures for report in reports) else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_connection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", help="GraphQL endpoint URL")
    parser.add_argument("--header", action="append", default=[], help="Request header Name:Value (repeatable)")
    parser.add_argument("--timeout", type=float, default=None, help="Request timeout in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Property-based black-box testing for GraphQL APIs")
    parser.add_argument("--log-level", default="INFO", help="Logging level")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    introspect = sub.add_parser("introspect", help="Fetch an endpoint's introspection JSON")
    _add_connection_flags(introspect)
    introspect.add_argument("--out", help="Output file (stdout if omitted)")
    introspect.set_defaults(handler=cmd_introspect)

    run_parser = sub.add_parser("run", help="Generate, execute and check queries")
    _add_connection_flags(run_parser)
    run_parser.add_argument("--config", help="TOML or JSON file with default flag values")
    run_parser.add_argument("--schema", help="Introspection JSON file (introspects --endpoint if omitted)")
    run_parser.add_argument("--tests", type=int, help="Number of tests (default 100)")
    run_parser.add_argument("--max-size", type=int, help="Largest size of the ramp (default 100)")
    run_parser.add_argument("--size-fixed", type=int, help="Use this size for every test")
    run_parser.add_argument("--max-fields", type=int, help="Fields drawn per object (default 2)")
    run_parser.add_argument("--max-iterations", type=int, help="Generation limit (default 5)")
    run_parser.add_argument("--seed", type=int, help="Base seed (default 0)")
    run_parser.add_argument("--include-mutations", action="store_true", default=None, help="Also generate mutations")
    run_parser.add_argument("--charset", choices=[m.value for m in CharsetMode], help="String characters")
    run_parser.add_argument("--properties", help="Comma-separated property ids")
    run_parser.add_argument("--filter-tuples", help="File of Type.field tuples to leave out of coverage")
    run_parser.add_argument("--include-roots", type=parse_bool, help="Count root fields in coverage (default true)")
    run_parser.add_argument("--workers", type=int, help="Concurrent requests (default 1)")
    run_parser.add_argument("--strict", action="store_true", default=None, help="Strict schema conformance")
    run_parser.add_argument("--shrink-budget", type=int, help="Executions allowed per shrink (default 200)")
    run_parser.add_argument("--generators", help="TOML or JSON file of generator recipes")
    run_parser.add_argument("--fixture-recipe", action="store_true", default=None,
                            help="Draw ids from the fixture server's dataset")
    run_parser.add_argument("--out", help="Report file (stdout if omitted)")
    run_parser.add_argument("--repro-dir", help="Directory for .graphql repro files (default <out dir>/repro)")
    run_parser.add_argument("--repeat", type=int, help="Number of runs with consecutive seeds")
    run_parser.add_argument("--merge-coverage", action="store_true", default=None,
                            help="Report coverage merged over all runs")
    run_parser.set_defaults(handler=cmd_run)

    coverage_parser = sub.add_parser("coverage", help="Measure coverage of a .graphql corpus offline")
    coverage_parser.add_argument("--schema", help="Introspection JSON file")
    coverage_parser.add_argument("--corpus", help="Directory of .graphql files")
    coverage_parser.add_argument("--filter-tuples", help="File of Type.field tuples to leave out")
    coverage_parser.add_argument("--include-roots", type=parse_bool, help="Count root fields (default true)")
    coverage_parser.add_argument("--csv", help="Also write per-tuple CSV here")
    coverage_parser.add_argument("--out", help="Report file (stdout if omitted)")
    coverage_parser.set_defaults(handler=cmd_coverage)

    report_parser = sub.add_parser("report", help="Summarize saved run reports")
    report_parser.add_argument("reports", nargs="+", help="Report JSON files")
    report_parser.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s [%(levelname)8s] %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    # InvalidURL is not an HTTPError; UnicodeError from bad host labels is a ValueError
    except (GraphQLPBTError, ValidationError, httpx.HTTPError, httpx.InvalidURL, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
