"""
Integration tests for tuple coverage over whole runs.

1. Repeated runs saturate coverage of the fixture schema
2. Incremental coverage of a run equals a recount of its query log
3. Single-run coverage grows with max_fields
4. Runs needed for full coverage shrink as max_fields grows

The fixture schema is small: single runs of 1000 queries come close to
saturating it at every max_fields setting, which hides the trend. The strict single-run
comparison therefore uses runs of 2 queries averaged over 40 seeds
(size 10). The 1000-query, 3-seed setting is kept as a non-strict check.
The runs-to-full trend uses runs of 1 query over 10 seeds, capped at 200
runs.
"""

import logging
import statistics
import sys
from pathlib import Path

import httpx
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from fixture_server import FixtureServer, dataset_generator_recipe
from query_synthesis import parse_query
from runner import RunConfig, coverage_state_of, execute, generate_cases, generated_coverage, run, runs_to_full_coverage
from tuple_coverage import query_tuples, response_tuples
from value_generators import GeneratorRegistry

logger = logging.getLogger(__name__)

pytestmark = pytest.mark.slow

MAX_FIELDS_SWEEP = [1, 2, 3]
TREND_SEEDS = 10
SINGLE_RUN_SEEDS = 40
ACCEPTANCE_RUN_TESTS = 1000
ACCEPTANCE_SEEDS = 3
TREND_MAX_RUNS = 200


def _fully_populated(value) -> bool:
    """True when no value in the response is null and no list is empty."""
    if value is None:
        return False
    if isinstance(value, list):
        return bool(value) and all(_fully_populated(item) for item in value)
    if isinstance(value, dict):
        return all(_fully_populated(item) for item in value.values())
    return True


class TestSaturation:
    """Coverage reaches 100% on the fixture schema."""

    def test_full_coverage_within_thirty_runs(self, fixture_schema, type_tracer):
        cfg = RunConfig(num_tests=1000, size_fixed=10, max_fields=2)

        runs = runs_to_full_coverage(cfg, fixture_schema, max_runs=30)
        type_tracer.trace_call("runs_to_full_coverage", kwargs={"max_fields": 2}, result=runs)

        assert runs is not None
        logger.info(f"✓ 100% coverage after {runs} run(s) of 1000 tests")

    def test_single_large_run_is_complete(self, fixture_schema):
        cfg = RunConfig(num_tests=1000, size_fixed=10, max_fields=3)

        state = generated_coverage(generate_cases(fixture_schema, cfg, GeneratorRegistry()), fixture_schema, cfg)

        assert state.percent() == 1
        assert state.uncovered() == []


class TestIncrementalCoverage:
    """The running coverage of a run matches a from-scratch recount."""

    def test_recount_from_query_log(self, fixture_schema, fixture_client, type_tracer):
        _, client = fixture_client
        cfg = RunConfig(endpoint="http://fixture.test/graphql", num_tests=200, seed=11)

        report = run(cfg, fixture_schema, dataset_generator_recipe(), client)
        type_tracer.trace_call("run", kwargs={"seed": cfg.seed}, result=report)

        recount = cfg.coverage_state(fixture_schema)
        for record in report.records:
            for tree in parse_query(record.query, fixture_schema):
                recount.add(query_tuples(tree, fixture_schema, cfg.include_roots))
        type_tracer.trace_call("recount", result=recount)

        assert recount.covered == coverage_state_of(report, fixture_schema).covered
        assert float(recount.percent()) == report.coverage.percent
        assert recount.uncovered() == report.coverage.uncovered
        logger.info(f"✓ Recount agrees at {float(recount.percent()):.2%}")

    def test_response_coverage_never_exceeds_query_coverage(self, fixture_schema):
        fixture = FixtureServer()
        cfg = RunConfig(endpoint="http://fixture.test/graphql", num_tests=100, seed=3)
        with httpx.Client(transport=httpx.WSGITransport(app=fixture.app)) as client:
            report = run(cfg, fixture_schema, dataset_generator_recipe(), client)

        queried = coverage_state_of(report, fixture_schema).covered
        returned = coverage_state_of(report, fixture_schema, responses=True).covered

        assert returned <= queried
        assert report.response_coverage.percent <= report.coverage.percent

    def test_response_coverage_equals_query_coverage_without_nulls(self, fixture_schema, type_tracer):
        fixture = FixtureServer()
        cfg = RunConfig(endpoint="http://fixture.test/graphql", num_tests=400, max_fields=3, seed=3)
        cases = generate_cases(fixture_schema, cfg, dataset_generator_recipe())

        compared = 0
        with httpx.Client(transport=httpx.WSGITransport(app=fixture.app)) as client:
            for case in cases:
                body = execute(case.query, cfg, client).body or {}
                data = body.get("data")
                if body.get("errors") or not isinstance(data, dict) or not _fully_populated(data):
                    continue
                queried = query_tuples(case.tree, fixture_schema, cfg.include_roots)
                returned = response_tuples(data, case.tree, fixture_schema, cfg.include_roots)
                assert returned == queried, case.query
                compared += 1
        type_tracer.trace_call("fully populated responses", result=compared)

        assert compared > 20
        logger.info(f"✓ Query and response tuples agree on {compared} fully populated responses")


class TestMaxFieldsTrends:
    """Coverage trends as the number of fields per expansion grows."""

    def test_single_run_coverage_increases(self, fixture_schema, trace_scope_fixture):
        registry = GeneratorRegistry()
        means = {}

        with trace_scope_fixture("Single-run coverage by max_fields"):
            for max_fields in MAX_FIELDS_SWEEP:
                percents = []
                for seed in range(SINGLE_RUN_SEEDS):
                    cfg = RunConfig(num_tests=2, size_fixed=10, max_fields=max_fields, seed=seed)
                    state = generated_coverage(generate_cases(fixture_schema, cfg, registry), fixture_schema, cfg)
                    percents.append(float(state.percent()))
                means[max_fields] = statistics.mean(percents)
                logger.info(f"  max_fields={max_fields}  mean coverage {means[max_fields]:.2%}")

        assert means[1] < means[2] < means[3]
        logger.info("✓ Mean single-run coverage strictly increases with max_fields")

    def test_large_single_runs_never_lose_coverage(self, fixture_schema):
        registry = GeneratorRegistry()
        means = {}

        for max_fields in MAX_FIELDS_SWEEP:
            percents = []
            for seed in range(ACCEPTANCE_SEEDS):
                cfg = RunConfig(num_tests=ACCEPTANCE_RUN_TESTS, size_fixed=10, max_fields=max_fields, seed=seed)
                state = generated_coverage(generate_cases(fixture_schema, cfg, registry), fixture_schema, cfg)
                percents.append(float(state.percent()))
            means[max_fields] = statistics.mean(percents)
            logger.info(f"  max_fields={max_fields}  mean coverage {means[max_fields]:.2%} over {ACCEPTANCE_RUN_TESTS} queries")

        assert means[MAX_FIELDS_SWEEP[-1]] == max(means.values())

    def test_runs_to_full_coverage_decreases(self, fixture_schema, trace_scope_fixture):
        registry = GeneratorRegistry()
        table = {}

        with trace_scope_fixture("Runs to full coverage by max_fields"):
            for max_fields in MAX_FIELDS_SWEEP:
                counts = []
                for seed in range(TREND_SEEDS):
                    cfg = RunConfig(num_tests=1, size_fixed=10, max_fields=max_fields, seed=seed * 1000)
                    runs = runs_to_full_coverage(cfg, fixture_schema, registry, max_runs=TREND_MAX_RUNS)
                    # unfinished seeds count as one past the cap
                    counts.append(runs if runs is not None else TREND_MAX_RUNS + 1)
                table[max_fields] = counts

            logger.info(f"  {'max_fields':<11}{'mean':>8}{'min':>6}{'max':>6}")
            for max_fields, counts in table.items():
                logger.info(f"  {max_fields:<11}{statistics.mean(counts):>8.1f}{min(counts):>6}{max(counts):>6}")

        means = [statistics.mean(table[m]) for m in MAX_FIELDS_SWEEP]
        assert means[0] > means[1] > means[2]
        logger.info("✓ Fewer runs reach full coverage as max_fields grows")
