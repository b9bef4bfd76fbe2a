"""
Fixture GraphQL server: a small Project/User API with injectable faults.

Serves POST /graphql over Flask with a graphql-core schema. Each fault in
FaultId can be switched on individually to reproduce one class of
resolver bug:

- INPUT_VALIDATION_1..3: the project resolver crashes on malformed ids
  (whitespace-padded non-numeric ids, non-ASCII ids, ids whose escaped
  form overflows a 24-byte cache key). Alphanumeric ids of up to 24
  characters never trigger them.
- LOGIC_*: the resolver raises as soon as it runs.
- WRONG_FIELD_*: the resolver filters by name instead of id and returns
  an empty result.
- WRONG_TYPE_*: the resolver returns a list where one value is expected.

Unhandled resolver exceptions become HTTP 500, parse and validation errors
HTTP 400; everything else is a 200 carrying `data` and maybe `errors`.
"""

import logging
import threading
from collections import Counter
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

from flask import Flask, jsonify, request
from graphql import (
    GraphQLArgument,
    GraphQLError,
    GraphQLField,
    GraphQLID,
    GraphQLInt,
    GraphQLList,
    GraphQLNonNull,
    GraphQLObjectType,
    GraphQLSchema,
    GraphQLString,
    execute,
    introspection_from_schema,
    parse,
    validate,
)
from pydantic import BaseModel, ConfigDict, Field

from exceptions import ConfigurationError, FixtureStartupError
from value_generators import GenContext, GeneratorRegistry, gen_string

logger = logging.getLogger(__name__)

CACHE_KEY_BYTES = 24
EXPLORE_LENGTH_CAP = 12


class FaultId(str, Enum):
    INPUT_VALIDATION_1 = "INPUT_VALIDATION_1"
    INPUT_VALIDATION_2 = "INPUT_VALIDATION_2"
    INPUT_VALIDATION_3 = "INPUT_VALIDATION_3"
    LOGIC_PROJECT = "LOGIC_project"
    LOGIC_USER = "LOGIC_user"
    LOGIC_OWNER = "LOGIC_owner"
    LOGIC_MEMBERS = "LOGIC_members"
    WRONG_FIELD_PROJECT = "WRONG_FIELD_project"
    WRONG_FIELD_USER = "WRONG_FIELD_user"
    WRONG_FIELD_OWNER = "WRONG_FIELD_owner"
    WRONG_FIELD_MEMBERS = "WRONG_FIELD_members"
    WRONG_TYPE_PROJECT = "WRONG_TYPE_project"
    WRONG_TYPE_USER = "WRONG_TYPE_user"
    WRONG_TYPE_OWNER = "WRONG_TYPE_owner"
    WRONG_TYPE_MEMBERS = "WRONG_TYPE_members"

    @classmethod
    def parse(cls, text: str) -> "FaultId":
        """Accept a value or member name in any case, e.g. `logic_owner`."""
        wanted = text.strip().lower()
        for fault in cls:
            if wanted in (fault.value.lower(), fault.name.lower()):
                return fault
        raise ConfigurationError(f"Unknown fault {text!r}; choose from {[f.value for f in cls]}")


class ProjectRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    name: str
    description: Optional[str] = None
    owner_id: Optional[str] = None
    member_ids: List[str] = Field(default_factory=list)


class UserRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    name: str
    age: Optional[int] = None
    project_ids: List[str] = Field(default_factory=list)


class Dataset(BaseModel):
    """Read-only seed data served by the fixture."""

    model_config = ConfigDict(frozen=True)

    projects: Dict[str, ProjectRecord]
    users: Dict[str, UserRecord]


_PROJECT_NAMES = ["Apollo", "Borealis", "Cascade", "Drift", "Ember"]
_USER_NAMES = ["Ada", "Brook", "Cyrus", "Dana", "Eli", "Fay", "Gus", "Hana"]


def default_dataset() -> Dataset:
    """Five projects (ids 101-105) and eight users (ids 201-208)."""
    user_ids = [str(201 + i) for i in range(len(_USER_NAMES))]
    projects = {}
    for i, name in enumerate(_PROJECT_NAMES):
        project_id = str(101 + i)
        last = i == len(_PROJECT_NAMES) - 1
        projects[project_id] = ProjectRecord(
            id=project_id,
            name=name,
            description=None if last else f"The {name} project",
            owner_id=None if last else user_ids[i],
            member_ids=[user_ids[(i + j) % len(user_ids)] for j in range(3)],
        )
    users = {}
    for i, (user_id, name) in enumerate(zip(user_ids, _USER_NAMES)):
        users[user_id] = UserRecord(
            id=user_id,
            name=name,
            age=None if i % 4 == 3 else 25 + 3 * i,
            project_ids=[
                p.id for p in projects.values() if user_id in p.member_ids or p.owner_id == user_id
            ],
        )
    return Dataset(projects=projects, users=users)


def dataset_generator_recipe(dataset: Optional[Dataset] = None, explore: float = 0.25) -> GeneratorRegistry:
    """
    Field-path generators that draw existing project and user ids.

    With probability `explore` a short random string is drawn instead, so
    faults triggered by malformed ids on the same arguments stay reachable.
    With explore=0 every value exists in the dataset.
    """
    if not 0.0 <= explore <= 1.0:
        raise ConfigurationError(f"explore must be within [0, 1], got {explore}")
    dataset = dataset or default_dataset()

    def draw_from(ids: List[str]):
        def generate(ctx: GenContext) -> str:
            if ctx.rng.random() < explore:
                capped = GenContext(ctx.rng, min(ctx.size, EXPLORE_LENGTH_CAP), ctx.charset_mode)
                return gen_string(capped)
            return ctx.rng.choice(ids)

        return generate

    project_ids = sorted(dataset.projects)
    user_ids = sorted(dataset.users)
    registry = GeneratorRegistry()
    registry.register_field("Query.project.id", draw_from(project_ids))
    registry.register_field("Query.user.id", draw_from(user_ids))
    registry.register_field("Mutation.touchProject.id", draw_from(project_ids))
    return registry


class FixtureServer:
    """
    The fixture API: graphql-core schema, resolvers and Flask app.

    `hits` counts resolver executions by name; `received_headers` records
    request headers when `echo_headers` is set.
    """

    def __init__(
        self,
        faults: Iterable[FaultId] = (),
        dataset: Optional[Dataset] = None,
        echo_headers: bool = False,
    ):
        self.faults = frozenset(faults)
        self.dataset = dataset or default_dataset()
        self.echo_headers = echo_headers
        self.hits: Counter = Counter()
        self.received_headers: List[Dict[str, str]] = []
        self._lock = threading.Lock()
        self.schema = self._build_schema()
        self.app = self._create_app()
        logger.info(f"FixtureServer initialized with faults: {sorted(f.value for f in self.faults) or 'none'}")

    # ------------------------------------------------------------------
    # Schema
    # ------------------------------------------------------------------

    def _build_schema(self) -> GraphQLSchema:
        project_type: GraphQLObjectType
        user_type: GraphQLObjectType

        project_type = GraphQLObjectType(
            "Project",
            lambda: {
                "id": GraphQLField(GraphQLNonNull(GraphQLID)),
                "name": GraphQLField(GraphQLNonNull(GraphQLString)),
                "description": GraphQLField(GraphQLString),
                "owner": GraphQLField(user_type, resolve=self.resolve_owner),
                "members": GraphQLField(
                    GraphQLNonNull(GraphQLList(GraphQLNonNull(user_type))),
                    resolve=self.resolve_members,
                ),
            },
            is_type_of=lambda value, _info: isinstance(value, ProjectRecord),
        )
        user_type = GraphQLObjectType(
            "User",
            lambda: {
                "id": GraphQLField(GraphQLNonNull(GraphQLID)),
                "name": GraphQLField(GraphQLNonNull(GraphQLString)),
                "age": GraphQLField(GraphQLInt),
                "projects": GraphQLField(
                    GraphQLNonNull(GraphQLList(GraphQLNonNull(project_type))),
                    resolve=self.resolve_user_projects,
                ),
            },
            is_type_of=lambda value, _info: isinstance(value, UserRecord),
        )
        id_arg = {"id": GraphQLArgument(GraphQLNonNull(GraphQLString))}
        query_type = GraphQLObjectType(
            "Query",
            {
                "project": GraphQLField(project_type, args=id_arg, resolve=self.resolve_project),
                "projects": GraphQLField(
                    GraphQLNonNull(GraphQLList(GraphQLNonNull(project_type))),
                    args={
                        "first": GraphQLArgument(GraphQLInt),
                        "nameContains": GraphQLArgument(GraphQLString),
                    },
                    resolve=self.resolve_projects,
                ),
                "user": GraphQLField(user_type, args=id_arg, resolve=self.resolve_user),
                "users": GraphQLField(
                    GraphQLNonNull(GraphQLList(GraphQLNonNull(user_type))),
                    args={"first": GraphQLArgument(GraphQLInt)},
                    resolve=self.resolve_users,
                ),
            },
        )
        mutation_type = GraphQLObjectType(
            "Mutation",
            {"touchProject": GraphQLField(project_type, args=id_arg, resolve=self.resolve_touch_project)},
        )
        return GraphQLSchema(query=query_type, mutation=mutation_type)

    def introspection(self) -> Dict[str, Any]:
        """The schema's introspection result (the `data` object)."""
        return introspection_from_schema(self.schema)

    # ------------------------------------------------------------------
    # Resolvers
    # ------------------------------------------------------------------

    def _hit(self, name: str) -> None:
        with self._lock:
            self.hits[name] += 1

    def reset_hits(self) -> None:
        with self._lock:
            self.hits.clear()

    def _users_by_name(self, names: Iterable[Optional[str]]) -> List[UserRecord]:
        wanted = set(names)
        return [u for u in self.dataset.users.values() if u.name in wanted]

    def resolve_project(self, _root, _info, id: str):
        self._hit("project")
        if FaultId.INPUT_VALIDATION_1 in self.faults and id != id.strip():
            # padded ids come from the legacy numeric importer
            id = str(int(id))
        if FaultId.INPUT_VALIDATION_2 in self.faults:
            id.encode("ascii")
        if FaultId.INPUT_VALIDATION_3 in self.faults:
            encoded = id.encode("unicode_escape")
            cache_key = memoryview(bytearray(CACHE_KEY_BYTES))
            cache_key[: len(encoded)] = encoded
        if FaultId.LOGIC_PROJECT in self.faults:
            raise RuntimeError("project resolver failed")
        if FaultId.WRONG_FIELD_PROJECT in self.faults:
            return next((p for p in self.dataset.projects.values() if p.name == id), None)
        if FaultId.WRONG_TYPE_PROJECT in self.faults:
            return [p for p in self.dataset.projects.values() if p.id == id]
        return self.dataset.projects.get(id)

    def resolve_projects(self, _root, _info, first: Optional[int] = None, nameContains: Optional[str] = None):
        self._hit("projects")
        projects = [
            p for p in self.dataset.projects.values()
            if nameContains is None or nameContains in p.name
        ]
        if first is not None:
            projects = projects[: max(first, 0)]
        return projects

    def resolve_user(self, _root, _info, id: str):
        self._hit("user")
        if FaultId.LOGIC_USER in self.faults:
            raise RuntimeError("user resolver failed")
        if FaultId.WRONG_FIELD_USER in self.faults:
            return next(iter(self._users_by_name([id])), None)
        if FaultId.WRONG_TYPE_USER in self.faults:
            return [u for u in self.dataset.users.values() if u.id == id]
        return self.dataset.users.get(id)

    def resolve_users(self, _root, _info, first: Optional[int] = None):
        self._hit("users")
        users = list(self.dataset.users.values())
        if first is not None:
            users = users[: max(first, 0)]
        return users

    def resolve_owner(self, project: ProjectRecord, _info):
        self._hit("owner")
        if FaultId.LOGIC_OWNER in self.faults:
            raise RuntimeError("owner resolver failed")
        if FaultId.WRONG_FIELD_OWNER in self.faults:
            return next(iter(self._users_by_name([project.owner_id])), None)
        if FaultId.WRONG_TYPE_OWNER in self.faults:
            return [u for u in self.dataset.users.values() if u.id == project.owner_id]
        return self.dataset.users.get(project.owner_id) if project.owner_id else None

    def resolve_members(self, project: ProjectRecord, _info):
        self._hit("members")
        if FaultId.LOGIC_MEMBERS in self.faults:
            raise RuntimeError("members resolver failed")
        if FaultId.WRONG_FIELD_MEMBERS in self.faults:
            return self._users_by_name(project.member_ids)
        members = [self.dataset.users[m] for m in project.member_ids]
        if FaultId.WRONG_TYPE_MEMBERS in self.faults:
            return [[m] for m in members]
        return members

    def resolve_user_projects(self, user: UserRecord, _info):
        self._hit("user_projects")
        return [self.dataset.projects[p] for p in user.project_ids]

    def resolve_touch_project(self, _root, _info, id: str):
        self._hit("touchProject")
        return self.dataset.projects.get(id)

    # ------------------------------------------------------------------
    # HTTP
    # ------------------------------------------------------------------

    def run_query(
        self,
        query: str,
        variables: Optional[Dict[str, Any]] = None,
        operation_name: Optional[str] = None,
    ) -> Tuple[int, Dict[str, Any]]:
        """Execute a query and return (HTTP status, response body)."""
        try:
            document = parse(query)
        except GraphQLError as e:
            return 400, {"errors": [e.formatted]}
        validation_errors = validate(self.schema, document)
        if validation_errors:
            return 400, {"errors": [e.formatted for e in validation_errors]}

        result = execute(self.schema, document, variable_values=variables, operation_name=operation_name)
        errors = result.errors or []
        crashed = [
            e for e in errors
            if e.original_error is not None and not isinstance(e.original_error, GraphQLError)
        ]
        for error in crashed:
            logger.warning(f"Resolver crashed at {error.path}: {error.original_error!r}")
        return (500 if crashed else 200), result.formatted

    def _create_app(self) -> Flask:
        app = Flask(__name__)

        @app.post("/graphql")
        def graphql_endpoint():
            if self.echo_headers:
                with self._lock:
                    self.received_headers.append(dict(request.headers))
            payload = request.get_json(silent=True)
            if not isinstance(payload, dict) or not isinstance(payload.get("query"), str):
                return jsonify({"errors": [{"message": "Expected a JSON body with a 'query' string"}]}), 400
            status, body = self.run_query(
                payload["query"], payload.get("variables"), payload.get("operationName")
            )
            logger.debug(f"POST /graphql -> {status}")
            return jsonify(body), status

        @app.get("/health")
        def health():
            return jsonify({"status": "ok", "faults": sorted(f.value for f in self.faults)})

        @app.after_request
        def add_echo_header(response):
            if self.echo_headers:
                names = sorted(k.lower() for k in request.headers.keys())
                response.headers["X-Echoed-Headers"] = ",".join(names)
            return response

        return app


class ServerHandle:
    """A fixture server running on a background thread."""

    def __init__(self, fixture: FixtureServer, http_server, thread: threading.Thread):
        self.fixture = fixture
        self.http_server = http_server
        self.thread = thread

    @property
    def url(self) -> str:
        return f"http://{self.http_server.host}:{self.http_server.port}/graphql"

    def shutdown(self) -> None:
        self.http_server.shutdown()
        self.http_server.server_close()
        self.thread.join(timeout=5)
        logger.info(f"Fixture server on port {self.http_server.port} stopped")


def serve(
    port: int,
    faults: Iterable[FaultId] = (),
    dataset: Optional[Dataset] = None,
    echo_headers: bool = False,
    host: str = "127.0.0.1",
) -> ServerHandle:
    """
    Start the fixture server in a background thread.

    Raises:
        FixtureStartupError: The port cannot be bound
    """
    from werkzeug.serving import make_server

    fixture = FixtureServer(faults=faults, dataset=dataset, echo_headers=echo_headers)
    try:
        http_server = make_server(host, port, fixture.app, threaded=True)
    except (OSError, SystemExit) as e:
        # werkzeug exits instead of raising when the bind fails
        raise FixtureStartupError(f"Cannot bind fixture server to {host}:{port}") from e
    thread = threading.Thread(target=http_server.serve_forever, daemon=True)
    thread.start()
    logger.info(f"Fixture server listening on http://{host}:{port}/graphql")
    return ServerHandle(fixture, http_server, thread)


def main():
    """Run the fixture server."""
    import argparse

    parser = argparse.ArgumentParser(description="Fixture GraphQL server with injectable faults")
    parser.add_argument("--port", type=int, default=5001, help="Port to run on")
    parser.add_argument("--host", type=str, default="127.0.0.1", help="Interface to bind")
    parser.add_argument(
        "--fault",
        action="append",
        default=[],
        help="Fault to enable (repeatable), e.g. LOGIC_owner",
    )
    parser.add_argument("--echo-headers", action="store_true", help="Echo request header names back")
    parser.add_argument("--log-level", default="INFO", help="Logging level")
    args = parser.parse_args()

    logging.basicConfig(level=args.log_level.upper())
    try:
        faults = [FaultId.parse(f) for f in args.fault]
    except ConfigurationError as e:
        parser.error(str(e))

    fixture = FixtureServer(faults=faults, echo_headers=args.echo_headers)

    print("\n" + "=" * 60)
    print("FIXTURE GRAPHQL SERVER")
    print("=" * 60)
    print(f"URL: http://{args.host}:{args.port}/graphql")
    print(f"Projects: {len(fixture.dataset.projects)}  Users: {len(fixture.dataset.users)}")
    print(f"Faults: {', '.join(sorted(f.value for f in fixture.faults)) or 'none'}")
    print("\nPress Ctrl+C to stop")
    print("=" * 60 + "\n")

    try:
        fixture.app.run(host=args.host, port=args.port, threaded=True)
    except KeyboardInterrupt:
        print("\n\nServer stopped")


if __name__ == "__main__":
    main()
