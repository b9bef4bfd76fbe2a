"""
Exceptions raised across the GraphQL property-based testing pipeline.

Business logic raises these; the run loop and the CLI catch them at the
boundary and translate them into report entries or exit codes.
"""


class GraphQLPBTError(Exception):
    """Base class for all errors raised by this package."""


class MalformedIntrospection(GraphQLPBTError):
    """The introspection document is missing `__schema` or type kinds."""


class DanglingTypeReference(GraphQLPBTError):
    """A field, argument or possible type names a type absent from the schema."""

    def __init__(self, type_name: str, referenced_from: str):
        self.type_name = type_name
        self.referenced_from = referenced_from
        super().__init__(
            f"Type '{type_name}' referenced from {referenced_from} is not defined"
        )


class NoQueryRoot(GraphQLPBTError):
    """The schema does not define (or does not contain) its query root type."""


class UnknownScalar(GraphQLPBTError):
    """A custom scalar has no generator and strict mode is enabled."""


class RecursionLimit(GraphQLPBTError):
    """A required input-object cycle cannot terminate within the depth limit."""


class EmptySchema(GraphQLPBTError):
    """There are no root fields to start a query from."""


class OrphanNode(GraphQLPBTError):
    """A generated node points at a containing object that is not in the list."""

    def __init__(self, node_name: str, field_id: int):
        self.node_name = node_name
        self.field_id = field_id
        super().__init__(
            f"Node '{node_name}' references unknown object id {field_id}"
        )


class PayloadShapeMismatch(GraphQLPBTError):
    """A response payload holds keys that the query never selected."""


class UniverseMismatch(GraphQLPBTError):
    """Two coverage states were computed against different tuple universes."""


class ShrinkBudgetExceeded(GraphQLPBTError):
    """The shrinker used up its re-execution budget."""


class ConfigurationError(GraphQLPBTError):
    """Invalid or contradictory run configuration."""


class FixtureStartupError(GraphQLPBTError):
    """The fixture server could not bind its port."""
