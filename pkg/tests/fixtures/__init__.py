"""Test fixtures for schemas and the fixture GraphQL server."""
