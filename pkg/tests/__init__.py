"""Tests for graphql-pbt."""
