"""Semantics toolkit for a nondeterministic lambda calculus with naturals."""

__version__ = "0.1.0"
