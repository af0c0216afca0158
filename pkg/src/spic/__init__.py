"""Synchronous pi-calculus with affine usages: parser, type checker,
interpreter and executable metatheory."""

__version__ = "0.1.0"
