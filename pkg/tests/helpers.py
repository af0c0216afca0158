"""Shared helpers for the test suite."""

from importlib import resources

from spic.parser import parse_module, parse_program

POSITIVE = ("server", "cell", "dataflow", "ref", "clock")
NEGATIVE = ("double_emit", "deref_kind5", "list_twice", "marked_twice")


def corpus_text(name: str) -> str:
    return (resources.files("spic") / "corpus" / f"{name}.spi").read_text(encoding="utf-8")


def corpus(name: str):
    return parse_module(corpus_text(name), f"corpus:{name}")


def module(text: str):
    return parse_module(text, "<test>")


def program(text: str, mod):
    return parse_program(text, mod)
