"""Multiplicities, point usages and signal usages.

A signal usage is a word ``x y^w`` over triples of multiplicities
(emit, receive during the instant, receive at the end of the instant).
Every usage belongs to one of five kinds; addition, comparison and
subtraction only make sense between usages of the same kind and are
partial.  Undefined results are reported as ``None``.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional


class Mult(enum.Enum):
    ZERO = "0"
    ONE = "1"
    INF = "w"

    # members are singletons; identity hashing avoids Enum's slow name hash
    __hash__ = object.__hash__

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Mult":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"bad multiplicity {text!r} (expected 0, 1 or w)") from None


ZERO, ONE, INF = Mult.ZERO, Mult.ONE, Mult.INF


def mult_add(a: Mult, b: Mult) -> Optional[Mult]:
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if a is INF and b is INF:
        return INF
    return None


def mult_le(a: Mult, b: Mult) -> bool:
    return any(mult_add(a, c) is b for c in Mult)


def mult_sub(a: Mult, b: Mult) -> Optional[Mult]:
    """Largest ``c`` with ``a = b + c``, or None when ``a >= b`` fails."""
    candidates = [c for c in Mult if mult_add(b, c) is a]
    if not candidates:
        return None
    best = [c for c in candidates if all(mult_le(d, c) for d in candidates)]
    return best[0]


Char = tuple  # (Mult, Mult, Mult)


def char(a, b, c) -> Char:
    return tuple(x if isinstance(x, Mult) else Mult.parse(str(x)) for x in (a, b, c))


MAIN_USAGES: dict[int, Char] = {
    1: char("w", 0, "w"),
    2: char(1, "w", "w"),
    3: char("w", 0, 1),
    4: char(1, 0, 1),
    5: char(1, 1, 0),
}

KINDS = tuple(MAIN_USAGES)


@lru_cache(maxsize=None)
def derived(kind: int) -> frozenset:
    """Characters obtained from the main usage by turning 1s into 0s."""
    main = MAIN_USAGES[kind]
    options = [(m, ZERO) if m is ONE else (m,) for m in main]
    return frozenset(tuple(c) for c in itertools.product(*options))


def char_add(kind: int, a: Char, b: Char) -> Optional[Char]:
    parts = tuple(mult_add(x, y) for x, y in zip(a, b))
    if None in parts or parts not in derived(kind):
        return None
    return parts


def char_le(kind: int, a: Char, b: Char) -> bool:
    return any(char_add(kind, a, c) == b for c in derived(kind))


def char_sub(kind: int, a: Char, b: Char) -> Optional[Char]:
    candidates = [c for c in derived(kind) if char_add(kind, b, c) == a]
    if not candidates:
        return None
    best = [c for c in candidates if all(char_le(kind, d, c) for d in candidates)]
    return best[0] if best else None


def char_join(kind: int, a: Char, b: Char) -> Optional[Char]:
    uppers = [c for c in derived(kind) if char_le(kind, a, c) and char_le(kind, b, c)]
    least = [c for c in uppers if all(char_le(kind, c, d) for d in uppers)]
    return least[0] if least else None


@lru_cache(maxsize=None)
def neutral_char(kind: int) -> Char:
    dset = derived(kind)
    for n in dset:
        if all(char_add(kind, n, c) == c for c in dset):
            return n
    raise AssertionError(f"kind {kind} has no neutral character")


def least_char(kind: int, pred) -> Optional[Char]:
    """The least character of ``kind`` satisfying ``pred`` (None if there is none)."""
    ok = [c for c in derived(kind) if pred(c)]
    least = [c for c in ok if all(char_le(kind, c, d) for d in ok)]
    return least[0] if least else None


def format_char(c: Char) -> str:
    return "(" + ",".join(str(m) for m in c) + ")"


@dataclass(frozen=True)
class Usage:
    """The usage ``now . later^w`` of kind ``kind``."""

    kind: int
    now: Char
    later: Char

    def __post_init__(self):
        if self.kind not in MAIN_USAGES:
            raise ValueError(f"unknown usage kind {self.kind}")
        dset = derived(self.kind)
        for c in (self.now, self.later):
            if tuple(c) not in dset:
                raise ValueError(f"{format_char(c)} is not a kind-{self.kind} character")

    @classmethod
    def uniform(cls, kind: int, c: Char) -> "Usage":
        return cls(kind, c, c)

    @property
    def is_uniform(self) -> bool:
        return self.now == self.later

    def __str__(self) -> str:
        if self.is_uniform:
            return f"k{self.kind}:{format_char(self.now)}w"
        return f"k{self.kind}:{format_char(self.now)}{format_char(self.later)}w"

    def __repr__(self) -> str:
        return f"Usage({self})"


def neutral(kind: int) -> Usage:
    return Usage.uniform(kind, neutral_char(kind))


def all_usages(kind: int) -> Iterator[Usage]:
    dset = sorted(derived(kind), key=format_char)
    for now in dset:
        for later in dset:
            yield Usage(kind, now, later)


def usage_add(u1: Usage, u2: Usage) -> Optional[Usage]:
    if u1.kind != u2.kind:
        return None
    now = char_add(u1.kind, u1.now, u2.now)
    later = char_add(u1.kind, u1.later, u2.later)
    if now is None or later is None:
        return None
    return Usage(u1.kind, now, later)


def usage_le(u1: Usage, u2: Usage) -> bool:
    if u1.kind != u2.kind:
        return False
    return char_le(u1.kind, u1.now, u2.now) and char_le(u1.kind, u1.later, u2.later)


def usage_sub(u1: Usage, u2: Usage) -> Optional[Usage]:
    """``u1 - u2``, defined iff both have the same kind and ``u1 >= u2``."""
    if u1.kind != u2.kind:
        return None
    now = char_sub(u1.kind, u1.now, u2.now)
    later = char_sub(u1.kind, u1.later, u2.later)
    if now is None or later is None:
        return None
    return Usage(u1.kind, now, later)


def usage_join(u1: Usage, u2: Usage) -> Optional[Usage]:
    if u1.kind != u2.kind:
        return None
    now = char_join(u1.kind, u1.now, u2.now)
    later = char_join(u1.kind, u1.later, u2.later)
    if now is None or later is None:
        return None
    return Usage(u1.kind, now, later)


def shift(u: Usage) -> Usage:
    return Usage(u.kind, u.later, u.later)


def is_affine(u: Usage) -> bool:
    return ONE in u.now or ONE in u.later


def is_neutral(u: Usage) -> bool:
    return u == neutral(u.kind)


def is_affine_preserving(u: Usage) -> bool:
    return u.kind in (3, 4, 5)


@dataclass(frozen=True)
class Classification:
    affine: bool
    uniform: bool
    neutral: bool
    affine_preserving: bool


def classify(u: Usage) -> Classification:
    return Classification(
        affine=is_affine(u),
        uniform=u.is_uniform,
        neutral=is_neutral(u),
        affine_preserving=is_affine_preserving(u),
    )


# Least usages enabling a capability, computed from the derived sets.

def emit_usage(kind: int) -> Usage:
    """Least usage of ``kind`` allowing an emission now (nothing later)."""
    c = least_char(kind, lambda c: c[0] is not ZERO)
    return Usage(kind, c, neutral_char(kind))


def receive_usage(kind: int) -> Optional[Usage]:
    """Least usage of ``kind`` allowing a reception within the instant."""
    c = least_char(kind, lambda c: c[1] is not ZERO)
    if c is None:
        return None
    return Usage(kind, c, neutral_char(kind))


def marked_usage() -> Usage:
    """What a kind-5 emission needs once its value has been received."""
    return Usage(5, char(1, 1, 0), char(0, 0, 0))


def parse_usage(text: str) -> Usage:
    """Parse ``k<kind>:(a,b,c)w`` or ``k<kind>:(a,b,c)(a,b,c)w``."""
    m = re.fullmatch(r"\s*k([1-5])\s*:\s*((?:\([^()]*\)\s*){1,2})w\s*", text)
    if not m:
        raise ValueError(f"bad usage literal {text!r}")
    kind = int(m.group(1))
    chars = []
    for grp in re.findall(r"\(([^()]*)\)", m.group(2)):
        parts = [p.strip() for p in grp.split(",")]
        if len(parts) != 3:
            raise ValueError(f"bad usage literal {text!r}")
        chars.append(char(*parts))
    now = chars[0]
    later = chars[-1]
    return Usage(kind, now, later)
