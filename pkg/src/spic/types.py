"""Types, contexts, minimal contexts of values, and value equivalence.

Types are inductive (``Ind``), lists, sets and signals.  Contexts are
plain dicts from variable names to types; an absent variable plays the
role of the zero usage, so contexts over disjoint domains add by union.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from spic.syntax import Cnst, CtorDecl, ModuleDecl, Name, TypeDecl, list_items, list_value
from spic.usage import (
    INF,
    ONE,
    Mult,
    Usage,
    is_affine_preserving,
    is_neutral,
    mult_add,
    mult_le,
    mult_sub,
    shift,
    usage_add,
    usage_join,
    usage_le,
    usage_sub,
)


@dataclass(frozen=True)
class Ind:
    """A user inductive type; ``usage`` is fixed by its declaration."""

    name: str
    usage: Mult = INF

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ListT:
    usage: Mult
    elem: "Type"

    def __str__(self) -> str:
        return f"List<{self.usage}>({self.elem})"


@dataclass(frozen=True)
class SetT:
    usage: Mult
    elem: "Type"

    def __str__(self) -> str:
        return f"Set<{self.usage}>({self.elem})"


@dataclass(frozen=True)
class SigT:
    usage: Usage
    payload: "Type"

    def __str__(self) -> str:
        return f"Sig<{self.usage}>({self.payload})"


Type = Union[Ind, ListT, SetT, SigT]

UNIT = Ind("Unit", INF)
UNIT_DECL = TypeDecl("Unit", INF, (CtorDecl("*", ()),))


class TypeClass(enum.Enum):
    CLASSICAL = "classical"
    AFFINE_UNIFORM = "affine-uniform"
    NON_UNIFORM = "non-uniform"


class IllFormed(Exception):
    def __init__(self, message: str, path: tuple = ()):
        self.path = path
        where = "/".join(path) if path else "<top>"
        super().__init__(f"{message} (at {where})")


class TypeEnv:
    """Inductive declarations and constructor signatures."""

    BUILTIN_POS = {"*": -3, "nil": -2, "cons": -1}

    def __init__(self, decls: Mapping[str, TypeDecl] = ()):
        self.decls: dict[str, TypeDecl] = {"Unit": UNIT_DECL}
        self.decls.update(dict(decls))
        self.ctors: dict[str, tuple] = {}
        self.positions: dict[str, int] = dict(self.BUILTIN_POS)
        pos = 0
        for td in self.decls.values():
            for cd in td.ctors:
                if cd.name in ("nil", "cons"):
                    raise IllFormed(f"constructor {cd.name} is reserved for lists and sets")
                if cd.name in self.ctors:
                    raise IllFormed(f"constructor {cd.name} declared twice")
                self.ctors[cd.name] = (td.name, cd.args)
                if cd.name not in self.positions:
                    self.positions[cd.name] = pos
                    pos += 1

    @classmethod
    def of(cls, module: ModuleDecl) -> "TypeEnv":
        return cls(module.types)

    def is_ctor(self, name: str) -> bool:
        return name in self.ctors or name in ("nil", "cons")

    def arity(self, name: str) -> Optional[int]:
        if name == "nil":
            return 0
        if name == "cons":
            return 2
        if name in self.ctors:
            return len(self.ctors[name][1])
        return None

    def ctor_args(self, ctor: str, expected: Type) -> Optional[tuple]:
        """Argument types of ``ctor`` when building a value of ``expected``."""
        if ctor in ("nil", "cons"):
            if not isinstance(expected, (ListT, SetT)):
                return None
            return () if ctor == "nil" else (expected.elem, expected)
        if ctor not in self.ctors or not isinstance(expected, Ind):
            return None
        tname, args = self.ctors[ctor]
        if tname != expected.name:
            return None
        return args

    def ctors_of(self, t: Type) -> list:
        if isinstance(t, (ListT, SetT)):
            return ["nil", "cons"]
        if isinstance(t, Ind) and t.name in self.decls:
            return [cd.name for cd in self.decls[t.name].ctors]
        return []


# Classification ----------------------------------------------------------


def type_wf(t: Type, tenv: Optional[TypeEnv] = None, path: tuple = ()) -> TypeClass:
    """Grammar class of ``t``; raises IllFormed with a path witness."""
    here = path + (_head(t),)
    if isinstance(t, Ind):
        if tenv is not None:
            if t.name not in tenv.decls:
                raise IllFormed(f"unknown type {t.name}", here)
            if tenv.decls[t.name].usage is not t.usage:
                raise IllFormed(f"type {t.name} is declared with usage {tenv.decls[t.name].usage}", here)
        return TypeClass.CLASSICAL if t.usage is INF else TypeClass.AFFINE_UNIFORM
    if isinstance(t, (ListT, SetT)):
        if t.usage not in (ONE, INF):
            raise IllFormed("list/set usage must be 1 or w", here)
        inner = type_wf(t.elem, tenv, here)
        if inner is TypeClass.NON_UNIFORM:
            raise IllFormed("non-uniform type nested under a constructor", here)
        if inner is TypeClass.AFFINE_UNIFORM and t.usage is INF:
            raise IllFormed("affine element type under a w-usage constructor", here)
        return TypeClass.CLASSICAL if t.usage is INF else TypeClass.AFFINE_UNIFORM
    if isinstance(t, SigT):
        inner = type_wf(t.payload, tenv, here)
        if inner is TypeClass.NON_UNIFORM:
            raise IllFormed("non-uniform type nested under a signal", here)
        if inner is TypeClass.AFFINE_UNIFORM and not is_affine_preserving(t.usage):
            raise IllFormed(f"affine payload on a kind-{t.usage.kind} signal", here)
        if not t.usage.is_uniform:
            return TypeClass.NON_UNIFORM
        if is_neutral(t.usage) and inner is TypeClass.CLASSICAL:
            return TypeClass.CLASSICAL
        return TypeClass.AFFINE_UNIFORM
    raise IllFormed(f"not a type: {t!r}", path)


def _head(t) -> str:
    return {Ind: getattr(t, "name", "?"), ListT: "List", SetT: "Set", SigT: "Sig"}.get(type(t), "?")


def check_type_decl(td: TypeDecl, tenv: TypeEnv) -> None:
    """Constructor arguments are uniform; affine arguments force usage 1."""
    for cd in td.ctors:
        for i, a in enumerate(cd.args):
            cls = type_wf(a, tenv, (td.name, cd.name, str(i)))
            if cls is TypeClass.NON_UNIFORM:
                raise IllFormed("non-uniform constructor argument", (td.name, cd.name))
            if cls is TypeClass.AFFINE_UNIFORM and td.usage is INF:
                raise IllFormed(
                    f"constructor {cd.name} takes an affine argument but {td.name} has usage w",
                    (td.name, cd.name),
                )


def is_uniform(t: Type) -> bool:
    return type_wf(t) is not TypeClass.NON_UNIFORM


def is_affine(t: Type) -> bool:
    return type_wf(t) is not TypeClass.CLASSICAL


def is_classical(t: Type) -> bool:
    return type_wf(t) is TypeClass.CLASSICAL


# Addition, order, subtraction, join, shift -------------------------------


ABSENT = object()  # result of subtracting an affine type from itself


def same_shape(t1: Type, t2: Type) -> bool:
    """Equal except possibly for the top-level usage."""
    if isinstance(t1, Ind) and isinstance(t2, Ind):
        return t1.name == t2.name
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, SigT):
        return t1.payload == t2.payload and t1.usage.kind == t2.usage.kind
    return t1.elem == t2.elem


def _with_mult(t: Type, m: Mult) -> Type:
    if isinstance(t, Ind):
        return Ind(t.name, m)
    return type(t)(m, t.elem)


def type_add(t1: Type, t2: Type) -> Optional[Type]:
    if not same_shape(t1, t2):
        return None
    if isinstance(t1, SigT):
        u = usage_add(t1.usage, t2.usage)
        return None if u is None else SigT(u, t1.payload)
    m = mult_add(t1.usage, t2.usage)
    return None if m is None else _with_mult(t1, m)


def type_le(t1: Type, t2: Type) -> bool:
    if not same_shape(t1, t2):
        return False
    if isinstance(t1, SigT):
        return usage_le(t1.usage, t2.usage)
    return mult_le(t1.usage, t2.usage)


def type_sub(t1: Type, t2: Type):
    """``t1 - t2``: a Type, ``ABSENT`` (nothing left) or None (undefined)."""
    if not same_shape(t1, t2):
        return None
    if isinstance(t1, SigT):
        u = usage_sub(t1.usage, t2.usage)
        return None if u is None else SigT(u, t1.payload)
    m = mult_sub(t1.usage, t2.usage)
    if m is None:
        return None
    if m is Mult.ZERO:
        return ABSENT
    return _with_mult(t1, m)


def type_join(t1: Type, t2: Type) -> Optional[Type]:
    if not same_shape(t1, t2):
        return None
    if isinstance(t1, SigT):
        u = usage_join(t1.usage, t2.usage)
        return None if u is None else SigT(u, t1.payload)
    return t1 if t1.usage is t2.usage else None


def shift_type(t: Type) -> Type:
    if isinstance(t, SigT):
        return SigT(shift(t.usage), t.payload)
    return t


Context = dict


def ctx_add(g1: Mapping, g2: Mapping) -> Optional[dict]:
    out = dict(g1)
    for x, t in g2.items():
        if x in out:
            s = type_add(out[x], t)
            if s is None:
                return None
            out[x] = s
        else:
            out[x] = t
    return out


def ctx_conflict(g1: Mapping, g2: Mapping) -> Optional[tuple]:
    """First variable on which ``g1 + g2`` is undefined, with both types."""
    for x in sorted(set(g1) & set(g2)):
        if type_add(g1[x], g2[x]) is None:
            return x, g1[x], g2[x]
    return None


def ctx_le(d: Mapping, g: Mapping) -> bool:
    return all(x in g and type_le(t, g[x]) for x, t in d.items())


def ctx_sub(g: Mapping, d: Mapping) -> Optional[dict]:
    out = dict(g)
    for x, t in d.items():
        if x not in out:
            return None
        r = type_sub(out[x], t)
        if r is None:
            return None
        if r is ABSENT:
            del out[x]
        else:
            out[x] = r
    return out


def ctx_join(d1: Mapping, d2: Mapping) -> Optional[dict]:
    out = dict(d1)
    for x, t in d2.items():
        if x in out:
            j = type_join(out[x], t)
            if j is None:
                return None
            out[x] = j
        else:
            out[x] = t
    return out


def ctx_shift(g: Mapping) -> dict:
    return {x: shift_type(t) for x, t in g.items()}


def ctx_is_neutral(g: Mapping) -> bool:
    return all(is_classical(t) for t in g.values())


def format_ctx(g: Mapping) -> str:
    return "{" + ", ".join(f"{x}: {g[x]}" for x in sorted(g)) + "}"


# Minimal contexts of values -----------------------------------------------


def delta(v, t: Type, tenv: TypeEnv) -> Optional[dict]:
    """Least context typing the closed value ``v`` at the uniform type ``t``."""
    if isinstance(v, Name):
        return {v.id: t} if isinstance(t, SigT) else None
    if isinstance(v, Cnst):
        args = tenv.ctor_args(v.ctor, t)
        if args is None or len(args) != len(v.args):
            return None
        out: dict = {}
        for a, at in zip(v.args, args):
            d = delta(a, at, tenv)
            if d is None:
                return None
            out = ctx_add(out, d)
            if out is None:
                return None
        return out
    return None


# Value equivalence ---------------------------------------------------------


def value_equiv(v1, v2, t: Type, tenv: TypeEnv) -> bool:
    """Least equivalence identifying set-typed lists up to permutation."""
    if isinstance(t, SigT):
        return isinstance(v1, Name) and v1 == v2
    if isinstance(t, SetT):
        xs, ys = list_items(v1), list_items(v2)
        if xs is None or ys is None or len(xs) != len(ys):
            return False
        return _perm_match(xs, ys, t.elem, tenv)
    if not (isinstance(v1, Cnst) and isinstance(v2, Cnst)) or v1.ctor != v2.ctor:
        return False
    args = tenv.ctor_args(v1.ctor, t)
    if args is None or len(v1.args) != len(args) or len(v2.args) != len(args):
        return False
    return all(value_equiv(a, b, at, tenv) for a, b, at in zip(v1.args, v2.args, args))


def _perm_match(xs, ys, elem, tenv) -> bool:
    if not xs:
        return True
    head, rest = xs[0], xs[1:]
    for j, y in enumerate(ys):
        if value_equiv(head, y, elem, tenv) and _perm_match(rest, ys[:j] + ys[j + 1 :], elem, tenv):
            return True
    return False


def value_key(v, tenv: TypeEnv) -> tuple:
    """Fixed total order: signals by name, then constructors by declaration order."""
    if isinstance(v, Name):
        return (0, v.id)
    pos = tenv.positions.get(v.ctor, 1 << 30)
    return (1, pos, v.ctor, tuple(value_key(a, tenv) for a in v.args))


def canonicalize(v, t: Type, tenv: TypeEnv):
    """Representative of the class of ``v`` under value equivalence at ``t``."""
    if isinstance(v, Name) or isinstance(t, SigT):
        return v
    if isinstance(t, (SetT, ListT)):
        items = list_items(v)
        if items is None:
            return v
        items = [canonicalize(x, t.elem, tenv) for x in items]
        if isinstance(t, SetT):
            items.sort(key=lambda x: value_key(x, tenv))
        return list_value(items)
    if isinstance(v, Cnst):
        args = tenv.ctor_args(v.ctor, t)
        if args is None or len(args) != len(v.args):
            return v
        return Cnst(v.ctor, tuple(canonicalize(a, at, tenv) for a, at in zip(v.args, args)))
    return v


def values_of(t: Type, tenv: TypeEnv, depth: int, names: Mapping = None) -> list:
    """All closed values of ``t`` up to constructor depth ``depth``.

    Signal leaves are drawn from ``names`` (name -> type) when given.
    """
    if isinstance(t, SigT):
        return [Name(n) for n, nt in sorted((names or {}).items()) if nt == t or same_shape(nt, t)]
    if depth <= 0:
        return []
    out = []
    for c in tenv.ctors_of(t):
        args = tenv.ctor_args(c, t)
        pools = [values_of(a, tenv, depth - 1, names) for a in args]
        for combo in itertools.product(*pools):
            out.append(Cnst(c, tuple(combo)))
    return out
