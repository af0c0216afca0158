"""Abstract syntax of programs, expressions, values and patterns.

Signal names and ordinary variables share one namespace (``Name``), as
in the pi-calculus: a name is a signal as soon as it is bound to a
signal type or generated by a restriction.  Values are ``Name`` and
``Cnst`` trees whose leaves are signal names or constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Union

if TYPE_CHECKING:
    from spic.types import Type


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _span():
    return field(default=None, compare=False, repr=False, kw_only=True)


# Expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Name:
    id: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Cnst:
    ctor: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Fun:
    fn: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Deref:
    """``!s``: the list of values emitted on ``s``; only legal in continuations."""

    sig: str
    span: Optional[Span] = _span()


Expr = Union[Name, Cnst, Fun, Deref]
Value = Union[Name, Cnst]


def is_value(e: Expr) -> bool:
    if isinstance(e, Name):
        return True
    if isinstance(e, Cnst):
        return all(is_value(a) for a in e.args)
    return False


def has_deref(e: Expr) -> bool:
    if isinstance(e, Deref):
        return True
    if isinstance(e, (Cnst, Fun)):
        return any(has_deref(a) for a in e.args)
    return False


# Patterns ----------------------------------------------------------------


@dataclass(frozen=True)
class Pattern:
    """``c(x1, ..., xn)`` with pairwise distinct variables."""

    ctor: str
    vars: tuple = ()
    span: Optional[Span] = _span()

    def __post_init__(self):
        if len(set(self.vars)) != len(self.vars):
            raise ValueError(f"pattern variables of {self.ctor} are not distinct")


# Nested patterns, used by function equations only.


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PWild:
    pass


@dataclass(frozen=True)
class PCtor:
    ctor: str
    args: tuple = ()


FPattern = Union[PVar, PWild, PCtor]


# Programs ----------------------------------------------------------------


@dataclass(frozen=True)
class Nil:
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Call:
    """A thread call ``A(e1, ..., en)``; also used for continuations."""

    thread: str
    args: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Emit:
    sig: Expr
    value: Expr
    marked: bool = False
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Present:
    """``s(x).P, K``."""

    sig: Expr
    var: str
    body: "Program"
    cont: Call
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class SigMatch:
    """``[s1 = s2] P1, P2``."""

    left: Expr
    right: Expr
    then: "Program"
    other: "Program"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Match:
    """``[u |> c(x...)] P1, P2``.

    ``ty`` is the type of the scrutinee, filled in by the type checker so
    that ``nil``/``cons`` keep their list-or-set reading after the
    scrutinee has been replaced by a value.
    """

    subject: Expr
    pattern: Pattern
    then: "Program"
    other: "Program"
    ty: Optional["Type"] = field(default=None, compare=False, repr=False)
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class New:
    name: str
    ty: "Type"
    body: "Program"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Par:
    left: "Program"
    right: "Program"
    span: Optional[Span] = _span()


Program = Union[Nil, Call, Emit, Present, SigMatch, Match, New, Par]

STOP = "Stop"


def stop() -> Call:
    """The builtin continuation ``Stop() = 0`` written ``,0`` in source."""
    return Call(STOP, ())


def par_all(procs: Iterable[Program]) -> Program:
    procs = list(procs)
    if not procs:
        return Nil()
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Par(p, out)
    return out


def par_components(p: Program) -> list:
    if isinstance(p, Par):
        return par_components(p.left) + par_components(p.right)
    return [p]


# Declarations ------------------------------------------------------------


@dataclass(frozen=True)
class CtorDecl:
    name: str
    args: tuple  # of Type


@dataclass(frozen=True)
class TypeDecl:
    name: str
    usage: object  # Mult.ONE or Mult.INF
    ctors: tuple  # of CtorDecl
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Equation:
    patterns: tuple  # of FPattern
    body: Expr


@dataclass(frozen=True)
class FunDecl:
    name: str
    params: tuple  # of Type
    result: "Type"
    equations: tuple  # of Equation
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class ThreadDecl:
    name: str
    params: tuple  # of (str, Type)
    body: Program
    span: Optional[Span] = _span()

    @property
    def param_names(self) -> tuple:
        return tuple(n for n, _ in self.params)

    @property
    def param_types(self) -> tuple:
        return tuple(t for _, t in self.params)


@dataclass
class ModuleDecl:
    """A parsed ``.spi`` file: declarations plus an entry program."""

    types: dict = field(default_factory=dict)  # name -> TypeDecl
    functions: dict = field(default_factory=dict)  # name -> FunDecl
    threads: dict = field(default_factory=dict)  # name -> ThreadDecl
    context: dict = field(default_factory=dict)  # free signal -> Type
    entry: Program = field(default_factory=Nil)
    name: str = "<module>"

    def ctor_index(self) -> dict:
        """Constructor name -> (declaring type name, position in declaration order)."""
        table = {}
        pos = 0
        for tname, td in self.types.items():
            for cd in td.ctors:
                table[cd.name] = (tname, pos)
                pos += 1
        return table


# Free variables ----------------------------------------------------------


def expr_vars(e: Expr) -> set:
    if isinstance(e, Name):
        return {e.id}
    if isinstance(e, Deref):
        return {e.sig}
    if isinstance(e, (Cnst, Fun)):
        out = set()
        for a in e.args:
            out |= expr_vars(a)
        return out
    raise TypeError(f"not an expression: {e!r}")


def free_vars(p) -> set:
    """Free variables (signal names included) of a program or expression."""
    if isinstance(p, (Name, Cnst, Fun, Deref)):
        return expr_vars(p)
    if isinstance(p, Nil):
        return set()
    if isinstance(p, Call):
        out = set()
        for a in p.args:
            out |= expr_vars(a)
        return out
    if isinstance(p, Emit):
        return expr_vars(p.sig) | expr_vars(p.value)
    if isinstance(p, Present):
        return expr_vars(p.sig) | (free_vars(p.body) - {p.var}) | free_vars(p.cont)
    if isinstance(p, SigMatch):
        return expr_vars(p.left) | expr_vars(p.right) | free_vars(p.then) | free_vars(p.other)
    if isinstance(p, Match):
        return (
            expr_vars(p.subject)
            | (free_vars(p.then) - set(p.pattern.vars))
            | free_vars(p.other)
        )
    if isinstance(p, New):
        return free_vars(p.body) - {p.name}
    if isinstance(p, Par):
        return free_vars(p.left) | free_vars(p.right)
    raise TypeError(f"not a program: {p!r}")


def free_names(p, env: Optional[Mapping] = None) -> set:
    """Free signal names of ``p``.

    Closed runtime programs only have signal names free.  For source
    bodies pass ``env`` (variable -> type) to keep only signal-typed ones.
    """
    fv = free_vars(p)
    if env is None:
        return fv
    from spic.types import SigT

    return {x for x in fv if isinstance(env.get(x), SigT)}


def all_names(p) -> set:
    """Every identifier occurring in ``p``, bound or free."""
    if isinstance(p, (Name, Cnst, Fun, Deref)):
        return expr_vars(p)
    if isinstance(p, Nil):
        return set()
    if isinstance(p, Call):
        return free_vars(p)
    if isinstance(p, Emit):
        return free_vars(p)
    if isinstance(p, Present):
        return expr_vars(p.sig) | {p.var} | all_names(p.body) | free_vars(p.cont)
    if isinstance(p, SigMatch):
        return expr_vars(p.left) | expr_vars(p.right) | all_names(p.then) | all_names(p.other)
    if isinstance(p, Match):
        return expr_vars(p.subject) | set(p.pattern.vars) | all_names(p.then) | all_names(p.other)
    if isinstance(p, New):
        return {p.name} | all_names(p.body)
    if isinstance(p, Par):
        return all_names(p.left) | all_names(p.right)
    raise TypeError(f"not a program: {p!r}")


# Substitution ------------------------------------------------------------


def fresh_name(base: str, avoid: set) -> str:
    stem = base.split("#", 1)[0]
    k = 0
    while f"{stem}#{k}" in avoid:
        k += 1
    return f"{stem}#{k}"


def subst_expr(e: Expr, theta: Mapping) -> Expr:
    if isinstance(e, Name):
        return theta.get(e.id, e)
    if isinstance(e, Deref):
        if e.sig in theta:
            target = theta[e.sig]
            if not isinstance(target, Name):
                raise ValueError(f"cannot dereference non-signal {target!r}")
            return Deref(target.id, span=e.span)
        return e
    if isinstance(e, Cnst):
        return Cnst(e.ctor, tuple(subst_expr(a, theta) for a in e.args), span=e.span)
    if isinstance(e, Fun):
        return Fun(e.fn, tuple(subst_expr(a, theta) for a in e.args), span=e.span)
    raise TypeError(f"not an expression: {e!r}")


def _range_vars(theta: Mapping) -> set:
    out = set()
    for v in theta.values():
        out |= expr_vars(v)
    return out


def _restrict(theta: Mapping, bound: Iterable[str]) -> dict:
    bound = set(bound)
    return {k: v for k, v in theta.items() if k not in bound}


def substitute(p, theta: Mapping):
    """Capture-avoiding simultaneous substitution of expressions for variables.

    Binders whose name occurs free in the substituted expressions are
    renamed to ``base#k`` with the least unused ``k``.
    """
    if not theta:
        return p
    if isinstance(p, (Name, Cnst, Fun, Deref)):
        return subst_expr(p, theta)
    if isinstance(p, Nil):
        return p
    if isinstance(p, Call):
        return Call(p.thread, tuple(subst_expr(a, theta) for a in p.args), span=p.span)
    if isinstance(p, Emit):
        return Emit(subst_expr(p.sig, theta), subst_expr(p.value, theta), p.marked, span=p.span)
    if isinstance(p, Par):
        return Par(substitute(p.left, theta), substitute(p.right, theta), span=p.span)
    if isinstance(p, SigMatch):
        return SigMatch(
            subst_expr(p.left, theta),
            subst_expr(p.right, theta),
            substitute(p.then, theta),
            substitute(p.other, theta),
            span=p.span,
        )
    if isinstance(p, Present):
        var, body = _avoid_capture([p.var], p.body, theta)
        return Present(
            subst_expr(p.sig, theta),
            var[0],
            substitute(body, _restrict(theta, var)),
            substitute(p.cont, theta),
            span=p.span,
        )
    if isinstance(p, Match):
        vars_, then = _avoid_capture(list(p.pattern.vars), p.then, theta)
        return Match(
            subst_expr(p.subject, theta),
            Pattern(p.pattern.ctor, tuple(vars_), span=p.pattern.span),
            substitute(then, _restrict(theta, vars_)),
            substitute(p.other, theta),
            ty=p.ty,
            span=p.span,
        )
    if isinstance(p, New):
        (name,), body = _avoid_capture([p.name], p.body, theta)
        return New(name, p.ty, substitute(body, _restrict(theta, [name])), span=p.span)
    raise TypeError(f"not a program: {p!r}")


def _avoid_capture(binders: list, body, theta: Mapping):
    live = {k: v for k, v in theta.items() if k not in binders}
    if not live:
        return binders, body
    danger = _range_vars(live)
    clash = [b for b in binders if b in danger]
    if not clash:
        return binders, body
    avoid = danger | all_names(body) | set(theta) | set(binders)
    renaming = {}
    new_binders = []
    for b in binders:
        if b in clash:
            nb = fresh_name(b, avoid)
            avoid.add(nb)
            renaming[b] = Name(nb)
            new_binders.append(nb)
        else:
            new_binders.append(b)
    return new_binders, substitute(body, renaming)


def rename(p, mapping: Mapping[str, str]):
    return substitute(p, {k: Name(v) for k, v in mapping.items()})


# Matching ----------------------------------------------------------------


def match_value(v: Value, pat: Pattern) -> Optional[dict]:
    """The substitution matching ``v`` against ``pat``, or None on mismatch."""
    if isinstance(v, Cnst) and v.ctor == pat.ctor and len(v.args) == len(pat.vars):
        return dict(zip(pat.vars, v.args))
    return None


# Lists -------------------------------------------------------------------


def list_value(items: Iterable[Value]) -> Value:
    out: Value = Cnst("nil")
    for v in reversed(list(items)):
        out = Cnst("cons", (v, out))
    return out


def list_items(v: Value) -> Optional[list]:
    items = []
    while isinstance(v, Cnst) and v.ctor == "cons" and len(v.args) == 2:
        items.append(v.args[0])
        v = v.args[1]
    if isinstance(v, Cnst) and v.ctor == "nil" and not v.args:
        return items
    return None


# Sugar -------------------------------------------------------------------


def desugar_pause(k: Call, avoid: Optional[set] = None) -> New:
    """``pause.K`` is ``new s:Sig<k2 neutral>(Unit) in s(_).0, K`` with s fresh."""
    from spic.types import SigT, UNIT
    from spic.usage import neutral

    taken = set(avoid or ()) | free_vars(k)
    s = fresh_name("pause", taken)
    return New(s, SigT(neutral(2), UNIT), Present(Name(s), "_", Nil(), k))


def is_pause(p) -> bool:
    """Recognise the shape produced by ``desugar_pause``."""
    from spic.types import SigT, UNIT
    from spic.usage import neutral

    return (
        isinstance(p, New)
        and p.ty == SigT(neutral(2), UNIT)
        and isinstance(p.body, Present)
        and p.body.sig == Name(p.name)
        and isinstance(p.body.body, Nil)
        and p.name not in free_vars(p.body.cont)
    )


# Alpha-normalisation -----------------------------------------------------


def alpha_normalize(p, prefix: str = "%"):
    """Rename every binder to ``%0, %1, ...`` in traversal order."""
    counter = [0]

    def fresh():
        n = f"{prefix}{counter[0]}"
        counter[0] += 1
        return n

    def go(q, env):
        if isinstance(q, (Name, Cnst, Fun, Deref)):
            return subst_expr(q, env)
        if isinstance(q, Nil):
            return q
        if isinstance(q, Call):
            return Call(q.thread, tuple(subst_expr(a, env) for a in q.args))
        if isinstance(q, Emit):
            return Emit(subst_expr(q.sig, env), subst_expr(q.value, env), q.marked)
        if isinstance(q, Par):
            return Par(go(q.left, env), go(q.right, env))
        if isinstance(q, SigMatch):
            return SigMatch(
                subst_expr(q.left, env), subst_expr(q.right, env), go(q.then, env), go(q.other, env)
            )
        if isinstance(q, Present):
            n = fresh()
            return Present(
                subst_expr(q.sig, env),
                n,
                go(q.body, {**env, q.var: Name(n)}),
                go(q.cont, env),
            )
        if isinstance(q, Match):
            names = [fresh() for _ in q.pattern.vars]
            inner = {**env, **{v: Name(n) for v, n in zip(q.pattern.vars, names)}}
            return Match(
                subst_expr(q.subject, env),
                Pattern(q.pattern.ctor, tuple(names)),
                go(q.then, inner),
                go(q.other, env),
                ty=q.ty,
            )
        if isinstance(q, New):
            n = fresh()
            return New(n, q.ty, go(q.body, {**env, q.name: Name(n)}))
        raise TypeError(f"not a program: {q!r}")

    return go(p, {})


def alpha_equal(p, q) -> bool:
    return alpha_normalize(p) == alpha_normalize(q)
