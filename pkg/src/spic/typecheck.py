"""Affine type checking by least-demand inference.

Every expression, continuation and program is mapped bottom-up to the
least context (its *demand*) under which it can be typed.  A term is
accepted in a context ``G`` when its demand is defined and below ``G``.
Expected types flow top-down from thread signatures, function
signatures, signal payloads and restriction annotations, so every rule
is syntax directed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from spic.syntax import (
    Call,
    Cnst,
    Deref,
    Emit,
    Fun,
    Match,
    ModuleDecl,
    Name,
    New,
    Nil,
    Par,
    PCtor,
    Present,
    PVar,
    PWild,
    SigMatch,
    Span,
    free_vars,
)
from spic.types import (
    Ind,
    IllFormed,
    ListT,
    SetT,
    SigT,
    TypeClass,
    TypeEnv,
    check_type_decl,
    ctx_add,
    ctx_join,
    same_shape,
    type_add,
    type_join,
    type_le,
    type_wf,
)
from spic.usage import (
    INF,
    ONE,
    Usage,
    char,
    char_join,
    emit_usage,
    marked_usage,
    neutral,
    neutral_char,
    receive_usage,
)

# Diagnostic codes whose root cause is a usage violation.
USAGE_CODES = frozenset({"UsageConflict", "UsageExceeded", "DerefOnKind5", "NoReceive", "MarkedNotKind5"})


@dataclass
class Diagnostic:
    code: str
    message: str
    span: Optional[Span] = None
    where: str = ""
    var: Optional[str] = None
    demands: tuple = ()

    @property
    def is_usage_error(self) -> bool:
        return self.code in USAGE_CODES

    def __str__(self) -> str:
        loc = f"{self.span.line}:{self.span.col}: " if self.span else ""
        ctx = f"[{self.where}] " if self.where else ""
        extra = ""
        if self.demands:
            extra = " (" + " vs ".join(self.demands) + ")"
        return f"{loc}{ctx}{self.code}: {self.message}{extra}"

    def to_record(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "line": self.span.line if self.span else None,
            "col": self.span.col if self.span else None,
            "where": self.where,
            "var": self.var,
            "demands": list(self.demands),
        }


class TypingError(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag
        super().__init__(str(diag))


def _fail(code, message, span=None, var=None, demands=()):
    raise TypingError(Diagnostic(code, message, span, var=var, demands=tuple(str(d) for d in demands)))


def _span(node) -> Optional[Span]:
    return getattr(node, "span", None)


@dataclass
class Obligation:
    """A semantic assumption exported to randomized testing."""

    kind: str  # "function" or "thread"
    name: str
    param: int

    def to_record(self) -> dict:
        return {"kind": self.kind, "name": self.name, "param": self.param}


@dataclass
class CheckResult:
    diagnostics: list = field(default_factory=list)
    obligations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def contains_set(t) -> bool:
    if isinstance(t, SetT):
        return True
    if isinstance(t, ListT):
        return contains_set(t.elem)
    if isinstance(t, SigT):
        return contains_set(t.payload)
    return False


def sig_var_demand(expected: SigT) -> SigT:
    """Least type for ``[s]`` at ``expected``: nothing now, enough later."""
    u = expected.usage
    later = char_join(u.kind, u.now, u.later)
    return SigT(Usage(u.kind, neutral_char(u.kind), later), expected.payload)


def deref_demand(sig_type: SigT, expected, span=None) -> SigT:
    """Least signal type allowing ``!s`` to be read at ``expected``."""
    kind = sig_type.usage.kind
    if kind == 5:
        _fail("DerefOnKind5", "kind-5 signals cannot be received at the end of the instant", span)
    table = {
        1: (SetT, INF, char("w", 0, "w")),
        3: (SetT, ONE, char("w", 0, 1)),
        2: (ListT, INF, char(0, "w", "w")),
        4: (ListT, ONE, char(0, 0, 1)),
    }
    op, x, first = table[kind]
    want = op(x, sig_type.payload)
    if expected != want:
        _fail(
            "WrongType",
            f"dereference of a kind-{kind} signal has type {want}, expected {expected}",
            span,
        )
    return SigT(Usage(kind, first, neutral_char(kind)), sig_type.payload)


class Checker:
    """Demand inference against the signatures of one module."""

    def __init__(self, module: ModuleDecl):
        self.module = module
        self.tenv = TypeEnv.of(module)

    # helpers

    def add(self, d1: Mapping, d2: Mapping, span=None) -> dict:
        out = ctx_add(d1, d2)
        if out is None:
            for x in sorted(set(d1) & set(d2)):
                if type_add(d1[x], d2[x]) is None:
                    _fail(
                        "UsageConflict",
                        f"uses of {x} cannot be combined",
                        span,
                        var=x,
                        demands=(d1[x], d2[x]),
                    )
        return out

    def join(self, d1: Mapping, d2: Mapping, span=None) -> dict:
        out = ctx_join(d1, d2)
        if out is None:
            for x in sorted(set(d1) & set(d2)):
                if type_join(d1[x], d2[x]) is None:
                    _fail(
                        "UsageConflict",
                        f"branches use {x} incompatibly",
                        span,
                        var=x,
                        demands=(d1[x], d2[x]),
                    )
        return out

    def bind(self, demand: Mapping, name: str, ty, span=None) -> dict:
        """Check the demand on a bound name against its type and drop it."""
        if name in demand:
            if not type_le(demand[name], ty):
                _fail(
                    "UsageExceeded",
                    f"{name} is used beyond its type",
                    span,
                    var=name,
                    demands=(demand[name], ty),
                )
        return {k: v for k, v in demand.items() if k != name}

    def lookup(self, scope: Mapping, x: str, span=None):
        if x not in scope:
            _fail("UnboundVariable", f"unbound variable {x}", span, var=x)
        return scope[x]

    def signal(self, scope: Mapping, e, span=None) -> tuple:
        if not isinstance(e, Name):
            _fail("WrongType", "expected a signal name", span)
        t = self.lookup(scope, e.id, _span(e) or span)
        if not isinstance(t, SigT):
            _fail("WrongType", f"{e.id} has type {t}, not a signal type", _span(e) or span, var=e.id)
        return e.id, t

    # expressions

    def expr(self, e, expected, scope: Mapping, deref: bool = False) -> dict:
        """Demand of ``e`` (or ``[e]`` when ``deref``) at type ``expected``."""
        sp = _span(e)
        if isinstance(e, Name):
            t = self.lookup(scope, e.id, sp)
            if not same_shape(t, expected) or (not isinstance(t, SigT) and t != expected):
                _fail("WrongType", f"{e.id} has type {t}, expected {expected}", sp, var=e.id)
            if isinstance(expected, SigT):
                if deref:
                    return {e.id: sig_var_demand(expected)}
                return {e.id: expected}
            return {e.id: t}
        if isinstance(e, Deref):
            if not deref:
                _fail("WrongType", "dereference outside a continuation", sp)
            t = self.lookup(scope, e.sig, sp)
            if not isinstance(t, SigT):
                _fail("WrongType", f"{e.sig} is not a signal", sp, var=e.sig)
            return {e.sig: deref_demand(t, expected, sp)}
        if isinstance(e, Cnst):
            args = self.tenv.ctor_args(e.ctor, expected)
            if args is None:
                _fail("WrongType", f"constructor {e.ctor} does not build {expected}", sp)
            if len(args) != len(e.args):
                _fail("WrongType", f"constructor {e.ctor} expects {len(args)} arguments", sp)
            out: dict = {}
            for a, at in zip(e.args, args):
                out = self.add(out, self.expr(a, at, scope, deref), sp)
            return out
        if isinstance(e, Fun):
            fd = self.module.functions.get(e.fn)
            if fd is None:
                _fail("UnknownSymbol", f"unknown function {e.fn}", sp)
            if fd.result != expected:
                _fail("WrongType", f"{e.fn} returns {fd.result}, expected {expected}", sp)
            if len(fd.params) != len(e.args):
                _fail("WrongType", f"{e.fn} expects {len(fd.params)} arguments", sp)
            out = {}
            for a, at in zip(e.args, fd.params):
                out = self.add(out, self.expr(a, at, scope, deref), sp)
            return out
        _fail("WrongType", f"not an expression: {e!r}", sp)

    def infer(self, e, scope: Mapping, hint=None):
        """Type of a match scrutinee; ``hint`` is the type recorded when it was a variable."""
        if isinstance(e, Name) and e.id in scope:
            return scope[e.id]
        if hint is not None:
            return hint
        if isinstance(e, Name):
            return self.lookup(scope, e.id, _span(e))
        if isinstance(e, Fun):
            fd = self.module.functions.get(e.fn)
            if fd is None:
                _fail("UnknownSymbol", f"unknown function {e.fn}", _span(e))
            return fd.result
        if isinstance(e, Cnst) and e.ctor in self.tenv.ctors:
            tname = self.tenv.ctors[e.ctor][0]
            return Ind(tname, self.tenv.decls[tname].usage)
        _fail("WrongType", "cannot determine the type of the matched value", _span(e))

    def call(self, c: Call, scope: Mapping, deref: bool) -> dict:
        th = self.module.threads.get(c.thread)
        if th is None:
            _fail("UnknownSymbol", f"unknown thread {c.thread}", c.span)
        if len(th.params) != len(c.args):
            _fail("WrongType", f"{c.thread} expects {len(th.params)} arguments", c.span)
        out: dict = {}
        for a, (_, at) in zip(c.args, th.params):
            out = self.add(out, self.expr(a, at, scope, deref), c.span)
        return out

    # programs

    def program(self, p, scope: Mapping) -> dict:
        sp = _span(p)
        if isinstance(p, Nil):
            return {}
        if isinstance(p, Call):
            return self.call(p, scope, deref=False)
        if isinstance(p, Emit):
            s, st = self.signal(scope, p.sig, sp)
            kind = st.usage.kind
            if p.marked:
                if kind != 5:
                    _fail("MarkedNotKind5", f"marked emission on kind-{kind} signal {s}", sp, var=s)
                return {s: SigT(marked_usage(), st.payload)}
            d = {s: SigT(emit_usage(kind), st.payload)}
            return self.add(d, self.expr(p.value, st.payload, scope), sp)
        if isinstance(p, Present):
            s, st = self.signal(scope, p.sig, sp)
            ru = receive_usage(st.usage.kind)
            if ru is None:
                _fail(
                    "NoReceive",
                    f"kind-{st.usage.kind} signal {s} cannot be received within the instant",
                    sp,
                    var=s,
                )
            body = self.program(p.body, {**scope, p.var: st.payload})
            body = self.bind(body, p.var, st.payload, sp)
            now = self.add({s: SigT(ru, st.payload)}, body, sp)
            return self.join(now, self.call(p.cont, scope, deref=True), sp)
        if isinstance(p, SigMatch):
            d: dict = {}
            for side in (p.left, p.right):
                s, st = self.signal(scope, side, sp)
                d = self.join(d, {s: SigT(neutral(st.usage.kind), st.payload)}, sp)
            d = self.join(d, self.program(p.then, scope), sp)
            return self.join(d, self.program(p.other, scope), sp)
        if isinstance(p, Match):
            ty = self.infer(p.subject, scope, p.ty)
            if p.ty is None:
                object.__setattr__(p, "ty", ty)
            args = self.tenv.ctor_args(p.pattern.ctor, ty)
            if args is None or len(args) != len(p.pattern.vars):
                _fail("WrongType", f"pattern {p.pattern.ctor} does not match type {ty}", sp)
            if isinstance(p.subject, Name) and p.subject.id in free_vars(p.then) and p.subject.id not in p.pattern.vars:
                _fail(
                    "WrongType",
                    f"matched variable {p.subject.id} occurs in the success branch",
                    sp,
                    var=p.subject.id,
                )
            du = self.expr(p.subject, ty, scope)
            inner = {**scope, **dict(zip(p.pattern.vars, args))}
            d1 = self.program(p.then, inner)
            for x, xt in zip(p.pattern.vars, args):
                d1 = self.bind(d1, x, xt, sp)
            return self.join(self.add(du, d1, sp), self.program(p.other, scope), sp)
        if isinstance(p, New):
            self.wf(p.ty, sp)
            d = self.program(p.body, {**scope, p.name: p.ty})
            return self.bind(d, p.name, p.ty, sp)
        if isinstance(p, Par):
            return self.add(self.program(p.left, scope), self.program(p.right, scope), sp)
        _fail("WrongType", f"not a program: {p!r}", sp)

    def wf(self, t, span=None) -> TypeClass:
        try:
            return type_wf(t, self.tenv)
        except IllFormed as exc:
            code = "NotAffinePreserving" if "affine" in str(exc) else "IllFormedType"
            _fail(code, str(exc), span)

    # top-level judgements

    def accepts(self, ctx: Mapping, p) -> dict:
        """Demand of ``p`` after checking it is below ``ctx``; raises TypingError."""
        d = self.program(p, ctx)
        self.within(d, ctx, _span(p))
        return d

    def within(self, demand: Mapping, ctx: Mapping, span=None):
        for x, t in demand.items():
            if x not in ctx:
                _fail("UnboundVariable", f"unbound variable {x}", span, var=x)
            if not type_le(t, ctx[x]):
                _fail("UsageExceeded", f"{x} is used beyond its type", span, var=x, demands=(t, ctx[x]))

    def check_function(self, fd):
        for t in list(fd.params) + [fd.result]:
            if self.wf(t, fd.span) is not TypeClass.CLASSICAL:
                _fail("NotClassical", f"function {fd.name} must have classical types, got {t}", fd.span)
        for eq in fd.equations:
            scope: dict = {}
            for pat, t in zip(eq.patterns, fd.params):
                self._bind_fpattern(pat, t, scope, fd.span)
            d = self.expr(eq.body, fd.result, scope)
            self.within(d, scope, fd.span)

    def _bind_fpattern(self, pat, t, scope, span):
        if isinstance(pat, PWild):
            return
        if isinstance(pat, PVar):
            if pat.name in scope:
                _fail("WrongType", f"variable {pat.name} bound twice in a pattern", span)
            scope[pat.name] = t
            return
        if isinstance(pat, PCtor):
            args = self.tenv.ctor_args(pat.ctor, t)
            if args is None or len(args) != len(pat.args):
                _fail("WrongType", f"pattern {pat.ctor} does not match type {t}", span)
            for a, at in zip(pat.args, args):
                self._bind_fpattern(a, at, scope, span)

    def check_thread(self, th):
        for x, t in th.params:
            if self.wf(t, th.span) is TypeClass.NON_UNIFORM:
                _fail("NonUniformParam", f"parameter {x} of {th.name} has non-uniform type {t}", th.span, var=x)
        extra = free_vars(th.body) - set(th.param_names)
        if extra:
            x = sorted(extra)[0]
            _fail("UnboundVariable", f"{x} is free in the body of {th.name}", th.span, var=x)
        self.accepts(dict(th.params), th.body)

    def check_entry(self):
        m = self.module
        for x, t in m.context.items():
            self.wf(t)
            if not isinstance(t, SigT):
                _fail("WrongType", f"context entry {x} must be a signal, got {t}", var=x)
        self.accepts(dict(m.context), m.entry)


def check_module(module: ModuleDecl, entry: bool = True) -> CheckResult:
    """Check every declaration; diagnostics are collected per definition."""
    res = CheckResult()
    try:
        chk = Checker(module)
    except IllFormed as exc:
        res.diagnostics.append(Diagnostic("IllFormedType", str(exc)))
        return res

    def guard(where, fn, *args):
        try:
            fn(*args)
        except TypingError as exc:
            exc.diag.where = where
            res.diagnostics.append(exc.diag)

    def check_decl(td):
        try:
            check_type_decl(td, chk.tenv)
        except IllFormed as exc:
            code = "NotAffinePreserving" if "affine" in str(exc) else "IllFormedType"
            _fail(code, str(exc), td.span)

    for td in module.types.values():
        guard(f"type {td.name}", check_decl, td)
    for fd in module.functions.values():
        guard(f"fun {fd.name}", chk.check_function, fd)
        for i, t in enumerate(fd.params):
            if contains_set(t):
                res.obligations.append(Obligation("function", fd.name, i))
    for th in module.threads.values():
        guard(f"thread {th.name}", chk.check_thread, th)
        for i, t in enumerate(th.param_types):
            if contains_set(t):
                res.obligations.append(Obligation("thread", th.name, i))
    if entry:
        guard("main", chk.check_entry)
    return res


def check_program(module: ModuleDecl, ctx: Mapping, p) -> Optional[Diagnostic]:
    """None when ``ctx |- p``, otherwise the first diagnostic."""
    try:
        Checker(module).accepts(ctx, p)
    except TypingError as exc:
        return exc.diag
    return None


def demand(module: ModuleDecl, p, scope: Mapping) -> dict:
    return Checker(module).program(p, scope)


def expr_demand(module: ModuleDecl, e, expected, scope: Mapping, deref: bool = False) -> dict:
    return Checker(module).expr(e, expected, scope, deref)

