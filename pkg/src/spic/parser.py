"""Concrete syntax for ``.spi`` modules: lexer, LL parser and pretty-printer.

A module is a sequence of declarations::

    type D = d0 | d1 | d2;
    type Req<1> = req(Sig<k5:(1,0,0)w>(D), D);
    alias Out = Sig<k3:(w,0,0)w>(D);
    fun f(D) -> D { f(d0) = d1; f(x) = x; }
    thread A(s : Out, x : D) = emit s f(x) | pause.A(s, x);
    context s : Out;
    main = A(s, d0);

``--`` starts a comment.  Programs use ``0``, ``A(e, ...)``, ``emit s e``,
``present s(x) { P } else K``, ``match s1 = s2 { P } else { P }``,
``match u with c(x, ...) { P } else { P }``, ``new s : T in P`` (the body
extends as far right as possible), ``pause.K`` and ``P | P``.  A
continuation ``K`` is a call ``A(r, ...)`` or ``0`` (read as ``Stop()``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from spic.syntax import (
    STOP,
    Call,
    Cnst,
    CtorDecl,
    Deref,
    Emit,
    Equation,
    Fun,
    FunDecl,
    Match,
    ModuleDecl,
    Name,
    New,
    Nil,
    Par,
    Pattern,
    PCtor,
    Present,
    PVar,
    PWild,
    SigMatch,
    Span,
    ThreadDecl,
    TypeDecl,
    desugar_pause,
    is_pause,
    list_items,
    par_components,
)
from spic.types import IllFormed, Ind, ListT, SetT, SigT, TypeEnv
from spic.usage import Mult, Usage, char

KEYWORDS = {
    "type", "alias", "fun", "thread", "context", "main",
    "emit", "present", "else", "match", "with", "new", "in", "pause",
}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        super().__init__(self.describe())

    def describe(self) -> str:
        out = f"{self.line}:{self.col}: {self.message}"
        if self.expected:
            out += " (expected " + ", ".join(repr(e) for e in self.expected) + ")"
        return out

    def to_record(self) -> dict:
        return {
            "code": "ParseError",
            "message": self.message,
            "line": self.line,
            "col": self.col,
            "expected": list(self.expected),
        }


# Lexer -------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # "id", "num", "sym", "eof"
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>--[^\n]*)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_'#]*)|(?P<num>[0-9]+)"
    r"|(?P<sym>->|[(){}\[\],;:=|.!<>*])"
)


def tokenize(text: str) -> list:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind in ("id", "num", "sym"):
                tokens.append(Token(kind, lexeme, line, col))
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# Parser ------------------------------------------------------------------


@dataclass
class SourceModule:
    text: str
    filename: str
    module: ModuleDecl
    spans: dict = field(default_factory=dict)  # declaration name -> Span


class _Parser:
    def __init__(self, text: str, filename: str):
        self.toks = tokenize(text)
        self.i = 0
        self.filename = filename
        self.type_usages: dict = {"Unit": Mult.INF}
        self.aliases: dict = {}
        self._prescan()

    # token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "id", "num") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, message: str, expected=(), tok: Optional[Token] = None):
        t = tok or self.tok
        return ParseError(message, t.line, t.col, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"unexpected {found!r}", [text])
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            found = t.text or "end of input"
            raise self.error(f"unexpected {found!r}", [what])
        return self.advance()

    def span(self, t: Token) -> Span:
        return Span(t.line, t.col)

    def _prescan(self):
        """Record declared usages of inductive types so they can be used before their declaration."""
        toks = self.toks
        for k, t in enumerate(toks):
            if t.kind == "id" and t.text == "type" and k + 1 < len(toks) and toks[k + 1].kind == "id":
                usage = Mult.INF
                if k + 4 < len(toks) and toks[k + 2].text == "<" and toks[k + 4].text == ">":
                    try:
                        usage = Mult.parse(toks[k + 3].text)
                    except ValueError:
                        pass
                self.type_usages.setdefault(toks[k + 1].text, usage)

    # declarations

    def module(self) -> SourceModule:
        m = ModuleDecl(name=self.filename)
        spans = {}
        entry_seen = False
        while self.tok.kind != "eof":
            t = self.tok
            if self.at("type"):
                td = self.type_decl()
                if td.name in m.types or td.name == "Unit":
                    raise ParseError(f"type {td.name} declared twice", t.line, t.col)
                m.types[td.name] = td
                spans[td.name] = self.span(t)
            elif self.at("alias"):
                self.alias_decl()
            elif self.at("fun"):
                fd = self.fun_decl()
                if fd.name in m.functions:
                    raise ParseError(f"function {fd.name} defined twice", t.line, t.col)
                m.functions[fd.name] = fd
                spans[fd.name] = self.span(t)
            elif self.at("thread"):
                th = self.thread_decl()
                if th.name in m.threads or th.name == STOP:
                    raise ParseError(f"thread {th.name} defined twice", t.line, t.col)
                m.threads[th.name] = th
                spans[th.name] = self.span(t)
            elif self.at("context"):
                self.advance()
                if not self.at(";"):
                    while True:
                        nt = self.ident("signal name")
                        self.expect(":")
                        if nt.text in m.context:
                            raise ParseError(f"{nt.text} declared twice in context", nt.line, nt.col)
                        m.context[nt.text] = self.type_()
                        if not self.at(","):
                            break
                        self.advance()
                self.expect(";")
            elif self.at("main"):
                if entry_seen:
                    raise self.error("main defined twice")
                self.advance()
                self.expect("=")
                m.entry = self.program()
                self.expect(";")
                entry_seen = True
            else:
                found = self.tok.text
                raise self.error(
                    f"unexpected {found!r}", ["type", "alias", "fun", "thread", "context", "main"]
                )
        m.threads.setdefault(STOP, ThreadDecl(STOP, (), Nil()))
        return SourceModule("", self.filename, m, spans)

    def type_decl(self) -> TypeDecl:
        t = self.expect("type")
        name = self.ident("type name").text
        usage = Mult.INF
        if self.at("<"):
            self.advance()
            usage = self.mult(allow_zero=False)
            self.expect(">")
        self.expect("=")
        ctors = [self.ctor_decl()]
        while self.at("|"):
            self.advance()
            ctors.append(self.ctor_decl())
        self.expect(";")
        return TypeDecl(name, usage, tuple(ctors), span=self.span(t))

    def ctor_decl(self) -> CtorDecl:
        if self.at("*"):
            raise self.error("'*' is the builtin Unit constructor")
        name = self.ident("constructor name").text
        args = ()
        if self.at("("):
            args = tuple(self.type_list(")"))
        return CtorDecl(name, args)

    def alias_decl(self):
        self.expect("alias")
        nt = self.ident("alias name")
        self.expect("=")
        if nt.text in self.aliases or nt.text in self.type_usages:
            raise ParseError(f"type name {nt.text} already in use", nt.line, nt.col)
        self.aliases[nt.text] = self.type_()
        self.expect(";")

    def fun_decl(self) -> FunDecl:
        t = self.expect("fun")
        name = self.ident("function name").text
        params = tuple(self.type_list(")")) if self.at("(") else self._missing("(")
        self.expect("->")
        result = self.type_()
        self.expect("{")
        eqs = []
        while not self.at("}"):
            et = self.ident("function name")
            if et.text != name:
                raise ParseError(f"equation for {et.text} inside fun {name}", et.line, et.col)
            self.expect("(")
            pats = []
            if not self.at(")"):
                pats.append(self.fpattern())
                while self.at(","):
                    self.advance()
                    pats.append(self.fpattern())
            self.expect(")")
            if len(pats) != len(params):
                raise ParseError(
                    f"equation for {name} has {len(pats)} patterns, expected {len(params)}",
                    et.line,
                    et.col,
                )
            self.expect("=")
            body = self.expr(allow_deref=False)
            self.expect(";")
            eqs.append(Equation(tuple(pats), body))
        self.expect("}")
        return FunDecl(name, params, result, tuple(eqs), span=self.span(t))

    def _missing(self, what):
        raise self.error(f"unexpected {self.tok.text!r}", [what])

    def fpattern(self):
        if self.at("_"):
            self.advance()
            return PWild()
        if self.at("*"):
            self.advance()
            return PCtor("*", ())
        if self.at("["):
            items = self._bracket(self.fpattern)
            out = PCtor("nil", ())
            for p in reversed(items):
                out = PCtor("cons", (p, out))
            return out
        nt = self.ident("pattern")
        if self.at("("):
            self.advance()
            args = []
            if not self.at(")"):
                args.append(self.fpattern())
                while self.at(","):
                    self.advance()
                    args.append(self.fpattern())
            self.expect(")")
            return PCtor(nt.text, tuple(args))
        return PVar(nt.text)  # nullary constructors are resolved later

    def thread_decl(self) -> ThreadDecl:
        t = self.expect("thread")
        name = self.ident("thread name").text
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pt = self.ident("parameter name")
                self.expect(":")
                params.append((pt.text, self.type_()))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        names = [p for p, _ in params]
        if len(set(names)) != len(names):
            raise ParseError(f"thread {name} has repeated parameter names", t.line, t.col)
        self.expect("=")
        body = self.program()
        self.expect(";")
        return ThreadDecl(name, tuple(params), body, span=self.span(t))

    # types

    def type_list(self, close: str) -> list:
        self.expect("(")
        out = []
        if not self.at(close):
            out.append(self.type_())
            while self.at(","):
                self.advance()
                out.append(self.type_())
        self.expect(close)
        return out

    def mult(self, allow_zero: bool = True) -> Mult:
        t = self.tok
        if t.text in ("0", "1", "w") and (allow_zero or t.text != "0"):
            self.advance()
            return Mult.parse(t.text)
        raise self.error(f"unexpected {t.text!r}", ["1", "w"] + (["0"] if allow_zero else []))

    def usage(self) -> Usage:
        t = self.tok
        if not (t.kind == "id" and re.fullmatch(r"k[1-5]", t.text)):
            raise self.error(f"unexpected {t.text!r}", ["k1", "k2", "k3", "k4", "k5"])
        self.advance()
        kind = int(t.text[1])
        self.expect(":")
        chars = [self.point()]
        if self.at("("):
            chars.append(self.point())
        if not self.at("w"):
            raise self.error(f"unexpected {self.tok.text!r}", ["w", "("])
        self.advance()
        try:
            return Usage(kind, chars[0], chars[-1])
        except ValueError as exc:
            raise ParseError(str(exc), t.line, t.col) from None

    def point(self):
        self.expect("(")
        a = self.mult()
        self.expect(",")
        b = self.mult()
        self.expect(",")
        c = self.mult()
        self.expect(")")
        return char(a, b, c)

    def type_(self):
        t = self.ident("type")
        if t.text == "Sig":
            self.expect("<")
            u = self.usage()
            self.expect(">")
            self.expect("(")
            payload = self.type_()
            self.expect(")")
            return SigT(u, payload)
        if t.text in ("Set", "List"):
            self.expect("<")
            x = self.mult(allow_zero=False)
            self.expect(">")
            self.expect("(")
            elem = self.type_()
            self.expect(")")
            return (SetT if t.text == "Set" else ListT)(x, elem)
        if t.text in self.aliases:
            return self.aliases[t.text]
        if t.text in self.type_usages:
            return Ind(t.text, self.type_usages[t.text])
        raise ParseError(f"unknown type {t.text}", t.line, t.col)

    # programs

    def program(self):
        t = self.tok
        parts = [self.prefix()]
        while self.at("|"):
            self.advance()
            parts.append(self.prefix())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Par(p, out, span=self.span(t))
        return out

    def prefix(self):
        t = self.tok
        sp = self.span(t)
        if self.at("0"):
            self.advance()
            return Nil(span=sp)
        if self.at("("):
            self.advance()
            p = self.program()
            self.expect(")")
            return p
        if self.at("emit"):
            self.advance()
            marked = False
            if self.at("!"):
                self.advance()
                marked = True
            st = self.ident("signal name")
            if self.at("|") or self.at(";") or self.at(")") or self.at("}") or self.tok.kind == "eof":
                raise self.error("emit needs a signal and a value", ["expression"])
            value = self.expr(allow_deref=False)
            return Emit(Name(st.text, span=self.span(st)), value, marked, span=sp)
        if self.at("present"):
            self.advance()
            st = self.ident("signal name")
            self.expect("(")
            var = self.ident("variable").text
            self.expect(")")
            body = self.block()
            self.expect("else")
            k = self.cont()
            return Present(Name(st.text, span=self.span(st)), var, body, k, span=sp)
        if self.at("match"):
            self.advance()
            subject = self.expr(allow_deref=False)
            if self.at("="):
                self.advance()
                right = self.expr(allow_deref=False)
                then = self.block()
                self.expect("else")
                other = self.block()
                return SigMatch(subject, right, then, other, span=sp)
            if self.at("with"):
                self.advance()
                pat = self.pattern()
                then = self.block()
                self.expect("else")
                other = self.block()
                return Match(subject, pat, then, other, span=sp)
            raise self.error(f"unexpected {self.tok.text!r}", ["=", "with"])
        if self.at("new"):
            self.advance()
            nt = self.ident("signal name")
            self.expect(":")
            ty = self.type_()
            self.expect("in")
            body = self.program()
            return New(nt.text, ty, body, span=sp)
        if self.at("pause"):
            self.advance()
            self.expect(".")
            k = self.cont()
            p = desugar_pause(k)
            return New(p.name, p.ty, p.body, span=sp)
        if self.tok.kind == "id" and self.tok.text not in KEYWORDS:
            nt = self.advance()
            args = self.args(allow_deref=False)
            return Call(nt.text, tuple(args), span=sp)
        raise self.error(
            f"unexpected {self.tok.text or 'end of input'!r}",
            ["0", "(", "emit", "present", "match", "new", "pause", "thread call"],
        )

    def block(self):
        self.expect("{")
        p = self.program()
        self.expect("}")
        return p

    def cont(self) -> Call:
        t = self.tok
        if self.at("0"):
            self.advance()
            return Call(STOP, (), span=self.span(t))
        nt = self.ident("continuation")
        args = self.args(allow_deref=True)
        return Call(nt.text, tuple(args), span=self.span(nt))

    def args(self, allow_deref: bool) -> list:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.expr(allow_deref))
            while self.at(","):
                self.advance()
                out.append(self.expr(allow_deref))
        self.expect(")")
        return out

    def pattern(self) -> Pattern:
        t = self.tok
        if self.at("*"):
            self.advance()
            return Pattern("*", (), span=self.span(t))
        ct = self.ident("constructor")
        vars_ = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                vars_.append(self.ident("variable").text)
                while self.at(","):
                    self.advance()
                    vars_.append(self.ident("variable").text)
            self.expect(")")
        if len(set(vars_)) != len(vars_):
            raise ParseError("pattern variables must be distinct", t.line, t.col)
        return Pattern(ct.text, tuple(vars_), span=self.span(t))

    def expr(self, allow_deref: bool):
        t = self.tok
        sp = self.span(t)
        if self.at("!"):
            if not allow_deref:
                raise self.error("dereference !s is only allowed in continuations")
            self.advance()
            st = self.ident("signal name")
            return Deref(st.text, span=sp)
        if self.at("*"):
            self.advance()
            return Cnst("*", (), span=sp)
        if self.at("["):
            items = self._bracket(lambda: self.expr(allow_deref))
            out = Cnst("nil", (), span=sp)
            for e in reversed(items):
                out = Cnst("cons", (e, out), span=sp)
            return out
        nt = self.ident("expression")
        if self.at("("):
            args = self.args(allow_deref)
            return Fun(nt.text, tuple(args), span=sp)  # constructor or function, resolved later
        return Name(nt.text, span=sp)

    def _bracket(self, item):
        self.expect("[")
        items = []
        if not self.at("]"):
            items.append(item())
            while self.at(";"):
                self.advance()
                items.append(item())
        self.expect("]")
        return items


# Resolution --------------------------------------------------------------


class _Resolver:
    """Turns provisional applications into constructors or function calls and checks arities."""

    def __init__(self, m: ModuleDecl):
        self.m = m
        self.tenv = TypeEnv.of(m)

    def fail(self, message: str, span: Optional[Span]):
        line, col = (span.line, span.col) if span else (1, 1)
        return ParseError(message, line, col)

    def expr(self, e):
        if isinstance(e, Name):
            if self.tenv.is_ctor(e.id):
                if self.tenv.arity(e.id) != 0:
                    raise self.fail(f"constructor {e.id} expects {self.tenv.arity(e.id)} arguments", e.span)
                return Cnst(e.id, (), span=e.span)
            return e
        if isinstance(e, Deref):
            return e
        if isinstance(e, Cnst):
            args = tuple(self.expr(a) for a in e.args)
            self._arity(e.ctor, len(args), e.span)
            return Cnst(e.ctor, args, span=e.span)
        if isinstance(e, Fun):
            args = tuple(self.expr(a) for a in e.args)
            if self.tenv.is_ctor(e.fn):
                self._arity(e.fn, len(args), e.span)
                return Cnst(e.fn, args, span=e.span)
            if e.fn in self.m.functions:
                n = len(self.m.functions[e.fn].params)
                if n != len(args):
                    raise self.fail(f"function {e.fn} expects {n} arguments, got {len(args)}", e.span)
                return Fun(e.fn, args, span=e.span)
            raise self.fail(f"unknown constructor or function {e.fn}", e.span)
        raise TypeError(e)

    def _arity(self, ctor, n, span):
        a = self.tenv.arity(ctor)
        if a is None:
            raise self.fail(f"unknown constructor {ctor}", span)
        if a != n:
            raise self.fail(f"constructor {ctor} expects {a} arguments, got {n}", span)

    def call(self, c: Call) -> Call:
        if c.thread not in self.m.threads:
            raise self.fail(f"unknown thread {c.thread}", c.span)
        n = len(self.m.threads[c.thread].params)
        if n != len(c.args):
            raise self.fail(f"thread {c.thread} expects {n} arguments, got {len(c.args)}", c.span)
        return Call(c.thread, tuple(self.expr(a) for a in c.args), span=c.span)

    def program(self, p):
        if isinstance(p, Nil):
            return p
        if isinstance(p, Call):
            return self.call(p)
        if isinstance(p, Emit):
            return Emit(self.expr(p.sig), self.expr(p.value), p.marked, span=p.span)
        if isinstance(p, Present):
            return Present(self.expr(p.sig), p.var, self.program(p.body), self.call(p.cont), span=p.span)
        if isinstance(p, SigMatch):
            return SigMatch(
                self.expr(p.left), self.expr(p.right), self.program(p.then), self.program(p.other), span=p.span
            )
        if isinstance(p, Match):
            self._arity(p.pattern.ctor, len(p.pattern.vars), p.pattern.span or p.span)
            return Match(
                self.expr(p.subject),
                p.pattern,
                self.program(p.then),
                self.program(p.other),
                ty=p.ty,
                span=p.span,
            )
        if isinstance(p, New):
            return New(p.name, p.ty, self.program(p.body), span=p.span)
        if isinstance(p, Par):
            return Par(self.program(p.left), self.program(p.right), span=p.span)
        raise TypeError(p)

    def fpattern(self, p, span):
        if isinstance(p, PVar):
            if self.tenv.is_ctor(p.name):
                self._arity(p.name, 0, span)
                return PCtor(p.name, ())
            return p
        if isinstance(p, PCtor):
            self._arity(p.ctor, len(p.args), span)
            return PCtor(p.ctor, tuple(self.fpattern(a, span) for a in p.args))
        return p

    def run(self):
        m = self.m
        for name, fd in list(m.functions.items()):
            eqs = []
            for eq in fd.equations:
                pats = tuple(self.fpattern(p, fd.span) for p in eq.patterns)
                eqs.append(Equation(pats, self.expr(eq.body)))
            m.functions[name] = FunDecl(fd.name, fd.params, fd.result, tuple(eqs), span=fd.span)
        for name, th in list(m.threads.items()):
            m.threads[name] = ThreadDecl(th.name, th.params, self.program(th.body), span=th.span)
        m.entry = self.program(m.entry)
        return m


def parse_module(text: str, filename: str = "<input>") -> ModuleDecl:
    return parse_source(text, filename).module


def parse_source(text: str, filename: str = "<input>") -> SourceModule:
    p = _Parser(text, filename)
    src = p.module()
    try:
        _Resolver(src.module).run()
    except (ValueError, IllFormed) as exc:  # constructor clashes reported by TypeEnv
        raise ParseError(str(exc), 1, 1) from None
    src.text = text
    return src


def parse_program(text: str, module: Optional[ModuleDecl] = None):
    """Parse a single program against the declarations of ``module``."""
    p = _Parser(text, "<program>")
    if module is not None:
        for name, td in module.types.items():
            p.type_usages[name] = td.usage
    prog = p.program()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}", ["|", "end of input"])
    m = module or ModuleDecl()
    m.threads.setdefault(STOP, ThreadDecl(STOP, (), Nil()))
    return _Resolver(m).program(prog)


def load_module(path) -> ModuleDecl:
    with open(path, encoding="utf-8") as fh:
        return parse_module(fh.read(), str(path))


# Pretty-printing ---------------------------------------------------------


def pretty_type(t) -> str:
    return str(t)


def pretty_expr(e) -> str:
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Deref):
        return "!" + e.sig
    if isinstance(e, Cnst):
        items = list_items(e)
        if items is not None and e.ctor in ("nil", "cons"):
            return "[" + "; ".join(pretty_expr(x) for x in items) + "]"
        if not e.args:
            return e.ctor
        return f"{e.ctor}(" + ", ".join(pretty_expr(a) for a in e.args) + ")"
    if isinstance(e, Fun):
        return f"{e.fn}(" + ", ".join(pretty_expr(a) for a in e.args) + ")"
    raise TypeError(e)


def pretty_cont(k: Call) -> str:
    if k.thread == STOP and not k.args:
        return "0"
    return f"{k.thread}(" + ", ".join(pretty_expr(a) for a in k.args) + ")"


def pretty(p) -> str:
    """Render a program in concrete syntax; ``parse_program(pretty(p))`` is alpha-equal to ``p``."""
    if isinstance(p, Par):
        parts = par_components(p)
        out = []
        for i, q in enumerate(parts):
            s = pretty(q)
            if i < len(parts) - 1 and isinstance(q, New) and not is_pause(q):
                s = f"({s})"
            out.append(s)
        return " | ".join(out)
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Call):
        return f"{p.thread}(" + ", ".join(pretty_expr(a) for a in p.args) + ")"
    if isinstance(p, Emit):
        bang = "!" if p.marked else ""
        return f"emit{bang} {pretty_expr(p.sig)} {pretty_expr(p.value)}"
    if isinstance(p, Present):
        return f"present {pretty_expr(p.sig)}({p.var}) {{ {pretty(p.body)} }} else {pretty_cont(p.cont)}"
    if isinstance(p, SigMatch):
        return (
            f"match {pretty_expr(p.left)} = {pretty_expr(p.right)} "
            f"{{ {pretty(p.then)} }} else {{ {pretty(p.other)} }}"
        )
    if isinstance(p, Match):
        pat = p.pattern.ctor
        if p.pattern.vars:
            pat += "(" + ", ".join(p.pattern.vars) + ")"
        return (
            f"match {pretty_expr(p.subject)} with {pat} "
            f"{{ {pretty(p.then)} }} else {{ {pretty(p.other)} }}"
        )
    if isinstance(p, New):
        if is_pause(p):
            return "pause." + pretty_cont(p.body.cont)
        return f"new {p.name} : {p.ty} in {pretty(p.body)}"
    raise TypeError(f"not a program: {p!r}")


def _pretty_fpattern(p) -> str:
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PWild):
        return "_"
    if not p.args:
        return p.ctor
    return f"{p.ctor}(" + ", ".join(_pretty_fpattern(a) for a in p.args) + ")"


def pretty_module(m: ModuleDecl) -> str:
    lines = []
    for td in m.types.values():
        head = f"type {td.name}" + ("<1>" if td.usage is Mult.ONE else "")
        ctors = []
        for cd in td.ctors:
            ctors.append(cd.name + ("(" + ", ".join(map(str, cd.args)) + ")" if cd.args else ""))
        lines.append(f"{head} = " + " | ".join(ctors) + ";")
    for fd in m.functions.values():
        lines.append(f"fun {fd.name}(" + ", ".join(map(str, fd.params)) + f") -> {fd.result} {{")
        for eq in fd.equations:
            pats = ", ".join(_pretty_fpattern(p) for p in eq.patterns)
            lines.append(f"  {fd.name}({pats}) = {pretty_expr(eq.body)};")
        lines.append("}")
    for th in m.threads.values():
        if th.name == STOP:
            continue
        params = ", ".join(f"{n} : {t}" for n, t in th.params)
        lines.append(f"thread {th.name}({params}) =\n  {pretty(th.body)};")
    if m.context:
        lines.append("context " + ", ".join(f"{n} : {t}" for n, t in m.context.items()) + ";")
    lines.append(f"main = {pretty(m.entry)};")
    return "\n".join(lines) + "\n"


def dump_module(m: ModuleDecl) -> dict:
    """A JSON-friendly summary of a parsed module."""
    return {
        "types": {
            n: {"usage": str(td.usage), "ctors": {c.name: [str(a) for a in c.args] for c in td.ctors}}
            for n, td in m.types.items()
        },
        "functions": {
            n: {"params": [str(t) for t in fd.params], "result": str(fd.result), "equations": len(fd.equations)}
            for n, fd in m.functions.items()
        },
        "threads": {
            n: {"params": [[x, str(t)] for x, t in th.params], "body": pretty(th.body)}
            for n, th in m.threads.items()
            if n != STOP
        },
        "context": {n: str(t) for n, t in m.context.items()},
        "main": pretty(m.entry),
    }
