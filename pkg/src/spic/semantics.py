"""Executable labelled transition system with instant-based scheduling.

A running program is kept flat: restrictions are lifted to the top as
soon as they surface, parallel compositions are split into a tuple of
threads and terminated threads are dropped.  Emission payloads are
evaluated when the emission surfaces; emissions persist until the end
of the instant.  Emissions on kind-5 signals are marked once they have
synchronised with a reader.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

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
    alpha_normalize,
    fresh_name,
    free_vars,
    list_items,
    list_value,
    match_value,
    rename,
    subst_expr,
    substitute,
)
from spic.types import ListT, SetT, SigT, TypeEnv, canonicalize, shift_type, value_key

DEFAULT_FUEL = 100_000
DEFAULT_STEP_BUDGET = 100_000


class EvalError(Exception):
    pass


class NotSuspended(Exception):
    pass


class DivergenceGuard(Exception):
    pass


# Function evaluation -----------------------------------------------------


class Evaluator:
    """Call-by-value evaluation of first-order function equations, first match wins."""

    def __init__(self, module: ModuleDecl, fuel: int = DEFAULT_FUEL):
        self.module = module
        self.fuel = fuel
        self._left = fuel

    def eval(self, e):
        self._left = self.fuel
        return self._eval(e)

    def _eval(self, e):
        if isinstance(e, Name):
            return e
        if isinstance(e, Cnst):
            return Cnst(e.ctor, tuple(self._eval(a) for a in e.args))
        if isinstance(e, Fun):
            args = tuple(self._eval(a) for a in e.args)
            return self.apply(e.fn, args)
        if isinstance(e, Deref):
            raise EvalError(f"dereference !{e.sig} outside a continuation")
        raise EvalError(f"cannot evaluate {e!r}")

    def apply(self, fn: str, args: tuple):
        self._left -= 1
        if self._left < 0:
            raise EvalError(f"evaluation fuel exhausted in {fn}")
        fd = self.module.functions.get(fn)
        if fd is None:
            raise EvalError(f"unknown function {fn}")
        for eq in fd.equations:
            env: dict = {}
            if all(_match_nested(p, v, env) for p, v in zip(eq.patterns, args)):
                return self._eval(subst_expr(eq.body, env))
        raise EvalError(f"no equation of {fn} matches its arguments")


def _match_nested(pat, v, env) -> bool:
    if isinstance(pat, PWild):
        return True
    if isinstance(pat, PVar):
        env[pat.name] = v
        return True
    if isinstance(pat, PCtor):
        if not isinstance(v, Cnst) or v.ctor != pat.ctor or len(v.args) != len(pat.args):
            return False
        return all(_match_nested(p, a, env) for p, a in zip(pat.args, v.args))
    return False


# States ------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    restricted: tuple = ()  # ((name, type), ...)
    threads: tuple = ()

    def restricted_names(self) -> set:
        return {n for n, _ in self.restricted}

    def free_names(self) -> set:
        out = set()
        for th in self.threads:
            out |= free_vars(th)
        return out - self.restricted_names()

    def program(self):
        """The state as a single program ``new r1 ... in (T1 | ... | Tn)``."""
        body = Nil()
        if self.threads:
            body = self.threads[-1]
            for th in reversed(self.threads[:-1]):
                body = Par(th, body)
        for n, t in reversed(self.restricted):
            body = New(n, t, body)
        return body


@dataclass(frozen=True)
class Action:
    """``tau``, ``out`` (with extruded names), ``in``, ``N``; auxiliary ``in?`` and ``eoi``."""

    kind: str
    sig: Optional[str] = None
    value: object = None
    extruded: tuple = ()  # ((name, type), ...)

    def label(self) -> str:
        from spic.parser import pretty_expr

        if self.kind in ("tau", "N"):
            return self.kind
        v = pretty_expr(self.value)
        if self.kind == "out":
            nu = "".join(f"new {n} " for n, _ in self.extruded)
            return f"{nu}out {self.sig} {v}"
        if self.kind == "in":
            return f"in {self.sig} {v}"
        return f"{self.kind} {self.sig} {v}"


@dataclass(frozen=True)
class EOI:
    """Result of the end-of-instant computation."""

    E: dict  # signal -> tuple of distinct values (sorted)
    V: dict  # signal -> tuple, a listing of E(signal)
    state: State


class Machine:
    """The LTS of one module; ``context`` types the free signals."""

    def __init__(self, module: ModuleDecl, context: Optional[Mapping] = None, fuel: int = DEFAULT_FUEL):
        self.module = module
        self.context = dict(module.context if context is None else context)
        self.tenv = TypeEnv.of(module)
        self.evaluator = Evaluator(module, fuel)
        self._canon_cache: dict = {}

    # construction

    def initial(self, program=None) -> State:
        p = self.module.entry if program is None else program
        return self.normalize(State(), None, [p])

    def sigtypes(self, st: State, ctx: Optional[Mapping] = None) -> dict:
        out = dict(self.context if ctx is None else ctx)
        out.update(dict(st.restricted))
        return out

    def normalize(self, st: State, index: Optional[int], new: Iterable, extra_avoid: Iterable = ()) -> State:
        """Replace thread ``index`` (or append, when None) by ``new`` and flatten."""
        threads = list(st.threads)
        if index is not None:
            del threads[index]
        restricted = list(st.restricted)
        avoid = set(self.context) | {n for n, _ in restricted} | set(extra_avoid)
        for th in threads:
            avoid |= free_vars(th)
        for p in new:
            avoid |= free_vars(p)
        out = []

        def go(p):
            if isinstance(p, Nil):
                return
            if isinstance(p, Par):
                go(p.left)
                go(p.right)
                return
            if isinstance(p, New):
                name = p.name
                body = p.body
                if name in avoid:
                    name = fresh_name(p.name, avoid)
                    body = rename(body, {p.name: name})
                avoid.add(name)
                restricted.append((name, p.ty))
                go(body)
                return
            if isinstance(p, Emit):
                out.append(Emit(p.sig, self.evaluator.eval(p.value), p.marked))
                return
            if isinstance(p, Call):
                out.append(Call(p.thread, tuple(self.evaluator.eval(a) for a in p.args)))
                return
            out.append(p)

        for p in new:
            go(p)
        pos = len(threads) if index is None else index
        threads[pos:pos] = out
        return self.gc(State(tuple(restricted), tuple(threads)))

    @staticmethod
    def gc(st: State) -> State:
        used = set()
        for th in st.threads:
            used |= free_vars(th)
        keep = tuple((n, t) for n, t in st.restricted if n in used)
        if len(keep) == len(st.restricted):
            return st
        return State(keep, st.threads)

    # tau steps

    def step_internal(self, st: State, ctx: Optional[Mapping] = None) -> list:
        """All tau successors as ``(redex, state)`` pairs."""
        out = []
        sigtypes = None
        for i, th in enumerate(st.threads):
            if isinstance(th, Call):
                td = self.module.threads.get(th.thread)
                if td is None:
                    raise EvalError(f"unknown thread {th.thread}")
                args = [self.evaluator.eval(a) for a in th.args]
                body = substitute(td.body, dict(zip(td.param_names, args)))
                out.append((("rec", i), self.normalize(st, i, [body])))
            elif isinstance(th, SigMatch):
                same = self.evaluator.eval(th.left) == self.evaluator.eval(th.right)
                out.append((("sig", i), self.normalize(st, i, [th.then if same else th.other])))
            elif isinstance(th, Match):
                v = self.evaluator.eval(th.subject)
                theta = match_value(v, th.pattern)
                nxt = substitute(th.then, theta) if theta is not None else th.other
                out.append((("match", i), self.normalize(st, i, [nxt])))
            elif isinstance(th, Present):
                s = th.sig.id
                for j, em in enumerate(st.threads):
                    if not (isinstance(em, Emit) and em.sig.id == s):
                        continue
                    if sigtypes is None:
                        sigtypes = self.sigtypes(st, ctx)
                    threads = list(st.threads)
                    if not em.marked and self._kind(sigtypes, s) == 5:
                        threads[j] = Emit(em.sig, em.value, True)
                    body = substitute(th.body, {th.var: em.value})
                    nxt = self.normalize(State(st.restricted, tuple(threads)), i, [body])
                    out.append((("synch", i, j), nxt))
        return out

    @staticmethod
    def _kind(sigtypes, s) -> Optional[int]:
        t = sigtypes.get(s)
        return t.usage.kind if isinstance(t, SigT) else None

    def is_suspended(self, st: State) -> bool:
        for th in st.threads:
            if isinstance(th, (Call, SigMatch, Match)):
                return False
            if isinstance(th, Present):
                s = th.sig.id
                if any(isinstance(e, Emit) and e.sig.id == s for e in st.threads):
                    return False
        return True

    # end of instant

    def emitted(self, st: State) -> dict:
        out: dict = {}
        for th in st.threads:
            if isinstance(th, Emit):
                vals = out.setdefault(th.sig.id, [])
                if th.value not in vals:
                    vals.append(th.value)
        return {s: tuple(sorted(vs, key=lambda v: value_key(v, self.tenv))) for s, vs in out.items()}

    def end_of_instant(self, st: State, V: Optional[Mapping] = None, aux: bool = False) -> EOI:
        """The N transition with the listing ``V`` (default: sorted order).

        With ``aux`` this is the auxiliary ``(E, V)`` action: ``V`` may list
        values received from the environment besides the emitted ones.
        """
        if not self.is_suspended(st):
            raise NotSuspended("a tau step is still possible")
        E = self.emitted(st)
        if V is None:
            V = dict(E)
        V = {s: tuple(vs) for s, vs in V.items() if vs}
        for s, vs in E.items():
            listed = set(V.get(s, ()))
            if not (set(vs) <= listed if aux else set(vs) == listed):
                raise ValueError(f"V({s}) does not list the emitted values")
        conts = []
        for th in st.threads:
            if isinstance(th, Present):
                if th.sig.id in V:
                    raise NotSuspended(f"{th.sig.id} is in dom(V) but a present waits on it")
                conts.append(instantiate(th.cont, V))
        restricted = tuple((n, shift_type(t)) for n, t in st.restricted)
        nxt = self.normalize(State(restricted, ()), None, conts)
        return EOI(E, dict(V), nxt)

    def eoi_variants(self, st: State, limit: int = 120, rng: Optional[random.Random] = None) -> tuple:
        """All listings V of the emitted values; sampled beyond ``limit`` per signal.

        Returns ``(list of EOI, exhaustive flag)``.
        """
        E = self.emitted(st)
        per_sig = []
        exhaustive = True
        for s, vs in sorted(E.items()):
            n_perm = _factorial(len(vs))
            if n_perm <= limit:
                perms = list(itertools.permutations(vs))
            else:
                exhaustive = False
                r = rng or random.Random(0)
                perms = [tuple(vs)]
                for _ in range(limit - 1):
                    p = list(vs)
                    r.shuffle(p)
                    perms.append(tuple(p))
            per_sig.append([(s, p) for p in perms])
        out = []
        for combo in itertools.product(*per_sig):
            out.append(self.end_of_instant(st, dict(combo)))
        return out, exhaustive

    # observable actions (open system)

    def outputs(self, st: State, ctx: Optional[Mapping] = None) -> list:
        """Output actions on free signals: ``(Action, target)``."""
        restricted = dict(st.restricted)
        sigtypes = None
        out = []
        seen = set()
        for j, em in enumerate(st.threads):
            if not isinstance(em, Emit) or em.sig.id in restricted:
                continue
            key = (em.sig.id, em.value)
            if key in seen:
                continue
            seen.add(key)
            ext = []
            for n in _names_in_order(em.value):
                if n in restricted and n not in [x for x, _ in ext] and n != em.sig.id:
                    ext.append((n, restricted[n]))
            if sigtypes is None:
                sigtypes = self.sigtypes(st, ctx)
            threads = list(st.threads)
            if not em.marked and self._kind(sigtypes, em.sig.id) == 5:
                threads[j] = Emit(em.sig, em.value, True)
            names = {n for n, _ in ext}
            rest = tuple((n, t) for n, t in st.restricted if n not in names)
            out.append((Action("out", em.sig.id, em.value, tuple(ext)), State(rest, tuple(threads))))
        return out

    def input(self, st: State, s: str, v, absorb: bool = True) -> State:
        """Rule (in): ``P --sv--> P | emit s v``; duplicates are absorbed."""
        if absorb and any(isinstance(e, Emit) and e.sig.id == s and e.value == v for e in st.threads):
            return st
        return State(st.restricted, st.threads + (Emit(Name(s), v),))

    def input_aux(self, st: State, s: str, v) -> list:
        """Rule (in_aux): ``s(x).P --s?v--> [v/x]P`` for each waiting present."""
        out = []
        for i, th in enumerate(st.threads):
            if isinstance(th, Present) and th.sig.id == s:
                out.append(self.normalize(st, i, [substitute(th.body, {th.var: v})]))
        return out

    def observable_actions(self, st: State, universe: Iterable, ctx: Optional[Mapping] = None) -> list:
        """Outputs on free signals followed by inputs ``(s, v)`` from ``universe``."""
        out = self.outputs(st, ctx)
        for s, v in universe:
            out.append((Action("in", s, v), self.input(st, s, v)))
        return out

    # canonical forms

    def canonical(self, st: State, ctx: Optional[Mapping] = None, sets: bool = True) -> str:
        """Canonical key of ``st``; ``sets=False`` keeps the order of set-typed values."""
        ck = (st, None if ctx is None else tuple(sorted((k, str(t)) for k, t in ctx.items())), sets)
        key = self._canon_cache.get(ck)
        if key is None:
            key = canonical_text(st, self, ctx, sets=sets)
            if len(self._canon_cache) > 200_000:
                self._canon_cache.clear()
            self._canon_cache[ck] = key
        return key

    def state_hash(self, st: State, ctx: Optional[Mapping] = None) -> str:
        return hashlib.sha256(self.canonical(st, ctx).encode()).hexdigest()[:16]


def _factorial(n: int) -> int:
    out = 1
    for k in range(2, n + 1):
        out *= k
    return out


def instantiate(k: Call, V: Mapping) -> Call:
    """``V(K)``: replace every ``!s`` by the listing ``V(s)`` (empty if absent)."""

    def go(e):
        if isinstance(e, Deref):
            return list_value(V.get(e.sig, ()))
        if isinstance(e, Cnst):
            return Cnst(e.ctor, tuple(go(a) for a in e.args))
        if isinstance(e, Fun):
            return Fun(e.fn, tuple(go(a) for a in e.args))
        return e

    return Call(k.thread, tuple(go(a) for a in k.args))


def _names_in_order(p) -> list:
    """Identifiers of ``p`` in a fixed traversal order (with repetitions removed)."""
    out: list = []

    def add(n):
        if n not in out:
            out.append(n)

    def expr(e):
        if isinstance(e, Name):
            add(e.id)
        elif isinstance(e, Deref):
            add(e.sig)
        elif isinstance(e, (Cnst, Fun)):
            for a in e.args:
                expr(a)

    def prog(q):
        if isinstance(q, (Name, Cnst, Fun, Deref)):
            expr(q)
        elif isinstance(q, Call):
            for a in q.args:
                expr(a)
        elif isinstance(q, Emit):
            expr(q.sig)
            expr(q.value)
        elif isinstance(q, Present):
            expr(q.sig)
            prog(q.body)
            prog(q.cont)
        elif isinstance(q, SigMatch):
            expr(q.left)
            expr(q.right)
            prog(q.then)
            prog(q.other)
        elif isinstance(q, Match):
            expr(q.subject)
            prog(q.then)
            prog(q.other)
        elif isinstance(q, New):
            prog(q.body)
        elif isinstance(q, Par):
            prog(q.left)
            prog(q.right)

    prog(p)
    return out


# Canonicalisation of states ----------------------------------------------


def canonical_values(p, machine: Machine, sigtypes: Mapping, blank: bool = False):
    """Rewrite every value in set-typed position to its canonical representative.

    With ``blank`` set-typed values are replaced by a placeholder instead.
    """
    tenv = machine.tenv
    module = machine.module

    def val(e, t):
        if t is None or not _is_value(e):
            return e
        return _blank_sets(e, t, tenv) if blank else canonicalize(e, t, tenv)

    def call(c: Call) -> Call:
        td = module.threads.get(c.thread)
        if td is None or len(td.params) != len(c.args):
            return c
        return Call(c.thread, tuple(val(a, t) for a, t in zip(c.args, td.param_types)))

    def go(q, sig):
        if isinstance(q, Call):
            return call(q)
        if isinstance(q, Emit):
            t = sig.get(q.sig.id) if isinstance(q.sig, Name) else None
            return Emit(q.sig, val(q.value, t.payload if isinstance(t, SigT) else None), q.marked)
        if isinstance(q, Present):
            t = sig.get(q.sig.id) if isinstance(q.sig, Name) else None
            inner = dict(sig)
            if isinstance(t, SigT):
                inner[q.var] = t.payload
            else:
                inner.pop(q.var, None)
            return Present(q.sig, q.var, go(q.body, inner), call(q.cont))
        if isinstance(q, SigMatch):
            return SigMatch(q.left, q.right, go(q.then, sig), go(q.other, sig))
        if isinstance(q, Match):
            inner = dict(sig)
            args = tenv.ctor_args(q.pattern.ctor, q.ty) if q.ty is not None else None
            for x, xt in zip(q.pattern.vars, args or [None] * len(q.pattern.vars)):
                if xt is None:
                    inner.pop(x, None)
                else:
                    inner[x] = xt
            return Match(val(q.subject, q.ty), q.pattern, go(q.then, inner), go(q.other, sig), ty=q.ty)
        if isinstance(q, New):
            return New(q.name, q.ty, go(q.body, {**sig, q.name: q.ty}))
        if isinstance(q, Par):
            return Par(go(q.left, sig), go(q.right, sig))
        return q

    return go(p, dict(sigtypes))


def _is_value(e) -> bool:
    if isinstance(e, Name):
        return True
    if isinstance(e, Cnst):
        return all(_is_value(a) for a in e.args)
    return False


def _blank_sets(v, t, tenv):
    """Replace set-typed sub-values by a placeholder; their order carries no information."""
    if isinstance(t, SetT):
        return Cnst("{}")
    if isinstance(t, ListT):
        items = list_items(v)
        if items is None:
            return v
        return list_value(_blank_sets(x, t.elem, tenv) for x in items)
    if isinstance(v, Cnst) and v.args:
        args = tenv.ctor_args(v.ctor, t)
        if args is None:
            return v
        return Cnst(v.ctor, tuple(_blank_sets(a, at, tenv) for a, at in zip(v.args, args)))
    return v


def canonical_text(
    st: State, machine: Machine, ctx: Optional[Mapping] = None, limit: int = 720, sets: bool = True
) -> str:
    """A string identifying ``st`` up to set permutations, alpha-renaming and thread order.

    Restricted names become ``$k``.  The numbering follows first occurrences
    outside set-typed positions, over every ordering of threads that look
    alike; names that only occur inside sets are tried in every order.  The
    least rendering wins, so the result is independent of the choices.
    With ``sets`` unset, set-typed values are kept as written.
    """
    from spic.parser import pretty

    sigtypes = machine.sigtypes(st, ctx)
    rnames = [n for n, _ in st.restricted]
    rtypes = dict(st.restricted)
    threads = [alpha_normalize(th) for th in st.threads]

    def render(th, mapping):
        th = rename(th, mapping) if mapping else th
        return pretty(canonical_values(th, machine, sigtypes) if sets else th)

    if not rnames:
        return "\n".join(sorted(render(th, None) for th in threads))
    anon = {n: "?" for n in rnames}
    keyed = sorted(((render(th, anon), th) for th in threads), key=lambda x: x[0])
    groups = [[th for _, th in g] for _, g in itertools.groupby(keyed, key=lambda x: x[0])]
    options = []
    total = 1
    for g in groups:
        if len(g) > 1 and total * _factorial(len(g)) <= limit:
            perms = list(itertools.permutations(g))
            total *= len(perms)
        else:
            perms = [tuple(g)]
        options.append(perms)
    blanked = {id(th): canonical_values(th, machine, sigtypes, blank=True) if sets else th for th in threads}
    rset = set(rnames)
    best = None
    for combo in itertools.product(*options):
        order = [th for grp in combo for th in grp]
        base: dict = {}
        for th in order:
            for n in _names_in_order(blanked[id(th)]):
                if n in rset and n not in base:
                    base[n] = f"${len(base)}"
        rest = [n for n in rnames if n not in base]
        rest_perms = itertools.permutations(rest) if _factorial(len(rest)) * total <= limit else [tuple(rest)]
        for perm in rest_perms:
            mapping = dict(base)
            for n in perm:
                mapping[n] = f"${len(mapping)}"
            header = " ".join(f"{mapping[n]}:{rtypes[n]}" for n in sorted(mapping, key=lambda n: int(mapping[n][1:])))
            text = header + "\n" + "\n".join(sorted(render(th, mapping) for th in order))
            if best is None or text < best:
                best = text
    return best


# Running -----------------------------------------------------------------


@dataclass
class Trace:
    records: list = field(default_factory=list)
    final: Optional[State] = None
    error: Optional[str] = None
    seed: Optional[int] = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _fmt_map(m: Mapping) -> dict:
    from spic.parser import pretty_expr

    return {s: [pretty_expr(v) for v in vs] for s, vs in sorted(m.items())}


def state_text(st: State) -> str:
    from spic.parser import pretty

    return pretty(st.program())


def run(
    module: ModuleDecl,
    instants: int,
    policy: str = "leftmost",
    seed: Optional[int] = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
    emit_states: bool = False,
    trace_tau: bool = True,
    on_eoi: Optional[Callable] = None,
) -> Trace:
    """Run the closed program for ``instants`` instants.

    ``leftmost`` always fires the first redex and lists end-of-instant
    values in their fixed order; ``seeded`` draws both from ``seed``.
    """
    if policy not in ("leftmost", "seeded"):
        raise ValueError(f"unknown policy {policy!r}")
    m = Machine(module)
    rng = random.Random(seed if seed is not None else 0)
    trace = Trace(seed=seed)
    try:
        st = m.initial()
    except EvalError as exc:
        trace.error = f"EvalError: {exc}"
        return trace
    try:
        for k in range(instants):
            steps = 0
            while True:
                succ = m.step_internal(st)
                if not succ:
                    break
                steps += 1
                if steps > step_budget:
                    raise DivergenceGuard(f"more than {step_budget} tau steps in instant {k}")
                redex, st = succ[0] if policy == "leftmost" else succ[rng.randrange(len(succ))]
                if trace_tau:
                    rec = {"instant": k, "action": "tau", "redex": list(redex), "E": None, "V": None,
                           "state": m.state_hash(st)}
                    if emit_states:
                        rec["pretty"] = state_text(st)
                    trace.records.append(rec)
            E = m.emitted(st)
            V = {}
            for s, vs in sorted(E.items()):
                vs = list(vs)
                if policy == "seeded":
                    rng.shuffle(vs)
                V[s] = tuple(vs)
            res = m.end_of_instant(st, V)
            if on_eoi is not None:
                on_eoi(k, res)
            st = res.state
            rec = {"instant": k, "action": "N", "redex": None, "E": _fmt_map(res.E), "V": _fmt_map(res.V),
                   "state": m.state_hash(st)}
            if emit_states:
                rec["pretty"] = state_text(st)
            trace.records.append(rec)
    except (EvalError, DivergenceGuard) as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
    trace.final = st
    return trace
