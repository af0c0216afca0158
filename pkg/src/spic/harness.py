"""Executable metatheory: typing of runtime states, residual contexts and
bounded checks of subject reduction, confluence, determinacy and bisimilarity.

Every check returns a :class:`Report` carrying the seed it used, the
number of states it looked at and the failures it found.
"""

from __future__ import annotations

import itertools
import random
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from spic.semantics import EOI, Action, EvalError, Evaluator, Machine, State
from spic.syntax import Call, Cnst, Emit, ModuleDecl, Name, list_items, list_value, rename, subst_expr
from spic.typecheck import Checker, Diagnostic, TypingError, check_module
from spic.types import (
    ListT,
    SetT,
    SigT,
    canonicalize,
    ctx_add,
    ctx_shift,
    ctx_sub,
    delta,
    format_ctx,
    value_equiv,
    values_of,
)
from spic.usage import Mult, Usage, char, emit_usage, neutral, receive_usage

DEFAULT_CAP = 10_000


class ResidualUndefined(Exception):
    pass


@dataclass
class Report:
    check: str
    ok: bool
    seed: Optional[int] = None
    stats: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    counterexample: Optional[list] = None  # action labels from the initial state

    @property
    def status(self) -> str:
        return "pass" if self.ok else "fail"

    def fail(self, message: str, trace: Optional[list] = None) -> None:
        self.failures.append(message)
        if self.counterexample is None and trace is not None:
            self.counterexample = list(trace)

    def to_record(self) -> dict:
        return {
            "check": self.check,
            "status": self.status,
            "ok": self.ok,
            "seed": self.seed,
            "stats": self.stats,
            "failures": self.failures,
            "counterexample": self.counterexample,
            "notes": self.notes,
        }

    def summary(self) -> str:
        stats = ", ".join(f"{k}={v}" for k, v in self.stats.items())
        head = f"{self.check}: {self.status} (seed={self.seed}; {stats})"
        lines = [head] + [f"  failure: {f}" for f in self.failures[:20]]
        if self.counterexample is not None:
            lines.append("  trace: " + " ; ".join(self.counterexample))
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def _path(parents: Mapping, key) -> list:
    out = []
    while True:
        entry = parents.get(key)
        if entry is None:
            return out[::-1]
        key, label = entry
        out.append(label)


# Typing runtime states -----------------------------------------------------


def type_state(machine: Machine, st: State, gamma: Mapping) -> Optional[Diagnostic]:
    """None when ``gamma |- new r1..rn in (T1 | ... | Tk)``, else the diagnostic."""
    ck = Checker(machine.module)
    scope = {**gamma, **dict(st.restricted)}
    try:
        d: dict = {}
        for th in st.threads:
            d = ck.add(d, ck.program(th, scope))
        for n, t in reversed(st.restricted):
            d = ck.bind(d, n, t)
        ck.within(d, gamma)
    except TypingError as exc:
        return exc.diag
    return None


# Compatibility and residual contexts ---------------------------------------


def u5(kind: int) -> Usage:
    """What the environment keeps on ``s`` after receiving from it."""
    if kind == 5:
        return Usage(5, char(0, 1, 0), char(0, 0, 0))
    return neutral(kind)


def _sig(gamma: Mapping, s: str) -> SigT:
    t = gamma.get(s)
    if not isinstance(t, SigT):
        raise ResidualUndefined(f"{s} is not a signal of the context")
    return t


def action_demand(machine: Machine, gamma: Mapping, act: Action) -> Optional[dict]:
    """Least context typing the program ``P_act``; None if none exists."""
    if act.kind in ("tau", "N"):
        return {}
    t = gamma.get(act.sig)
    if not isinstance(t, SigT):
        return None
    if act.kind == "out":
        ru = receive_usage(t.usage.kind)
        return None if ru is None else {act.sig: SigT(ru, t.payload)}
    if act.kind in ("in", "in?"):
        dv = delta(act.value, t.payload, machine.tenv)
        if dv is None:
            return None
        return ctx_add({act.sig: SigT(emit_usage(t.usage.kind), t.payload)}, dv)
    raise ValueError(f"no demand for action {act.kind}")


def eoi_demand(machine: Machine, gamma: Mapping, E: Mapping, V: Mapping) -> Optional[dict]:
    """Least context typing ``P_(V minus E)``."""
    out: dict = {}
    for s, vs in V.items():
        extra = [v for v in vs if v not in E.get(s, ())]
        if not extra:
            continue
        t = gamma.get(s)
        if not isinstance(t, SigT):
            return None
        for v in extra:
            dv = delta(v, t.payload, machine.tenv)
            if dv is None:
                return None
            out = ctx_add(out, {s: SigT(emit_usage(t.usage.kind), t.payload)})
            out = out and ctx_add(out, dv)
            if out is None:
                return None
    return out


def compatible(machine: Machine, gamma: Mapping, act: Action) -> bool:
    d = action_demand(machine, gamma, act)
    return d is not None and ctx_add(gamma, d) is not None


def residual(machine: Machine, gamma: Mapping, act: Action) -> dict:
    """The context left after a typed transition labelled ``act``."""
    tenv = machine.tenv
    if act.kind == "tau":
        return dict(gamma)
    if act.kind == "N":
        return ctx_shift(gamma)
    t = _sig(gamma, act.sig)
    if act.kind == "out":
        g = {**gamma, **dict(act.extruded)}
        dv = delta(act.value, t.payload, tenv)
        g = None if dv is None else ctx_sub(g, dv)
        g = None if g is None else ctx_add(g, {act.sig: SigT(u5(t.usage.kind), t.payload)})
    elif act.kind == "in":
        dv = delta(act.value, t.payload, tenv)
        g = None if dv is None else ctx_add(gamma, dv)
        g = None if g is None else ctx_add(g, {act.sig: SigT(emit_usage(t.usage.kind), t.payload)})
    elif act.kind == "in?":
        g = ctx_sub(gamma, {act.sig: SigT(u5(t.usage.kind), t.payload)})
        dv = delta(act.value, t.payload, tenv)
        g = None if g is None or dv is None else ctx_add(g, dv)
    else:
        raise ValueError(f"unknown action {act.kind}")
    if g is None:
        raise ResidualUndefined(f"residual of {gamma and format_ctx(gamma)} after {act.label()} is undefined")
    return g


def residual_eoi(machine: Machine, gamma: Mapping, E: Mapping, V: Mapping) -> dict:
    """Residual after the auxiliary action ``(E, V)``: export what is emitted, import the rest."""
    tenv = machine.tenv
    exported: dict = {}
    imported: dict = {}
    for s, vs in E.items():
        t = gamma.get(s)
        if not isinstance(t, SigT) or t.usage.now[2] is Mult.ONE:
            continue
        for v in vs:
            exported = _plus(exported, delta(v, t.payload, tenv))
    for s, vs in V.items():
        t = gamma.get(s)
        if not isinstance(t, SigT) or t.usage.now[2] is Mult.ZERO:
            continue
        for v in vs:
            if v in E.get(s, ()):
                continue
            imported = _plus(imported, delta(v, t.payload, tenv))
    g = ctx_sub(ctx_shift(gamma), exported)
    g = None if g is None else ctx_add(g, imported)
    if g is None:
        raise ResidualUndefined("residual of the end-of-instant action is undefined")
    return g


def _plus(g, d):
    if g is None or d is None:
        raise ResidualUndefined("a value cannot be typed at its signal's payload")
    out = ctx_add(g, d)
    if out is None:
        raise ResidualUndefined("usages of a transmitted value cannot be combined")
    return out


# Transitions of an open state ----------------------------------------------


def input_universe(machine: Machine, gamma: Mapping, depth: int = 1) -> list:
    """Candidate inputs ``(s, v)``: values of each free signal's payload type."""
    names = {n: t for n, t in gamma.items() if isinstance(t, SigT)}
    out = []
    for s in sorted(names):
        for v in values_of(names[s].payload, machine.tenv, depth, names):
            out.append((s, v))
    return out


def transitions(
    machine: Machine,
    st: State,
    gamma: Mapping,
    open_actions: bool = True,
    universe: Optional[list] = None,
    aux: bool = False,
    eoi_limit: int = 120,
) -> list:
    """All labelled transitions ``(Action, target, extra)`` of ``st`` in context ``gamma``.

    ``extra`` is the redex of tau steps, the :class:`EOI` of end-of-instant
    steps and None otherwise.
    """
    out = []
    taus = machine.step_internal(st, gamma)
    for redex, nxt in taus:
        out.append((Action("tau"), nxt, redex))
    if not taus:
        variants, _ = machine.eoi_variants(st, limit=eoi_limit)
        for res in variants:
            out.append((Action("N"), res.state, res))
    if not open_actions:
        return out
    for act, nxt in machine.outputs(st, gamma):
        out.append((act, nxt, None))
    for s, v in universe if universe is not None else input_universe(machine, gamma):
        out.append((Action("in", s, v), machine.input(st, s, v), None))
        if aux:
            for nxt in machine.input_aux(st, s, v):
                out.append((Action("in?", s, v), nxt, None))
    return out


def _gamma_key(gamma: Mapping) -> str:
    return format_ctx(gamma)


def _module_checked(module: ModuleDecl) -> list:
    """Typecheck first so match nodes carry their types; returns diagnostics."""
    return list(check_module(module).diagnostics)


# Subject reduction ---------------------------------------------------------


def step_label(act: Action, extra=None) -> str:
    from spic.parser import pretty_expr

    if act.kind == "tau" and extra is not None:
        return "tau " + ":".join(str(x) for x in extra)
    if act.kind == "N" and isinstance(extra, EOI):
        listing = ", ".join(f"{s}=[{'; '.join(pretty_expr(v) for v in vs)}]" for s, vs in sorted(extra.V.items()))
        return f"N {{{listing}}}"
    return act.label()


def subject_reduction(
    module: ModuleDecl,
    max_depth: int = 200,
    max_states: int = 20_000,
    open_actions: bool = True,
    aux: bool = True,
    seed: int = 0,
    gamma: Optional[Mapping] = None,
) -> Report:
    """BFS over typed transitions checking that every residual is typable.

    Open modules also exercise outputs on free signals, inputs drawn from
    values of depth one, and the auxiliary actions.
    """
    rep = Report("subject-reduction", False, seed)
    diags = _module_checked(module)
    if diags:
        rep.fail(f"module does not typecheck: {diags[0]}")
        return rep
    m = Machine(module, gamma)
    g0 = dict(m.context)
    st0 = m.initial()
    d = type_state(m, st0, g0)
    if d is not None:
        rep.fail(f"initial state untypable: {d}", [])
        return rep
    k0 = (m.canonical(st0, g0), _gamma_key(g0))
    parents: dict = {}
    seen = {k0}
    frontier = [(st0, g0, k0)]
    depth = 0
    checked = 0
    counts: dict = {}
    universes: dict = {}
    capped = False
    while depth < max_depth and frontier and not capped:
        nxt_frontier = []
        for st, g, key in frontier:
            gk = _gamma_key(g)
            if gk not in universes:
                universes[gk] = input_universe(m, g)
            try:
                steps = transitions(m, st, g, open_actions, universes[gk], aux)
            except EvalError as exc:
                rep.fail(f"evaluation error: {exc}", _path(parents, key))
                continue
            for act, target, extra in steps:
                if not compatible(m, g, act):
                    continue
                checked += 1
                counts[act.kind] = counts.get(act.kind, 0) + 1
                label = step_label(act, extra)
                try:
                    g2 = residual(m, g, act)
                except ResidualUndefined as exc:
                    rep.fail(str(exc), _path(parents, key) + [label])
                    continue
                d = type_state(m, target, g2)
                if d is not None:
                    rep.fail(f"after {label} at depth {depth}: {d}", _path(parents, key) + [label])
                    continue
                k2 = (m.canonical(target, g2), _gamma_key(g2))
                if k2 not in seen:
                    seen.add(k2)
                    parents[k2] = (key, label)
                    nxt_frontier.append((target, g2, k2))
            if aux and open_actions and not m.step_internal(st, g):
                checked += _check_eoi_aux(m, st, g, universes[gk], rep, _path(parents, key))
            if len(seen) > max_states:
                capped = True
                rep.notes.append(f"state cap {max_states} reached at depth {depth}")
                break
        frontier = nxt_frontier
        depth += 1
    exhausted = not frontier and not capped
    rep.stats = {
        "depth": depth,
        "states": len(seen),
        "transitions": checked,
        "exhausted": exhausted,
        **{f"by_{k}": v for k, v in sorted(counts.items())},
    }
    rep.ok = not rep.failures and (exhausted or depth >= max_depth)
    return rep


def _check_eoi_aux(m: Machine, st: State, g: Mapping, universe: list, rep: Report, trace: list) -> int:
    """Auxiliary ``(E, V)`` steps importing at most one environment value per signal."""
    E = m.emitted(st)
    checked = 0
    candidates: dict = {}
    for s, v in universe:
        t = g.get(s)
        if isinstance(t, SigT) and t.usage.now[2] is not Mult.ZERO and v not in E.get(s, ()):
            candidates.setdefault(s, [None]).append(v)
    sigs = sorted(candidates)
    for pick in itertools.product(*(candidates[s] for s in sigs)):
        V = {s: tuple(vs) for s, vs in E.items()}
        for s, v in zip(sigs, pick):
            if v is not None:
                V[s] = V.get(s, ()) + (v,)
        demand = eoi_demand(m, g, E, V)
        if demand is None or ctx_add(g, demand) is None:
            continue
        checked += 1
        res = m.end_of_instant(st, V, aux=True)
        label = "(E,V) " + step_label(Action("N"), res)[2:]
        try:
            g2 = residual_eoi(m, g, E, V)
        except ResidualUndefined as exc:
            rep.fail(str(exc), trace + [label])
            continue
        d = type_state(m, res.state, g2)
        if d is not None:
            rep.fail(f"after {label}: {d}", trace + [label])
    return checked


def marking_witness(module: ModuleDecl) -> Report:
    """After a kind-5 synchronisation the marked residual types, the unmarked one does not."""
    rep = Report("marking-witness", False)
    m = Machine(module)
    g = dict(m.context)
    found = 0
    for redex, nxt in m.step_internal(m.initial()):
        if redex[0] != "synch" or not any(isinstance(th, Emit) and th.marked for th in nxt.threads):
            continue
        found += 1
        unmarked = State(
            nxt.restricted,
            tuple(Emit(th.sig, th.value) if isinstance(th, Emit) and th.marked else th for th in nxt.threads),
        )
        d_marked = type_state(m, nxt, g)
        d_unmarked = type_state(m, unmarked, g)
        rep.stats["synch " + ":".join(map(str, redex[1:]))] = {
            "marked": "typable" if d_marked is None else str(d_marked),
            "unmarked": "typable" if d_unmarked is None else str(d_unmarked),
        }
        label = step_label(Action("tau"), redex)
        if d_marked is not None:
            rep.fail(f"marked residual untypable: {d_marked}", [label])
        if d_unmarked is None:
            rep.fail("unmarked residual is typable", [label])
    if not found:
        rep.fail("no kind-5 synchronisation to witness")
    rep.ok = not rep.failures
    return rep


# Reachability --------------------------------------------------------------


@dataclass
class Reach:
    states: dict  # canonical key -> state
    parents: dict  # canonical key -> (parent key, label)
    complete: bool

    def trace(self, key) -> list:
        return _path(self.parents, key)


def reachable(m: Machine, max_states: int = 20_000, max_depth: int = 200) -> Reach:
    """Closed-system states reachable by tau and N steps, up to a state cap and a depth bound."""
    st0 = m.initial()
    k0 = m.canonical(st0)
    out = Reach({k0: st0}, {}, True)
    queue = deque([(st0, k0, 0)])
    while queue:
        st, key, d = queue.popleft()
        if d >= max_depth:
            out.complete = False
            continue
        succ = [(step_label(Action("tau"), r), s) for r, s in m.step_internal(st)]
        if not succ:
            succ = [(step_label(Action("N"), res), res.state) for res in m.eoi_variants(st)[0]]
        for label, s in succ:
            k = m.canonical(s)
            if k not in out.states:
                if len(out.states) >= max_states:
                    out.complete = False
                    return out
                out.states[k] = s
                out.parents[k] = (key, label)
                queue.append((s, k, d + 1))
    return out


def explore(module: ModuleDecl, max_states: int = 20_000, max_depth: int = 200) -> Report:
    """Summary of the closed state space: states, suspension points, completeness."""
    rep = Report("explore", True)
    m = Machine(module)
    t0 = time.perf_counter()
    try:
        reach = reachable(m, max_states, max_depth)
    except EvalError as exc:
        rep.ok = False
        rep.fail(f"evaluation error: {exc}")
        return rep
    states = reach.states.values()
    rep.stats = {
        "states": len(reach.states),
        "suspended": sum(1 for s in states if m.is_suspended(s)),
        "terminated": sum(1 for s in states if not s.threads),
        "complete": reach.complete,
        "seconds": round(time.perf_counter() - t0, 3),
    }
    return rep


# Tau-confluence ------------------------------------------------------------


def confluence(module: ModuleDecl, max_states: int = 20_000, seed: int = 0) -> Report:
    """Every pair of tau steps closes in at most one tau step on each side."""
    rep = Report("tau-confluence", False, seed)
    m = Machine(module)
    try:
        reach = reachable(m, max_states)
    except EvalError as exc:
        rep.fail(f"evaluation error: {exc}")
        return rep
    diamonds = 0
    for key, st in reach.states.items():
        succ = m.step_internal(st)
        if len(succ) < 2:
            continue
        closure = []
        for redex, s in succ:
            ks = {m.canonical(s)} | {m.canonical(t) for _, t in m.step_internal(s)}
            closure.append((redex, m.canonical(s), ks))
        for (r1, k1, c1), (r2, k2, c2) in itertools.combinations(closure, 2):
            if k1 == k2:
                continue
            diamonds += 1
            if not (c1 & c2):
                l1, l2 = step_label(Action("tau"), r1), step_label(Action("tau"), r2)
                rep.fail(f"{l1} and {l2} do not close", reach.trace(key) + [f"{l1} | {l2}"])
    rep.stats = {"states": len(reach.states), "diamonds": diamonds, "complete": reach.complete}
    rep.ok = not rep.failures
    return rep


# End-of-instant determinacy ------------------------------------------------


def eoi_determinacy(module: ModuleDecl, max_states: int = 20_000, limit: int = 120, seed: int = 0) -> Report:
    """Every listing V of the emitted values yields the same canonical successor.

    Listings are exhaustive up to ``limit`` orderings per signal (5 values
    with the default) and sampled with ``seed`` beyond.
    """
    rep = Report("eoi-determinacy", False, seed)
    m = Machine(module)
    rng = random.Random(seed)
    try:
        reach = reachable(m, max_states)
    except EvalError as exc:
        rep.fail(f"evaluation error: {exc}")
        return rep
    checked = 0
    exhaustive = True
    widest = 1
    most_values = 0
    for key, st in reach.states.items():
        if not m.is_suspended(st):
            continue
        most_values = max([most_values] + [len(vs) for vs in m.emitted(st).values()])
        variants, exh = m.eoi_variants(st, limit=limit, rng=rng)
        exhaustive &= exh
        checked += len(variants)
        by_key: dict = {}
        for res in variants:
            by_key.setdefault(m.canonical(res.state), res)
        widest = max(widest, len(by_key))
        if len(by_key) > 1:
            labels = [step_label(Action("N"), r) for r in list(by_key.values())[:2]]
            rep.fail(f"{len(by_key)} distinct successors", reach.trace(key) + [" vs ".join(labels)])
    rep.stats = {
        "states": len(reach.states),
        "variants": checked,
        "max_values": most_values,
        "max_distinct": widest,
        "exhaustive": exhaustive,
        "complete": reach.complete,
    }
    rep.ok = not rep.failures
    return rep


def eoi_successors(module: ModuleDecl, limit: int = 120) -> set:
    """Canonical successors of the first suspended state under every listing V."""
    m = Machine(module)
    st = m.initial()
    while True:
        succ = m.step_internal(st)
        if not succ:
            break
        st = succ[0][1]
    variants, _ = m.eoi_variants(st, limit=limit)
    return {m.canonical(r.state) for r in variants}


# Whole-run determinacy -----------------------------------------------------


class _Stop(Exception):
    pass


def whole_run(
    module: ModuleDecl,
    instants: int,
    budget: int = 100_000,
    seed: int = 0,
    samples: int = 50,
    on_eoi: Optional[Callable] = None,
) -> Report:
    """All schedules and all listings for ``instants`` instants reach one canonical frontier.

    Exploration is exhaustive within ``budget`` states; beyond that
    ``samples`` seeded random schedules are compared instead and the report
    says so.
    """
    rep = Report("whole-run-determinacy", False, seed)
    m = Machine(module)
    t0 = time.perf_counter()
    try:
        sizes, total = _exhaustive_frontiers(m, instants, budget, on_eoi)
        rep.stats = {"mode": "exhaustive", "instants": instants, "states": total, "frontier_sizes": sizes}
    except _Stop:
        rep.notes.append(f"state budget {budget} exceeded; sampled {samples} seeded schedules instead")
        sizes = _sampled_frontiers(m, instants, seed, samples, on_eoi)
        rep.stats = {"mode": "sampled", "instants": instants, "samples": samples, "frontier_sizes": sizes}
    except EvalError as exc:
        rep.fail(f"evaluation error: {exc}")
        sizes = []
    rep.stats["seconds"] = round(time.perf_counter() - t0, 3)
    for k, n in enumerate(sizes):
        if n != 1:
            rep.fail(f"instant {k} ends in {n} distinct canonical states")
    rep.ok = not rep.failures
    return rep


def _exhaustive_frontiers(m: Machine, instants: int, budget: int, on_eoi) -> tuple:
    st0 = m.initial()
    frontier = {m.canonical(st0): st0}
    total = 0
    sizes = []
    for k in range(instants):
        seen = dict(frontier)
        queue = deque(frontier.values())
        suspended = []
        while queue:
            st = queue.popleft()
            succ = m.step_internal(st)
            if not succ:
                suspended.append(st)
            for _, s in succ:
                key = m.canonical(s)
                if key not in seen:
                    seen[key] = s
                    queue.append(s)
            if total + len(seen) > budget:
                raise _Stop
        total += len(seen)
        nxt = {}
        for st in suspended:
            for res in m.eoi_variants(st)[0]:
                if on_eoi is not None:
                    on_eoi(k, res)
                nxt.setdefault(m.canonical(res.state), res.state)
        sizes.append(len(nxt))
        frontier = nxt
    return sizes, total


def _sampled_frontiers(m: Machine, instants: int, seed: int, samples: int, on_eoi) -> list:
    rng = random.Random(seed)
    keys = [set() for _ in range(instants)]
    for _ in range(samples):
        st = m.initial()
        for k in range(instants):
            while True:
                succ = m.step_internal(st)
                if not succ:
                    break
                st = succ[rng.randrange(len(succ))][1]
            V = {}
            for s, vs in sorted(m.emitted(st).items()):
                vs = list(vs)
                rng.shuffle(vs)
                V[s] = tuple(vs)
            res = m.end_of_instant(st, V)
            if on_eoi is not None:
                on_eoi(k, res)
            st = res.state
            keys[k].add(m.canonical(st))
    return [len(ks) for ks in keys]


def single_emission(module: ModuleDecl, instants: int, budget: int = 100_000, seed: int = 0) -> Report:
    """At most one value is emitted on each signal at each instant, across all schedules."""
    rep = Report("single-emission", False, seed)
    worst: dict = {}

    def watch(k: int, res: EOI):
        for s, vs in res.E.items():
            worst[s] = max(worst.get(s, 0), len(vs))
            if len(vs) > 1:
                rep.fail(f"instant {k}: {s} carries {len(vs)} values")

    run = whole_run(module, instants, budget, seed, on_eoi=watch)
    rep.stats = {**run.stats, "max_values": dict(sorted(worst.items()))}
    rep.notes.extend(run.notes)
    for f in run.failures:
        if f.startswith("evaluation"):
            rep.fail(f)
    rep.ok = not rep.failures
    return rep


# Weak bisimulation ---------------------------------------------------------


@dataclass
class BisimResult:
    verdict: str  # "bisimilar", "distinguished" or "inconclusive"
    states: int
    seed: Optional[int] = None

    @property
    def bisimilar(self) -> bool:
        return self.verdict == "bisimilar"


class LTS:
    """Finite fragment of the LTS of open states, nodes keyed up to canonical form."""

    def __init__(self, machine: Machine, typed: bool, depth: int = 1, cap: int = DEFAULT_CAP):
        self.m = machine
        self.typed = typed
        self.depth = depth
        self.cap = cap
        self.index: dict = {}
        self.nodes: list = []
        self.tau: list = []
        self.lab: list = []
        self._universe: dict = {}

    def add(self, st: State, ctx: Mapping) -> int:
        # set-typed values keep their order: identifying permutations would
        # presuppose the very obligations the game is used to check
        key = (self.m.canonical(st, ctx, sets=False), _gamma_key(ctx))
        n = self.index.get(key)
        if n is None:
            if len(self.nodes) >= self.cap:
                raise _Stop
            n = len(self.nodes)
            self.index[key] = n
            self.nodes.append((st, dict(ctx)))
            self.tau.append(set())
            self.lab.append(set())
        return n

    def build(self, roots: list) -> list:
        ids = [self.add(st, ctx) for st, ctx in roots]
        done = 0
        while done < len(self.nodes):
            self._expand(done)
            done += 1
        return ids

    def _expand(self, n: int):
        st, ctx = self.nodes[n]
        gk = _gamma_key(ctx)
        if gk not in self._universe:
            self._universe[gk] = input_universe(self.m, ctx, self.depth)
        for act, target, _ in transitions(self.m, st, ctx, True, self._universe[gk]):
            if self.typed and not compatible(self.m, ctx, act):
                continue
            if act.kind == "tau":
                self.tau[n].add(self.add(target, ctx))
                continue
            if act.kind == "out" and act.extruded:
                act, target = self._rename_extruded(act, target, ctx)
            if self.typed:
                try:
                    ctx2 = residual(self.m, ctx, act)
                except ResidualUndefined:
                    continue
            elif act.kind == "N":
                ctx2 = ctx_shift(ctx)
            elif act.kind == "out":
                ctx2 = {**ctx, **dict(act.extruded)}
            else:
                ctx2 = ctx
            self.lab[n].add((self._label(act, ctx), self.add(target, ctx2)))

    def _rename_extruded(self, act: Action, target: State, ctx: Mapping):
        k = sum(1 for x in ctx if x.startswith("ext#"))
        mapping = {}
        for n, _ in act.extruded:
            mapping[n] = f"ext#{k}"
            k += 1
        value = subst_expr(act.value, {a: Name(b) for a, b in mapping.items()})
        ext = tuple((mapping[n], t) for n, t in act.extruded)
        threads = tuple(rename(th, mapping) for th in target.threads)
        return Action("out", act.sig, value, ext), State(target.restricted, threads)

    def _label(self, act: Action, ctx: Mapping) -> str:
        if act.kind in ("out", "in"):
            t = ctx.get(act.sig)
            if isinstance(t, SigT):
                act = Action(act.kind, act.sig, canonicalize(act.value, t.payload, self.m.tenv), act.extruded)
        return act.label()


def _closure(edges: list) -> list:
    out = []
    for n in range(len(edges)):
        seen = {n}
        stack = [n]
        while stack:
            x = stack.pop()
            for y in edges[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        out.append(frozenset(seen))
    return out


def partition(lts: LTS) -> list:
    """Coarsest weak bisimulation on the explored fragment, as block ids."""
    tc = _closure(lts.tau)
    weak = []
    for n in range(len(lts.nodes)):
        moves = set()
        for x in tc[n]:
            for a, y in lts.lab[x]:
                if a == "N":
                    moves.add((a, y))
                else:
                    for z in tc[y]:
                        moves.add((a, z))
        weak.append(moves)
    block = [0] * len(lts.nodes)
    count = 1
    while True:
        sigs = {}
        new = []
        for n in range(len(lts.nodes)):
            sig = (
                block[n],
                frozenset((a, block[y]) for a, y in weak[n]),
                frozenset(block[y] for y in tc[n]),
            )
            new.append(sigs.setdefault(sig, len(sigs)))
        block = new
        if len(sigs) == count:
            return block
        count = len(sigs)


def weak_bisim(
    module: ModuleDecl,
    p,
    q,
    ctx: Optional[Mapping] = None,
    typed: bool = False,
    cap: int = DEFAULT_CAP,
    depth: int = 1,
    seed: Optional[int] = None,
) -> BisimResult:
    """Decide ``p`` and ``q`` weakly bisimilar on the explored fragment of at most ``cap`` states.

    ``ctx`` types the free signals.  Typed mode only plays actions compatible
    with the current context and moves to the residual context.
    """
    m = Machine(module, ctx)
    g = dict(m.context)
    lts = LTS(m, typed, depth, cap)
    try:
        sp, sq = m.initial(p), m.initial(q)
        a, b = lts.build([(sp, g), (sq, g)])
    except _Stop:
        return BisimResult("inconclusive", len(lts.nodes), seed)
    block = partition(lts)
    return BisimResult("bisimilar" if block[a] == block[b] else "distinguished", len(lts.nodes), seed)


# Obligations ---------------------------------------------------------------


def permute_deep(v, t, tenv, rng: random.Random):
    """A value equivalent to ``v``: set-typed lists shuffled at every depth."""
    if isinstance(t, (SetT, ListT)):
        items = list_items(v)
        if items is None:
            return v
        items = [permute_deep(x, t.elem, tenv, rng) for x in items]
        if isinstance(t, SetT):
            rng.shuffle(items)
        return list_value(items)
    if isinstance(v, Cnst) and v.args:
        args = tenv.ctor_args(v.ctor, t)
        if args is None:
            return v
        return Cnst(v.ctor, tuple(permute_deep(a, at, tenv, rng) for a, at in zip(v.args, args)))
    return v


def sample_value(t, tenv, rng: random.Random, depth: int, names: Optional[Mapping] = None, max_len: int = 3):
    """A random closed value of ``t``; lists and sets have distinct elements."""
    if isinstance(t, SigT):
        pool = [n for n, nt in sorted((names or {}).items()) if nt == t]
        return Name(rng.choice(pool)) if pool else None
    if isinstance(t, (SetT, ListT)):
        pool = values_of(t.elem, tenv, depth, names)
        if isinstance(t.elem, SigT):
            pool = [Name(n) for n, nt in sorted((names or {}).items()) if nt == t.elem]
        k = rng.randint(0, min(max_len, len(pool)))
        return list_value(rng.sample(pool, k))
    pool = values_of(t, tenv, depth, names)
    return rng.choice(pool) if pool else None


def _signal_types(t, tenv, acc: list, seen=None):
    """Signal types occurring in values of ``t``."""
    seen = set() if seen is None else seen
    if isinstance(t, SigT):
        if t not in acc:
            acc.append(t)
    elif isinstance(t, (SetT, ListT)):
        _signal_types(t.elem, tenv, acc, seen)
    elif t.name not in seen:
        seen.add(t.name)
        for c in tenv.ctors_of(t):
            for at in tenv.ctor_args(c, t) or ():
                _signal_types(at, tenv, acc, seen)


def _names_for(types: list, per_type: int = 2) -> dict:
    names = {}
    for i, t in enumerate(types):
        for j in range(per_type):
            names[f"x{i}_{j}"] = t
    return names


def check_obligations(
    module: ModuleDecl,
    seed: int = 0,
    samples: int = 20,
    depth: int = 2,
    cap: int = DEFAULT_CAP,
    untyped_cap: int = 2_000,
) -> Report:
    """Functions and threads taking sets must not observe the order of their elements.

    Threads are compared with the untyped game first; when that exceeds
    ``untyped_cap`` states the typed game is played instead.
    """
    rep = Report("obligations", False, seed)
    result = check_module(module)
    rng = random.Random(seed)
    tenv = Machine(module).tenv
    ev = Evaluator(module)
    done = {"functions": 0, "threads": 0, "comparisons": 0, "typed": 0, "inconclusive": 0}
    for ob in result.obligations:
        if ob.kind == "function":
            fd = module.functions[ob.name]
            done["functions"] += 1
            for _ in range(samples):
                args = tuple(sample_value(t, tenv, rng, depth) for t in fd.params)
                if any(a is None for a in args):
                    rep.notes.append(f"function {fd.name}: no argument values at depth {depth}")
                    break
                perm = tuple(permute_deep(a, t, tenv, rng) for a, t in zip(args, fd.params))
                try:
                    r1, r2 = ev.apply(fd.name, args), ev.apply(fd.name, perm)
                except EvalError:
                    continue
                done["comparisons"] += 1
                if not value_equiv(r1, r2, fd.result, tenv):
                    rep.failures.append(f"function {fd.name}: results differ on equivalent arguments")
                    break
        else:
            td = module.threads[ob.name]
            sigs: list = []
            for t in td.param_types:
                _signal_types(t, tenv, sigs)
            names = _names_for(sigs)
            done["threads"] += 1
            tries = 0
            for _ in range(samples):
                args = tuple(sample_value(t, tenv, rng, depth, names) for t in td.param_types)
                if any(a is None for a in args):
                    rep.notes.append(f"thread {td.name}: no argument values at depth {depth}")
                    break
                perm = tuple(permute_deep(a, t, tenv, rng) for a, t in zip(args, td.param_types))
                if perm == args:
                    continue
                tries += 1
                if tries > max(2, samples // 5):
                    break
                p, q = Call(td.name, args), Call(td.name, perm)
                res = weak_bisim(module, p, q, ctx=dict(names), cap=untyped_cap)
                if res.verdict == "inconclusive":
                    # fall back on the typed game in the least context typing the arguments
                    gamma: Optional[dict] = {}
                    for a, t in zip(args, td.param_types):
                        d = delta(a, t, tenv)
                        gamma = None if gamma is None or d is None else ctx_add(gamma, d)
                    if gamma is None:
                        continue
                    res = weak_bisim(module, p, q, ctx=gamma, typed=True, cap=cap)
                    done["typed"] += 1
                done["comparisons"] += 1
                if res.verdict == "inconclusive":
                    done["inconclusive"] += 1
                elif not res.bisimilar:
                    rep.failures.append(f"thread {td.name}: equivalent arguments are distinguished")
                    break
    rep.stats = {"obligations": len(result.obligations), **done}
    rep.ok = not rep.failures
    return rep
