"""Brute-force declarative typing oracle.

Reads the affine typing rules literally: every rule that sums contexts is
decided by enumerating all ways of splitting the context, and every
existentially quantified usage is enumerated.  Rules are closed under
weakening by letting n-ary sums discard a part.  Before each judgment the
context is restricted to the names occurring in the term: no rule consults
any other hypothesis, so this only prunes splits that cannot matter.  Only
the usage algebra is shared with the checker under test; context
splitting, type comparison and the rules themselves are written out
independently here.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

from spic.syntax import Call, Cnst, Deref, Emit, Match, Name, New, Nil, Par, Pattern, Present, SigMatch
from spic.types import Ind, ListT, SetT, SigT
from spic.usage import INF, ONE, ZERO, all_usages, char, char_le, derived, mult_le, usage_add, usage_le

FRAGMENT = """
type D = v1 | v2 | v3;
type Box<1> = box(Sig<k5:(1,0,0)w>(D));

thread L1(l : List<1>(D)) = 0;
thread Lw(l : List<w>(D)) = 0;
thread S1(l : Set<1>(D)) = 0;
thread Sw(l : Set<w>(D)) = 0;
thread Keep(t : Sig<k4:(0,0,1)w>(D)) = 0;
thread Both(l : List<1>(D), t : Sig<k4:(0,0,1)w>(D)) = 0;
thread Use(t : Sig<k5:(1,0,0)w>(D)) = 0;

main = 0;
"""

D = Ind("D", INF)
BOX = Ind("Box", ONE)
K5_OUT = SigT(next(u for u in all_usages(5) if u.now == char(1, 0, 0) and u.later == char(1, 0, 0)), D)
NEW_TYPE = SigT(next(u for u in all_usages(5) if u.now == u.later == char(1, 1, 0)), D)

USAGES = {k: tuple(all_usages(k)) for k in (1, 2, 3, 4, 5)}

CTORS = {"v1": (), "v2": (), "v3": (), "box": (K5_OUT,)}
CTOR_RESULT = {"v1": D, "v2": D, "v3": D, "box": BOX}


class Oracle:
    def __init__(self, module):
        self.threads = {name: th.param_types for name, th in module.threads.items()}

    # context splitting

    @staticmethod
    @lru_cache(maxsize=None)
    def _type_splits(t):
        out = [(t, None), (None, t)]
        if isinstance(t, SigT):
            for u1 in USAGES[t.usage.kind]:
                for u2 in USAGES[t.usage.kind]:
                    if usage_add(u1, u2) == t.usage:
                        out.append((SigT(u1, t.payload), SigT(u2, t.payload)))
        elif t.usage is INF:
            out.append((t, t))
        return out

    @staticmethod
    @lru_cache(maxsize=None)
    def splits(g: tuple) -> list:
        """All pairs (g1, g2) with g1 + g2 = g; contexts are sorted tuples."""
        names = [x for x, _ in g]
        options = [Oracle._type_splits(t) for _, t in g]
        out = []
        for pick in itertools.product(*options):
            g1 = tuple((x, a) for x, (a, _) in zip(names, pick) if a is not None)
            g2 = tuple((x, b) for x, (_, b) in zip(names, pick) if b is not None)
            out.append((g1, g2))
        return out

    def splitn(self, g: tuple, n: int):
        """Sequences of n + 1 contexts summing to g; part 0 is discarded (weakening)."""
        if n == 0:
            yield (g,)
            return
        for g0, rest in self.splits(g):
            for tail in self.splitn(rest, n - 1):
                yield (g0,) + tail

    # expressions

    @staticmethod
    def _var_le(want, have) -> bool:
        """Rule (var): Op_u(sigma) may be used at Op_u'(sigma) when u >= u'."""
        if type(want) is not type(have):
            return False
        if isinstance(want, SigT):
            return want.payload == have.payload and usage_le(want.usage, have.usage)
        if isinstance(want, Ind):
            return want.name == have.name and mult_le(want.usage, have.usage)
        return want.elem == have.elem and mult_le(want.usage, have.usage)

    def expr(self, g: tuple, term, sigma) -> bool:
        return self._expr(project(g, term), term, sigma)

    @lru_cache(maxsize=None)
    def _expr(self, g: tuple, e, sigma) -> bool:
        env = dict(g)
        if isinstance(e, Name):
            return e.id in env and self._var_le(sigma, env[e.id])
        if isinstance(e, Cnst):
            if CTOR_RESULT.get(e.ctor) != sigma:
                return False
            args = CTORS[e.ctor]
            return any(
                all(self.expr(gi, a, t) for gi, a, t in zip(parts[1:], e.args, args))
                for parts in self.splitn(g, len(args))
            )
        return False

    def rexpr(self, g: tuple, term, sigma) -> bool:
        return self._rexpr(project(g, term), term, sigma)

    @lru_cache(maxsize=None)
    def _rexpr(self, g: tuple, r, sigma) -> bool:
        env = dict(g)
        if isinstance(r, Deref):
            t = env.get(r.sig)
            if not isinstance(t, SigT) or not isinstance(sigma, (SetT, ListT)) or sigma.elem != t.payload:
                return False
            k, now = t.usage.kind, t.usage.now
            if isinstance(sigma, SetT):
                table = [(char("w", 0, "w"), INF), (char("w", 0, 1), ONE)]
            else:
                table = [(char(0, "w", "w"), INF), (char(0, 0, 1), ONE)]
            return any(c in derived(k) and char_le(k, c, now) and sigma.usage is x for c, x in table)
        if isinstance(r, Name):
            t = env.get(r.id)
            if t is None:
                return False
            if isinstance(t, SigT):
                if not isinstance(sigma, SigT) or sigma.payload != t.payload or sigma.usage.kind != t.usage.kind:
                    return False
                k, y = t.usage.kind, t.usage.later
                return char_le(k, sigma.usage.now, y) and char_le(k, sigma.usage.later, y)
            return t == sigma
        if isinstance(r, Cnst):
            if CTOR_RESULT.get(r.ctor) != sigma:
                return False
            args = CTORS[r.ctor]
            return any(
                all(self.rexpr(gi, a, t) for gi, a, t in zip(parts[1:], r.args, args))
                for parts in self.splitn(g, len(args))
            )
        return False

    # programs

    def _signal(self, g: tuple, s, need) -> bool:
        """g |- s : Sig_u(sigma) for some u whose first character satisfies ``need``."""
        t = dict(g).get(s.id) if isinstance(s, Name) else None
        if not isinstance(t, SigT):
            return False
        return any(need(u.now) and self.expr(g, s, SigT(u, t.payload)) for u in USAGES[t.usage.kind])

    def prog(self, g: tuple, p) -> bool:
        return self._prog(project(g, p), p)

    @lru_cache(maxsize=None)
    def _prog(self, g: tuple, p) -> bool:
        env = dict(g)
        if isinstance(p, Nil):
            return True
        if isinstance(p, Emit) and p.marked:
            return self._signal(g, p.sig, lambda c: c == char(1, 1, 0))
        if isinstance(p, Emit):
            for g1, g2 in self.splits(g):
                t = dict(g1).get(p.sig.id)
                if (
                    isinstance(t, SigT)
                    and self._signal(g1, p.sig, lambda c: c[0] is not ZERO)
                    and self.expr(g2, p.value, t.payload)
                ):
                    return True
            return False
        if isinstance(p, Present):
            if not self.cont(g, p.cont):
                return False
            for g1, g2 in self.splits(g):
                t = dict(g1).get(p.sig.id)
                if not isinstance(t, SigT) or not self._signal(g1, p.sig, lambda c: c[1] is not ZERO):
                    continue
                if self.prog(_extend(g2, {p.var: t.payload}), p.body):
                    return True
            return False
        if isinstance(p, SigMatch):
            # s1, s2 range over signal names: both must be in dom(G) at a signal type
            return (
                isinstance(env.get(p.left.id), SigT)
                and isinstance(env.get(p.right.id), SigT)
                and self.prog(g, p.then)
                and self.prog(g, p.other)
            )
        if isinstance(p, Match):
            if not self.prog(g, p.other):
                return False
            args = CTORS[p.pattern.ctor]
            sigma = CTOR_RESULT[p.pattern.ctor]
            for g1, g2 in self.splits(g):
                if self.expr(g1, p.subject, sigma) and self.prog(_extend(g2, dict(zip(p.pattern.vars, args))), p.then):
                    return True
            return False
        if isinstance(p, New):
            return self.prog(_extend(g, {p.name: p.ty}), p.body)
        if isinstance(p, Par):
            return any(self.prog(g1, p.left) and self.prog(g2, p.right) for g1, g2 in self.splits(g))
        if isinstance(p, Call):
            params = self.threads[p.thread]
            return any(
                all(self.expr(gi, a, t) for gi, a, t in zip(parts[1:], p.args, params))
                for parts in self.splitn(g, len(params))
            )
        raise TypeError(f"outside the fragment: {p!r}")

    def cont(self, g: tuple, k: Call) -> bool:
        return self._cont(project(g, k), k)

    @lru_cache(maxsize=None)
    def _cont(self, g: tuple, k: Call) -> bool:
        params = self.threads[k.thread]
        return any(
            all(self.rexpr(gi, a, t) for gi, a, t in zip(parts[1:], k.args, params))
            for parts in self.splitn(g, len(params))
        )


def names(t) -> frozenset:
    """Every variable or signal name occurring in a fragment term (bound ones included)."""
    if isinstance(t, Name):
        return frozenset({t.id})
    if isinstance(t, Deref):
        return frozenset({t.sig})
    if isinstance(t, (Cnst, Call)):
        return frozenset().union(*(names(a) for a in t.args))
    if isinstance(t, Emit):
        return names(t.sig) | names(t.value)
    if isinstance(t, Present):
        return names(t.sig) | names(t.body) | names(t.cont)
    if isinstance(t, SigMatch):
        return names(t.left) | names(t.right) | names(t.then) | names(t.other)
    if isinstance(t, Match):
        return names(t.subject) | names(t.then) | names(t.other)
    if isinstance(t, New):
        return names(t.body)
    if isinstance(t, Par):
        return names(t.left) | names(t.right)
    return frozenset()


def project(g: tuple, term) -> tuple:
    keep = names(term)
    return tuple((x, t) for x, t in g if x in keep)


def _extend(g: tuple, more: dict) -> tuple:
    env = dict(g)
    env.update(more)
    return tuple(sorted(env.items(), key=lambda kv: kv[0]))


def context(**types) -> tuple:
    return tuple(sorted(types.items()))


# Program enumeration -------------------------------------------------------

SIGNALS = ("s1", "s2")
VALUES = ("v1", "v2", "v3")
DEREF_CONTS = ("L1", "Lw", "S1", "Sw")


def exprs(scope: tuple):
    """Payload expressions with their sizes."""
    for v in VALUES:
        yield Cnst(v), 1
    for x in scope:
        yield Name(x), 1
    for x in scope:
        yield Cnst("box", (Name(x),)), 2


def conts(scope: tuple, size: int):
    if size == 1:
        yield Call("Stop")
    if size == 2:
        for a in scope:
            for c in DEREF_CONTS:
                yield Call(c, (Deref(a),))
            yield Call("Keep", (Name(a),))
    if size == 3:
        for a in scope:
            for b in scope:
                yield Call("Both", (Deref(a), Name(b)))


def programs(size: int, scope: tuple = SIGNALS, depth: int = 0):
    """Every fragment program of exactly ``size`` nodes over the names in ``scope``."""
    if size == 1:
        yield Nil()
    for e, n in exprs(scope):
        if 1 + n == size:
            for a in scope:
                yield Emit(Name(a), e)
    if size == 2:
        for a in scope:
            yield Emit(Name(a), Cnst("v1"), True)
            yield Call("Use", (Name(a),))
    x = f"x{depth}"
    for k_size in (1, 2, 3):
        for p_size in range(1, size - k_size):
            if 1 + p_size + k_size != size:
                continue
            for a in scope:
                for body in programs(p_size, scope + (x,), depth + 1):
                    for k in conts(scope, k_size):
                        yield Present(Name(a), x, body, k)
    for left in range(1, size - 1):
        right = size - 1 - left
        if right < left:
            continue
        for p in programs(left, scope, depth):
            for q in programs(right, scope, depth):
                yield Par(p, q)
        for a, b in itertools.combinations(scope, 2):
            for p in programs(left, scope, depth):
                for q in programs(right, scope, depth):
                    yield SigMatch(Name(a), Name(b), p, q)
    for left in range(1, size - 1):
        right = size - 1 - left
        for a in scope:
            for p in programs(left, scope + (x,), depth + 1):
                for q in programs(right, scope, depth):
                    yield Match(Name(a), Pattern("box", (x,)), p, q)
    if size >= 2:
        for p in programs(size - 1, scope + (f"n{depth}",), depth + 1):
            yield New(f"n{depth}", NEW_TYPE, p)


def signal_types() -> list:
    """Every signal type over the fragment's payloads."""
    out = [SigT(u, D) for k in (1, 2, 3, 4, 5) for u in USAGES[k]]
    out += [SigT(u, BOX) for k in (3, 4, 5) for u in USAGES[k]]
    return out
