import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import NEGATIVE, POSITIVE, corpus, module, program
from oracle import FRAGMENT, Oracle, context, programs, signal_types
from spic.parser import parse_module
from spic.syntax import Call, Deref, Name, substitute
from spic.typecheck import USAGE_CODES, Checker, check_module, check_program, expr_demand
from spic.types import INF, ONE, Ind, ListT, SetT, SigT, ctx_add
from spic.usage import all_usages, parse_usage


def sig(text, payload):
    return SigT(parse_usage(text), payload)


def signature(m, thread):
    return tuple(str(t) for t in m.threads[thread].param_types)


@pytest.mark.parametrize("name", POSITIVE)
def test_positive_corpus_typechecks(name):
    res = check_module(corpus(name))
    assert res.ok, [str(d) for d in res.diagnostics]


def test_server_signatures():
    m = corpus("server")
    req = Ind("Req", ONE)
    sigma = sig("k3:(w,0,1)w", req)
    sigma_prime = sig("k3:(w,0,0)w", req)
    assert m.types["Req"].ctors[0].args == (sig("k5:(1,0,0)w", Ind("D")), Ind("D"))
    assert m.threads["Server"].param_types == (sigma,)
    assert m.threads["Handle"].param_types == (sigma, SetT(ONE, req))
    client = m.threads["Client"].param_types
    assert client[:2] == (Ind("D"), sigma_prime)
    assert isinstance(client[2], SigT) and client[2].payload == Ind("D")


def test_cell_signatures():
    m = corpus("cell")
    state = Ind("State")
    sigma = sig("k1:(w,0,w)w", state)
    assert m.threads["Cell"].param_types == (state, sigma, ListT(INF, sigma))
    assert m.threads["Send"].param_types == (state, sigma, ListT(INF, sigma), ListT(INF, sigma))
    nxt = m.functions["next"]
    assert nxt.params == (state, SetT(INF, state)) and nxt.result == state


def test_dataflow_signatures():
    m = corpus("dataflow")
    d = Ind("D")
    s_in, s_out, wire = sig("k5:(0,1,0)w", d), sig("k5:(1,0,0)w", d), sig("k5:(1,1,0)w", d)
    assert m.threads["A"].param_types == (s_in, s_out, s_in, s_out)
    assert m.threads["B"].param_types == (s_in, s_out, s_in, s_out)
    assert m.threads["C"].param_types == (s_in, s_out)
    net = m.threads["Network"].body
    assert all(t == wire for t in _restrictions(net))
    # the network alone is well typed in the context s1 : In, s6 : Out
    assert check_program(m, {"s1": s_in, "s6": s_out}, net) is None


def _restrictions(p):
    out = []
    while hasattr(p, "ty") and hasattr(p, "body") and not hasattr(p, "var"):
        out.append(p.ty)
        p = p.body
    return out


def test_ref_signature():
    m = corpus("ref")
    k = Ind("K")
    assert m.threads["Ref"].param_types == (sig("k2:(1,w,w)w", k), sig("k5:(0,1,0)w", k), k)


def test_clock_signatures():
    m = corpus("clock")
    nat, unit = Ind("Nat"), Ind("Unit")
    u, u2 = sig("k2:(1,w,w)w", nat), sig("k3:(w,0,1)w", unit)
    assert m.threads["Clock"].param_types == (u, u2, nat)
    assert m.threads["Clock'"].param_types == (u, u2, SetT(ONE, unit), nat)


@pytest.mark.parametrize("name", NEGATIVE)
def test_negative_corpus_rejected_with_usage_errors(name):
    res = check_module(corpus(f"negative/{name}"))
    assert not res.ok
    assert all(d.code in USAGE_CODES for d in res.diagnostics), [str(d) for d in res.diagnostics]


def test_conflict_names_both_demands():
    res = check_module(corpus("negative/double_emit"))
    d = res.diagnostics[0]
    assert d.code == "UsageConflict" and d.var == "s" and len(d.demands) == 2
    assert d.span is not None and d.span.line == 4


def test_obligations_exported_for_set_parameters():
    obligations = {(o.kind, o.name, o.param) for o in check_module(corpus("cell")).obligations}
    assert ("function", "next", 1) in obligations
    obligations = {(o.kind, o.name, o.param) for o in check_module(corpus("server")).obligations}
    assert ("thread", "Handle", 1) in obligations


M = module(
    """
type D = v1 | v2;
type Req<1> = req(Sig<k5:(1,0,0)w>(D), D);
thread A(l : List<1>(D), s : Sig<k4:(0,0,1)w>(D)) = 0;
main = 0;
"""
)


def test_set_dereference_demand():
    s = sig("k3:(w,0,1)w", Ind("D"))
    d = expr_demand(M, Deref("s"), SetT(ONE, Ind("D")), {"s": s}, deref=True)
    assert d["s"].usage.now == parse_usage("k3:(w,0,1)w").now
    assert d["s"].usage.later == parse_usage("k3:(w,0,0)w").later


def test_dereference_and_signal_split_the_usage():
    s = sig("k4:(0,0,1)w", Ind("D"))
    k = Call("A", (Deref("s"), Name("s")))
    p = program("present s(x) { 0 } else A(!s, s)", M)
    assert p.cont == k
    assert check_program(M, {"s": s}, program("emit s v1", M)) is not None  # no emit capability
    # the continuation alone consumes exactly (0,0,1)(0,0,0)w + (0,0,0)(0,0,1)w
    d = Checker(M).call(k, {"s": s}, deref=True)
    assert d["s"] == s


def test_kind5_dereference_rejected():
    s = sig("k5:(1,1,0)w", Ind("D"))
    diag = check_program(M, {"s": s}, program("present s(x) { 0 } else A(!s, s)", M))
    assert diag is not None and diag.code == "DerefOnKind5"


def test_request_demand():
    d = expr_demand(M, program("emit t req(s', v1)", M).value, Ind("Req", ONE), {"s'": sig("k5:(1,0,0)w", Ind("D"))})
    assert d == {"s'": sig("k5:(1,0,0)w", Ind("D"))}


def test_two_emitters_conflict():
    s = sig("k5:(1,1,0)w", Ind("D"))
    diag = check_program(M, {"s": s}, program("emit s v1 | emit s v2", M))
    assert diag is not None and diag.code == "UsageConflict"


# Lemmas over the fragment used by the declarative oracle

FRAG = parse_module(FRAGMENT)
TYPES = signal_types()
SMALL = [p for n in range(1, 5) for p in programs(n)]
OPEN = [p for n in range(1, 5) for p in programs(n, ("s1", "y"))]


def accepts(ctx, p) -> bool:
    return check_program(FRAG, dict(ctx), p) is None


@given(st.sampled_from(SMALL), st.sampled_from(TYPES), st.sampled_from(TYPES), st.data())
def test_weakening(p, t1, t2, data):
    g = {"s1": t1, "s2": t2}
    if not accepts(g, p):
        return
    # extra resources of the same kind and payload, so that the sum is often defined
    u = data.draw(st.sampled_from(list(all_usages(t1.usage.kind))))
    bigger = ctx_add(g, {"s1": SigT(u, t1.payload)})
    if bigger is not None:
        assert accepts(bigger, p)


@given(st.sampled_from(OPEN), st.sampled_from(TYPES), st.sampled_from(TYPES), st.sampled_from(["s1", "s2"]))
def test_substitution(p, t1, ty, target):
    # G, y : ty |- P and G' |- target : ty with (G + G') defined  =>  G + G' |- [target/y]P
    g = {"s1": t1}
    if not accepts({**g, "y": ty}, p):
        return
    both = ctx_add(g, {target: ty})
    if both is None:
        return
    assert accepts(both, substitute(p, {"y": Name(target)}))


def test_oracle_smoke():
    oracle = Oracle(FRAG)
    s = TYPES[0]
    assert oracle.prog(context(s1=s, s2=s), SMALL[0])
