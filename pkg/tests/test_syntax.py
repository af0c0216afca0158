import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import corpus, module, program
from spic.syntax import (
    Call,
    Cnst,
    Emit,
    Name,
    New,
    Nil,
    Par,
    Pattern,
    Present,
    alpha_equal,
    desugar_pause,
    free_names,
    list_value,
    match_value,
    substitute,
)

M = module(
    """
type D = v1 | v2;
thread A(x : D, y : D) = 0;
context s : Sig<k1:(w,0,w)w>(D), t : Sig<k1:(w,0,w)w>(D);
main = 0;
"""
)


def test_free_names():
    assert free_names(program("new s : Sig<k1:(w,0,w)w>(D) in emit s v1", M)) == set()
    assert free_names(program("emit s v1 | present t(x) { 0 } else A(v1, v2)", M)) == {"s", "t"}


def test_free_names_of_client():
    server = corpus("server")
    client = server.threads["Client"]
    assert free_names(client.body, dict(client.params)) == {"s", "t"}


def test_substitute():
    assert substitute(Emit(Name("x"), Cnst("v1")), {"x": Name("s")}) == Emit(Name("s"), Cnst("v1"))
    assert substitute(Call("A", (Name("x"), Name("y"))), {"x": Cnst("v1"), "y": Cnst("v2")}) == Call(
        "A", (Cnst("v1"), Cnst("v2"))
    )


def test_substitute_avoids_capture():
    p = New("s", M.context["s"], Emit(Name("x"), Name("s")))
    q = substitute(p, {"x": Name("s")})
    assert isinstance(q, New) and q.name != "s"
    assert q.body == Emit(Name("s"), Name(q.name))
    assert free_names(q) == {"s"}


def test_substitute_stops_at_binders():
    p = Present(Name("s"), "x", Emit(Name("t"), Name("x")), Call("Stop"))
    assert substitute(p, {"x": Cnst("v1")}) == p


def test_match_value():
    req = Cnst("req", (Name("s'"), Cnst("d")))
    rest = list_value([])
    assert match_value(Cnst("cons", (req, rest)), Pattern("cons", ("x", "l"))) == {"x": req, "l": rest}
    assert match_value(Cnst("nil"), Pattern("cons", ("x", "l"))) is None
    assert match_value(Cnst("c", (Cnst("v1"),)), Pattern("c", ("x",))) == {"x": Cnst("v1")}


def test_patterns_need_distinct_variables():
    with pytest.raises(ValueError):
        Pattern("pair", ("x", "x"))


def test_desugar_pause():
    p = desugar_pause(Call("A"))
    assert isinstance(p, New)
    assert p.ty.usage.kind == 2 and p.ty.usage.is_uniform
    assert isinstance(p.body, Present) and p.body.sig == Name(p.name)
    assert p.body.body == Nil() and p.body.cont == Call("A")
    assert p.name not in free_names(p)
    q = desugar_pause(Call("Stop"), avoid={p.name})
    assert q.name != p.name


# Properties over generated programs

values = st.sampled_from([Cnst("v1"), Cnst("v2"), Name("s"), Name("t")])
names = st.sampled_from(["s", "t", "x", "y"])


def progs():
    leaf = st.one_of(
        st.just(Nil()),
        st.builds(lambda a, v: Emit(Name(a), v), names, values),
        st.builds(lambda a, b: Emit(Name(a), Name(b)), names, names),
    )

    def extend(inner):
        return st.one_of(
            st.builds(Par, inner, inner),
            st.builds(lambda a, body: Present(Name(a), "y", body, Call("Stop")), names, inner),
            st.builds(lambda body: New("t", M.context["t"], body), inner),
        )

    return st.recursive(leaf, extend, max_leaves=6)


@given(progs(), values, values)
def test_sequential_substitution_composes(p, v1, v2):
    # x and y are substituted by closed values, so the substitutions commute
    both = substitute(p, {"x": v1, "y": v2})
    assert alpha_equal(substitute(substitute(p, {"x": v1}), {"y": v2}), both)


@given(progs(), st.sampled_from(["s", "t"]))
def test_free_names_after_substitution(p, s):
    q = substitute(p, {"x": Name(s)})
    assert free_names(q) <= (free_names(p) - {"x"}) | {s}
