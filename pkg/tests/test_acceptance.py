"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (the lines are printed either way).
"""

import itertools
import json
import os
import random
import subprocess
import sys
import time
from contextlib import contextmanager

import pytest

from helpers import NEGATIVE, POSITIVE, corpus, module, program
from oracle import FRAGMENT, Oracle, context, programs, signal_types
from spic import harness as H
from spic.parser import parse_module
from spic.typecheck import USAGE_CODES, Checker, TypingError, check_module
from spic.usage import all_usages, neutral, shift, usage_add, usage_le, usage_sub

TYPED_CORPUS = POSITIVE + ("marking",)


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def report(number: int, title: str):
        notes: list = []
        t0 = time.perf_counter()
        try:
            yield notes
        except BaseException:
            verdict = "FAIL"
            raise
        else:
            verdict = "PASS"
        finally:
            detail = "; ".join(notes)
            with capsys.disabled():
                print(f"\n[{verdict}] criterion {number}: {title} ({time.perf_counter() - t0:.1f}s) {detail}")

    return report


def test_1_usage_algebra(criterion):
    with criterion(1, "usage algebra, exhaustive") as notes:
        t0 = time.perf_counter()
        pairs = triples = 0
        for k in (1, 2, 3, 4, 5):
            us = list(all_usages(k))
            for a, b in itertools.product(us, us):
                pairs += 1
                s = usage_add(a, b)
                assert s == usage_add(b, a)
                if s is not None:
                    assert usage_le(a, s) and usage_le(b, s)
                d = usage_sub(a, b)
                assert (d is not None) == usage_le(b, a)
                if d is not None:
                    assert usage_add(b, d) == a
                assert usage_le(a, b) == any(usage_add(a, c) == b for c in us)
                if usage_le(a, b) and usage_le(b, a):
                    assert a == b
            for a, b, c in itertools.product(us, us, us):
                triples += 1
                ab, bc = usage_add(a, b), usage_add(b, c)
                assert (None if ab is None else usage_add(ab, c)) == (None if bc is None else usage_add(a, bc))
            for a in us:
                assert usage_add(a, neutral(k)) == a
                assert shift(shift(a)) == shift(a)
        elapsed = time.perf_counter() - t0
        notes.append(f"{pairs} pairs, {triples} triples in {elapsed:.3f}s")
        assert elapsed < 1.0


PUBLISHED = {
    "server": {
        "Server": ("Sig<k3:(w,0,1)w>(Req)",),
        "Handle": ("Sig<k3:(w,0,1)w>(Req)", "Set<1>(Req)"),
    },
    "cell": {
        "Cell": ("State", "Sig<k1:(w,0,w)w>(State)", "List<w>(Sig<k1:(w,0,w)w>(State))"),
    },
    "dataflow": {
        "A": ("Sig<k5:(0,1,0)w>(D)", "Sig<k5:(1,0,0)w>(D)", "Sig<k5:(0,1,0)w>(D)", "Sig<k5:(1,0,0)w>(D)"),
        "C": ("Sig<k5:(0,1,0)w>(D)", "Sig<k5:(1,0,0)w>(D)"),
    },
    "ref": {"Ref": ("Sig<k2:(1,w,w)w>(K)", "Sig<k5:(0,1,0)w>(K)", "K")},
    "clock": {
        "Clock": ("Sig<k2:(1,w,w)w>(Nat)", "Sig<k3:(w,0,1)w>(Unit)", "Nat"),
        "Clock'": ("Sig<k2:(1,w,w)w>(Nat)", "Sig<k3:(w,0,1)w>(Unit)", "Set<1>(Unit)", "Nat"),
    },
}


def test_2_corpus_typing(criterion):
    with criterion(2, "corpus typing") as notes:
        for name in POSITIVE:
            m = corpus(name)
            res = check_module(m)
            assert res.ok, (name, [str(d) for d in res.diagnostics])
            for thread, sig in PUBLISHED[name].items():
                assert tuple(str(t) for t in m.threads[thread].param_types) == sig, (name, thread)
        codes = set()
        for name in NEGATIVE:
            res = check_module(corpus(f"negative/{name}"))
            assert not res.ok, name
            assert all(d.code in USAGE_CODES for d in res.diagnostics), name
            codes |= {d.code for d in res.diagnostics}
        notes.append(f"{len(POSITIVE)} positive, {len(NEGATIVE)} negative; codes {sorted(codes)}")


def test_3_checker_matches_declarative_oracle(criterion):
    with criterion(3, "checker vs declarative oracle") as notes:
        t0 = time.perf_counter()
        frag = parse_module(FRAGMENT)
        oracle, checker = Oracle(frag), Checker(frag)
        types = signal_types()
        rng = random.Random(0)
        compared = accepted = 0
        disagreements = []
        for size in range(1, 7):
            for p in programs(size):
                for _ in range(8):
                    g = context(s1=rng.choice(types), s2=rng.choice(types))
                    try:
                        checker.accepts(dict(g), p)
                        verdict = True
                    except TypingError:
                        verdict = False
                    compared += 1
                    accepted += verdict
                    if verdict != oracle.prog(g, p):
                        disagreements.append((p, g))
        elapsed = time.perf_counter() - t0
        notes.append(f"{compared} judgments, {accepted} accepted, {len(disagreements)} disagreements, seed 0")
        assert not disagreements, disagreements[:3]
        assert 0 < accepted < compared
        assert elapsed < 300


def test_4_subject_reduction(criterion):
    with criterion(4, "subject reduction") as notes:
        for name in TYPED_CORPUS:
            rep = H.subject_reduction(corpus(name), max_depth=200)
            assert rep.ok, (name, rep.failures[:3], rep.counterexample)
            assert rep.stats["depth"] >= 200 or rep.stats["exhausted"], (name, rep.stats)
            notes.append(f"{name}: depth {rep.stats['depth']}, {rep.stats['transitions']} steps")
        wit = H.marking_witness(corpus("marking"))
        assert wit.ok, wit.failures
        notes.append("marking witness ok")


def test_5_tau_confluence(criterion):
    with criterion(5, "tau-confluence") as notes:
        diamonds = 0
        for name in TYPED_CORPUS:
            rep = H.confluence(corpus(name))
            assert rep.ok, (name, rep.counterexample)
            diamonds += rep.stats["diamonds"]
        bad = H.confluence(corpus("confluence_untyped"))
        assert not bad.ok and bad.counterexample
        notes.append(f"{diamonds} diamonds closed; unchecked example fails at {bad.counterexample[-1]}")


FIVE = """
type D = v1 | v2 | v3 | v4 | v5;
thread Sink(l : Set<1>(D), m : Set<w>(D)) = 0;
context s : Sig<k3:(w,0,1)w>(D), t : Sig<k1:(w,0,w)w>(D);
main = emit s v1 | emit s v2 | emit s v3 | emit s v4 | emit s v5
     | emit t v5 | emit t v4 | emit t v3 | emit t v2 | emit t v1 | pause.Sink(!s, !t);
"""


def test_6_end_of_instant_determinacy(criterion):
    with criterion(6, "end-of-instant determinacy") as notes:
        five = module(FIVE)
        assert check_module(five).ok
        for name, m in [(n, corpus(n)) for n in TYPED_CORPUS] + [("five", five)]:
            rep = H.eoi_determinacy(m)
            assert rep.ok, (name, rep.counterexample)
            assert rep.stats["exhaustive"], name
        assert rep.stats["max_values"] == 5
        lst, st = len(H.eoi_successors(corpus("intro_list"))), len(H.eoi_successors(corpus("intro_set")))
        assert (lst, st) == (2, 1)
        notes.append(f"5 values per signal exhaustive ({rep.stats['variants']} listings); intro List {lst} / Set {st}")


def test_7_whole_run_determinacy(criterion):
    with criterion(7, "whole-run determinacy") as notes:
        for name in ("dataflow", "ref"):
            t0 = time.perf_counter()
            rep = H.whole_run(corpus(name), 2, budget=100_000)
            assert rep.ok and rep.stats["mode"] == "exhaustive", (name, rep.failures, rep.notes)
            assert rep.stats["frontier_sizes"] == [1, 1]
            assert time.perf_counter() - t0 < 60
            notes.append(f"{name}: {rep.stats['states']} states")


def test_8_dataflow_single_emission(criterion):
    with criterion(8, "dataflow single emission") as notes:
        rep = H.single_emission(corpus("dataflow"), 2)
        assert rep.ok, rep.failures
        assert rep.stats["max_values"] and max(rep.stats["max_values"].values()) == 1
        notes.append(f"signals {sorted(rep.stats['max_values'])}")


BIS = """
type D = v1 | v2;
context a : Sig<k1:(w,0,w)w>(D), b : Sig<k2:(1,w,w)w>(D);
main = 0;
"""


def test_9_weak_bisimulation(criterion):
    with criterion(9, "weak bisimulation") as notes:
        m = module(BIS)

        def wb(p, q, typed=False):
            res = H.weak_bisim(m, program(p, m), program(q, m), typed=typed)
            assert res.states <= H.DEFAULT_CAP
            return res.verdict

        for p in ("0", "emit a v1", "emit b v1", "present b(x) { emit a x } else 0"):
            assert wb(p, p) == "bisimilar", p
        for s in ("a", "b"):
            for typed in (False, True):
                assert wb(f"emit {s} v1 | emit {s} v1", f"emit {s} v1", typed) == "bisimilar", (s, typed)
        assert wb("emit a v1", "0") == "distinguished"
        assert wb("emit b v1", "0") == "distinguished"
        notes.append("P~P, sv|sv ~ sv on kinds 1 and 2, sv distinguished from 0")


def _spic(*args, env=None):
    e = {k: v for k, v in os.environ.items() if k != "SPIC_SEED"}
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "spic", *args], capture_output=True, text=True, env=e, timeout=600)


def test_10_seeded_runs_and_reports(criterion):
    with criterion(10, "seeded runs and check seeds") as notes:
        for name in ("server", "cell", "dataflow"):
            a = _spic("run", f"corpus:{name}", "--instants", "3", "--seed", "17")
            b = _spic("run", f"corpus:{name}", "--instants", "3", "--seed", "17")
            assert a.returncode == 0 and a.stdout and a.stdout == b.stdout, name
        c = _spic("run", "corpus:server", "--instants", "3", env={"SPIC_SEED": "17"})
        assert c.stdout == _spic("run", "corpus:server", "--instants", "3", "--seed", "17").stdout
        r = _spic("check", "corpus:ref", "--json", "--seed", "5")
        out = json.loads(r.stdout)
        assert r.returncode == 0 and out["seed"] == 5
        assert all(rep["seed"] == 5 for rep in out["reports"])
        notes.append(f"byte-identical traces; {len(out['reports'])} reports with seed 5")
