"""The thirteen acceptance criteria, one test each (see the summary printed at the end)."""

from __future__ import annotations

import itertools
import time

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import (
    COUNTER,
    X,
    Counter,
    all_basic_terms,
    basic_terms,
    closed_terms,
    guarded_bodies,
    projection_oracle,
)
from tcmd import basic_eq, canonicalize, depth, normalize, parse_term
from tcmd.engine import Normalizer, normalize_traced
from tcmd.pgldf import (
    Basic,
    Jump,
    NegTest,
    PosTest,
    Program,
    beh_eq_up_to,
    eliminate_jump_chains,
    extract,
    parse_program,
    run,
    Outcome,
)
from tcmd.projective import BELOW_RESOLUTION, Dyadic, Lab, approx_leq, distance, guarded_term
from tcmd.services import HistoryService, Reply, ServiceRegistry, md_load, state_iso
from tcmd.terms import D, Csi, Fix, Pcc, Proj, S, S2d, TAU, Use, Var, act, prefix, subst_var

def accept(examples: int) -> settings:
    """Fixed-seed settings so each run checks the same, fully counted sample."""
    return settings(
        max_examples=examples,
        deadline=None,
        derandomize=True,
        database=None,
        suppress_health_check=list(HealthCheck),
    )


def _within(seconds: float, started: float) -> None:
    elapsed = time.perf_counter() - started
    assert elapsed < seconds, f"took {elapsed:.1f}s, budget {seconds}s"


# ---------------------------------------------------------------------------
# Examples


@pytest.mark.criterion(1, "Two-thread interleaving normalizes to the reference basic term")
def test_two_thread_cyclic_interleaving():
    t0 = time.perf_counter()
    lhs = parse_term("csi[(f.a1' . S) <f.a1> (f.a1'' . S), (f.a2' . S) <f.a2> (f.a2'' . S)]")
    rhs = parse_term(
        "((f.a1' . f.a2' . S) <f.a2> (f.a1' . f.a2'' . S))"
        " <f.a1> "
        "((f.a1'' . f.a2' . S) <f.a2> (f.a1'' . f.a2'' . S))"
    )
    assert basic_eq(normalize(lhs), rhs)
    _within(1, t0)


def _first_use_reply(history, m):
    if str(m) == "m'":
        return Reply.T
    if str(m) == "m":
        return Reply.T if any(str(h) == "m'" for h in history) else Reply.F
    return Reply.REFUSED


@pytest.mark.criterion(2, "Service application yields tau . tau . f'.m' . S")
def test_service_application():
    t0 = time.perf_counter()
    registry = ServiceRegistry({"H": HistoryService("H", _first_use_reply)})
    t = parse_term("use(f.m' . ((f'.m' . S) <f.m> (f''.m'' . S)), f, H)")
    result = Normalizer(registry).normalize(t)
    assert result is parse_term("tau . tau . f'.m' . S")
    _within(1, t0)


def _counting_reply(history, m):
    if str(m) == "m":
        return Reply.T if sum(str(h) == "m" for h in history) > 3 else Reply.F
    return Reply.REFUSED


def _counting_trace_oracle() -> int:
    """Step through the thread by hand: each f.m is absorbed as one tau (TSC5/TSC6)."""
    history: list[str] = []
    taus = 0
    while True:
        reply = _counting_reply(tuple(history), "m")
        assert reply is not Reply.REFUSED
        history.append("m")
        taus += 1
        if reply is Reply.T:
            return taus


@pytest.mark.criterion(3, "Recursive service use: engine equals the trace oracle")
def test_recursion_with_service(note):
    t0 = time.perf_counter()
    registry = ServiceRegistry({"H": HistoryService("H", _counting_reply)})
    t = parse_term("use(fix x . (f'.m' . S) <f.m> x, f, H)")
    result, trace = normalize_traced(t, registry=registry)
    k = _counting_trace_oracle()
    expected = parse_term("f'.m' . S")
    for _ in range(k):
        expected = prefix(TAU, expected)
    assert result is expected
    assert trace.labels().count("TSC6") + trace.labels().count("TSC5") == k
    displayed = 4
    if k != displayed:
        note(
            f"criterion 3: engine and oracle give {k} taus before f'.m'; "
            f"the source displays {displayed} (H answers F while at most three m's were processed)"
        )
    _within(1, t0)


CHAIN_MOLECULE = {
    "spots": {"r": "a1", "s": "a3", "t": "a4"},
    "atoms": {
        "a1": {"up": "a2"},
        "a2": {"up": "a3", "dn": "a1"},
        "a3": {"up": "a4", "dn": "a2"},
        "a4": {"dn": "a3"},
    },
    "undef": False,
    "capacity": None,
}


def chain_program_text(n: int = 4) -> str:
    lines = ["md(creatom r)", "md(setspot t r)"]
    for _ in range(n - 1):
        lines += [
            "md(setspot s t)",
            "md(creatom t)",
            "md(addfield s up)",
            "md(addfield t dn)",
            "md(setfield s up t)",
            "md(setfield t dn s)",
        ]
    return "\n".join(lines)


@pytest.mark.criterion(4, "Running the chain-building methods yields the four-atom chain")
def test_chain_molecule():
    t0 = time.perf_counter()
    result = run(parse_program(chain_program_text()))
    assert result.outcome is Outcome.TERMINATED
    assert all(reply is Reply.T for _, reply in result.trace)
    assert state_iso(result.state, md_load(CHAIN_MOLECULE))
    _within(1, t0)


@pytest.mark.criterion(5, "Interference without restriction, none with it")
def test_restriction_prevents_interference():
    t0 = time.perf_counter()
    body = "md(getfield s'' s' w) . ((g.p . S) <md(setfield s v s'')> (g.q . S))"
    plain = parse_term(f"csi[{body}, md(clrspot s'') . S]")
    assert basic_eq(
        normalize(plain),
        parse_term("md(getfield s'' s' w) . md(clrspot s'') . ((g.p . S) <md(setfield s v s'')> (g.q . S))"),
    )
    restricted = parse_term(f"csi[nu(md, s'', {body}), md(clrspot s'') . S]")
    result, trace = normalize_traced(restricted)
    assert basic_eq(
        result,
        parse_term("nu(md, u, md(getfield u s' w) . md(clrspot s'') . ((g.p . S) <md(setfield s v u)> (g.q . S)))"),
    )
    labels = trace.labels()
    assert "R1" in labels and labels.index("R1") < labels.index("R7")
    _within(1, t0)


# ---------------------------------------------------------------------------
# Property suites


@pytest.mark.criterion(6, "Projection composition and commutation on 500 random terms, n, m <= 6")
def test_projection_lemmas():
    t0 = time.perf_counter()
    lab = Lab()
    seen = Counter()

    @accept(500)
    @given(closed_terms(5))
    def check(t):
        seen.tick()
        proj = [lab.project(k, t) for k in range(7)]
        for n in range(7):
            for m in range(7):
                assert basic_eq(lab.project(n, Proj(m, t)), proj[min(n, m)])
            assert basic_eq(lab.project(n, S2d(t)), lab.project(n, S2d(Proj(n, t))))
            assert basic_eq(lab.project(n, Use(t, "f", COUNTER)), lab.project(n, Use(Proj(n, t), "f", COUNTER)))

    check()
    assert seen.n >= 500
    _within(60, t0)


@pytest.mark.criterion(7, "Singleton interleaving and s2d laws on 500 random fork-free terms")
def test_singleton_and_s2d_laws():
    t0 = time.perf_counter()
    session = Normalizer()
    seen = Counter()

    @accept(500)
    @given(st.lists(closed_terms(4), min_size=1, max_size=3))
    def check(ts):
        seen.tick()
        t = ts[0]
        nf = session.normalize
        assert basic_eq(nf(Csi((t,))), nf(t))
        assert basic_eq(nf(S2d(Csi(tuple(ts)))), nf(Csi(tuple(S2d(p) for p in ts))))
        assert basic_eq(nf(S2d(S2d(t))), nf(S2d(t)))
        assert basic_eq(nf(S2d(Use(t, "f", COUNTER))), nf(Use(S2d(t), "f", COUNTER)))

    check()
    assert seen.n >= 500
    _within(60, t0)


@pytest.mark.criterion(8, "Ultrametric on 1000 triples at N = 16 and distance to projections")
def test_metric():
    t0 = time.perf_counter()
    N = 16
    lab = Lab()
    seen = Counter()
    recursive = st.builds(lambda b: Fix(X, b), guarded_bodies(3))
    terms = st.one_of(closed_terms(4), recursive)

    @accept(1000)
    @given(terms, terms, terms)
    def check(p, q, r):
        seen.tick()
        ep, eq, er = lab.embed(p, N), lab.embed(q, N), lab.embed(r, N)
        assert distance(ep, eq) <= max(distance(ep, er), distance(er, eq))
        assert distance(ep, ep) == BELOW_RESOLUTION
        for n in range(N):
            assert distance(lab.embed(Proj(n, p), N), ep) <= Dyadic(n + 1)

    check()
    assert seen.n >= 1000
    _within(60, t0)


@pytest.mark.criterion(9, "Guarded fixed points: stabilization, agreement, contraction")
def test_guarded_fixed_points():
    t0 = time.perf_counter()
    lab = Lab()
    seen = Counter()
    N = 12

    @accept(100)
    @given(guarded_bodies(4), closed_terms(3), closed_terms(3))
    def check(t, p, q):
        seen.tick()
        assert guarded_term(t)
        for n in range(N + 1):
            assert lab.stabilization_index(X, t, n) <= n
        approx = lab.fix_approx(X, t, N)
        assert approx.entries == lab.embed(Fix(X, t), N).entries
        ep, eq = lab.embed(p, N), lab.embed(q, N)
        ip, iq = lab.embed(subst_var(t, X, p), N), lab.embed(subst_var(t, X, q), N)
        assert distance(ip, iq) <= distance(ep, eq).half()

    check()
    assert seen.n >= 100
    _within(120, t0)


@pytest.mark.criterion(10, "Equality up to n agrees with the normalize-and-truncate oracle")
def test_equality_decision():
    t0 = time.perf_counter()
    lab = Lab()
    session = Normalizer()
    seen = Counter()
    variants = Counter()

    @accept(300)
    @given(closed_terms(4), closed_terms(4), closed_terms(3), st.booleans())
    def check(p, q, shared, related):
        seen.tick()
        if related:
            # Pairs sharing a prefix first differ deeper down.
            p = prefix(act("f.a"), Pcc(shared, act("g.a"), p))
            q = prefix(act("f.a"), Pcc(shared, act("g.a"), q))
        np_, nq = session.normalize(p), session.normalize(q)
        for n in range(9):
            oracle = projection_oracle(np_, n) is projection_oracle(nq, n)
            assert lab.eq_up_to(n, p, q) == oracle

    check()

    @accept(100)
    @given(guarded_bodies(3))
    def alpha(t):
        variants.tick()
        renamed = subst_var(t, X, Var("y"))
        for n in range(17):
            assert lab.eq_up_to(n, Fix(X, t), Fix("y", renamed))

    alpha()
    assert seen.n >= 300
    _within(60, t0)


def _all_programs(max_len: int):
    actions = [act("f.a"), act("f.b")]
    kinds = [k(a) for a in actions for k in (Basic, PosTest, NegTest)]
    for n in range(1, max_len + 1):
        alphabet = kinds + [Jump(target) for target in range(0, n + 2)]
        for body in itertools.product(alphabet, repeat=n):
            yield Program(body)


@pytest.mark.criterion(11, "Jump-chain elimination preserves behaviour (exhaustive, length <= 4)")
def test_chain_elimination_exhaustive():
    t0 = time.perf_counter()
    lab = Lab()
    total = changed = 0
    for program in _all_programs(4):
        total += 1
        cleaned = eliminate_jump_chains(program)
        if cleaned == program:
            continue  # identical programs extract to the identical term
        changed += 1
        for n in range(9):
            assert beh_eq_up_to(n, program, cleaned, lab), (program, cleaned, n)
    assert changed > 0 and total > 20000
    assert extract(parse_program("jmp 1")) is Csi((D,))
    assert extract(parse_program("jmp 5")) is Csi((S,))
    _within(120, t0)


FORK_DEMO = """\
fork s 7
p.a1
p.a2
md(addfield s acti)
p.a3
jmp 9
c.b1
c.b2
"""


@pytest.mark.criterion(12, "Java-style fork: the forked body waits for the start command")
def test_fork_gating():
    t0 = time.perf_counter()
    result = run(parse_program(FORK_DEMO))
    assert result.outcome is Outcome.TERMINATED
    assert result.trace_lines() == [
        "1: md(creatom this) -> T",
        "2: md(setspot s this) -> T",
        "3: tau -> T",
        "4: md(hasfield s acti) -> F",
        "5: p.a1 -> T",
        "6: md(hasfield s acti) -> F",
        "7: p.a2 -> T",
        "8: md(hasfield s acti) -> F",
        "9: md(addfield s acti) -> T",
        "10: md(hasfield s acti) -> T",
        "11: p.a3 -> T",
        "12: c.b1 -> T",
        "13: c.b2 -> T",
    ]
    actions = [a for a, _ in result.trace]
    start = actions.index("md(addfield s acti)")
    assert not any(a.startswith("c.") for a in actions[:start])
    assert [a for a in actions[start:] if a.startswith("c.")] == ["c.b1", "c.b2"]
    _within(1, t0)


CRITERION_13 = "Approximation order, projection at depth and least fixed points"


@pytest.mark.criterion(13, CRITERION_13)
def test_approximation_order_is_partial_order():
    t0 = time.perf_counter()
    terms = all_basic_terms(3)
    assert len(terms) == 5552
    ups: list[frozenset[int]] = []
    for p in terms:
        assert approx_leq(D, p)
        assert approx_leq(p, p)
        ups.append(frozenset(j for j, q in enumerate(terms) if approx_leq(p, q)))
    for i, up in enumerate(ups):
        for j in up:
            assert j == i or i not in ups[j], "antisymmetry"
            assert ups[j] <= up, "transitivity"
    _within(45, t0)


@pytest.mark.criterion(13, CRITERION_13)
def test_projection_at_own_depth_returns_term():
    """Literal restatement: pi_l(p) = p for every l >= depth(p).

    With depth(S) = 0 this contradicts pi_0(S) = D (and likewise pi_1 of
    tau . S); the existential form is checked in test_projective.
    """
    t0 = time.perf_counter()
    lab = Lab()
    seen = Counter()

    @accept(500)
    @given(basic_terms(4))
    def projection_at_depth(p):
        seen.tick()
        p = canonicalize(p)
        for extra in range(3):
            assert lab.project(depth(p) + extra, p) is p

    projection_at_depth()
    assert seen.n >= 500
    _within(10, t0)


@pytest.mark.criterion(13, CRITERION_13)
def test_fix_approx_is_least_fixed_point():
    t0 = time.perf_counter()
    lab = Lab()
    N = 12
    seen = Counter()
    unguarded = st.sampled_from([Var(X), S2d(Var(X)), Csi((Var(X),)), Use(Var(X), "f", COUNTER)])

    @accept(60)
    @given(st.one_of(guarded_bodies(3), unguarded), st.lists(closed_terms(3), max_size=4))
    def least(t, candidates):
        approx = lab.fix_approx(X, t, N)
        alternatives = list(candidates) + [D, prefix(TAU, D)]
        if guarded_term(t):
            alternatives.append(Fix(X, t))
        for q in alternatives:
            if lab.eq_up_to(N, subst_var(t, X, q), q):
                seen.tick()
                eq = lab.embed(q, N)
                assert all(approx_leq(a, b) for a, b in zip(approx.entries, eq.entries))

    least()
    assert seen.n >= 60
    _within(15, t0)
