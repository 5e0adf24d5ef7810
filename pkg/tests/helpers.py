"""Shared generators and independent oracles for the test suites."""

from __future__ import annotations

from functools import lru_cache

from hypothesis import strategies as st

from tcmd.basic import canonicalize, split_block, make_block
from tcmd.services import Reply, SpecService, md_service, service_of_spec, table_spec
from tcmd.terms import (
    TAU,
    Call,
    Csi,
    D,
    Dead,
    Fix,
    ForkPcc,
    Nu,
    Pcc,
    S,
    S2d,
    Stop,
    TauAction,
    Term,
    Use,
    Var,
    act,
    md,
    prefix,
)

# A three-state counter for focus f: f.a bumps it, f.b asks whether it is at 2.
COUNTER: SpecService = service_of_spec(
    table_spec(
        "counter",
        0,
        {
            k: {"a": ((k + 1) % 3, Reply.T), "b": (k, Reply.T if k == 2 else Reply.F)}
            for k in range(3)
        },
    )
)
MD2: SpecService = md_service(2)

PLAIN_ACTIONS = [act("f.a"), act("f.b"), act("g.a"), act("g.b")]
MD_ACTIONS = [
    Call("md", md("creatom", "s")),
    Call("md", md("clrspot", "s")),
    Call("md", md("undeftst", "s")),
    Call("md", md("equaltst", "s", "t")),
    Call("md", md("setspot", "t", "s")),
]
CALLS = PLAIN_ACTIONS + MD_ACTIONS

calls = st.sampled_from(CALLS)
spots = st.sampled_from(["s", "t"])
leaves = st.sampled_from([S, D])


def _with_children(children: st.SearchStrategy[Term], forks: bool) -> st.SearchStrategy[Term]:
    options = [
        st.builds(Pcc, children, calls, children),
        st.builds(lambda a, p: prefix(a, p), st.sampled_from(CALLS + [TAU]), children),
        st.builds(lambda ts: Csi(tuple(ts)), st.lists(children, max_size=3)),
        st.builds(S2d, children),
        st.builds(lambda p: Use(p, "f", COUNTER), children),
        st.builds(lambda p: Use(p, "md", MD2), children),
        st.builds(lambda s, p: Nu("md", s, p), spots, children),
        st.builds(lambda p: Nu("g", "s", p), children),
    ]
    if forks:
        options.append(st.builds(ForkPcc, children, children, children))
    return st.one_of(*options)


@lru_cache(maxsize=None)
def closed_terms(depth: int = 5, forks: bool = False) -> st.SearchStrategy[Term]:
    """Closed recursion-free terms of nesting depth at most ``depth``."""
    if depth == 0:
        return leaves
    return st.one_of(leaves, _with_children(closed_terms(depth - 1, forks), forks))


@lru_cache(maxsize=None)
def basic_terms(depth: int = 4, forks: bool = True) -> st.SearchStrategy[Term]:
    """Basic terms (normal forms) of depth at most ``depth``."""
    if depth == 0:
        return leaves
    sub = basic_terms(depth - 1, forks)
    options = [
        leaves,
        st.builds(Pcc, sub, calls, sub),
        st.builds(lambda p: prefix(TAU, p), sub),
        st.builds(
            lambda ss, p, q: _block("md", ss, Pcc(p, Call("md", md("equaltst", "s", "t")), q)),
            st.sampled_from([("s",), ("t",), ("s", "t")]),
            sub,
            sub,
        ),
    ]
    if forks:
        options.append(st.builds(ForkPcc, sub, sub, sub))
    return st.one_of(*options)


def _block(f: str, ss: tuple[str, ...], body: Term) -> Term:
    for s in reversed(ss):
        body = Nu(f, s, body)
    return body


X = "x"


@lru_cache(maxsize=None)
def open_terms(depth: int) -> st.SearchStrategy[Term]:
    """Terms with ``x`` possibly free anywhere (guarded or not)."""
    if depth == 0:
        return st.one_of(leaves, st.just(Var(X)))
    return st.one_of(
        leaves,
        st.just(Var(X)),
        guarded_bodies(depth),
    )


@lru_cache(maxsize=None)
def guarded_bodies(depth: int = 4) -> st.SearchStrategy[Term]:
    """Terms in which every free ``x`` sits below a postconditional."""
    if depth == 0:
        return leaves
    sub = guarded_bodies(depth - 1)
    anything = open_terms(depth - 1)
    return st.one_of(
        st.builds(Pcc, anything, calls, anything),
        st.builds(lambda p: prefix(TAU, p), anything),
        st.builds(lambda ts: Csi(tuple(ts)), st.lists(sub, min_size=1, max_size=3)),
        st.builds(S2d, sub),
        st.builds(lambda p: Use(p, "f", COUNTER), sub),
        st.builds(lambda s, p: Nu("md", s, p), spots, sub),
        closed_terms(2),
    )


# ---------------------------------------------------------------------------
# Oracles


def truncate(p: Term, n: int) -> Term:
    """Projection of a basic term, computed directly from the projection laws."""
    if n == 0:
        return D
    match p:
        case Stop() | Dead():
            return p
        case Pcc(l, TauAction(), _):
            t = truncate(l, n - 1)
            return Pcc(t, TAU, t)
        case Pcc(l, a, r):
            return Pcc(truncate(l, n - 1), a, truncate(r, n - 1))
        case ForkPcc(l, z, r):
            return ForkPcc(truncate(l, n - 1), truncate(z, n - 1), truncate(r, n - 1))
    focus, binders, pcc = split_block(p)
    return make_block(focus, binders, truncate(pcc, n))


def projection_oracle(normal_form: Term, n: int) -> Term:
    return canonicalize(truncate(normal_form, n))


def all_basic_terms(depth: int, actions=(act("f.a"),)) -> list[Term]:
    """Every basic term built from S, D, tau-prefix and the given postconditionals."""
    level = [S, D]
    for _ in range(depth):
        nxt = [S, D]
        nxt += [prefix(TAU, p) for p in level]
        nxt += [Pcc(p, a, q) for a in actions for p in level for q in level]
        level = nxt
    return level


class Counter:
    """Counts how many generated examples a hypothesis test really ran."""

    def __init__(self) -> None:
        self.n = 0

    def tick(self) -> None:
        self.n += 1


__all__ = [
    "COUNTER", "MD2", "CALLS", "closed_terms", "basic_terms", "guarded_bodies", "open_terms",
    "truncate", "projection_oracle", "all_basic_terms", "Counter", "X", "Fix", "Dead", "Stop",
]
