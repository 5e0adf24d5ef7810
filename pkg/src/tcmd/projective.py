"""Finite prefixes of the projective-limit model.

A thread is represented by its projections ``p_0 .. p_N`` (canonical basic
terms).  On top of that: lifted operators, the distance ``2^-k`` at the first
differing depth, guarded fixed points by iteration from D, equality up to a
depth, refutation by projections, guarded-term classification and the
approximation order with D as bottom.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .basic import canonicalize, split_block
from .engine import DEFAULT_FUEL, Normalizer
from .errors import NotStabilized
from .services import ServiceRegistry
from .terms import (
    D,
    Dead,
    Fix,
    ForkPcc,
    NtIl,
    NtJava,
    Pcc,
    Proj,
    Stop,
    TauAction,
    Term,
    Var,
    free_vars,
    guarded_in,
    subst_var,
)

DEFAULT_DEPTH = 32


@functools.total_ordering
@dataclass(frozen=True)
class Dyadic:
    """``2**-exponent``, or, with ``exponent=None``, a distance below the resolution."""

    exponent: int | None

    def _key(self) -> tuple[int, int]:
        return (0, 0) if self.exponent is None else (1, -self.exponent)

    def __lt__(self, other: Dyadic) -> bool:
        return self._key() < other._key()

    def half(self) -> Dyadic:
        return self if self.exponent is None else Dyadic(self.exponent + 1)

    @property
    def below_resolution(self) -> bool:
        return self.exponent is None

    def as_fraction(self) -> Fraction | None:
        return None if self.exponent is None else Fraction(1, 2**self.exponent)

    def __str__(self) -> str:
        return "below resolution" if self.exponent is None else f"2^-{self.exponent}"


BELOW_RESOLUTION = Dyadic(None)


@dataclass(frozen=True)
class ProjSeq:
    depth: int
    entries: tuple[Term, ...]

    def __post_init__(self) -> None:
        if len(self.entries) != self.depth + 1:
            raise ValueError("a projective sequence of depth N has N + 1 entries")

    def __getitem__(self, n: int) -> Term:
        return self.entries[n]

    def dump(self) -> str:
        return "\n".join(f"{n}: {p}" for n, p in enumerate(self.entries))

    def is_coherent(self, session: Normalizer | None = None) -> bool:
        session = session or Normalizer()
        if self.entries[0] is not D:
            return False
        return all(
            session.proj_normalize(n, self.entries[n + 1]) is self.entries[n] for n in range(self.depth)
        )


class Lab:
    """A rewriting session shared by the lab operations (caches and fresh names)."""

    def __init__(self, registry: ServiceRegistry | None = None, fuel: int = DEFAULT_FUEL):
        self.session = Normalizer(registry, fuel)

    def project(self, n: int, t: Term) -> Term:
        return self.session.proj_normalize(n, t)

    def embed(self, t: Term, N: int = DEFAULT_DEPTH) -> ProjSeq:
        return ProjSeq(N, tuple(self.project(n, t) for n in range(N + 1)))

    def lift(self, op: Callable[..., Term], *args: ProjSeq, check: bool = True) -> ProjSeq:
        depths = {a.depth for a in args}
        if len(depths) > 1:
            raise ValueError("lifted arguments must share their depth")
        N = depths.pop() if depths else DEFAULT_DEPTH
        out = ProjSeq(N, tuple(self.project(n, op(*(a[n] for a in args))) for n in range(N + 1)))
        if check and not out.is_coherent(self.session):
            raise AssertionError("lifted sequence is not coherent")
        return out

    def is_guarded_body(self, x: str, t: Term) -> bool:
        return guarded_term(t) or self.session.exposes(x, t)

    def iterate(self, x: str, t: Term, k: int) -> Term:
        """``t`` substituted into itself ``k`` times, starting from D."""
        cur: Term = D
        for _ in range(k):
            cur = subst_var(t, x, cur)
        return cur

    def fix_approx(self, x: str, t: Term, N: int = DEFAULT_DEPTH) -> ProjSeq:
        if free_vars(t) - {x}:
            raise ValueError("the body may only have the recursion variable free")
        if not self.is_guarded_body(x, t):
            return ProjSeq(N, (D,) * (N + 1))
        entries = []
        cur: Term = D
        for n in range(N + 1):
            entries.append(self.project(n, cur))
            cur = subst_var(t, x, cur)
        return ProjSeq(N, tuple(entries))

    def stabilization_index(self, x: str, t: Term, n: int) -> int:
        cur: Term = D
        prev = self.project(n, cur)
        for k in range(n + 1):
            cur = subst_var(t, x, cur)
            nxt = self.project(n, cur)
            if nxt is prev:
                return k
            prev = nxt
        raise NotStabilized(f"projection at depth {n} still changing after {n + 1} iterations")

    def eq_up_to(self, n: int, p: Term, q: Term) -> bool:
        return self.project(n, p) is self.project(n, q)

    def aip_refute(self, p: Term, q: Term, max_n: int) -> NotEqualAt | UndistinguishedUpTo:
        for n in range(max_n + 1):
            if not self.eq_up_to(n, p, q):
                return NotEqualAt(n)
        return UndistinguishedUpTo(max_n)


@dataclass(frozen=True)
class NotEqualAt:
    depth: int


@dataclass(frozen=True)
class UndistinguishedUpTo:
    depth: int


def distance(p: ProjSeq, q: ProjSeq) -> Dyadic:
    if p.depth != q.depth:
        raise ValueError("sequences of different depth")
    for k, (a, b) in enumerate(zip(p.entries, q.entries)):
        if a is not b:
            return Dyadic(k)
    return BELOW_RESOLUTION


def embed(t: Term, N: int = DEFAULT_DEPTH, registry: ServiceRegistry | None = None) -> ProjSeq:
    return Lab(registry).embed(t, N)


def lift(op: Callable[..., Term], *args: ProjSeq, registry: ServiceRegistry | None = None) -> ProjSeq:
    return Lab(registry).lift(op, *args)


def fix_approx(x: str, t: Term, N: int = DEFAULT_DEPTH, registry: ServiceRegistry | None = None) -> ProjSeq:
    return Lab(registry).fix_approx(x, t, N)


def stabilization_index(x: str, t: Term, n: int, registry: ServiceRegistry | None = None) -> int:
    return Lab(registry).stabilization_index(x, t, n)


def eq_up_to(n: int, p: Term, q: Term, registry: ServiceRegistry | None = None) -> bool:
    return Lab(registry).eq_up_to(n, p, q)


def aip_refute(p: Term, q: Term, max_n: int, registry: ServiceRegistry | None = None):
    return Lab(registry).aip_refute(p, q, max_n)


def guarded_term(t: Term) -> bool:
    """Membership in the inductively defined set of guarded terms.

    Closed subterms count as parameters; postconditionals (also forking ones,
    and fork sugar, which expands to postconditionals) guard arbitrary
    operands; the other operators preserve guardedness; ``fix y. b`` needs a
    guarded body with ``y`` guarded in it.
    """
    if not free_vars(t):
        return True
    match t:
        case Var():
            return False
        case Pcc() | ForkPcc() | NtIl() | NtJava():
            return True
        case Fix(y, body):
            return guarded_term(body) and guarded_in(y, body)
        case Proj():
            return False
    return all(guarded_term(c) for c in t.children())


def approx_leq(p: Term, q: Term) -> bool:
    """The approximation order on basic terms: D is least, constructors are monotone."""
    return _leq(canonicalize(p), canonicalize(q))


def _leq(p: Term, q: Term) -> bool:
    # Root pairs are rarely repeated, so only the comparisons of subterms go
    # through the memo (_leq_sub); most pairs are rejected at the root anyway.
    if p is q or p is D:
        return True
    kind = type(p)
    if kind is Pcc:
        if type(q) is not Pcc:
            return False
        a = p.action
        if q.action is not a and q.action != a:
            return False
        if type(a) is TauAction:
            return _leq_sub(p.left, q.left)
        return _leq_sub(p.left, q.left) and _leq_sub(p.right, q.right)
    if kind is Stop or q is D:
        return False
    if kind is ForkPcc:
        return type(q) is ForkPcc and _leq_sub(p.left, q.left) and _leq_sub(p.forked, q.forked) and _leq_sub(p.right, q.right)
    bp, bq = split_block(p), split_block(q)
    if bp is None or bq is None:
        return False
    (fp, sp, pp), (fq, sq, pq) = bp, bq
    return fp == fq and sp == sq and _leq_sub(pp, pq)


_leq_sub = functools.lru_cache(maxsize=1 << 16)(_leq)
