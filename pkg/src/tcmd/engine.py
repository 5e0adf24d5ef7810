"""Directed rewriting with the axioms of cyclic interleaving, services,
restriction, recursion, projection and forking.

All work goes through :meth:`Normalizer.first_level`, which rewrites the head
of a term until it is S, D, a (tau-)postconditional, a fork-postconditional or
a restriction block.  Full normalization applies it again below the head;
projection uses the projection axioms so that recursion under a projection is
unfolded only as far as needed.

In traced mode every axiom application is recorded on the whole term, so the
``after`` of one step is the ``before`` of the next.  Each descent into a
subterm carries a *context*, a function that plugs the subterm back into the
whole term as it currently stands.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable

from .basic import canonicalize, make_block, split_block
from .errors import FuelExhausted, NotClosed, RestrictionStuck
from .services import DEFAULT_REGISTRY, MDState, Reply, Service, ServiceRegistry, SpecService
from .terms import (
    TAU,
    Call,
    Csi,
    D,
    Dead,
    Fix,
    ForkPcc,
    FreshNames,
    NtIl,
    NtJava,
    Nu,
    Pcc,
    Proj,
    S,
    S2d,
    Stop,
    TauAction,
    Term,
    Use,
    Var,
    desugar_forks,
    free_spots,
    free_spots_all,
    free_vars,
    md,
    subst_spot,
    subst_var,
)

DEFAULT_FUEL = 10**6
DEFAULT_RENAME_BOUND = 64
MAX_NESTING = 2000

AXIOM_LABELS = frozenset(
    ["T1"]
    + [f"CSI{k}" for k in range(1, 7)]
    + [f"S2D{k}" for k in range(1, 6)]
    + [f"TSC{k}" for k in range(1, 9)]
    + [f"R{k}" for k in range(1, 13)]
    + ["REC1", "REC3"]
    + [f"P{k}" for k in range(0, 6)]
)

Context = Callable[[Term], Term] | None


@dataclass(frozen=True)
class Step:
    label: str
    before: Term
    after: Term

    def __str__(self) -> str:
        return f"{self.label}: {self.before} ==> {self.after}"


class _Forced(Exception):
    """A free recursion variable reached head position."""

    def __init__(self, var: str):
        self.var = var


def _within(ctx: Context, build: Callable[[Term], Term]) -> Context:
    if ctx is None:
        return None
    return lambda z: ctx(build(z))


def is_head(t: Term) -> bool:
    match t:
        case Stop() | Dead() | ForkPcc():
            return True
        case Pcc(l, a, r):
            return not isinstance(a, TauAction) or l is r
        case Nu():
            return split_block(t) is not None
    return False


class Normalizer:
    """One rewriting session: fresh-name counters, fuel, caches and an optional trace."""

    def __init__(
        self,
        registry: ServiceRegistry | None = None,
        fuel: int = DEFAULT_FUEL,
        trace: bool = False,
        rename_bound: int = DEFAULT_RENAME_BOUND,
        poll_this: bool = False,
    ):
        self.registry = registry or DEFAULT_REGISTRY
        self.fuel = fuel
        self.fresh = FreshNames()
        self.steps: list[Step] | None = [] if trace else None
        self.rename_bound = rename_bound
        self.poll_this = poll_this
        self._quiet = 0
        self._head_cache: dict[Term, Term] | None = None if trace else {}
        self._nf_cache: dict[Term, Term] | None = None if trace else {}
        self._exposes_cache: dict[tuple[str, Term], bool] = {}
        self._nesting = 0

    # ------------------------------------------------------------------ api

    def prepare(self, t: Term) -> Term:
        t = desugar_forks(t, self.poll_this)
        if free_vars(t):
            raise NotClosed(f"free recursion variables: {', '.join(sorted(free_vars(t)))}")
        return t

    def normalize(self, t: Term) -> Term:
        t = self.prepare(t)
        return canonicalize(self._run(self._normalize, t))

    def proj_normalize(self, n: int, t: Term) -> Term:
        t = self.prepare(t)
        return canonicalize(self._run(self._normalize, Proj(n, t)))

    def first_level_normalize(self, t: Term) -> Term:
        t = self.prepare(t)
        return self._run(self._first_level, t)

    def head(self, t: Term) -> Term:
        """First-level form of an already prepared closed term."""
        return self._run(self._first_level, t)

    def _run(self, fn, t: Term) -> Term:
        ctx: Context = (lambda z: z) if self.steps is not None else None
        limit = sys.getrecursionlimit()
        if limit < 20000:
            sys.setrecursionlimit(20000)
        try:
            return fn(t, ctx)
        except _Forced as exc:
            raise NotClosed(f"free recursion variable {exc.var}") from None
        finally:
            sys.setrecursionlimit(limit)

    # ------------------------------------------------------------ plumbing

    def _step(self, label: str, before: Term, after: Term, ctx: Context) -> Term:
        self.fuel -= 1
        if self.fuel < 0:
            raise FuelExhausted("rewrite-step budget exhausted")
        if ctx is not None and not self._quiet:
            self.steps.append(Step(label, ctx(before), ctx(after)))
        return after

    def _service(self, ref) -> Service:
        return self.registry.resolve(ref)

    def _fresh_spot(self, avoid) -> str:
        return self.fresh.spot(avoid)

    # -------------------------------------------------------- first level

    def _first_level(self, t: Term, ctx: Context) -> Term:
        if is_head(t):
            return t
        cache = self._head_cache
        if cache is not None:
            hit = cache.get(t)
            if hit is not None:
                return hit
        result = self._head(t, ctx)
        if cache is not None:
            cache[t] = result
        return result

    def _head(self, t: Term, ctx: Context) -> Term:
        match t:
            case Pcc(l, _, _):
                return self._step("T1", t, Pcc(l, TAU, l), ctx)
            case Var(x):
                raise _Forced(x)
            case Fix(x, body):
                return self._head_fix(t, x, body, ctx)
            case Proj(n, body):
                return self._head_proj(t, n, body, ctx)
            case Csi(threads):
                return self._head_csi(t, threads, ctx)
            case S2d(body):
                return self._head_s2d(body, ctx)
            case Use(body, g, h):
                return self._head_use(body, g, h, ctx)
            case Nu(f, s, body):
                return self._head_nu(f, s, body, ctx)
            case NtIl() | NtJava():
                raise ValueError("fork sugar must be expanded before rewriting")
        raise TypeError(f"not a term: {t!r}")

    def exposes(self, x: str, body: Term) -> bool:
        """Can the head of ``body`` be exposed without knowing ``x``?

        This is the guardedness test used for recursion: ``x`` counts as guarded
        when the axioms bring ``body`` into a form whose head does not depend
        on ``x``, so every occurrence of ``x`` ends up below an action.
        """
        key = (x, body)
        known = self._exposes_cache.get(key)
        if known is not None:
            return known
        self._quiet += 1
        try:
            self._first_level(body, None)
            ok = True
        except _Forced as exc:
            if exc.var != x:
                raise
            ok = False
        finally:
            self._quiet -= 1
        self._exposes_cache[key] = ok
        return ok

    def _head_fix(self, t: Term, x: str, body: Term, ctx: Context) -> Term:
        if body is Var(x) or not self.exposes(x, body):
            # fix x.x = D, and unguarded recursion stands for D as well.
            return self._step("REC3", t, D, ctx)
        unfolded = self._step("REC1", t, subst_var(body, x, t), ctx)
        return self._first_level(unfolded, ctx)

    def _head_proj(self, t: Term, n: int, body: Term, ctx: Context) -> Term:
        if n == 0:
            return self._step("P0", t, D, ctx)
        h = self._first_level(body, _within(ctx, lambda z: Proj(n, z)))
        cur = Proj(n, h)
        match h:
            case Stop():
                return self._step("P1", cur, S, ctx)
            case Dead():
                return self._step("P2", cur, D, ctx)
            case Pcc(l, a, r):
                pl = Proj(n - 1, l)
                pr = pl if r is l else Proj(n - 1, r)
                return self._step("P3", cur, Pcc(pl, a, pr), ctx)
            case ForkPcc(l, z, r):
                pl = Proj(n - 1, l)
                pr = pl if r is l else Proj(n - 1, r)
                return self._step("P5", cur, ForkPcc(pl, Proj(n - 1, z), pr), ctx)
            case Nu(f, s, inner):
                after = self._step("P4", cur, Nu(f, s, Proj(n, inner)), ctx)
                return self._first_level(after, ctx)
        raise AssertionError(h)

    def _head_csi(self, t: Term, threads: tuple[Term, ...], ctx: Context) -> Term:
        if not threads:
            return self._step("CSI1", t, S, ctx)
        rest = threads[1:]
        h = self._first_level(threads[0], _within(ctx, lambda z: Csi((z,) + rest)))
        cur = Csi((h,) + rest)
        match h:
            case Stop():
                return self._first_level(self._step("CSI2", cur, Csi(rest), ctx), ctx)
            case Dead():
                return self._first_level(self._step("CSI3", cur, S2d(Csi(rest)), ctx), ctx)
            case Pcc(x, TauAction(), _):
                c = Csi(rest + (x,))
                return self._step("CSI4", cur, Pcc(c, TAU, c), ctx)
            case Pcc(x, a, y):
                cx = Csi(rest + (x,))
                cy = cx if y is x else Csi(rest + (y,))
                return self._step("CSI5", cur, Pcc(cx, a, cy), ctx)
            case ForkPcc(x, z, _):
                c = Csi(rest + (z, x))
                return self._step("CSI6", cur, Pcc(c, TAU, c), ctx)
            case Nu(f, s, inner):
                outside = free_spots_all(rest, f)
                if s in outside:
                    s2 = self._fresh_spot(outside | free_spots(inner, f) | {s})
                    inner = subst_spot(inner, f, s, s2)
                    renamed = Csi((Nu(f, s2, inner),) + rest)
                    cur = self._step("R1", cur, renamed, ctx)
                    s = s2
                after = self._step("R7", cur, Nu(f, s, Csi((inner,) + rest)), ctx)
                return self._first_level(after, ctx)
        raise AssertionError(h)

    def _head_s2d(self, body: Term, ctx: Context) -> Term:
        h = self._first_level(body, _within(ctx, S2d))
        cur = S2d(h)
        match h:
            case Stop():
                return self._step("S2D1", cur, D, ctx)
            case Dead():
                return self._step("S2D2", cur, D, ctx)
            case Pcc(x, TauAction(), _):
                c = S2d(x)
                return self._step("S2D3", cur, Pcc(c, TAU, c), ctx)
            case Pcc(x, a, y):
                cx = S2d(x)
                cy = cx if y is x else S2d(y)
                return self._step("S2D4", cur, Pcc(cx, a, cy), ctx)
            case ForkPcc(x, z, y):
                cx = S2d(x)
                cy = cx if y is x else S2d(y)
                return self._step("S2D5", cur, ForkPcc(cx, S2d(z), cy), ctx)
            case Nu(f, s, inner):
                after = self._step("R8", cur, Nu(f, s, S2d(inner)), ctx)
                return self._first_level(after, ctx)
        raise AssertionError(h)

    def _head_use(self, body: Term, g: str, ref, ctx: Context) -> Term:
        h = self._first_level(body, _within(ctx, lambda z: Use(z, g, ref)))
        cur = Use(h, g, ref)
        match h:
            case Stop():
                return self._step("TSC1", cur, S, ctx)
            case Dead():
                return self._step("TSC2", cur, D, ctx)
            case Pcc(x, TauAction(), _):
                c = Use(x, g, ref)
                return self._step("TSC3", cur, Pcc(c, TAU, c), ctx)
            case Pcc(x, Call(f, _) as a, y) if f != g:
                cx = Use(x, g, ref)
                cy = cx if y is x else Use(y, g, ref)
                return self._step("TSC4", cur, Pcc(cx, a, cy), ctx)
            case Pcc(x, Call(_, m), y):
                service = self._service(ref)
                reply = service.query(m)
                if reply is Reply.REFUSED:
                    return self._step("TSC7", cur, D, ctx)
                nxt = Use(x if reply is Reply.T else y, g, service.derive(m))
                label = "TSC5" if reply is Reply.T else "TSC6"
                return self._step(label, cur, Pcc(nxt, TAU, nxt), ctx)
            case ForkPcc(x, z, y):
                cx = Use(x, g, ref)
                cy = cx if y is x else Use(y, g, ref)
                return self._step("TSC8", cur, ForkPcc(cx, Use(z, g, ref), cy), ctx)
            case Nu(f, s, inner):
                if f != g:
                    after = self._step("R9", cur, Nu(f, s, Use(inner, g, ref)), ctx)
                    return self._first_level(after, ctx)
                service = self._service(ref)
                if service.query(md("undeftst", s)) is Reply.F:
                    s2 = self._undefined_spot(service, inner, f, s)
                    inner = subst_spot(inner, f, s, s2)
                    cur = self._step("R1", cur, Use(Nu(f, s2, inner), g, ref), ctx)
                after = self._step("R10", cur, Use(inner, g, ref), ctx)
                return self._first_level(after, ctx)
        raise AssertionError(h)

    def _undefined_spot(self, service: Service, inner: Term, f: str, s: str) -> str:
        bound = self.rename_bound
        state = getattr(service, "state", None)
        if isinstance(service, SpecService) and isinstance(state, MDState):
            bound = len(state.sigma) + 1
        avoid = free_spots(inner, f) | {s}
        for _ in range(bound):
            cand = self._fresh_spot(avoid)
            if service.query(md("undeftst", cand)) is not Reply.F:
                return cand
        raise RestrictionStuck(f"no undefined spot found for restriction of {s} after {bound} attempts")

    def _head_nu(self, f: str, s: str, body: Term, ctx: Context) -> Term:
        h = self._first_level(body, _within(ctx, lambda z: Nu(f, s, z)))
        cur = Nu(f, s, h)
        if split_block(cur) is not None:
            return cur
        match h:
            case Stop():
                return self._step("R2", cur, S, ctx)
            case Dead():
                return self._step("R3", cur, D, ctx)
            case Pcc(x, TauAction(), _):
                c = Nu(f, s, x)
                return self._step("R4", cur, Pcc(c, TAU, c), ctx)
            case Pcc(x, Call(g, _) as a, y):
                cx = Nu(f, s, x)
                cy = cx if y is x else Nu(f, s, y)
                return self._step("R5" if g != f else "R6", cur, Pcc(cx, a, cy), ctx)
            case ForkPcc(x, z, y):
                cx = Nu(f, s, x)
                cy = cx if y is x else Nu(f, s, y)
                return self._step("R12", cur, ForkPcc(cx, Nu(f, s, z), cy), ctx)
            case Nu(g, s1, inner):
                focus, binders, _ = split_block(h)
                if focus == f and s in binders:
                    # The outer binder is shadowed; rename it so it can move inwards.
                    s2 = self._fresh_spot(free_spots(h, f) | {s})
                    cur = self._step("R1", cur, Nu(f, s2, h), ctx)
                    s = s2
                swapped = self._step("R11", cur, Nu(g, s1, Nu(f, s, inner)), ctx)
                pushed = self._first_level(swapped.body, _within(ctx, lambda z: Nu(g, s1, z)))
                return Nu(g, s1, pushed)
        raise AssertionError(h)

    # ------------------------------------------------------- full normal form

    def _normalize(self, t: Term, ctx: Context) -> Term:
        cache = self._nf_cache
        if cache is not None:
            hit = cache.get(t)
            if hit is not None:
                return hit
        self._nesting += 1
        try:
            result = self._normalize_uncached(t, ctx)
        finally:
            self._nesting -= 1
        if cache is not None:
            cache[t] = result
            cache[result] = result
        return result

    def _normalize_uncached(self, t: Term, ctx: Context) -> Term:
        if self._nesting > MAX_NESTING:
            # Recursion that never reaches S or D (e.g. fix x. f.a . x) has no
            # finite basic form; only its projections do.
            raise FuelExhausted(f"no basic form within {MAX_NESTING} nested actions; try a projection")
        h = self._first_level(t, ctx)
        match h:
            case Stop() | Dead():
                result = h
            case Pcc():
                result = self._normalize_pcc(h, ctx)
            case ForkPcc(x, z, y):
                if x is y:
                    nx = self._normalize(x, _within(ctx, lambda w: ForkPcc(w, z, w)))
                    ny = nx
                else:
                    nx = self._normalize(x, _within(ctx, lambda w: ForkPcc(w, z, y)))
                    ny = self._normalize(y, _within(ctx, lambda w: ForkPcc(nx, z, w)))
                nz = self._normalize(z, _within(ctx, lambda w: ForkPcc(nx, w, ny)))
                result = ForkPcc(nx, nz, ny)
            case Nu():
                focus, binders, pcc = split_block(h)
                inner = self._normalize_pcc(pcc, _within(ctx, lambda w: make_block(focus, binders, w)))
                result = make_block(focus, binders, inner)
            case _:
                raise AssertionError(h)
        return result

    def _normalize_pcc(self, h: Pcc, ctx: Context) -> Term:
        x, a, y = h.left, h.action, h.right
        if x is y:
            nx = self._normalize(x, _within(ctx, lambda w: Pcc(w, a, w)))
            return Pcc(nx, a, nx)
        nx = self._normalize(x, _within(ctx, lambda w: Pcc(w, a, y)))
        ny = self._normalize(y, _within(ctx, lambda w: Pcc(nx, a, w)))
        return Pcc(nx, a, ny)


# ---------------------------------------------------------------------------
# Module-level conveniences: one fresh session per call


def normalize(t: Term, registry: ServiceRegistry | None = None, fuel: int = DEFAULT_FUEL) -> Term:
    """Basic term equal to a closed recursion-free term, in canonical form."""
    return Normalizer(registry, fuel).normalize(t)


def proj_normalize(n: int, t: Term, registry: ServiceRegistry | None = None, fuel: int = DEFAULT_FUEL) -> Term:
    """Canonical basic term equal to the depth-``n`` projection of a closed term."""
    return Normalizer(registry, fuel).proj_normalize(n, t)


def first_level_normalize(t: Term, registry: ServiceRegistry | None = None, fuel: int = DEFAULT_FUEL) -> Term:
    return Normalizer(registry, fuel).first_level_normalize(t)


@dataclass(frozen=True)
class RewriteTrace:
    steps: tuple[Step, ...]

    def labels(self) -> list[str]:
        return [s.label for s in self.steps]

    def __str__(self) -> str:
        return "\n".join(map(str, self.steps))


def normalize_traced(
    t: Term,
    mode: str = "normalize",
    n: int | None = None,
    registry: ServiceRegistry | None = None,
    fuel: int = DEFAULT_FUEL,
) -> tuple[Term, RewriteTrace]:
    """Like the untraced operation named by ``mode`` (normalize, project, first-level),
    also returning every axiom application on the whole term."""
    session = Normalizer(registry, fuel, trace=True)
    if mode == "normalize":
        result = session.normalize(t)
    elif mode == "project":
        if n is None:
            raise ValueError("project mode needs a depth")
        result = session.proj_normalize(n, t)
    elif mode == "first-level":
        result = session.first_level_normalize(t)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return result, RewriteTrace(tuple(session.steps))
