"""Term language: methods, actions, thread terms, name analysis and substitution.

Terms are hash-consed.  Constructing a node whose fields equal those of a live
node returns the existing object, so ``==`` is identity and hashing is O(1).
This matters because projections of recursive terms are exponentially large
trees that share almost all of their structure.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

SPOT_PREFIX = "s$"
VAR_PREFIX = "x$"

MD_FOCUS = "md"
THIS_SPOT = "this"
ACTI_FIELD = "acti"

# Argument kinds for the ten molecular-dynamics methods: "s" spot, "v" field.
MD_SIGNATURES: dict[str, str] = {
    "creatom": "s",
    "setspot": "ss",
    "clrspot": "s",
    "equaltst": "ss",
    "undeftst": "s",
    "addfield": "sv",
    "rmvfield": "sv",
    "hasfield": "sv",
    "setfield": "svs",
    "getfield": "ssv",
}


# ---------------------------------------------------------------------------
# Methods and actions


@dataclass(frozen=True)
class Md:
    """A molecular-dynamics method such as ``setfield s v t``."""

    op: str
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        kinds = MD_SIGNATURES.get(self.op)
        if kinds is None:
            raise ValueError(f"unknown molecular-dynamics method {self.op!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) != len(kinds):
            raise ValueError(f"{self.op} takes {len(kinds)} arguments, got {len(self.args)}")

    @property
    def spots(self) -> tuple[str, ...]:
        return tuple(a for a, k in zip(self.args, MD_SIGNATURES[self.op]) if k == "s")

    def rename(self, old: str, new: str) -> Md:
        kinds = MD_SIGNATURES[self.op]
        args = tuple(new if k == "s" and a == old else a for a, k in zip(self.args, kinds))
        return self if args == self.args else Md(self.op, args)

    def __str__(self) -> str:
        return " ".join((self.op,) + self.args)


@dataclass(frozen=True)
class Opaque:
    """A method outside the molecular-dynamics repertoire; it mentions no spots."""

    text: str
    spots = ()

    def rename(self, old: str, new: str) -> Opaque:
        return self

    def __str__(self) -> str:
        return self.text


Method = Md | Opaque


def md(op: str, *args: str) -> Md:
    return Md(op, tuple(args))


@dataclass(frozen=True)
class TauAction:
    def __str__(self) -> str:
        return "tau"


TAU = TauAction()


@dataclass(frozen=True)
class Call:
    focus: str
    method: Method

    def __str__(self) -> str:
        if isinstance(self.method, Md):
            return f"{self.focus}({self.method})"
        return f"{self.focus}.{self.method}"


Action = TauAction | Call


def act(text: str) -> Call:
    """Shorthand for an opaque action written ``focus.method``."""
    focus, _, method = text.partition(".")
    if not focus or not method:
        raise ValueError(f"expected focus.method, got {text!r}")
    return Call(focus, Opaque(method))


def action_spots(a: Action, focus: str) -> frozenset[str]:
    if isinstance(a, Call) and a.focus == focus:
        return frozenset(a.method.spots)
    return frozenset()


# ---------------------------------------------------------------------------
# Interned term nodes

_intern_lock = threading.Lock()
_interned: weakref.WeakValueDictionary = weakref.WeakValueDictionary()


class Term:
    """Base class of all thread terms.  Instances are immutable and interned."""

    __slots__ = ("__weakref__",)
    _fields: tuple[str, ...] = ()

    def __new__(cls, *args):
        args = cls._coerce(args)
        key = (cls, args)
        obj = _interned.get(key)
        if obj is not None:
            return obj
        with _intern_lock:
            obj = _interned.get(key)
            if obj is None:
                obj = object.__new__(cls)
                for name, value in zip(cls._fields, args):
                    object.__setattr__(obj, name, value)
                _interned[key] = obj
        return obj

    @classmethod
    def _coerce(cls, args: tuple) -> tuple:
        if len(args) != len(cls._fields):
            raise TypeError(f"{cls.__name__} takes {len(cls._fields)} fields, got {len(args)}")
        return args

    def __setattr__(self, name, value):
        raise AttributeError("terms are immutable")

    def __reduce__(self):
        return (type(self), tuple(getattr(self, f) for f in self._fields))

    def children(self) -> tuple[Term, ...]:
        return ()

    def __str__(self) -> str:
        from .syntax import render

        return render(self)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self}>"


class Stop(Term):
    __slots__ = ()
    __match_args__ = ()


class Dead(Term):
    __slots__ = ()
    __match_args__ = ()


class Var(Term):
    __slots__ = ("name",)
    _fields = __match_args__ = ("name",)


class Pcc(Term):
    __slots__ = ("left", "action", "right")
    _fields = __match_args__ = ("left", "action", "right")

    def children(self):
        return (self.left, self.right)


class ForkPcc(Term):
    __slots__ = ("left", "forked", "right")
    _fields = __match_args__ = ("left", "forked", "right")

    def children(self):
        return (self.left, self.forked, self.right)


class Csi(Term):
    __slots__ = ("threads",)
    _fields = __match_args__ = ("threads",)

    @classmethod
    def _coerce(cls, args):
        if len(args) != 1:
            raise TypeError("Csi takes one sequence of threads")
        return (tuple(args[0]),)

    def children(self):
        return self.threads


class S2d(Term):
    __slots__ = ("body",)
    _fields = __match_args__ = ("body",)

    def children(self):
        return (self.body,)


class Use(Term):
    """Thread-service composition; ``service`` is a registry name or a service value."""

    __slots__ = ("body", "focus", "service")
    _fields = __match_args__ = ("body", "focus", "service")

    def children(self):
        return (self.body,)


class Nu(Term):
    __slots__ = ("focus", "spot", "body")
    _fields = __match_args__ = ("focus", "spot", "body")

    def children(self):
        return (self.body,)


class Fix(Term):
    __slots__ = ("var", "body")
    _fields = __match_args__ = ("var", "body")

    def children(self):
        return (self.body,)


class Proj(Term):
    __slots__ = ("depth", "body")
    _fields = __match_args__ = ("depth", "body")

    @classmethod
    def _coerce(cls, args):
        depth, body = args
        if not isinstance(depth, int) or depth < 0:
            raise ValueError("projection depth must be a natural number")
        return (depth, body)

    def children(self):
        return (self.body,)


class NtIl(Term):
    """Fork sugar: fork with a fresh atom handed to the forker through ``handle``.

    ``local`` is the spot restricted around the whole construct.
    """

    __slots__ = ("local", "handle", "forked", "rest")
    _fields = __match_args__ = ("local", "handle", "forked", "rest")

    def children(self):
        return (self.forked, self.rest)


class NtJava(Term):
    """Java-style fork sugar: the forked body waits for field ``acti`` on ``handle``."""

    __slots__ = ("handle", "forked", "rest")
    _fields = __match_args__ = ("handle", "forked", "rest")

    def children(self):
        return (self.forked, self.rest)


S = Stop()
D = Dead()


def prefix(a: Action, p: Term) -> Term:
    return Pcc(p, a, p)


def tau(p: Term) -> Term:
    return Pcc(p, TAU, p)


def fork_prefix(r: Term, q: Term) -> Term:
    return ForkPcc(q, r, q)


def seq(actions: Iterable[Action], tail: Term) -> Term:
    """``a1 . a2 . ... . tail``."""
    acts = list(actions)
    for a in reversed(acts):
        tail = prefix(a, tail)
    return tail


def rebuild(t: Term, kids: tuple[Term, ...]) -> Term:
    """Rebuild ``t`` with new children (in the order of ``t.children()``)."""
    match t:
        case Pcc(_, a, _):
            return Pcc(kids[0], a, kids[1])
        case ForkPcc():
            return ForkPcc(*kids)
        case Csi():
            return Csi(kids)
        case S2d():
            return S2d(kids[0])
        case Use(_, f, h):
            return Use(kids[0], f, h)
        case Nu(f, s, _):
            return Nu(f, s, kids[0])
        case Fix(x, _):
            return Fix(x, kids[0])
        case Proj(n, _):
            return Proj(n, kids[0])
        case NtIl(loc, h, _, _):
            return NtIl(loc, h, kids[0], kids[1])
        case NtJava(h, _, _):
            return NtJava(h, kids[0], kids[1])
    return t


def subterms(t: Term) -> Iterator[Term]:
    """Distinct subterms, each visited once (the term graph is a DAG)."""
    seen: set[int] = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if id(u) in seen:
            continue
        seen.add(id(u))
        yield u
        stack.extend(u.children())


# ---------------------------------------------------------------------------
# Fresh names


def fresh_name(prefix_: str, avoid: Iterable[str] | set[str], start: int = 0) -> str:
    """Smallest ``prefix<k>`` with ``k >= start`` not in ``avoid``."""
    taken = avoid if isinstance(avoid, (set, frozenset)) else set(avoid)
    k = start
    while f"{prefix_}{k}" in taken:
        k += 1
    return f"{prefix_}{k}"


class FreshNames:
    """Deterministic per-session counters for generated spots and variables."""

    def __init__(self) -> None:
        self._spot = 0
        self._var = 0

    def spot(self, avoid: Iterable[str] = ()) -> str:
        taken = set(avoid)
        while True:
            name = f"{SPOT_PREFIX}{self._spot}"
            self._spot += 1
            if name not in taken:
                return name

    def var(self, avoid: Iterable[str] = ()) -> str:
        taken = set(avoid)
        while True:
            name = f"{VAR_PREFIX}{self._var}"
            self._var += 1
            if name not in taken:
                return name


# ---------------------------------------------------------------------------
# Fork sugar expansion (one node)


def gate(handle: str, forked: Term, var: str | None = None) -> Term:
    """``fix x. (forked <md(hasfield handle acti)> x)``: wait for the start command."""
    x = var or fresh_name(VAR_PREFIX, free_vars(forked))
    test = Call(MD_FOCUS, md("hasfield", handle, ACTI_FIELD))
    return Fix(x, Pcc(forked, test, Var(x)))


def expand_nt_il(local: str, handle: str, forked: Term, rest: Term) -> Term:
    body = seq(
        [Call(MD_FOCUS, md("creatom", local)), Call(MD_FOCUS, md("setspot", handle, local))],
        fork_prefix(forked, rest),
    )
    return Nu(MD_FOCUS, local, body)


def expand_sugar(t: Term, poll_this: bool = False) -> Term:
    """Expand the outermost sugar node of ``t`` one level (no side-condition check)."""
    match t:
        case NtIl(local, handle, forked, rest):
            return expand_nt_il(local, handle, forked, rest)
        case NtJava(handle, forked, rest):
            polled = THIS_SPOT if poll_this else handle
            return NtIl(THIS_SPOT, handle, gate(polled, forked), rest)
    return t


# ---------------------------------------------------------------------------
# Name analysis (free and bound spots per focus)


@lru_cache(maxsize=1 << 16)
def name_analysis(t: Term, f: str) -> tuple[frozenset[str], frozenset[str]]:
    """Free and bound spots of ``t`` for focus ``f``.

    Restriction, postconditionals and the interleaving/service operators follow
    the usual free/bound tables; recursion, projection and forks are unions over
    their children.
    """
    match t:
        case Stop() | Dead() | Var():
            return frozenset(), frozenset()
        case Pcc(l, a, r):
            fl, bl = name_analysis(l, f)
            if r is l:
                fr, br = fl, bl
            else:
                fr, br = name_analysis(r, f)
            return fl | fr | action_spots(a, f), bl | br
        case Nu(g, s, body):
            fb, bb = name_analysis(body, f)
            if g == f:
                return fb - {s}, bb | {s}
            return fb, bb
        case NtIl() | NtJava():
            return name_analysis(expand_sugar(expand_sugar(t)), f)
    free: frozenset[str] = frozenset()
    bound: frozenset[str] = frozenset()
    for c in t.children():
        fc, bc = name_analysis(c, f)
        free |= fc
        bound |= bc
    return free, bound


def free_spots(t: Term, f: str) -> frozenset[str]:
    return name_analysis(t, f)[0]


def bound_spots(t: Term, f: str) -> frozenset[str]:
    return name_analysis(t, f)[1]


def free_spots_all(ts: Iterable[Term], f: str) -> frozenset[str]:
    out: frozenset[str] = frozenset()
    for t in ts:
        out |= free_spots(t, f)
    return out


@lru_cache(maxsize=1 << 16)
def mentioned_foci(t: Term) -> frozenset[str]:
    """Foci of every action and restriction in ``t`` (used to skip no-op work)."""
    out: set[str] = set()
    for u in subterms(t):
        match u:
            case Pcc(_, Call(g, _), _):
                out.add(g)
            case Nu(g, _, _):
                out.add(g)
            case NtIl() | NtJava():
                out.add(MD_FOCUS)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Spot substitution


def subst_spot(t: Term, f: str, s: str, s2: str) -> Term:
    """``t[s2/s]^f``: capture-avoiding replacement of free spot ``s`` for focus ``f``."""
    if s == s2 or s not in free_spots(t, f):
        return t
    return _subst_spot(t, f, s, s2)


@lru_cache(maxsize=1 << 16)
def _subst_spot(t: Term, f: str, s: str, s2: str) -> Term:
    if s not in free_spots(t, f):
        return t
    match t:
        case Pcc(l, a, r):
            if isinstance(a, Call) and a.focus == f:
                a = Call(f, a.method.rename(s, s2))
            nl = _subst_spot(l, f, s, s2)
            nr = nl if r is l else _subst_spot(r, f, s, s2)
            return Pcc(nl, a, nr)
        case Nu(g, s3, body):
            if g != f:
                return Nu(g, s3, _subst_spot(body, f, s, s2))
            if s3 == s:
                return t
            if s3 == s2:
                fb, bb = name_analysis(body, f)
                s4 = fresh_name(SPOT_PREFIX, fb | bb | {s, s2})
                return Nu(f, s4, subst_spot(subst_spot(body, f, s3, s4), f, s, s2))
            return Nu(f, s3, _subst_spot(body, f, s, s2))
        case NtIl() | NtJava():
            return _subst_spot(expand_sugar(expand_sugar(t)), f, s, s2)
    return rebuild(t, tuple(_subst_spot(c, f, s, s2) for c in t.children()))


# ---------------------------------------------------------------------------
# Recursion variables


@lru_cache(maxsize=1 << 16)
def free_vars(t: Term) -> frozenset[str]:
    match t:
        case Var(x):
            return frozenset({x})
        case Fix(x, body):
            return free_vars(body) - {x}
    out: frozenset[str] = frozenset()
    for c in t.children():
        out |= free_vars(c)
    return out


def is_closed(t: Term) -> bool:
    return not free_vars(t)


def subst_var(t: Term, x: str, u: Term) -> Term:
    """Replace free ``x`` in ``t`` by ``u``, renaming recursion binders that would capture."""
    if x not in free_vars(t):
        return t
    return _subst_var(t, x, u)


@lru_cache(maxsize=1 << 16)
def _subst_var(t: Term, x: str, u: Term) -> Term:
    if x not in free_vars(t):
        return t
    match t:
        case Var():
            return u
        case Fix(y, body):
            fu = free_vars(u)
            if y in fu:
                y2 = fresh_name(VAR_PREFIX, fu | free_vars(body) | {x})
                body = _subst_var(body, y, Var(y2)) if y in free_vars(body) else body
                y = y2
            return Fix(y, _subst_var(body, x, u))
    return rebuild(t, tuple(_subst_var(c, x, u) for c in t.children()))


def guarded_in(x: str, t: Term) -> bool:
    """True iff every free occurrence of ``x`` lies below a (fork) postconditional."""
    return _guarded_in(x, t)


@lru_cache(maxsize=1 << 16)
def _guarded_in(x: str, t: Term) -> bool:
    match t:
        case Var(y):
            return y != x
        case Fix(y, body):
            return y == x or _guarded_in(x, body)
        case Pcc() | ForkPcc() | NtIl() | NtJava():
            return True
    return all(_guarded_in(x, c) for c in t.children())


def contains(t: Term, kinds: type | tuple[type, ...]) -> bool:
    return any(isinstance(u, kinds) for u in subterms(t))


def desugar_forks(t: Term, poll_this: bool = False) -> Term:
    """Expand every fork-sugar node, checking the freshness side conditions.

    ``poll_this`` makes the Java-style gate poll the new atom through ``this``
    instead of the forker's handle.
    """
    from .errors import SideConditionViolated

    memo: dict[Term, Term] = {}

    def go(u: Term) -> Term:
        hit = memo.get(u)
        if hit is not None:
            return hit
        match u:
            case NtIl(local, handle, forked, rest):
                p, q = go(forked), go(rest)
                if local in free_spots(q, MD_FOCUS):
                    raise SideConditionViolated(local, f"spot {local} occurs free in the continuation of a fork")
                out = expand_nt_il(local, handle, p, q)
            case NtJava(handle, forked, rest):
                p, q = go(forked), go(rest)
                if THIS_SPOT in free_spots(q, MD_FOCUS):
                    raise SideConditionViolated(THIS_SPOT, f"spot {THIS_SPOT} occurs free in the continuation of a fork")
                out = expand_nt_il(THIS_SPOT, handle, gate(THIS_SPOT if poll_this else handle, p), q)
            case _:
                kids = u.children()
                out = rebuild(u, tuple(go(c) for c in kids)) if kids else u
        memo[u] = out
        return out

    if not contains(t, (NtIl, NtJava)):
        return t
    return go(t)
