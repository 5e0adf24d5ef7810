"""Basic terms: grammar membership, canonical form, equality and depth.

A basic term is built from S, D, tau-prefixes, postconditionals over calls,
restriction blocks and fork-postconditionals.  A restriction block is a chain
``nu(f, s1, ... nu(f, sn, p <f.m> q))`` whose spots are distinct and all occur
in ``m``.  Two basic terms denote the same thread exactly when they agree up to
renaming of block binders and reordering of binders inside a block; the
canonical form fixes both choices so that equality becomes identity.
"""

from __future__ import annotations

from functools import lru_cache

from .terms import (
    SPOT_PREFIX,
    Call,
    Dead,
    ForkPcc,
    Nu,
    Pcc,
    Stop,
    TauAction,
    Term,
    subterms,
)


def split_block(t: Term) -> tuple[str, tuple[str, ...], Pcc] | None:
    """Decompose a restriction block into (focus, binders outer-first, postconditional)."""
    if not isinstance(t, Nu):
        return None
    focus = t.focus
    spots: list[str] = []
    u: Term = t
    while isinstance(u, Nu):
        if u.focus != focus:
            return None
        spots.append(u.spot)
        u = u.body
    if not (isinstance(u, Pcc) and isinstance(u.action, Call) and u.action.focus == focus):
        return None
    names = set(u.action.method.spots)
    if len(set(spots)) != len(spots) or not names.issuperset(spots):
        return None
    return focus, tuple(spots), u


def make_block(focus: str, spots: tuple[str, ...] | list[str], body: Term) -> Term:
    for s in reversed(spots):
        body = Nu(focus, s, body)
    return body


@lru_cache(maxsize=1 << 16)
def is_basic(t: Term) -> bool:
    match t:
        case Stop() | Dead():
            return True
        case Pcc(l, TauAction(), r):
            return l is r and is_basic(l)
        case Pcc(l, Call(), r):
            return is_basic(l) and is_basic(r)
        case ForkPcc(l, z, r):
            return is_basic(l) and is_basic(z) and is_basic(r)
        case Nu():
            block = split_block(t)
            return block is not None and is_basic(block[2].left) and is_basic(block[2].right)
    return False


@lru_cache(maxsize=1 << 16)
def depth(p: Term) -> int:
    """Length of the longest action path of a basic term (blocks add nothing)."""
    match p:
        case Stop() | Dead():
            return 0
        case Pcc(l, _, r):
            return 1 + max(depth(l), depth(r))
        case ForkPcc(l, z, r):
            return 1 + max(depth(l), depth(z), depth(r))
        case Nu():
            block = split_block(p)
            if block is None:
                raise ValueError("not a basic term")
            return depth(block[2])
    raise ValueError("not a basic term")


def _free_generated_spots(t: Term) -> frozenset[str]:
    """Generated-looking spots occurring free; canonical binder names avoid them."""
    from .terms import free_spots

    foci = {u.action.focus for u in subterms(t) if isinstance(u, Pcc) and isinstance(u.action, Call)}
    out: set[str] = set()
    for f in foci:
        out.update(s for s in free_spots(t, f) if s.startswith(SPOT_PREFIX))
    return frozenset(out)


@lru_cache(maxsize=1 << 16)
def canonicalize(p: Term) -> Term:
    """Canonical representative of a basic term modulo binder renaming and order.

    Bound spots of a block get names ``s$k`` where ``k`` counts the binders
    enclosing the block plus the position of the spot's first occurrence in
    the method; binders are emitted in that order.
    """
    if not is_basic(p):
        raise ValueError(f"not a basic term: {p}")
    free_like = _free_generated_spots(p)
    names: list[str] = []

    def name(k: int) -> str:
        while len(names) <= k:
            cand = len(names)
            while f"{SPOT_PREFIX}{cand}" in free_like or f"{SPOT_PREFIX}{cand}" in names:
                cand += 1
            names.append(f"{SPOT_PREFIX}{cand}")
        return names[k]

    memo: dict[tuple, Term] = {}

    def go(t: Term, env: tuple, level: int) -> Term:
        key = (t, env, level)
        hit = memo.get(key)
        if hit is not None:
            return hit
        result = _canon_node(t, env, level, go, name)
        memo[key] = result
        return result

    return go(p, (), 0)


def _rename_action(a, env_map: dict) -> object:
    if not isinstance(a, Call):
        return a
    m = a.method
    for s in set(m.spots):
        new = env_map.get((a.focus, s))
        if new is not None and new != s:
            return Call(a.focus, _rename_simultaneous(m, env_map, a.focus))
    return a


def _rename_simultaneous(m, env_map: dict, focus: str):
    from .terms import MD_SIGNATURES, Md

    kinds = MD_SIGNATURES[m.op]
    args = tuple(env_map.get((focus, a), a) if k == "s" else a for a, k in zip(m.args, kinds))
    return Md(m.op, args)


def _canon_node(t: Term, env: tuple, level: int, go, name) -> Term:
    match t:
        case Stop() | Dead():
            return t
        case Pcc(l, a, r):
            env_map = dict(env)
            a2 = _rename_action(a, env_map)
            nl = go(l, env, level)
            nr = nl if r is l else go(r, env, level)
            return Pcc(nl, a2, nr)
        case ForkPcc(l, z, r):
            return ForkPcc(go(l, env, level), go(z, env, level), go(r, env, level))
        case Nu():
            focus, spots, pcc = split_block(t)
            bound = set(spots)
            order: list[str] = []
            for s in pcc.action.method.spots:
                if s in bound and s not in order:
                    order.append(s)
            env_map = dict(env)
            new_names = []
            for k, s in enumerate(order):
                new = name(level + k)
                env_map[(focus, s)] = new
                new_names.append(new)
            inner_env = tuple(sorted(env_map.items()))
            inner = go(pcc, inner_env, level + len(order))
            return make_block(focus, new_names, inner)
    raise ValueError("not a basic term")


def basic_eq(p: Term, q: Term) -> bool:
    """Equality of basic terms modulo binder renaming and binder order in blocks."""
    if p is q:
        return True
    return canonicalize(p) is canonicalize(q)
