"""Services as reply functions, state-based service descriptions, the
molecular-dynamics service, and reply oracles for actions no service handles.

Services are immutable values: ``derive`` returns a new service.  Every
service is absorbing for ``Refused``: once a method is refused, the derived
service refuses everything.
"""

from __future__ import annotations

import enum
import fnmatch
import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Mapping

import networkx as nx

from .errors import InvalidSpec, ScriptExhausted, ScriptMismatch, ServiceUnresolvable, TableMiss
from .terms import MD_SIGNATURES, Action, Call, Md, Method, Opaque


class Reply(enum.Enum):
    T = "T"
    F = "F"
    REFUSED = "Refused"

    def __str__(self) -> str:
        return self.value


# ---------------------------------------------------------------------------
# Service handles


class Service:
    """A reply function: ``query`` answers the next method, ``derive`` consumes it."""

    def query(self, m: Method) -> Reply:
        raise NotImplementedError

    def _successor(self, m: Method) -> Service:
        raise NotImplementedError

    def _poisoned(self) -> Service:
        return REFUSING

    def derive(self, m: Method) -> Service:
        if self.query(m) is Reply.REFUSED:
            return self._poisoned()
        return self._successor(m)

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class RefusingService(Service):
    """Refuses every method; the absorbing poisoned service."""

    def query(self, m: Method) -> Reply:
        return Reply.REFUSED

    def _successor(self, m: Method) -> Service:
        return self

    def describe(self) -> str:
        return "refused"


REFUSING = RefusingService()


@dataclass(frozen=True)
class HistoryService(Service):
    """A service given directly as a reply function over method histories.

    ``reply(history, m)`` answers ``m`` after ``history`` has been processed.
    Histories grow without bound, so such services are regular only when the
    reply function says so; prefer :class:`StateServiceSpec` for analysis.
    """

    name: str
    reply: Callable[[tuple[Method, ...], Method], Reply] = field(compare=False)
    history: tuple[Method, ...] = ()

    def query(self, m: Method) -> Reply:
        return self.reply(self.history, m)

    def _successor(self, m: Method) -> Service:
        return HistoryService(self.name, self.reply, self.history + (m,))

    def describe(self) -> str:
        if not self.history:
            return self.name
        return f"{self.name}[{';'.join(map(str, self.history))}]"

    def __hash__(self) -> int:
        return hash((self.name, id(self.reply), self.history))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HistoryService)
            and self.name == other.name
            and self.reply is other.reply
            and self.history == other.history
        )


# ---------------------------------------------------------------------------
# State-based descriptions


@dataclass(eq=False)
class StateServiceSpec:
    """A service described by states with an effect and a yield function.

    ``sink`` is the state that every refused transition leads to and in which
    every method is refused.  ``methods`` is a finite alphabet used when the
    reachable fragment is explored (validation and regularity checks).
    """

    name: str
    initial: Hashable
    eff: Callable[[Method, Any], Hashable]
    yld: Callable[[Method, Any], Reply]
    sink: Hashable
    methods: tuple[Method, ...] = ()
    show: Callable[[Any], str] = str


@dataclass(frozen=True)
class SpecService(Service):
    spec: StateServiceSpec
    state: Hashable

    def query(self, m: Method) -> Reply:
        return self.spec.yld(m, self.state)

    def _successor(self, m: Method) -> Service:
        return SpecService(self.spec, self.spec.eff(m, self.state))

    def _poisoned(self) -> Service:
        return SpecService(self.spec, self.spec.sink)

    def describe(self) -> str:
        if self.state == self.spec.initial:
            return self.spec.name
        return f"{self.spec.name}{{{self.spec.show(self.state)}}}"


def validate_spec(spec: StateServiceSpec, bound: int = 10_000) -> None:
    """Check the sink condition on the fragment reachable through ``spec.methods``."""
    probes = list(spec.methods) or [Opaque("probe")]
    for m in probes:
        if spec.yld(m, spec.sink) is not Reply.REFUSED:
            raise InvalidSpec(f"sink state of {spec.name} answers {m} with {spec.yld(m, spec.sink)}")
        if spec.eff(m, spec.sink) != spec.sink:
            raise InvalidSpec(f"sink state of {spec.name} is left by {m}")
    seen = {spec.initial}
    queue = deque([spec.initial])
    while queue and len(seen) <= bound:
        state = queue.popleft()
        for m in spec.methods:
            reply = spec.yld(m, state)
            nxt = spec.eff(m, state)
            if reply is Reply.REFUSED and nxt != spec.sink:
                raise InvalidSpec(f"{spec.name}: refusing {m} in state {state!r} does not lead to the sink")
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)


def service_of_spec(spec: StateServiceSpec, bound: int = 10_000) -> SpecService:
    validate_spec(spec, bound)
    return SpecService(spec, spec.initial)


def table_spec(
    name: str,
    initial: Hashable,
    table: Mapping[Hashable, Mapping[str, tuple[Hashable, Reply | str]]],
    sink: Hashable = "sink",
    methods: Iterable[Method] | None = None,
) -> StateServiceSpec:
    """A finite-state spec from ``table[state][method text] = (next state, reply)``.

    Entries that are missing lead to the sink with ``Refused``.
    """
    norm: dict[Hashable, dict[str, tuple[Hashable, Reply]]] = {}
    for state, row in table.items():
        norm[state] = {}
        for mtext, (nxt, reply) in row.items():
            r = reply if isinstance(reply, Reply) else parse_reply(reply)
            norm[state][mtext] = (sink if r is Reply.REFUSED else nxt, r)

    def lookup(m: Method, state):
        return norm.get(state, {}).get(str(m), (sink, Reply.REFUSED))

    if methods is None:
        texts = sorted({mt for row in norm.values() for mt in row})
        methods = [parse_method(t) for t in texts]
    return StateServiceSpec(
        name=name,
        initial=initial,
        eff=lambda m, s: lookup(m, s)[0],
        yld=lambda m, s: lookup(m, s)[1],
        sink=sink,
        methods=tuple(methods),
    )


def parse_reply(text: str) -> Reply:
    norm = text.strip().lower()
    for r in Reply:
        if r.value.lower() == norm:
            return r
    raise ValueError(f"unknown reply {text!r}")


def parse_method(text: str) -> Method:
    words = text.split()
    if words and words[0] in MD_SIGNATURES:
        return Md(words[0], tuple(words[1:]))
    return Opaque(text)


def load_spec_file(path: str | Path) -> StateServiceSpec:
    """Read a JSON service description.

    Format: ``{"name": ..., "initial": q, "sink": q', "transitions":
    {state: {method: [next, reply]}}}``; method texts are opaque names or
    molecular-dynamics methods such as ``"creatom s"``.
    """
    doc = json.loads(Path(path).read_text())
    try:
        return table_spec(
            doc.get("name", Path(path).stem),
            doc["initial"],
            {state: {m: tuple(v) for m, v in row.items()} for state, row in doc["transitions"].items()},
            sink=doc.get("sink", "sink"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Regular:
    states: int


@dataclass(frozen=True)
class BoundExceeded:
    bound: int


def regular_check(h: Service, bound: int, methods: Iterable[Method] | None = None) -> Regular | BoundExceeded:
    """Breadth-first closure of ``h`` under ``derive`` over a finite method alphabet."""
    if methods is None:
        spec = getattr(h, "spec", None)
        methods = spec.methods if spec is not None else ()
    alphabet = list(methods)
    seen = {h}
    queue = deque([h])
    while queue:
        cur = queue.popleft()
        for m in alphabet:
            nxt = cur.derive(m)
            if nxt not in seen:
                seen.add(nxt)
                if len(seen) > bound:
                    return BoundExceeded(bound)
                queue.append(nxt)
    return Regular(len(seen))


# ---------------------------------------------------------------------------
# Molecular dynamics


Atom = int


@dataclass(frozen=True)
class MDState:
    """A live molecular-dynamics state.

    ``sigma`` lists the spots that hold an atom (all others are undefined);
    ``alpha[k-1]`` lists the fields of atom ``k`` with their contents.
    """

    sigma: tuple[tuple[str, Atom], ...] = ()
    alpha: tuple[tuple[tuple[str, Atom | None], ...], ...] = ()
    capacity: int | None = None

    def spot(self, s: str) -> Atom | None:
        for name, a in self.sigma:
            if name == s:
                return a
        return None

    def spots(self) -> dict[str, Atom]:
        return dict(self.sigma)

    def atoms(self) -> range:
        return range(1, len(self.alpha) + 1)

    def fields(self, a: Atom) -> dict[str, Atom | None]:
        return dict(self.alpha[a - 1])

    def with_spot(self, s: str, a: Atom | None) -> MDState:
        sigma = dict(self.sigma)
        if a is None:
            sigma.pop(s, None)
        else:
            sigma[s] = a
        return MDState(tuple(sorted(sigma.items())), self.alpha, self.capacity)

    def with_fields(self, a: Atom, fields: Mapping[str, Atom | None]) -> MDState:
        alpha = list(self.alpha)
        alpha[a - 1] = tuple(sorted(fields.items()))
        return MDState(self.sigma, tuple(alpha), self.capacity)

    def with_new_atom(self) -> tuple[MDState, Atom]:
        return MDState(self.sigma, self.alpha + ((),), self.capacity), len(self.alpha) + 1

    def check(self) -> None:
        atoms = set(self.atoms())
        for s, a in self.sigma:
            if a not in atoms:
                raise AssertionError(f"spot {s} refers to missing atom {a}")
        for k in atoms:
            for v, a in self.alpha[k - 1]:
                if a is not None and a not in atoms:
                    raise AssertionError(f"field {v} of atom {k} refers to missing atom {a}")

    def __str__(self) -> str:
        spots = ",".join(f"{s}=a{a}" for s, a in self.sigma)
        atoms = ";".join(
            f"a{k}:" + ",".join(f"{v}=" + (f"a{t}" if t is not None else "_") for v, t in flds)
            for k, flds in enumerate(self.alpha, 1)
        )
        return f"{spots}|{atoms}"


@dataclass(frozen=True)
class Undef:
    """The state reached after a method outside the repertoire; it refuses everything."""

    def __str__(self) -> str:
        return "undef"


UNDEF = Undef()

MDStateLike = MDState | Undef


def empty_md_state(capacity: int | None = None) -> MDState:
    return MDState((), (), capacity)


def newatom(existing: Iterable[Atom], capacity: int | None) -> Atom | None:
    """Next atom to allocate, or None when the capacity is used up (max of no atoms is 0)."""
    k = max(existing, default=0)
    if capacity is None or k < capacity:
        return k + 1
    return None


def md_apply(state: MDStateLike, m: Method) -> tuple[MDStateLike, Reply]:
    """Effect and yield of one method on a molecular-dynamics state."""
    if isinstance(state, Undef) or not isinstance(m, Md):
        return UNDEF, Reply.REFUSED
    T, F = Reply.T, Reply.F
    op, args = m.op, m.args
    if op == "creatom":
        (s,) = args
        if newatom(state.atoms(), state.capacity) is None:
            return state, F
        state, a = state.with_new_atom()
        return state.with_spot(s, a), T
    if op == "setspot":
        s, s2 = args
        return state.with_spot(s, state.spot(s2)), T
    if op == "clrspot":
        return state.with_spot(args[0], None), T
    if op == "equaltst":
        s, s2 = args
        return state, T if state.spot(s) == state.spot(s2) else F
    if op == "undeftst":
        return state, T if state.spot(args[0]) is None else F
    if op in ("addfield", "rmvfield", "hasfield", "setfield"):
        s, v = args[0], args[1]
        a = state.spot(s)
        fields = state.fields(a) if a is not None else None
        if op == "addfield":
            if fields is None or v in fields:
                return state, F
            fields[v] = None
            return state.with_fields(a, fields), T
        if fields is None or v not in fields:
            return state, F
        if op == "hasfield":
            return state, T
        if op == "rmvfield":
            del fields[v]
            return state.with_fields(a, fields), T
        fields[v] = state.spot(args[2])
        return state.with_fields(a, fields), T
    if op == "getfield":
        s, s2, v = args
        a = state.spot(s2)
        if a is None:
            return state, F
        fields = state.fields(a)
        if v not in fields:
            return state, F
        return state.with_spot(s, fields[v]), T
    raise AssertionError(op)


def md_methods(spots: Iterable[str], fields: Iterable[str]) -> tuple[Md, ...]:
    """Every molecular-dynamics method over the given spots and field names."""
    spots, fields = list(spots), list(fields)
    out: list[Md] = []
    for op, kinds in MD_SIGNATURES.items():
        pools = [spots if k == "s" else fields for k in kinds]

        def build(prefix_: tuple[str, ...], rest):
            if not rest:
                out.append(Md(op, prefix_))
                return
            for x in rest[0]:
                build(prefix_ + (x,), rest[1:])

        build((), pools)
    return tuple(out)


def _capacity_label(capacity: int | None) -> str:
    return "unlimited" if capacity is None else str(capacity)


@lru_cache(maxsize=None)
def md_spec(capacity: int | None = None, methods: tuple[Method, ...] = ()) -> StateServiceSpec:
    return StateServiceSpec(
        name=f"md({_capacity_label(capacity)})",
        initial=empty_md_state(capacity),
        eff=lambda m, s: md_apply(s, m)[0],
        yld=lambda m, s: md_apply(s, m)[1],
        sink=UNDEF,
        methods=methods,
    )


def md_service(capacity: int | None = None, state: MDStateLike | None = None, methods: tuple[Method, ...] = ()) -> SpecService:
    spec = md_spec(capacity, tuple(methods))
    return SpecService(spec, spec.initial if state is None else state)


def md_dump(state: MDStateLike) -> dict:
    if isinstance(state, Undef):
        return {"spots": {}, "atoms": {}, "undef": True, "capacity": None}
    return {
        "spots": {s: f"a{a}" for s, a in state.sigma},
        "atoms": {
            f"a{k}": {v: (f"a{t}" if t is not None else None) for v, t in flds}
            for k, flds in enumerate(state.alpha, 1)
        },
        "undef": False,
        "capacity": state.capacity,
    }


def md_load(doc: Mapping) -> MDStateLike:
    if doc.get("undef"):
        return UNDEF

    def atom(x):
        return None if x is None else int(str(x).lstrip("a"))

    atoms = sorted(doc.get("atoms", {}), key=atom)
    if [atom(a) for a in atoms] != list(range(1, len(atoms) + 1)):
        raise ValueError("atoms must be a1..ak")
    alpha = tuple(tuple(sorted((v, atom(t)) for v, t in doc["atoms"][a].items())) for a in atoms)
    sigma = tuple(sorted((s, atom(a)) for s, a in doc.get("spots", {}).items() if a is not None))
    state = MDState(sigma, alpha, doc.get("capacity"))
    state.check()
    return state


def _anchored_labeling(state: MDState) -> tuple[dict[Atom, int], tuple]:
    """Number atoms in order of discovery from the spots (sorted), following sorted fields."""
    order: dict[Atom, int] = {}
    queue: deque[Atom] = deque()
    for _, a in state.sigma:
        if a not in order:
            order[a] = len(order)
            queue.append(a)
    while queue:
        a = queue.popleft()
        for _, t in state.alpha[a - 1]:
            if t is not None and t not in order:
                order[t] = len(order)
                queue.append(t)
    spots = tuple((s, order[a]) for s, a in state.sigma)
    reached = tuple(
        tuple((v, order[t] if t is not None else None) for v, t in state.alpha[a - 1])
        for a in sorted(order, key=order.get)
    )
    return order, (spots, reached)


def _remainder_graph(state: MDState, order: dict[Atom, int]) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    for a in state.atoms():
        if a in order:
            continue
        flds = state.alpha[a - 1]
        g.add_node(a, empty=tuple(sorted(v for v, t in flds if t is None)))
        for v, t in flds:
            if t is None:
                continue
            if t in order:
                g.add_node(("anchor", order[t]), empty=("anchor", order[t]))
                g.add_edge(a, ("anchor", order[t]), label=v)
            else:
                g.add_edge(a, t, label=v)
    return g


def state_iso(a: MDStateLike, b: MDStateLike) -> bool:
    """Isomorphism of states up to renaming of atoms."""
    if isinstance(a, Undef) or isinstance(b, Undef):
        return isinstance(a, Undef) and isinstance(b, Undef)
    if len(a.alpha) != len(b.alpha):
        return False
    order_a, canon_a = _anchored_labeling(a)
    order_b, canon_b = _anchored_labeling(b)
    if canon_a != canon_b:
        return False
    if len(order_a) == len(a.alpha):
        return True
    return nx.is_isomorphic(
        _remainder_graph(a, order_a),
        _remainder_graph(b, order_b),
        node_match=lambda x, y: x["empty"] == y["empty"],
        edge_match=lambda x, y: sorted(e["label"] for e in x.values()) == sorted(e["label"] for e in y.values()),
    )


# ---------------------------------------------------------------------------
# Registry


class ServiceRegistry:
    """Resolves service names used in ``use(p, f, NAME)`` terms."""

    def __init__(self, bindings: Mapping[str, Service] | None = None, base_dir: Path | None = None):
        self._bindings: dict[str, Service] = dict(bindings or {})
        self.base_dir = base_dir

    def register(self, name: str, service: Service) -> None:
        self._bindings[name] = service

    def resolve(self, ref: str | Service) -> Service:
        if isinstance(ref, Service):
            return ref
        hit = self._bindings.get(ref)
        if hit is not None:
            return hit
        if ref.startswith("md(") and ref.endswith(")"):
            arg = ref[3:-1].strip()
            if arg == "unlimited":
                return md_service(None)
            if arg.isdigit():
                return md_service(int(arg))
        if ref == "md":
            return md_service(None)
        if ref.startswith("spec:"):
            path = Path(ref[5:])
            if self.base_dir is not None and not path.is_absolute():
                path = self.base_dir / path
            if not path.exists():
                raise ServiceUnresolvable(f"service file {path} not found")
            service = service_of_spec(load_spec_file(path))
            self._bindings[ref] = service
            return service
        raise ServiceUnresolvable(f"no service named {ref!r}")


DEFAULT_REGISTRY = ServiceRegistry()


# ---------------------------------------------------------------------------
# Environments for actions that no service processes


@dataclass(frozen=True)
class AllTrue:
    pass


@dataclass(frozen=True)
class Scripted:
    entries: tuple[tuple[str, Reply], ...]


@dataclass(frozen=True)
class TableDriven:
    table: tuple[tuple[str, Reply], ...]

    @classmethod
    def of(cls, mapping: Mapping[str, Reply]) -> TableDriven:
        return cls(tuple(sorted(mapping.items())))


Environment = AllTrue | Scripted | TableDriven


def env_reply(env: Environment, a: Action) -> tuple[Reply, Environment]:
    text = str(a)
    match env:
        case AllTrue():
            return Reply.T, env
        case Scripted(entries):
            if not entries:
                raise ScriptExhausted(f"script exhausted at action {text}")
            pattern, reply = entries[0]
            if not fnmatch.fnmatchcase(text, pattern):
                raise ScriptMismatch(f"script expected {pattern}, got {text}")
            return reply, Scripted(entries[1:])
        case TableDriven(table):
            for key, reply in table:
                if key == text:
                    return reply, env
            raise TableMiss(f"no reply for action {text}")
    raise TypeError(f"not an environment: {env!r}")


def load_environment(spec: str) -> Environment:
    """``alltrue``, ``script:FILE`` (lines ``pattern reply``) or ``table:FILE`` (JSON object)."""
    if spec == "alltrue":
        return AllTrue()
    if spec.startswith("script:"):
        entries = []
        for line in Path(spec[7:]).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                pattern, reply = line.rsplit(None, 1)
                entries.append((pattern, parse_reply(reply)))
        return Scripted(tuple(entries))
    if spec.startswith("table:"):
        doc = json.loads(Path(spec[6:]).read_text())
        return TableDriven.of({k: parse_reply(v) for k, v in doc.items()})
    raise ValueError(f"unknown environment {spec!r}")
