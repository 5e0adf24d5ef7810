"""A small assembly notation with tests, absolute jumps and a fork instruction.

Programs are extracted into closed recursive thread terms (one recursion
binder per position revisited along an extraction path), and can be run
against the molecular-dynamics service with an oracle answering all other
actions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

from .engine import Normalizer
from .errors import TermSyntaxError
from .projective import Lab
from .services import AllTrue, Environment, MDState, MDStateLike, Reply, empty_md_state, env_reply, md_apply
from .syntax import _Parser
from .terms import (
    MD_FOCUS,
    Call,
    Csi,
    D,
    Dead,
    Fix,
    ForkPcc,
    NtIl,
    NtJava,
    Nu,
    Pcc,
    S,
    Stop,
    TauAction,
    Term,
    Var,
    desugar_forks,
    free_spots,
    subst_spot,
)

__all__ = [
    "Basic", "PosTest", "NegTest", "Jump", "Fork", "Program", "parse_program", "render_program",
    "extract", "desugar_forks", "eliminate_jump_chains", "run", "RunResult", "Outcome", "beh_eq_up_to",
    "NtIl", "NtJava",
]


@dataclass(frozen=True)
class Basic:
    action: Call

    def __str__(self) -> str:
        return str(self.action)


@dataclass(frozen=True)
class PosTest:
    action: Call

    def __str__(self) -> str:
        return f"+{self.action}"


@dataclass(frozen=True)
class NegTest:
    action: Call

    def __str__(self) -> str:
        return f"-{self.action}"


@dataclass(frozen=True)
class Jump:
    target: int

    def __str__(self) -> str:
        return f"jmp {self.target}"


@dataclass(frozen=True)
class Fork:
    spot: str
    target: int

    def __str__(self) -> str:
        return f"fork {self.spot} {self.target}"


Instruction = Basic | PosTest | NegTest | Jump | Fork


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]

    def __post_init__(self) -> None:
        if not self.instructions:
            raise ValueError("a program has at least one instruction")

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self) -> Iterator[Instruction]:
        return iter(self.instructions)

    def at(self, i: int) -> Instruction:
        """Instruction at 1-based position ``i``."""
        return self.instructions[i - 1]

    def __str__(self) -> str:
        return render_program(self)


def _parse_action(text: str, line: int) -> Call:
    try:
        p = _Parser(text, allow_reserved=False)
        a = p.action()
        if p.peek().kind != "eof":
            p.error("unexpected trailing input")
    except TermSyntaxError as exc:
        raise TermSyntaxError(f"bad action {text!r}: {exc}", line) from None
    if not isinstance(a, Call):
        raise TermSyntaxError("tau is not an instruction", line)
    return a


def _parse_nat(text: str, line: int) -> int:
    if not text.isdigit():
        raise TermSyntaxError(f"expected a natural number, got {text!r}", line)
    return int(text)


def parse_program(text: str) -> Program:
    """One instruction per line: ``f.m``, ``+f.m``, ``-f.m``, ``jmp L``, ``fork s L``.

    Blank lines and ``#`` comments are ignored.
    """
    out: list[Instruction] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "jmp":
            if len(words) != 2:
                raise TermSyntaxError("jmp takes one target", lineno)
            out.append(Jump(_parse_nat(words[1], lineno)))
        elif words[0] == "fork":
            if len(words) != 3:
                raise TermSyntaxError("fork takes a spot and a target", lineno)
            spot = words[1]
            if "$" in spot:
                raise TermSyntaxError(f"spot {spot!r} uses a reserved prefix", lineno)
            out.append(Fork(spot, _parse_nat(words[2], lineno)))
        elif line[0] == "+":
            out.append(PosTest(_parse_action(line[1:].strip(), lineno)))
        elif line[0] == "-":
            out.append(NegTest(_parse_action(line[1:].strip(), lineno)))
        else:
            out.append(Basic(_parse_action(line, lineno)))
    if not out:
        raise TermSyntaxError("empty program", 1)
    return Program(tuple(out))


def render_program(p: Program) -> str:
    return "\n".join(map(str, p.instructions))


# ---------------------------------------------------------------------------
# Extraction


def _jump_terminus(p: Program, i: int) -> int | None:
    """Follow jumps from position ``i``; None when they run into a cycle."""
    n = len(p)
    seen: set[int] = set()
    while 1 <= i <= n and isinstance(p.at(i), Jump):
        if i in seen:
            return None
        seen.add(i)
        i = p.at(i).target
    return i


def position_var(i: int) -> str:
    return f"x${i}"


def extract(p: Program) -> Term:
    """Thread extraction: ``csi[<|1,P|>]`` with back-jumps closed by recursion."""
    n = len(p)
    memo: dict[tuple, tuple[Term, frozenset[int]]] = {}

    def go(i: int, path: frozenset[int]) -> tuple[Term, frozenset[int]]:
        """Term for position ``i`` and the path positions it refers back to."""
        if not 1 <= i <= n:
            return S, frozenset()
        u = p.at(i)
        if isinstance(u, Jump):
            j = _jump_terminus(p, i)
            return (D, frozenset()) if j is None else go(j, path)
        if i in path:
            return Var(position_var(i)), frozenset({i})
        key = (i, path)
        hit = memo.get(key)
        if hit is not None:
            return hit
        inner = path | {i}
        match u:
            case Basic(a):
                nxt, refs = go(i + 1, inner)
                body: Term = Pcc(nxt, a, nxt)
            case PosTest(a):
                yes, r1 = go(i + 1, inner)
                no, r2 = go(i + 2, inner)
                body, refs = Pcc(yes, a, no), r1 | r2
            case NegTest(a):
                yes, r1 = go(i + 2, inner)
                no, r2 = go(i + 1, inner)
                body, refs = Pcc(yes, a, no), r1 | r2
            case Fork(s, target):
                forked, r1 = go(target, inner)
                nxt, r2 = go(i + 1, inner)
                body, refs = NtJava(s, forked, nxt), r1 | r2
            case _:
                raise AssertionError(u)
        if i in refs:
            body = Fix(position_var(i), body)
            refs = refs - {i}
        memo[key] = (body, refs)
        return body, refs

    thread, _ = go(1, frozenset())
    return Csi((thread,))


def eliminate_jump_chains(p: Program) -> Program:
    """Redirect every jump whose target is a jump to the end of the chain."""
    n = len(p)
    out: list[Instruction] = []
    for i, u in enumerate(p.instructions, 1):
        if isinstance(u, Jump) and 1 <= u.target <= n and isinstance(p.at(u.target), Jump):
            j = _jump_terminus(p, i)
            if j is None:
                out.append(Jump(i))
            elif 1 <= j <= n:
                out.append(Jump(j))
            else:
                out.append(Jump(n + 1))
        else:
            out.append(u)
    return Program(tuple(out))


# ---------------------------------------------------------------------------
# Execution


class Outcome(enum.Enum):
    TERMINATED = "Terminated"
    DEADLOCKED = "Deadlocked"
    STEP_BUDGET = "StepBudget"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RunResult:
    trace: tuple[tuple[str, Reply], ...]
    state: MDStateLike
    outcome: Outcome

    def trace_lines(self) -> list[str]:
        return [f"{k}: {a} -> {r}" for k, (a, r) in enumerate(self.trace, 1)]


def run(
    p: Program | Term,
    capacity: int | None = None,
    env: Environment | None = None,
    max_steps: int = 10_000,
    poll_this: bool = False,
) -> RunResult:
    """Execute a program (or a closed thread) against an initially empty
    molecular-dynamics service; other actions are answered by ``env``."""
    term = extract(p) if isinstance(p, Program) else p
    session = Normalizer(poll_this=poll_this)
    thread = session.prepare(term)
    state: MDStateLike = empty_md_state(capacity)
    env = env or AllTrue()
    trace: list[tuple[str, Reply]] = []
    while True:
        if len(trace) >= max_steps:
            return RunResult(tuple(trace), state, Outcome.STEP_BUDGET)
        h = session.head(thread)
        match h:
            case Stop():
                return RunResult(tuple(trace), state, Outcome.TERMINATED)
            case Dead():
                return RunResult(tuple(trace), state, Outcome.DEADLOCKED)
            case Pcc(x, TauAction(), _):
                trace.append(("tau", Reply.T))
                thread = x
            case Pcc(x, Call(f, m) as a, y):
                if f == MD_FOCUS:
                    state, reply = md_apply(state, m)
                else:
                    reply, env = env_reply(env, a)
                trace.append((str(a), reply))
                if reply is Reply.REFUSED:
                    return RunResult(tuple(trace), state, Outcome.DEADLOCKED)
                thread = x if reply is Reply.T else y
            case ForkPcc(x, z, _):
                trace.append(("tau", Reply.T))
                thread = Csi((z, x))
            case Nu(f, s, inner):
                # The restricted spot becomes a fresh global spot that the
                # service does not know yet.
                defined = set(state.spots()) if isinstance(state, MDState) else set()
                if f != MD_FOCUS or s in defined:
                    s2 = session.fresh.spot(free_spots(inner, f) | defined | {s})
                    inner = subst_spot(inner, f, s, s2)
                thread = inner
            case _:
                raise AssertionError(h)


def beh_eq_up_to(n: int, p: Program, q: Program, lab: Lab | None = None) -> bool:
    lab = lab or Lab()
    return lab.eq_up_to(n, desugar_forks(extract(p)), desugar_forks(extract(q)))

