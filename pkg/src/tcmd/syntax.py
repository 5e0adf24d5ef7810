"""Concrete text syntax for terms: a recursive-descent parser and a printer.

Grammar (right operands of ``<a>`` extend as far as possible)::

    term   := unary ( '<' (action | 'nt' '(' term ')') '>' term )?
    unary  := action '.' unary | 'nt' '(' term ')' '.' unary
            | 'ntil' '(' spot ',' spot ',' term ')' '.' unary
            | 'ntjava' '(' spot ',' term ')' '.' unary | atom
    atom   := 'S' | 'D' | var | '(' term ')' | 'csi' '[' terms ']' | 's2d' '(' term ')'
            | 'use' '(' term ',' focus ',' service ')' | 'nu' '(' focus ',' spot ',' term ')'
            | 'fix' var '.' term | 'pi' '(' nat ',' term ')'
    action := 'tau' | focus '.' method | focus '(' mdop arg* ')'
    service:= name | 'md' '(' (nat | 'unlimited') ')' | 'spec:'path
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass

from .errors import TermSyntaxError
from .terms import (
    MD_SIGNATURES,
    TAU,
    Action,
    Call,
    Csi,
    D,
    Dead,
    Fix,
    ForkPcc,
    Md,
    NtIl,
    NtJava,
    Nu,
    Opaque,
    Pcc,
    Proj,
    S,
    S2d,
    Stop,
    Term,
    Use,
    Var,
)

KEYWORDS = frozenset({"S", "D", "tau", "nt", "csi", "s2d", "use", "nu", "fix", "pi", "ntil", "ntjava"})

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<spec>spec:[^\s,()\[\]]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_'$]*)
  | (?P<int>\d+)
  | (?P<punct>[<>()\[\],.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str, allow_reserved: bool = False) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise TermSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "ws":
            newlines = chunk.count("\n")
            if newlines:
                line += newlines
                line_start = pos + chunk.rindex("\n") + 1
        else:
            if kind == "ident" and "$" in chunk and not allow_reserved:
                raise TermSyntaxError(f"identifier {chunk!r} uses a reserved prefix", line, col)
            tokens.append(Token(kind, chunk, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, allow_reserved: bool):
        self.toks = tokenize(text, allow_reserved)
        self.i = 0

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        found = tok.text or "end of input"
        raise TermSyntaxError(f"{message} (found {found!r})", tok.line, tok.column)

    def take(self, text: str | None = None, kind: str | None = None) -> Token:
        tok = self.peek()
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            self.error(f"expected {text or kind}")
        self.i += 1
        return tok

    def at(self, text: str, k: int = 0) -> bool:
        return self.peek(k).text == text

    def name(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.error(f"expected {what}")
        self.i += 1
        return tok.text

    # grammar
    def term(self) -> Term:
        left = self.unary()
        if self.at("<"):
            self.take("<")
            if self.at("nt") and self.at("(", 1):
                self.take("nt")
                self.take("(")
                forked = self.term()
                self.take(")")
                self.take(">")
                return ForkPcc(left, forked, self.term())
            a = self.action()
            self.take(">")
            return Pcc(left, a, self.term())
        return left

    def _starts_action(self) -> bool:
        tok = self.peek()
        if tok.kind != "ident":
            return False
        if tok.text == "tau":
            return self.at(".", 1)
        if tok.text in KEYWORDS:
            return False
        if self.at(".", 1):
            return True
        return self.at("(", 1) and self.peek(2).text in MD_SIGNATURES

    def unary(self) -> Term:
        if self._starts_action():
            a = self.action()
            self.take(".")
            body = self.unary()
            return Pcc(body, a, body)
        if self.at("nt") and self.at("(", 1):
            self.take("nt")
            self.take("(")
            forked = self.term()
            self.take(")")
            self.take(".")
            body = self.unary()
            return ForkPcc(body, forked, body)
        if self.at("ntil") and self.at("(", 1):
            self.take("ntil")
            self.take("(")
            local = self.name("spot")
            self.take(",")
            handle = self.name("spot")
            self.take(",")
            forked = self.term()
            self.take(")")
            self.take(".")
            return NtIl(local, handle, forked, self.unary())
        if self.at("ntjava") and self.at("(", 1):
            self.take("ntjava")
            self.take("(")
            handle = self.name("spot")
            self.take(",")
            forked = self.term()
            self.take(")")
            self.take(".")
            return NtJava(handle, forked, self.unary())
        return self.atom()

    def action(self) -> Action:
        if self.at("tau"):
            self.take("tau")
            return TAU
        focus = self.name("focus")
        if self.at("("):
            self.take("(")
            op_tok = self.peek()
            op = self.name("method")
            kinds = MD_SIGNATURES.get(op)
            if kinds is None:
                self.error("unknown molecular-dynamics method", op_tok)
            args = tuple(self.name("spot or field name") for _ in kinds)
            self.take(")")
            return Call(focus, Md(op, args))
        self.take(".")
        tok = self.peek()
        if tok.kind not in ("ident", "int"):
            self.error("expected method name")
        self.i += 1
        return Call(focus, Opaque(tok.text))

    def atom(self) -> Term:
        tok = self.peek()
        if tok.text == "(":
            self.take("(")
            t = self.term()
            self.take(")")
            return t
        if tok.kind != "ident":
            self.error("expected a term")
        word = tok.text
        if word == "S":
            self.i += 1
            return S
        if word == "D":
            self.i += 1
            return D
        if word == "csi":
            self.i += 1
            self.take("[")
            threads = []
            if not self.at("]"):
                threads.append(self.term())
                while self.at(","):
                    self.take(",")
                    threads.append(self.term())
            self.take("]")
            return Csi(threads)
        if word == "s2d":
            self.i += 1
            self.take("(")
            body = self.term()
            self.take(")")
            return S2d(body)
        if word == "use":
            self.i += 1
            self.take("(")
            body = self.term()
            self.take(",")
            focus = self.name("focus")
            self.take(",")
            service = self.service()
            self.take(")")
            return Use(body, focus, service)
        if word == "nu":
            self.i += 1
            self.take("(")
            focus = self.name("focus")
            self.take(",")
            spot = self.name("spot")
            self.take(",")
            body = self.term()
            self.take(")")
            return Nu(focus, spot, body)
        if word == "fix":
            self.i += 1
            x = self.name("recursion variable")
            self.take(".")
            return Fix(x, self.term())
        if word == "pi":
            self.i += 1
            self.take("(")
            n = int(self.take(kind="int").text)
            self.take(",")
            body = self.term()
            self.take(")")
            return Proj(n, body)
        if word in KEYWORDS:
            self.error("misplaced keyword")
        self.i += 1
        return Var(word)

    def service(self) -> str:
        tok = self.peek()
        if tok.kind == "spec":
            self.i += 1
            return tok.text
        name = self.name("service name")
        if name == "md" and self.at("("):
            self.take("(")
            arg = self.peek()
            if arg.kind == "int" or arg.text == "unlimited":
                self.i += 1
            else:
                self.error("expected capacity")
            self.take(")")
            return f"md({arg.text})"
        return name


def parse_term(text: str, allow_reserved: bool = False) -> Term:
    """Parse one term.  Generated names (containing ``$``) need ``allow_reserved``."""
    p = _Parser(text, allow_reserved)
    t = p.term()
    if p.peek().kind != "eof":
        p.error("unexpected trailing input")
    return t


# ---------------------------------------------------------------------------
# Printing


def service_label(service) -> str:
    if isinstance(service, str):
        return service
    describe = getattr(service, "describe", None)
    return describe() if describe else repr(service)


def _is_binary(t: Term) -> bool:
    return isinstance(t, (Pcc, ForkPcc)) and t.left is not t.right


def _needs_parens_as_left(t: Term) -> bool:
    return isinstance(t, (Pcc, ForkPcc, Fix, NtIl, NtJava))


def render(t: Term) -> str:
    parts: list[str] = []
    limit = sys.getrecursionlimit()
    try:
        sys.setrecursionlimit(max(limit, 20000))
        _render(t, parts)
    finally:
        sys.setrecursionlimit(limit)
    return "".join(parts)


def _render_tail(t: Term, out: list[str]) -> None:
    if _is_binary(t):
        out.append("(")
        _render(t, out)
        out.append(")")
    else:
        _render(t, out)


def _render(t: Term, out: list[str]) -> None:
    match t:
        case Stop():
            out.append("S")
        case Dead():
            out.append("D")
        case Var(x):
            out.append(x)
        case Pcc(l, a, r):
            if l is r:
                out.append(f"{a} . ")
                _render_tail(l, out)
            else:
                if _needs_parens_as_left(l):
                    out.append("(")
                    _render(l, out)
                    out.append(")")
                else:
                    _render(l, out)
                out.append(f" <{a}> ")
                _render_tail(r, out)
        case ForkPcc(l, z, r):
            if l is r:
                out.append("nt(")
                _render(z, out)
                out.append(") . ")
                _render_tail(l, out)
            else:
                if _needs_parens_as_left(l):
                    out.append("(")
                    _render(l, out)
                    out.append(")")
                else:
                    _render(l, out)
                out.append(" <nt(")
                _render(z, out)
                out.append(")> ")
                _render_tail(r, out)
        case Csi(threads):
            out.append("csi[")
            for k, th in enumerate(threads):
                if k:
                    out.append(", ")
                _render(th, out)
            out.append("]")
        case S2d(body):
            out.append("s2d(")
            _render(body, out)
            out.append(")")
        case Use(body, f, h):
            out.append("use(")
            _render(body, out)
            out.append(f", {f}, {service_label(h)})")
        case Nu(f, s, body):
            out.append(f"nu({f}, {s}, ")
            _render(body, out)
            out.append(")")
        case Fix(x, body):
            out.append(f"fix {x} . ")
            _render(body, out)
        case Proj(n, body):
            out.append(f"pi({n}, ")
            _render(body, out)
            out.append(")")
        case NtIl(local, handle, forked, rest):
            out.append(f"ntil({local}, {handle}, ")
            _render(forked, out)
            out.append(") . ")
            _render_tail(rest, out)
        case NtJava(handle, forked, rest):
            out.append(f"ntjava({handle}, ")
            _render(forked, out)
            out.append(") . ")
            _render_tail(rest, out)
        case _:
            raise TypeError(f"not a term: {t!r}")
