"""Finite-trace temporal formulas: AST, parser, printer, evaluation.

Formulas are interpreted over nonempty finite words whose letters are
sets of atom names. ``Next`` is strong (the next instant must exist)
and ``Until`` requires its right side to occur; ``WeakNext`` and
``WeakUntil`` are the weak duals. ``WeakNext`` is produced only by
negation normalization, never by the parser, and prints as ``!X !(_)``
so every printed formula reparses to a semantic equal.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

__all__ = [
    "Formula",
    "Atom",
    "TrueConst",
    "FalseConst",
    "Not",
    "And",
    "Or",
    "Implies",
    "Next",
    "WeakNext",
    "Until",
    "WeakUntil",
    "Globally",
    "Eventually",
    "ParseError",
    "parse",
    "format_formula",
    "evaluate",
    "holds_on_empty",
    "nnf",
    "negate_nnf",
    "atoms",
    "subformulas",
    "inject_single_task_constraint",
]

_ATOM_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class Formula:
    """Immutable formula node; equality and hashing are structural."""

    __slots__ = ("_hash",)

    def __hash__(self):
        return self._hash

    def __str__(self):
        return format_formula(self)

    def __repr__(self):
        return f"<{format_formula(self)}>"


def _as_formula(x) -> Formula:
    if not isinstance(x, Formula):
        raise TypeError(f"expected a Formula, got {type(x).__name__}")
    return x


class Atom(Formula):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if not isinstance(name, str) or not _ATOM_RE.fullmatch(name):
            raise ValueError(f"invalid atom name: {name!r}")
        self.name = name
        self._hash = hash(("Atom", name))

    def __eq__(self, other):
        return type(other) is Atom and other.name == self.name

    __hash__ = Formula.__hash__


class TrueConst(Formula):
    __slots__ = ()

    def __init__(self):
        self._hash = hash("TrueConst")

    def __eq__(self, other):
        return type(other) is TrueConst

    __hash__ = Formula.__hash__


class FalseConst(Formula):
    __slots__ = ()

    def __init__(self):
        self._hash = hash("FalseConst")

    def __eq__(self, other):
        return type(other) is FalseConst

    __hash__ = Formula.__hash__


class _Unary(Formula):
    __slots__ = ("arg",)

    def __init__(self, arg: Formula):
        self.arg = _as_formula(arg)
        self._hash = hash((type(self).__name__, self.arg._hash))

    def __eq__(self, other):
        return type(other) is type(self) and other.arg == self.arg

    __hash__ = Formula.__hash__


class _Binary(Formula):
    __slots__ = ("left", "right")

    def __init__(self, left: Formula, right: Formula):
        self.left = _as_formula(left)
        self.right = _as_formula(right)
        self._hash = hash((type(self).__name__, self.left._hash, self.right._hash))

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and other.left == self.left
            and other.right == self.right
        )

    __hash__ = Formula.__hash__


class Not(_Unary):
    __slots__ = ()


class Next(_Unary):
    __slots__ = ()


class WeakNext(_Unary):
    __slots__ = ()


class Globally(_Unary):
    __slots__ = ()


class Eventually(_Unary):
    __slots__ = ()


class And(_Binary):
    __slots__ = ()


class Or(_Binary):
    __slots__ = ()


class Implies(_Binary):
    __slots__ = ()


class Until(_Binary):
    __slots__ = ()


class WeakUntil(_Binary):
    __slots__ = ()


def subformulas(f: Formula) -> frozenset:
    """All distinct subformula nodes of f, including f itself."""
    seen = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if g in seen:
            continue
        seen.add(g)
        if isinstance(g, _Unary):
            stack.append(g.arg)
        elif isinstance(g, _Binary):
            stack.append(g.left)
            stack.append(g.right)
    return frozenset(seen)


def atoms(f: Formula) -> frozenset:
    """Names of all atoms occurring in f."""
    return frozenset(g.name for g in subformulas(f) if isinstance(g, Atom))


def _postorder(f: Formula) -> list:
    """Distinct subformulas with children preceding parents."""
    out, seen = [], set()
    stack = [(f, False)]
    while stack:
        g, expanded = stack.pop()
        if g in seen:
            continue
        if expanded:
            seen.add(g)
            out.append(g)
            continue
        stack.append((g, True))
        if isinstance(g, _Unary):
            stack.append((g.arg, False))
        elif isinstance(g, _Binary):
            stack.append((g.right, False))
            stack.append((g.left, False))
    return out


def evaluate(f: Formula, trace: Sequence[Iterable[str]], position: int = 0) -> bool:
    """Truth of f at the given position of a nonempty finite trace."""
    letters = [frozenset(x) for x in trace]
    n = len(letters)
    if n == 0:
        raise ValueError("cannot evaluate on an empty trace")
    if not 0 <= position < n:
        raise ValueError(f"position {position} out of range for trace of length {n}")
    order = _postorder(f)
    nxt: dict = {}
    cur: dict = {}
    for j in range(n - 1, position - 1, -1):
        letter = letters[j]
        last = j == n - 1
        cur = {}
        for g in order:
            if isinstance(g, Atom):
                v = g.name in letter
            elif isinstance(g, TrueConst):
                v = True
            elif isinstance(g, FalseConst):
                v = False
            elif isinstance(g, Not):
                v = not cur[g.arg]
            elif isinstance(g, And):
                v = cur[g.left] and cur[g.right]
            elif isinstance(g, Or):
                v = cur[g.left] or cur[g.right]
            elif isinstance(g, Implies):
                v = (not cur[g.left]) or cur[g.right]
            elif isinstance(g, Next):
                v = (not last) and nxt[g.arg]
            elif isinstance(g, WeakNext):
                v = last or nxt[g.arg]
            elif isinstance(g, Until):
                v = cur[g.right] or (cur[g.left] and (not last) and nxt[g])
            elif isinstance(g, WeakUntil):
                v = cur[g.right] or (cur[g.left] and (last or nxt[g]))
            elif isinstance(g, Globally):
                v = cur[g.arg] and (last or nxt[g])
            elif isinstance(g, Eventually):
                v = cur[g.arg] or ((not last) and nxt[g])
            else:
                raise TypeError(f"unknown formula node {type(g).__name__}")
            cur[g] = v
        nxt = cur
    return cur[f]


def holds_on_empty(f: Formula) -> bool:
    """Truth of f on a zero-length suffix (used for end-of-trace verdicts)."""
    vals: dict = {}
    for g in _postorder(f):
        if isinstance(g, (Atom, Next, Until, Eventually, FalseConst)):
            v = False
        elif isinstance(g, (TrueConst, WeakNext, WeakUntil, Globally)):
            v = True
        elif isinstance(g, Not):
            v = not vals[g.arg]
        elif isinstance(g, And):
            v = vals[g.left] and vals[g.right]
        elif isinstance(g, Or):
            v = vals[g.left] or vals[g.right]
        elif isinstance(g, Implies):
            v = (not vals[g.left]) or vals[g.right]
        else:
            raise TypeError(f"unknown formula node {type(g).__name__}")
        vals[g] = v
    return vals[f]


def nnf(f: Formula) -> Formula:
    """Negation normal form: negations pushed down to atoms."""
    if isinstance(f, (Atom, TrueConst, FalseConst)):
        return f
    if isinstance(f, Not):
        return _neg(f.arg)
    if isinstance(f, And):
        return And(nnf(f.left), nnf(f.right))
    if isinstance(f, Or):
        return Or(nnf(f.left), nnf(f.right))
    if isinstance(f, Implies):
        return Or(_neg(f.left), nnf(f.right))
    if isinstance(f, Next):
        return Next(nnf(f.arg))
    if isinstance(f, WeakNext):
        return WeakNext(nnf(f.arg))
    if isinstance(f, Until):
        return Until(nnf(f.left), nnf(f.right))
    if isinstance(f, WeakUntil):
        return WeakUntil(nnf(f.left), nnf(f.right))
    if isinstance(f, Globally):
        return Globally(nnf(f.arg))
    if isinstance(f, Eventually):
        return Eventually(nnf(f.arg))
    raise TypeError(f"unknown formula node {type(f).__name__}")


def _neg(f: Formula) -> Formula:
    """Negation normal form of the negation of f."""
    if isinstance(f, Atom):
        return Not(f)
    if isinstance(f, TrueConst):
        return FalseConst()
    if isinstance(f, FalseConst):
        return TrueConst()
    if isinstance(f, Not):
        return nnf(f.arg)
    if isinstance(f, And):
        return Or(_neg(f.left), _neg(f.right))
    if isinstance(f, Or):
        return And(_neg(f.left), _neg(f.right))
    if isinstance(f, Implies):
        return And(nnf(f.left), _neg(f.right))
    if isinstance(f, Next):
        return WeakNext(_neg(f.arg))
    if isinstance(f, WeakNext):
        return Next(_neg(f.arg))
    if isinstance(f, Until):
        return WeakUntil(_neg(f.right), And(_neg(f.left), _neg(f.right)))
    if isinstance(f, WeakUntil):
        return Until(_neg(f.right), And(_neg(f.left), _neg(f.right)))
    if isinstance(f, Globally):
        return Eventually(_neg(f.arg))
    if isinstance(f, Eventually):
        return Globally(_neg(f.arg))
    raise TypeError(f"unknown formula node {type(f).__name__}")


def negate_nnf(f: Formula) -> Formula:
    """Negation normal form of ¬f."""
    return _neg(f)


def inject_single_task_constraint(tasks: Iterable[str]) -> Formula:
    """Conjunct forcing exactly one of the given task atoms per instant."""
    names = sorted(set(tasks))
    if not names:
        raise ValueError("task set must be nonempty")
    some = Atom(names[0])
    for name in names[1:]:
        some = Or(some, Atom(name))
    pairs = [
        Implies(Atom(a), Not(Atom(b))) for a in names for b in names if a != b
    ]
    if not pairs:
        mutex: Formula = TrueConst()
    else:
        mutex = pairs[0]
        for p in pairs[1:]:
            mutex = And(mutex, p)
    return And(Globally(some), Globally(mutex))


# --- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<comment>#[^\n]*)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<arrow>->)"
    r"|(?P<punct>[!&|()])"
)

_KEYWORDS = {"U", "W", "X", "G", "F", "true", "false"}


class ParseError(ValueError):
    """Syntax error with position and the token kinds that were expected."""

    def __init__(self, message: str, line: int, column: int, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        detail = f"{message} at line {line}, column {column}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class _Token:
    __slots__ = ("kind", "text", "line", "column")

    def __init__(self, kind, text, line, column):
        self.kind = kind
        self.text = text
        self.line = line
        self.column = column


def _tokenize(text: str) -> list:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        group = m.lastgroup
        value = m.group()
        if group == "name":
            kind = value if value in _KEYWORDS else "atom"
            tokens.append(_Token(kind, value, line, col))
        elif group == "arrow":
            tokens.append(_Token("->", value, line, col))
        elif group == "punct":
            tokens.append(_Token(value, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    tokens.append(_Token("end", "", line, col))
    return tokens


_PRIMARY_EXPECTED = ("atom", "'true'", "'false'", "'('", "'!'", "'X'", "'G'", "'F'")


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, expected):
        tok = self.peek()
        what = "end of input" if tok.kind == "end" else f"{tok.text!r}"
        raise ParseError(f"unexpected {what}", tok.line, tok.column, expected)

    def parse_implies(self) -> Formula:
        left = self.parse_or()
        if self.peek().kind == "->":
            self.take()
            return Implies(left, self.parse_implies())
        return left

    def parse_or(self) -> Formula:
        f = self.parse_and()
        while self.peek().kind == "|":
            self.take()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self) -> Formula:
        f = self.parse_until()
        while self.peek().kind == "&":
            self.take()
            f = And(f, self.parse_until())
        return f

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        kind = self.peek().kind
        if kind in ("U", "W"):
            self.take()
            right = self.parse_until()
            return Until(left, right) if kind == "U" else WeakUntil(left, right)
        return left

    def parse_unary(self) -> Formula:
        kind = self.peek().kind
        if kind == "!":
            self.take()
            return Not(self.parse_unary())
        if kind == "X":
            self.take()
            return Next(self.parse_unary())
        if kind == "G":
            self.take()
            return Globally(self.parse_unary())
        if kind == "F":
            self.take()
            return Eventually(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "atom":
            self.take()
            return Atom(tok.text)
        if tok.kind == "true":
            self.take()
            return TrueConst()
        if tok.kind == "false":
            self.take()
            return FalseConst()
        if tok.kind == "(":
            self.take()
            f = self.parse_implies()
            if self.peek().kind != ")":
                self.error(("')'",))
            self.take()
            return f
        self.error(_PRIMARY_EXPECTED)


def parse(text: str) -> Formula:
    """Parse a formula; raises ParseError with position and expectations."""
    parser = _Parser(_tokenize(text))
    f = parser.parse_implies()
    if parser.peek().kind != "end":
        parser.error(("end of input", "an operator"))
    return f


# --- printing --------------------------------------------------------------

_PREC_IMPLIES, _PREC_OR, _PREC_AND, _PREC_UNTIL, _PREC_UNARY = 0, 1, 2, 3, 4


def _prec(f: Formula) -> int:
    if isinstance(f, Implies):
        return _PREC_IMPLIES
    if isinstance(f, Or):
        return _PREC_OR
    if isinstance(f, And):
        return _PREC_AND
    if isinstance(f, (Until, WeakUntil)):
        return _PREC_UNTIL
    return _PREC_UNARY


def format_formula(f: Formula) -> str:
    """Minimal-parentheses concrete syntax; reparses to an equal formula."""
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, TrueConst):
        return "true"
    if isinstance(f, FalseConst):
        return "false"
    if isinstance(f, WeakNext):
        # weak next has no surface syntax; print the strong-next dual
        return format_formula(Not(Next(Not(f.arg))))
    if isinstance(f, Not):
        return "!" + _wrap(f.arg, _PREC_UNARY)
    if isinstance(f, Next):
        return "X " + _wrap(f.arg, _PREC_UNARY)
    if isinstance(f, Globally):
        return "G " + _wrap(f.arg, _PREC_UNARY)
    if isinstance(f, Eventually):
        return "F " + _wrap(f.arg, _PREC_UNARY)
    if isinstance(f, (Until, WeakUntil)):
        op = "U" if isinstance(f, Until) else "W"
        left = _wrap(f.left, _PREC_UNTIL + 1)
        right = _wrap(f.right, _PREC_UNTIL)
        return f"{left} {op} {right}"
    if isinstance(f, And):
        return f"{_wrap(f.left, _PREC_AND)} & {_wrap(f.right, _PREC_AND + 1)}"
    if isinstance(f, Or):
        return f"{_wrap(f.left, _PREC_OR)} | {_wrap(f.right, _PREC_OR + 1)}"
    if isinstance(f, Implies):
        return f"{_wrap(f.left, _PREC_IMPLIES + 1)} -> {_wrap(f.right, _PREC_IMPLIES)}"
    raise TypeError(f"unknown formula node {type(f).__name__}")


def _wrap(f: Formula, min_prec: int) -> str:
    s = format_formula(f)
    if _prec(f) < min_prec:
        return f"({s})"
    return s
