"""Propositional automata for finite-trace formulas.

States are sets of outstanding obligations (subformulas that must hold
from the current instant on). Expanding an obligation against a letter
yields the disjunctive choices of what must hold at the next instant,
each obligation marked strong (a next instant must exist) or weak.
A state accepts at end of word when every obligation holds on the
zero-length suffix.

Two bookkeeping formulas keep that acceptance rule exact:

- ``_SOME_STEP`` (false on the empty suffix, true anywhere else) is
  added when a strong mark carries only obligations that would hold on
  the empty suffix, so the word cannot end there.
- ``_NO_STEP`` (true on the empty suffix, false anywhere else) is
  disjoined onto weak obligations that would fail on the empty suffix,
  so the word may end there.
"""

from __future__ import annotations

from typing import Iterable, List, Sequence

from .formulas import (
    And,
    Atom,
    Eventually,
    FalseConst,
    Formula,
    Globally,
    Next,
    Not,
    Or,
    TrueConst,
    Until,
    WeakNext,
    WeakUntil,
    format_formula,
    holds_on_empty,
    nnf,
)

__all__ = ["PropNFA", "PropDFA", "build_nfa", "determinize", "product_nonempty"]

_TRUE = TrueConst()
_FALSE = FalseConst()
_SOME_STEP = Until(_TRUE, _TRUE)
_NO_STEP = WeakUntil(_FALSE, _FALSE)


def _expand(f: Formula, letter: frozenset, memo: dict) -> list:
    """Choices for satisfying f at an instant reading ``letter``.

    Each choice is a frozenset of (strong, obligation) marks for the
    next instant; an empty list means f cannot hold here.
    """
    key = (f, letter)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(f, Atom):
        out = [frozenset()] if f.name in letter else []
    elif isinstance(f, TrueConst):
        out = [frozenset()]
    elif isinstance(f, FalseConst):
        out = []
    elif isinstance(f, Not):
        if not isinstance(f.arg, Atom):
            raise ValueError("expansion requires negation normal form")
        out = [] if f.arg.name in letter else [frozenset()]
    elif isinstance(f, And):
        out = [
            c1 | c2
            for c1 in _expand(f.left, letter, memo)
            for c2 in _expand(f.right, letter, memo)
        ]
    elif isinstance(f, Or):
        out = _expand(f.left, letter, memo) + [
            c
            for c in _expand(f.right, letter, memo)
            if c not in _expand(f.left, letter, memo)
        ]
    elif isinstance(f, Next):
        out = [frozenset([(True, f.arg)])]
    elif isinstance(f, WeakNext):
        out = [frozenset([(False, f.arg)])]
    elif isinstance(f, Until):
        out = _expand(f.right, letter, memo) + [
            c | {(True, f)} for c in _expand(f.left, letter, memo)
        ]
    elif isinstance(f, WeakUntil):
        out = _expand(f.right, letter, memo) + [
            c | {(False, f)} for c in _expand(f.left, letter, memo)
        ]
    elif isinstance(f, Globally):
        out = [c | {(False, f)} for c in _expand(f.arg, letter, memo)]
    elif isinstance(f, Eventually):
        out = _expand(f.arg, letter, memo) + [frozenset([(True, f)])]
    else:
        raise TypeError(f"unknown formula node {type(f).__name__}")
    seen, dedup = set(), []
    for c in out:
        if c not in seen:
            seen.add(c)
            dedup.append(c)
    memo[key] = dedup
    return dedup


def _normalize(marks: frozenset) -> frozenset:
    """Successor obligation set from one combined choice of marks."""
    succ = set()
    for strong, h in marks:
        if strong:
            if holds_on_empty(h):
                succ.add(_SOME_STEP)
                if not isinstance(h, TrueConst):
                    succ.add(h)
            else:
                succ.add(h)
        else:
            if holds_on_empty(h):
                if not isinstance(h, TrueConst):
                    succ.add(h)
            elif isinstance(h, FalseConst):
                succ.add(_NO_STEP)
            else:
                succ.add(Or(h, _NO_STEP))
    return frozenset(succ)


def _state_successors(state: frozenset, letter: frozenset, memo: dict) -> set:
    """All successor obligation sets of a state on a letter."""
    combos = [frozenset()]
    for g in state:
        choices = _expand(g, letter, memo)
        if not choices:
            return set()
        combos = [c | extra for c in combos for extra in choices]
        if len(combos) > 4096:
            combos = list(set(combos))
    return {_normalize(c) for c in set(combos)}


def _is_accepting(state: frozenset) -> bool:
    return all(holds_on_empty(g) for g in state)


def _state_key(state: frozenset) -> tuple:
    """Canonical sort key; set iteration order is process-dependent."""
    return tuple(sorted(format_formula(g) for g in state))


class PropNFA:
    """Nondeterministic automaton over an explicit letter alphabet."""

    def __init__(self, letters, states, accepting, transitions):
        self.letters = tuple(letters)
        self.letter_set = frozenset(self.letters)
        self.states = states  # list of obligation frozensets; 0 is initial
        self.initial = 0
        self.accepting = frozenset(accepting)
        self.transitions = transitions  # {state: {letter: frozenset(states)}}

    @property
    def accepts_empty(self) -> bool:
        return self.initial in self.accepting

    def successors(self, state_index: int, letter: frozenset) -> frozenset:
        return self.transitions[state_index].get(letter, frozenset())

    def accepts(self, word: Sequence[Iterable[str]]) -> bool:
        """Membership of a (possibly empty) word; foreign letters reject."""
        current = {self.initial}
        for raw in word:
            letter = frozenset(raw)
            if letter not in self.letter_set:
                return False
            nxt: set = set()
            for s in current:
                nxt |= self.transitions[s].get(letter, frozenset())
            current = nxt
            if not current:
                return False
        return any(s in self.accepting for s in current)


def build_nfa(f: Formula, letters: Iterable[frozenset]) -> PropNFA:
    """Tableau construction; acceptance coincides with evaluation."""
    letters = [frozenset(l) for l in letters]
    f0 = nnf(f)
    initial = frozenset() if isinstance(f0, TrueConst) else frozenset([f0])
    memo: dict = {}
    index = {initial: 0}
    states: List[frozenset] = [initial]
    transitions: dict = {0: {}}
    frontier = [initial]
    while frontier:
        nxt_frontier = []
        for state in frontier:
            si = index[state]
            for letter in letters:
                succs = _state_successors(state, letter, memo)
                if not succs:
                    continue
                refs = set()
                for succ in sorted(succs, key=_state_key):
                    if succ not in index:
                        index[succ] = len(states)
                        states.append(succ)
                        transitions[index[succ]] = {}
                        nxt_frontier.append(succ)
                    refs.add(index[succ])
                transitions[si][letter] = frozenset(refs)
        frontier = nxt_frontier
    accepting = frozenset(i for i, s in enumerate(states) if _is_accepting(s))
    return PropNFA(letters, states, accepting, transitions)


class PropDFA:
    """Deterministic automaton from subset construction; total over letters."""

    def __init__(self, letters, states, accepting, transitions):
        self.letters = tuple(letters)
        self.letter_set = frozenset(self.letters)
        self.states = states  # list of frozensets of NFA state indices
        self.initial = 0
        self.accepting = frozenset(accepting)
        self.transitions = transitions  # {state: {letter: state}}

    @property
    def accepts_empty(self) -> bool:
        return self.initial in self.accepting

    def step(self, state_index: int, letter: frozenset):
        return self.transitions[state_index].get(frozenset(letter))

    def accepts(self, word: Sequence[Iterable[str]]) -> bool:
        s = self.initial
        for raw in word:
            letter = frozenset(raw)
            if letter not in self.letter_set:
                return False
            s = self.transitions[s][letter]
        return s in self.accepting


def determinize(nfa: PropNFA) -> PropDFA:
    """Subset construction, including the explicit dead subset."""
    initial = frozenset([nfa.initial])
    index = {initial: 0}
    states: List[frozenset] = [initial]
    transitions: dict = {0: {}}
    frontier = [initial]
    while frontier:
        nxt_frontier = []
        for subset in frontier:
            si = index[subset]
            for letter in nfa.letters:
                succ: set = set()
                for s in subset:
                    succ |= nfa.transitions[s].get(letter, frozenset())
                succ = frozenset(succ)
                if succ not in index:
                    index[succ] = len(states)
                    states.append(succ)
                    transitions[index[succ]] = {}
                    nxt_frontier.append(succ)
                transitions[si][letter] = index[succ]
        frontier = nxt_frontier
    accepting = frozenset(
        i for i, subset in enumerate(states) if subset & nfa.accepting
    )
    return PropDFA(nfa.letters, states, accepting, transitions)


def product_nonempty(f: Formula, g: Formula, letters: Iterable[frozenset]) -> bool:
    """Is some nonempty word accepted by both formulas?

    On-the-fly product of the two tableaux; only reachable state pairs
    are expanded.
    """
    letters = [frozenset(l) for l in letters]
    memo: dict = {}

    def init(h: Formula) -> frozenset:
        h0 = nnf(h)
        return frozenset() if isinstance(h0, TrueConst) else frozenset([h0])

    start = (init(f), init(g))
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for sf, sg in frontier:
            for letter in letters:
                for succ_f in _state_successors(sf, letter, memo):
                    for succ_g in _state_successors(sg, letter, memo):
                        if _is_accepting(succ_f) and _is_accepting(succ_g):
                            return True
                        pair = (succ_f, succ_g)
                        if pair not in seen:
                            seen.add(pair)
                            nxt.append(pair)
        frontier = nxt
    return False
