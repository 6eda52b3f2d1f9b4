"""Offline decisions: can a purpose be achieved, and is one inside another?

``purpose_achievable`` solves the planning question for a purpose
against a policy: it searches the specialized automaton for an
executable satisfying trace and reports the witness plan together
with the subject assignment of duty-constrained tasks.

``sub_purpose`` compares purpose formulas: the smaller purpose is
included in the larger one when every trace achieving the larger
contains a suffix achieving the smaller, so pursuing the larger
purpose always realizes the smaller along the way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .automata import SearchStats, initial_configs, reachable_accepting
from .compiler import PurposeFormula, SymbolicAutomaton, build_pre_automaton, build_purpose_formula, specialize
from .policy import Policy
from .tableau import build_nfa

__all__ = ["AchievabilityResult", "purpose_achievable", "sub_purpose"]


@dataclass(frozen=True)
class AchievabilityResult:
    achievable: bool
    witness: tuple  # requests of a shortest found satisfying trace
    substitution: Optional[dict]  # subject variable -> subject, as used
    stats: SearchStats


def purpose_achievable(
    p: Policy,
    purpose: str,
    *,
    wid: str = "wsp",
    automaton: Optional[SymbolicAutomaton] = None,
    stats: Optional[SearchStats] = None,
) -> AchievabilityResult:
    """Search for a nonempty executable trace satisfying the purpose."""
    if automaton is None:
        pf = build_purpose_formula(p, purpose)
        automaton = specialize(build_pre_automaton(pf), p)
    stats = stats if stats is not None else SearchStats()
    plan = reachable_accepting(
        automaton, p, initial_configs(automaton), wid=wid, min_len=1, stats=stats
    )
    if plan is None:
        return AchievabilityResult(False, (), None, stats)
    task_var = {e.guard.task: e.guard.subject_var for e in automaton.edges}
    substitution = {}
    for r in plan:
        var = task_var.get(r.task)
        if var is not None:
            substitution[var] = r.subject
    return AchievabilityResult(True, tuple(plan), substitution, stats)


def sub_purpose(small: PurposeFormula, large: PurposeFormula) -> bool:
    """Does every trace achieving ``large`` realize ``small`` on the way?

    Checked on the purpose formulas alone (duty constraints do not
    narrow formula-level inclusion): no trace may satisfy ``large``
    while having no suffix that satisfies ``small``. Since models of
    ``large`` carry exactly one of its tasks per instant, one-hot
    letters over its task universe are the whole relevant alphabet.

    Search over subset pairs of the two tableau automata: the runs of
    the larger purpose, and the suffix runs of the smaller (a fresh
    run of the smaller starts at every position). A counterexample is
    a word the larger accepts while no suffix run of the smaller does.
    """
    letters = [frozenset([t]) for t in large.tasks]
    big = build_nfa(large.phi, letters)
    sml = build_nfa(small.phi, letters)

    def image(nfa, subset, letter):
        out: set = set()
        for s in subset:
            out |= nfa.transitions[s].get(letter, frozenset())
        return frozenset(out)

    start = (frozenset([big.initial]), frozenset())
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for runs, suffix_runs in frontier:
            for letter in big.letters:
                runs2 = image(big, runs, letter)
                if not runs2:
                    continue
                suffix2 = image(sml, suffix_runs | {sml.initial}, letter)
                if runs2 & big.accepting and not (suffix2 & sml.accepting):
                    return False
                pair = (runs2, suffix2)
                if pair not in seen:
                    seen.add(pair)
                    nxt.append(pair)
        frontier = nxt
    return True
