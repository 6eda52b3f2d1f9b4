"""Compile purposes into symbolic automata.

Stage one joins a purpose's workflow constraints with the
one-task-per-instant rule and records which tasks need which
resources and which task pairs carry duty constraints. Stage two
builds the task-shaped automaton whose edges carry subject
variables for duty-constrained tasks. Stage three specializes the
edges with the concrete action/object checks of a policy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable

from .formulas import And, Formula, atoms, inject_single_task_constraint
from .policy import Policy, PolicyError
from .tableau import build_nfa

__all__ = [
    "PurposeFormula",
    "Guard",
    "Edge",
    "SymbolicAutomaton",
    "build_purpose_formula",
    "build_pre_automaton",
    "specialize",
    "export_dot",
]


@dataclass(frozen=True)
class PurposeFormula:
    """A purpose's temporal formula plus its resource and duty context."""

    purpose: str
    tasks: tuple
    phi: Formula
    task_link: dict  # task -> ((action, object), ...)
    sod_pairs: frozenset  # (task1, task2) sorted pairs, distinct subjects
    bod_pairs: frozenset  # (task1, task2) sorted pairs, same subject


@dataclass(frozen=True)
class Guard:
    """Edge guard: the task, its subject variable, and resource checks.

    ``subject_var`` is None for tasks free of duty constraints; those
    edges only require some authorized subject to exist. ``auth_checks``
    is empty until the automaton is specialized against a policy.
    """

    task: str
    subject_var: object = None
    auth_checks: tuple = ()


@dataclass(frozen=True)
class Edge:
    src: int
    guard: Guard
    dst: int


@dataclass(frozen=True)
class SymbolicAutomaton:
    """Finite automaton over task steps with subject-variable guards."""

    purpose: str
    tasks: tuple
    states: tuple
    initial: int
    accepting: frozenset
    edges: tuple
    across_vars: tuple  # one shared subject variable per duty-constrained task
    var_constraints: tuple  # (var1, var2, op) with op "!=" or "="
    specialized: bool = False

    @cached_property
    def _edges_by_src_task(self) -> dict:
        out: dict = {}
        for e in self.edges:
            out.setdefault((e.src, e.guard.task), []).append(e)
        return {k: tuple(v) for k, v in out.items()}

    def edges_from(self, state: int, task: str) -> tuple:
        return self._edges_by_src_task.get((state, task), ())


def build_purpose_formula(p: Policy, purpose: str) -> PurposeFormula:
    """Join a purpose's workflow with the one-task-per-instant rule."""
    wf = p.workflow_for(purpose)
    missing = set(wf.tasks) - p.task_set
    if missing:
        raise PolicyError(
            f"workflow of {purpose!r} names undeclared tasks: {sorted(missing)}"
        )
    for c in wf.constraints:
        extra = atoms(c) - set(wf.tasks)
        if extra:
            raise PolicyError(
                f"constraint of {purpose!r} leaves the workflow tasks: {sorted(extra)}"
            )
    phi = And(wf.formula, inject_single_task_constraint(wf.tasks))
    task_link = {t: p.uses_for(t) for t in wf.tasks}
    sod = p.sod_pairs(purpose)
    bod = p.bod_pairs(purpose)
    for t1, t2 in sorted(sod | bod):
        if t1 not in wf.tasks or t2 not in wf.tasks:
            raise PolicyError(
                f"duty constraint ({t1}, {t2}) names tasks outside {purpose!r}"
            )
    return PurposeFormula(
        purpose=purpose,
        tasks=wf.tasks,
        phi=phi,
        task_link=task_link,
        sod_pairs=sod,
        bod_pairs=bod,
    )


def _subject_var(task: str) -> str:
    return f"sub_{task}"


def build_pre_automaton(pf: PurposeFormula) -> SymbolicAutomaton:
    """Automaton of pf.phi over one-task letters, with duty variables.

    Every reachable instant of pf.phi carries exactly one task, so the
    alphabet is one letter per task and each transition becomes one
    guarded edge.
    """
    letters = [frozenset([t]) for t in pf.tasks]
    nfa = build_nfa(pf.phi, letters)
    constrained = set()
    for t1, t2 in pf.sod_pairs | pf.bod_pairs:
        constrained.add(t1)
        constrained.add(t2)
    var_of = {t: _subject_var(t) for t in pf.tasks if t in constrained}
    edges = []
    for src in range(len(nfa.states)):
        for letter in letters:
            (task,) = letter
            for dst in sorted(nfa.successors(src, letter)):
                edges.append(Edge(src, Guard(task, var_of.get(task)), dst))
    var_constraints = [
        (var_of[t1], var_of[t2], "!=") for t1, t2 in sorted(pf.sod_pairs)
    ]
    var_constraints += [
        (var_of[t1], var_of[t2], "=") for t1, t2 in sorted(pf.bod_pairs)
    ]
    return SymbolicAutomaton(
        purpose=pf.purpose,
        tasks=pf.tasks,
        states=tuple(range(len(nfa.states))),
        initial=nfa.initial,
        accepting=nfa.accepting,
        edges=tuple(edges),
        across_vars=tuple(var_of[t] for t in pf.tasks if t in var_of),
        var_constraints=tuple(var_constraints),
        specialized=False,
    )


def specialize(a: SymbolicAutomaton, p: Policy) -> SymbolicAutomaton:
    """Attach each task's action/object checks from the policy.

    Returns a new automaton over the same state graph; applying it
    twice with the same policy is a no-op.
    """
    checks = {}
    for e in a.edges:
        task = e.guard.task
        if task not in checks:
            checks[task] = p.uses_for(task)  # raises on undeclared tasks
    edges = tuple(
        replace(e, guard=replace(e.guard, auth_checks=checks[e.guard.task]))
        for e in a.edges
    )
    return replace(a, edges=edges, specialized=True)


def _guard_label(g: Guard) -> str:
    label = g.task
    if g.subject_var is not None:
        label += f" [{g.subject_var}]"
    if g.auth_checks:
        label += " / " + ", ".join(f"{act}({obj})" for act, obj in g.auth_checks)
    return label


def export_dot(a: SymbolicAutomaton) -> str:
    """GraphViz rendering of the automaton with its variable constraints."""
    if a.var_constraints:
        summary = "; ".join(f"{v1} {op} {v2}" for v1, v2, op in a.var_constraints)
    else:
        summary = "none"
    lines = [
        f'digraph "{a.purpose}" {{',
        f"  // constraints: {summary}",
        "  rankdir=LR;",
        '  __start [shape=point, label=""];',
        f"  __start -> q{a.initial};",
    ]
    for s in a.states:
        shape = "doublecircle" if s in a.accepting else "circle"
        lines.append(f"  q{s} [shape={shape}, label=\"q{s}\"];")
    for e in a.edges:
        lines.append(f'  q{e.src} -> q{e.dst} [label="{_guard_label(e.guard)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
