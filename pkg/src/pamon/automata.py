"""Run symbolic automata against concrete requests.

A configuration pairs an automaton state with the subject bindings
accumulated for duty-constrained tasks. Stepping a configuration set
by a request keeps exactly the runs whose guards the request passes.
``reachable_accepting`` searches for an executable completion (the
core of both offline achievability and the online grant rule), and
``GroundSystem`` explores the graph of configuration sets under all
declared requests to decide whether satisfaction can still be lost.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product
from time import perf_counter
from typing import Iterable, Optional

from .compiler import SymbolicAutomaton
from .policy import Policy, Request

__all__ = [
    "BindingStore",
    "Configuration",
    "SearchStats",
    "GroundingCapError",
    "GroundSystem",
    "initial_configs",
    "step_configs",
    "reachable_accepting",
]


class GroundingCapError(RuntimeError):
    """The ground configuration graph exceeds the configured budget."""


def _pair_ok(op: str, a: str, b: str) -> bool:
    return (a == b) if op == "=" else (a != b)


@dataclass(frozen=True)
class BindingStore:
    """Immutable map from subject variables to subjects."""

    bindings: tuple = ()  # sorted (var, subject) pairs

    def get(self, var: str) -> Optional[str]:
        for v, s in self.bindings:
            if v == var:
                return s
        return None

    def bound_vars(self) -> frozenset:
        return frozenset(v for v, _s in self.bindings)

    def bind(self, var: str, subject: str, var_constraints: Iterable) -> Optional["BindingStore"]:
        """Extended store, self when already bound so, None on conflict.

        Constraints are checked only between variables that are both
        bound; a pair involving a still-unbound variable cannot fail yet.
        """
        current = self.get(var)
        if current is not None:
            return self if current == subject else None
        merged = dict(self.bindings)
        merged[var] = subject
        for v1, v2, op in var_constraints:
            s1, s2 = merged.get(v1), merged.get(v2)
            if s1 is None or s2 is None:
                continue
            if not _pair_ok(op, s1, s2):
                return None
        return BindingStore(tuple(sorted(merged.items())))


@dataclass(frozen=True)
class Configuration:
    state: int
    store: BindingStore


@dataclass
class SearchStats:
    states_explored: int = 0
    substitutions_tried: int = 0
    wall_time_s: float = 0.0


def initial_configs(a: SymbolicAutomaton) -> frozenset:
    return frozenset([Configuration(a.initial, BindingStore())])


def step_configs(a: SymbolicAutomaton, p: Policy, configs: frozenset, r: Request) -> frozenset:
    """Configurations surviving the request; empty means no run is left."""
    out = set()
    for cfg in configs:
        for e in a.edges_from(cfg.state, r.task):
            g = e.guard
            ok = all(
                (r.subject, act, obj) in p.rcp and (r.owner, obj, r.purpose) in p.dcp
                for act, obj in g.auth_checks
            )
            if not ok:
                continue
            store = cfg.store
            if g.subject_var is not None:
                store = store.bind(g.subject_var, r.subject, a.var_constraints)
                if store is None:
                    continue
            out.add(Configuration(e.dst, store))
    return frozenset(out)


def _task_guards(a: SymbolicAutomaton) -> dict:
    """task -> (subject_var, auth_checks); uniform across a task's edges."""
    out = {}
    for e in a.edges:
        out.setdefault(e.guard.task, (e.guard.subject_var, e.guard.auth_checks))
    return out


def _bfs_completion(a, cfg, nu, violated, guards, subject_pick, owner_pick, subj_auth, stats):
    """Shortest guard-feasible path from cfg to acceptance under nu.

    Nodes carry the set of duty variables already used, so a pair nu
    violates only blocks a task once the partner task has occurred.
    Returns a list of (task, subject, owner) steps, or None.
    """
    start_used = cfg.store.bound_vars()
    if any(v1 in start_used and v2 in start_used for v1, v2 in violated):
        return None
    start = (cfg.state, start_used)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        state, used = node
        for task in a.tasks:
            edges = a.edges_from(state, task)
            if not edges:
                continue
            var, _checks = guards[task]
            if var is not None:
                subject = nu[var]
                if not subj_auth[task, subject]:
                    continue
                new_used = used | {var}
                if any(v1 in new_used and v2 in new_used for v1, v2 in violated):
                    continue
            else:
                subject = subject_pick[task]
                if subject is None:
                    continue
                new_used = used
            owner = owner_pick[task]
            if owner is None:
                continue
            for e in edges:
                key = (e.dst, new_used)
                if key in parent:
                    continue
                parent[key] = (node, (task, subject, owner))
                if stats is not None:
                    stats.states_explored += 1
                if e.dst in a.accepting:
                    steps = []
                    cur = key
                    while parent[cur] is not None:
                        cur, label = parent[cur]
                        steps.append(label)
                    steps.reverse()
                    return steps
                queue.append(key)
    return None


def reachable_accepting(
    a: SymbolicAutomaton,
    p: Policy,
    configs: frozenset,
    *,
    wid: str = "wid",
    min_len: int = 0,
    stats: Optional[SearchStats] = None,
) -> Optional[list]:
    """Executable request sequence completing the purpose, or None.

    Returns [] when a configuration is already accepting (unless
    min_len=1, which demands at least one step and so decides whether
    any nonempty satisfying trace exists from scratch). Substitutions
    of duty-constrained subjects are enumerated in declaration order,
    so results are deterministic.
    """
    t0 = perf_counter()
    try:
        if min_len <= 0 and any(c.state in a.accepting for c in configs):
            return []
        if not configs or not p.subjects or not p.owners:
            return None
        guards = _task_guards(a)
        # lookup tables shared by every substitution
        subject_pick = {}
        owner_pick = {}
        subj_auth = {}
        for task, (var, checks) in guards.items():
            owner_pick[task] = next(
                (
                    o
                    for o in p.owners
                    if all((o, obj, a.purpose) in p.dcp for _act, obj in checks)
                ),
                None,
            )
            subject_pick[task] = next(
                (
                    s
                    for s in p.subjects
                    if all((s, act, obj) in p.rcp for act, obj in checks)
                ),
                None,
            )
            if var is not None:
                for s in p.subjects:
                    subj_auth[task, s] = all((s, act, obj) in p.rcp for act, obj in checks)
        # canonical order: set iteration depends on the process hash seed
        ordered = sorted(configs, key=lambda c: (c.state, c.store.bindings))
        for combo in product(p.subjects, repeat=len(a.across_vars)):
            nu = dict(zip(a.across_vars, combo))
            if stats is not None:
                stats.substitutions_tried += 1
            violated = [
                (v1, v2)
                for v1, v2, op in a.var_constraints
                if not _pair_ok(op, nu[v1], nu[v2])
            ]
            best = None
            for cfg in ordered:
                if any(nu[v] != s for v, s in cfg.store.bindings):
                    continue
                steps = _bfs_completion(
                    a, cfg, nu, violated, guards, subject_pick, owner_pick, subj_auth, stats
                )
                if steps is not None and (best is None or len(steps) < len(best)):
                    best = steps
            if best is not None:
                return [
                    Request(wid, subject, task, owner, a.purpose)
                    for task, subject, owner in best
                ]
        return None
    finally:
        if stats is not None:
            stats.wall_time_s += perf_counter() - t0


class GroundSystem:
    """Graph of configuration sets under every declared request.

    Steps that keep some satisfying completion form the grantable
    moves; ``falsifiable`` asks whether they can lead to a set with no
    accepting configuration. Exploration is budgeted by ``cap``: the
    up-front configuration estimate and the number of distinct sets
    visited must both stay within it.
    """

    def __init__(self, a: SymbolicAutomaton, p: Policy, *, cap: int = 10**6):
        estimate = len(a.states) * (len(p.subjects) + 1) ** len(a.across_vars)
        if estimate > cap:
            raise GroundingCapError(
                f"estimated {estimate} ground configurations exceed the cap of {cap}"
            )
        self.automaton = a
        self.policy = p
        self.cap = cap
        self.letters = [
            (s, t, o) for s in p.subjects for t in a.tasks for o in p.owners
        ]
        self._explored: set = set()
        self._steps: dict = {}
        self._sat: dict = {}
        self._fals: dict = {}

    def step(self, configs: frozenset, letter: tuple) -> frozenset:
        key = (configs, letter)
        if key not in self._steps:
            subject, task, owner = letter
            r = Request("_ground", subject, task, owner, self.automaton.purpose)
            self._steps[key] = step_configs(self.automaton, self.policy, configs, r)
        return self._steps[key]

    def satisfied_now(self, configs: frozenset) -> bool:
        return any(c.state in self.automaton.accepting for c in configs)

    def satisfiable(self, configs: frozenset) -> bool:
        if configs not in self._sat:
            self._sat[configs] = (
                reachable_accepting(self.automaton, self.policy, configs) is not None
            )
        return self._sat[configs]

    def _note(self, configs: frozenset) -> None:
        self._explored.add(configs)
        if len(self._explored) > self.cap:
            raise GroundingCapError(
                f"ground exploration exceeded the cap of {self.cap} sets"
            )

    def falsifiable(self, configs: frozenset) -> bool:
        """Can grantable steps reach a set with no accepting member?

        Candidates are tested as they are generated, so shallow
        evidence is found without expanding sibling branches.
        """
        if configs in self._fals:
            return self._fals[configs]
        found = not self.satisfied_now(configs)
        seen = {configs}
        self._note(configs)
        queue = deque([configs])
        while queue and not found:
            cur = queue.popleft()
            for letter in self.letters:
                nxt = self.step(cur, letter)
                if not nxt or nxt in seen:
                    continue
                if not self.satisfiable(nxt):
                    continue  # that step would be denied
                if not self.satisfied_now(nxt):
                    found = True
                    break
                seen.add(nxt)
                self._note(nxt)
                queue.append(nxt)
        if found:
            self._fals[configs] = True
        else:
            # nothing reachable from any visited set can be new evidence
            for s in seen:
                self._fals[s] = False
        return found
