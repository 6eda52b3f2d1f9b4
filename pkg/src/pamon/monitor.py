"""Per-instance online enforcement with four-valued verdicts.

Each workflow instance is an immutable MonitorState. Every incoming
request is classified by the verdict its grant would produce and is
denied exactly when that verdict is FALSE, i.e. when no completion of
the extended trace could still achieve the purpose; granting therefore
never dooms an instance. Between FALSE and the two temporary values,
TRUE is recognized by showing that no sequence of grantable steps can
lead the instance back out of satisfaction; that refinement runs on
the grounded instance space and degrades to a coarse three-way
classification when grounding is over budget.

An instance with no granted request yet never counts as satisfying its
purpose, whatever the formula says about zero-length suffixes, so a
fresh instance is TEMP_FALSE when the purpose is achievable and FALSE
otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple

from .automata import (
    GroundingCapError,
    GroundSystem,
    initial_configs,
    reachable_accepting,
    step_configs,
)
from .compiler import (
    PurposeFormula,
    SymbolicAutomaton,
    build_pre_automaton,
    build_purpose_formula,
    specialize,
)
from .policy import InstanceTrace, Policy, PolicyError, Request, validate_request

__all__ = [
    "Verdict",
    "Decision",
    "MonitorError",
    "CompiledPurpose",
    "MonitorState",
    "compile_purpose",
    "init_instance",
    "step",
    "verdict",
    "close_instance",
    "rebind_instance",
    "adopt_granted",
]


class Verdict(enum.Enum):
    """Four-valued runtime judgment of a possibly unfinished trace."""

    TRUE = "true"
    TEMP_TRUE = "temp_true"
    TEMP_FALSE = "temp_false"
    FALSE = "false"


class Decision(enum.Enum):
    GRANT = "GRANT"
    DENY = "DENY"


class MonitorError(PolicyError):
    """Instance protocol misuse: wrong instance, frozen instance, bad close."""


@dataclass
class CompiledPurpose:
    """Everything reusable across instances of one purpose.

    ``ground`` drops to None once grounding exceeds its budget; this
    purpose's verdicts are coarse from then on (TRUE is never reported).
    """

    purpose: str
    pf: PurposeFormula
    pre: SymbolicAutomaton
    automaton: SymbolicAutomaton
    ground: Optional[GroundSystem]
    coarse: bool = False


def compile_purpose(
    p: Policy, purpose: str, *, grounding_cap: int = 10**6
) -> CompiledPurpose:
    """Build the specialized automaton and ground space for one purpose."""
    pf = build_purpose_formula(p, purpose)
    pre = build_pre_automaton(pf)
    a = specialize(pre, p)
    try:
        ground: Optional[GroundSystem] = GroundSystem(a, p, cap=grounding_cap)
        coarse = False
    except GroundingCapError:
        ground = None
        coarse = True
    return CompiledPurpose(purpose, pf, pre, a, ground, coarse)


@dataclass(frozen=True)
class MonitorState:
    """Immutable snapshot of one instance: trace, configurations, verdict.

    ``coarse`` records whether the cached verdict skipped the
    falsifiability refinement (a would-be TRUE shows as TEMP_TRUE).
    """

    wid: str
    purpose: str
    compiled: CompiledPurpose
    policy: Policy
    configs: frozenset
    trace: InstanceTrace
    cached_verdict: Verdict
    policy_version: int = 0
    frozen: bool = False
    coarse: bool = False

    @property
    def automaton(self) -> SymbolicAutomaton:
        return self.compiled.automaton


def _classify(compiled: CompiledPurpose, configs: frozenset) -> Tuple[Verdict, bool]:
    """Verdict of a satisfiable nonempty-trace instance, plus coarseness."""
    sat_now = any(c.state in compiled.automaton.accepting for c in configs)
    if compiled.ground is not None:
        try:
            falsifiable = compiled.ground.falsifiable(configs)
        except GroundingCapError:
            compiled.ground = None
            compiled.coarse = True
        else:
            if not falsifiable:
                return Verdict.TRUE, False
            return (Verdict.TEMP_TRUE if sat_now else Verdict.TEMP_FALSE), False
    return (Verdict.TEMP_TRUE if sat_now else Verdict.TEMP_FALSE), True


def _verdict_of(
    compiled: CompiledPurpose, p: Policy, wid: str, configs: frozenset, nonempty: bool
) -> Tuple[Verdict, bool]:
    """Classify a trace from its live configurations, plus coarseness."""
    a = compiled.automaton
    if not nonempty:
        # An instance with no granted request never satisfies its purpose.
        achievable = reachable_accepting(a, p, configs, wid=wid, min_len=1) is not None
        return (Verdict.TEMP_FALSE if achievable else Verdict.FALSE), False
    if reachable_accepting(a, p, configs, wid=wid) is None:
        return Verdict.FALSE, False
    return _classify(compiled, configs)


def init_instance(
    p: Policy,
    purpose: str,
    wid: str,
    *,
    compiled: Optional[CompiledPurpose] = None,
    grounding_cap: int = 10**6,
    policy_version: int = 0,
) -> MonitorState:
    """Open a fresh instance; its verdict reflects the empty trace."""
    if compiled is None:
        compiled = compile_purpose(p, purpose, grounding_cap=grounding_cap)
    elif compiled.purpose != purpose:
        raise MonitorError(
            f"compiled purpose {compiled.purpose!r} does not match {purpose!r}"
        )
    configs = initial_configs(compiled.automaton)
    v, _ = _verdict_of(compiled, p, wid, configs, nonempty=False)
    return MonitorState(
        wid=wid,
        purpose=purpose,
        compiled=compiled,
        policy=p,
        configs=configs,
        trace=InstanceTrace(wid, purpose),
        cached_verdict=v,
        policy_version=policy_version,
    )


def step(s: MonitorState, r: Request) -> Tuple[Decision, Verdict, MonitorState]:
    """Decide one request; a denial leaves the state untouched."""
    if s.frozen:
        raise MonitorError(f"instance {s.wid!r} is closed")
    if r.wid != s.wid:
        raise MonitorError(f"request wid {r.wid!r} does not match instance {s.wid!r}")
    if r.purpose != s.purpose:
        raise MonitorError(
            f"request purpose {r.purpose!r} does not match instance {s.purpose!r}"
        )
    validate_request(s.policy, r)
    hyp = step_configs(s.compiled.automaton, s.policy, s.configs, r)
    v, coarse = _verdict_of(s.compiled, s.policy, s.wid, hyp, nonempty=True)
    if v is Verdict.FALSE:
        return Decision.DENY, Verdict.FALSE, s
    s2 = replace(
        s,
        configs=hyp,
        trace=s.trace.append(r),
        cached_verdict=v,
        coarse=coarse,
    )
    return Decision.GRANT, v, s2


def verdict(s: MonitorState) -> Verdict:
    """Current classification of the granted trace; pure read."""
    return s.cached_verdict


def close_instance(s: MonitorState) -> MonitorState:
    """Freeze an instance whose trace currently satisfies its purpose."""
    if s.frozen:
        raise MonitorError(f"instance {s.wid!r} is already closed")
    if s.cached_verdict not in (Verdict.TRUE, Verdict.TEMP_TRUE):
        raise MonitorError(
            f"cannot close {s.wid!r}: verdict is {s.cached_verdict.value}"
        )
    return replace(s, frozen=True)


def rebind_instance(
    s: MonitorState,
    p: Policy,
    policy_version: int,
    *,
    compiled: Optional[CompiledPurpose] = None,
) -> MonitorState:
    """Re-evaluate an instance against a new policy by replaying its grants.

    A formerly granted request the new policy no longer authorizes
    leaves the replayed instance unsatisfiable: the verdict drops to
    FALSE and every further request is denied.
    """
    if compiled is None:
        compiled = compile_purpose(p, s.purpose)
    elif compiled.purpose != s.purpose:
        raise MonitorError(
            f"compiled purpose {compiled.purpose!r} does not match {s.purpose!r}"
        )
    a = compiled.automaton
    configs = initial_configs(a)
    for r in s.trace.requests:
        configs = step_configs(a, p, configs, r)
    v, coarse = _verdict_of(compiled, p, s.wid, configs, nonempty=bool(s.trace.requests))
    return replace(
        s,
        compiled=compiled,
        policy=p,
        configs=configs,
        cached_verdict=v,
        policy_version=policy_version,
        coarse=coarse,
    )


def adopt_granted(s: MonitorState, requests: Iterable[Request]) -> MonitorState:
    """Extend an instance with requests already granted under an earlier
    policy snapshot.

    No grant decision is re-made; the configurations and verdict are
    rebuilt under the instance's current policy, so a request the
    current policy would not authorize leaves the instance FALSE.
    """
    requests = tuple(requests)
    if not requests:
        return s
    if s.frozen:
        raise MonitorError(f"instance {s.wid!r} is closed")
    a = s.compiled.automaton
    configs = s.configs
    trace = s.trace
    for r in requests:
        configs = step_configs(a, s.policy, configs, r)
        trace = trace.append(r)
    v, coarse = _verdict_of(s.compiled, s.policy, s.wid, configs, nonempty=True)
    return replace(s, configs=configs, trace=trace, cached_verdict=v, coarse=coarse)
