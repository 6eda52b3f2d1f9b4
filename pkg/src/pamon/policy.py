"""Policy model: entities, authorization facts, workflows, and traces.

A policy bundles entity declarations (subjects, owners, objects,
actions, tasks, purposes), data-centric permissions ``dcp(owner,
object, purpose)``, rule-centric permissions ``rcp(subject, action,
object)``, task resource needs ``uses(task, action, object)``, duty
constraints ``sod``/``bod``, and one workflow definition per purpose.

Facts file: one whitespace-separated fact per line, ``#`` comments,
declarations before references. Workflow files: a ``tasks: ...;``
statement followed by ``constraint: <formula>;`` statements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .formulas import And, Formula, ParseError, TrueConst, atoms, format_formula, parse

__all__ = [
    "PolicyError",
    "UndeclaredEntityError",
    "Request",
    "WorkflowSpec",
    "InstanceTrace",
    "Policy",
    "parse_workflow",
    "format_workflow",
    "load_policy",
    "load_policy_file",
    "print_policy",
    "save_policy",
    "parse_trace",
    "format_trace",
    "authorized",
    "validate_request",
    "project_trace",
]

_NAME_KINDS = ("subject", "owner", "object", "action", "task", "purpose")


class PolicyError(ValueError):
    """Malformed or inconsistent policy input."""


class UndeclaredEntityError(PolicyError):
    """A request or fact names an entity the policy does not declare."""

    def __init__(self, field_name: str, value: str):
        self.field = field_name
        self.value = value
        super().__init__(f"undeclared {field_name}: {value!r}")


@dataclass(frozen=True)
class Request:
    """One access request: who does which task on whose data, and why."""

    wid: str
    subject: str
    task: str
    owner: str
    purpose: str


@dataclass(frozen=True)
class WorkflowSpec:
    """Task universe and temporal constraints of one workflow."""

    tasks: tuple
    constraints: tuple

    @property
    def formula(self) -> Formula:
        """Conjunction of all constraints (true when there are none)."""
        if not self.constraints:
            return TrueConst()
        f = self.constraints[0]
        for c in self.constraints[1:]:
            f = And(f, c)
        return f


@dataclass(frozen=True)
class InstanceTrace:
    """Granted requests of one workflow instance, in grant order."""

    wid: str
    purpose: str
    requests: tuple = ()

    def __post_init__(self):
        for r in self.requests:
            if r.wid != self.wid:
                raise PolicyError(f"request wid {r.wid!r} differs from instance {self.wid!r}")
            if r.purpose != self.purpose:
                raise PolicyError(
                    f"request purpose {r.purpose!r} differs from instance {self.purpose!r}"
                )

    def append(self, r: Request) -> "InstanceTrace":
        return InstanceTrace(self.wid, self.purpose, self.requests + (r,))


@dataclass(frozen=True)
class Policy:
    """Immutable policy snapshot."""

    subjects: tuple
    owners: tuple
    objects: tuple
    actions: tuple
    tasks: tuple
    purposes: tuple
    dcp: frozenset  # (owner, object, purpose)
    rcp: frozenset  # (subject, action, object)
    uses: frozenset  # (task, action, object)
    sod: frozenset  # (purpose, task1, task2), pair stored sorted
    bod: frozenset  # (purpose, task1, task2), pair stored sorted
    workflows: dict = field(default_factory=dict)  # purpose -> WorkflowSpec
    workflow_files: dict = field(default_factory=dict)  # purpose -> file name

    @cached_property
    def subject_set(self) -> frozenset:
        return frozenset(self.subjects)

    @cached_property
    def owner_set(self) -> frozenset:
        return frozenset(self.owners)

    @cached_property
    def task_set(self) -> frozenset:
        return frozenset(self.tasks)

    @cached_property
    def purpose_set(self) -> frozenset:
        return frozenset(self.purposes)

    @cached_property
    def _uses_by_task(self) -> dict:
        out: dict = {t: [] for t in self.tasks}
        for task, act, obj in sorted(self.uses):
            out[task].append((act, obj))
        return {t: tuple(v) for t, v in out.items()}

    def uses_for(self, task: str) -> tuple:
        """Action/object pairs the task needs, sorted; empty when none."""
        if task not in self._uses_by_task:
            raise UndeclaredEntityError("task", task)
        return self._uses_by_task[task]

    def workflow_for(self, purpose: str) -> WorkflowSpec:
        if purpose not in self.workflows:
            raise UndeclaredEntityError("purpose", purpose)
        return self.workflows[purpose]

    def sod_pairs(self, purpose: str) -> frozenset:
        return frozenset((t1, t2) for pu, t1, t2 in self.sod if pu == purpose)

    def bod_pairs(self, purpose: str) -> frozenset:
        return frozenset((t1, t2) for pu, t1, t2 in self.bod if pu == purpose)

    def duty_constraints(self, purpose: str) -> tuple:
        """Sorted (task1, task2, op) with op "!=" for sod and "=" for bod."""
        out = [(t1, t2, "!=") for t1, t2 in self.sod_pairs(purpose)]
        out += [(t1, t2, "=") for t1, t2 in self.bod_pairs(purpose)]
        return tuple(sorted(out))


# --- workflow files ----------------------------------------------------------


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.split("\n"))


def parse_workflow(text: str) -> WorkflowSpec:
    """Parse a workflow definition (tasks statement, then constraints)."""
    bare = _strip_comments(text)
    statements = [s.strip() for s in bare.split(";")]
    if statements and statements[-1] == "":
        statements.pop()
    if not statements or not statements[0].startswith("tasks:"):
        raise PolicyError("workflow must start with a 'tasks:' statement")
    task_src = statements[0][len("tasks:"):]
    tasks = tuple(t.strip() for t in task_src.split(",") if t.strip())
    if not tasks:
        raise PolicyError("workflow declares no tasks")
    if len(set(tasks)) != len(tasks):
        raise PolicyError("duplicate task in workflow tasks statement")
    constraints = []
    for s in statements[1:]:
        if not s:
            raise PolicyError("empty statement in workflow definition")
        if not s.startswith("constraint:"):
            raise PolicyError(f"expected 'constraint:' statement, got {s.split()[0]!r}")
        src = s[len("constraint:"):]
        try:
            f = parse(src)
        except ParseError as e:
            raise PolicyError(f"bad constraint formula: {e}") from e
        extra = atoms(f) - set(tasks)
        if extra:
            raise PolicyError(
                f"constraint references tasks outside the workflow: {sorted(extra)}"
            )
        constraints.append(f)
    return WorkflowSpec(tasks=tasks, constraints=tuple(constraints))


def format_workflow(spec: WorkflowSpec) -> str:
    lines = ["tasks: " + ", ".join(spec.tasks) + ";"]
    lines += [f"constraint: {format_formula(c)};" for c in spec.constraints]
    return "\n".join(lines) + "\n"


# --- facts files -------------------------------------------------------------


def load_policy(
    text: str,
    *,
    base_dir: Optional[Path] = None,
    workflow_loader: Optional[Callable[[str], Optional[str]]] = None,
) -> Policy:
    """Parse a facts text into a validated Policy.

    Workflow file contents are resolved through ``workflow_loader`` when
    given, else read from ``base_dir`` (default: current directory).
    """
    if workflow_loader is None:
        root = Path(base_dir) if base_dir is not None else Path(".")

        def workflow_loader(name: str) -> Optional[str]:
            p = root / name
            return p.read_text() if p.is_file() else None

    declared: dict = {kind: [] for kind in _NAME_KINDS}
    sets: dict = {kind: set() for kind in _NAME_KINDS}
    dcp, rcp, uses, sod, bod = set(), set(), set(), set(), set()
    workflows: dict = {}
    workflow_files: dict = {}

    def err(lineno, msg):
        raise PolicyError(f"{msg} (facts line {lineno})")

    def need(lineno, kind, name):
        if name not in sets[kind]:
            err(lineno, f"undeclared {kind} {name!r}")

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind in ("subject", "owner", "object", "action", "task"):
            if len(parts) != 2:
                err(lineno, f"'{kind}' takes one name")
            name = parts[1]
            if name in sets[kind]:
                err(lineno, f"duplicate {kind} {name!r}")
            declared[kind].append(name)
            sets[kind].add(name)
        elif kind == "purpose":
            if len(parts) != 3:
                err(lineno, "'purpose' takes a name and a workflow file")
            name, fname = parts[1], parts[2]
            if name in sets["purpose"]:
                err(lineno, f"duplicate purpose {name!r}")
            wf_text = workflow_loader(fname)
            if wf_text is None:
                err(lineno, f"cannot read workflow file {fname!r}")
            try:
                wf = parse_workflow(wf_text)
            except PolicyError as e:
                err(lineno, f"in workflow {fname!r}: {e}")
            missing = set(wf.tasks) - sets["task"]
            if missing:
                err(lineno, f"workflow {fname!r} uses undeclared tasks {sorted(missing)}")
            declared["purpose"].append(name)
            sets["purpose"].add(name)
            workflows[name] = wf
            workflow_files[name] = fname
        elif kind == "rcp":
            if len(parts) != 4:
                err(lineno, "'rcp' takes subject, action, object")
            need(lineno, "subject", parts[1])
            need(lineno, "action", parts[2])
            need(lineno, "object", parts[3])
            rcp.add((parts[1], parts[2], parts[3]))
        elif kind == "dcp":
            if len(parts) != 4:
                err(lineno, "'dcp' takes owner, object, purpose")
            need(lineno, "owner", parts[1])
            need(lineno, "object", parts[2])
            need(lineno, "purpose", parts[3])
            dcp.add((parts[1], parts[2], parts[3]))
        elif kind == "uses":
            if len(parts) != 4:
                err(lineno, "'uses' takes task, action, object")
            need(lineno, "task", parts[1])
            need(lineno, "action", parts[2])
            need(lineno, "object", parts[3])
            uses.add((parts[1], parts[2], parts[3]))
        elif kind in ("sod", "bod"):
            if len(parts) != 4:
                err(lineno, f"'{kind}' takes purpose, task, task")
            pu, t1, t2 = parts[1], parts[2], parts[3]
            need(lineno, "purpose", pu)
            need(lineno, "task", t1)
            need(lineno, "task", t2)
            if t1 == t2:
                err(lineno, f"'{kind}' needs two distinct tasks")
            wf = workflows[pu]
            outside = {t1, t2} - set(wf.tasks)
            if outside:
                err(lineno, f"'{kind}' tasks {sorted(outside)} not in workflow of {pu!r}")
            pair = (pu,) + tuple(sorted((t1, t2)))
            (sod if kind == "sod" else bod).add(pair)
        else:
            err(lineno, f"unknown fact kind {kind!r}")

    overlap = sod & bod
    if overlap:
        raise PolicyError(f"sod and bod overlap on pairs {sorted(overlap)}")

    return Policy(
        subjects=tuple(declared["subject"]),
        owners=tuple(declared["owner"]),
        objects=tuple(declared["object"]),
        actions=tuple(declared["action"]),
        tasks=tuple(declared["task"]),
        purposes=tuple(declared["purpose"]),
        dcp=frozenset(dcp),
        rcp=frozenset(rcp),
        uses=frozenset(uses),
        sod=frozenset(sod),
        bod=frozenset(bod),
        workflows=workflows,
        workflow_files=workflow_files,
    )


def load_policy_file(path) -> Policy:
    path = Path(path)
    return load_policy(path.read_text(), base_dir=path.parent)


def print_policy(p: Policy) -> str:
    """Facts text that reloads (with the same workflow files) to p."""
    lines = []
    for kind, names in (
        ("subject", p.subjects),
        ("owner", p.owners),
        ("object", p.objects),
        ("action", p.actions),
        ("task", p.tasks),
    ):
        lines += [f"{kind} {n}" for n in names]
    lines += [f"purpose {n} {p.workflow_files[n]}" for n in p.purposes]
    lines += [f"rcp {s} {a} {o}" for s, a, o in sorted(p.rcp)]
    lines += [f"dcp {o} {d} {pu}" for o, d, pu in sorted(p.dcp)]
    lines += [f"uses {t} {a} {o}" for t, a, o in sorted(p.uses)]
    lines += [f"sod {pu} {t1} {t2}" for pu, t1, t2 in sorted(p.sod)]
    lines += [f"bod {pu} {t1} {t2}" for pu, t1, t2 in sorted(p.bod)]
    return "\n".join(lines) + "\n"


def save_policy(p: Policy, directory) -> Path:
    """Write facts and workflow files under directory; returns facts path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for purpose, fname in p.workflow_files.items():
        (directory / fname).write_text(format_workflow(p.workflows[purpose]))
    facts = directory / "policy.facts"
    facts.write_text(print_policy(p))
    return facts


# --- traces ------------------------------------------------------------------


def parse_trace(text: str) -> list:
    """Parse request lines: WID SUBJECT TASK OWNER PURPOSE, # comments."""
    out = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise PolicyError(
                f"request needs 5 fields, got {len(parts)} (line {lineno})"
            )
        out.append(Request(*parts))
    return out


def format_trace(requests: Sequence[Request]) -> str:
    return "".join(
        f"{r.wid} {r.subject} {r.task} {r.owner} {r.purpose}\n" for r in requests
    )


# --- semantics ---------------------------------------------------------------


def validate_request(p: Policy, r: Request) -> None:
    """Raise UndeclaredEntityError naming the offending field, if any."""
    if r.subject not in p.subject_set:
        raise UndeclaredEntityError("subject", r.subject)
    if r.task not in p.task_set:
        raise UndeclaredEntityError("task", r.task)
    if r.owner not in p.owner_set:
        raise UndeclaredEntityError("owner", r.owner)
    if r.purpose not in p.purpose_set:
        raise UndeclaredEntityError("purpose", r.purpose)


def authorized(p: Policy, subject: str, task: str, owner: str, purpose: str) -> bool:
    """Both permission routes hold for every resource the task uses.

    Data-centric: the owner released each object for this purpose.
    Rule-centric: the subject may perform each action on each object.
    Vacuously true for tasks that use no resources.
    """
    if subject not in p.subject_set:
        raise UndeclaredEntityError("subject", subject)
    if owner not in p.owner_set:
        raise UndeclaredEntityError("owner", owner)
    if purpose not in p.purpose_set:
        raise UndeclaredEntityError("purpose", purpose)
    return all(
        (owner, obj, purpose) in p.dcp and (subject, act, obj) in p.rcp
        for act, obj in p.uses_for(task)
    )


def project_trace(p: Policy, requests: Sequence[Request]) -> list:
    """Propositional projection of one instance's request trace.

    Each instant becomes the singleton of its task when the request is
    in-workflow and authorized, else the empty letter.
    """
    if not requests:
        return []
    wid, purpose = requests[0].wid, requests[0].purpose
    letters = []
    for r in requests:
        if r.wid != wid:
            raise PolicyError(f"mixed wids in trace: {wid!r} and {r.wid!r}")
        if r.purpose != purpose:
            raise PolicyError(f"mixed purposes in trace: {purpose!r} and {r.purpose!r}")
        validate_request(p, r)
        wf = p.workflow_for(purpose)
        if r.task in wf.tasks and authorized(p, r.subject, r.task, r.owner, r.purpose):
            letters.append(frozenset([r.task]))
        else:
            letters.append(frozenset())
    return letters
