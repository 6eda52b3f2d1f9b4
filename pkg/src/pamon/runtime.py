"""Long-running enforcement engine with durable per-instance logs.

The engine owns one policy (facts file plus workflow directory) and a
log directory holding one append-only file per workflow instance.
Every decision is written and fsynced before it is returned, so a
restarted engine rebuilds exactly the instances it had acknowledged.

Log line grammar, one record per line:

    # OPEN <wid> <purpose>
    <wid> <subject> <task> <owner> <purpose> # verdict=<v> seq=<n>
    # DENY <wid> <subject> <task> <owner> <purpose> verdict=false
    # POLICY <version>
    # CLOSE <wid>

Grant lines double as replayable traces (the leading five fields are
the trace format). On startup each grant line after the last POLICY
marker is re-decided and must reproduce the recorded verdict and
sequence number; any mismatch, reordering, or malformed line refuses
startup with a CorruptLogError naming the file and line. Lines before
the last POLICY marker were decided under an earlier facts file, so
they are folded into the instance state without re-verification, the
same way a live reload rebinds an instance.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from .monitor import (
    CompiledPurpose,
    Decision,
    MonitorError,
    MonitorState,
    Verdict,
    adopt_granted,
    close_instance,
    compile_purpose,
    init_instance,
    rebind_instance,
    step,
)
from .policy import Policy, PolicyError, Request, load_policy, validate_request
from .wsp import AchievabilityResult, purpose_achievable

__all__ = [
    "CorruptLogError",
    "DecisionRecord",
    "EngineConfig",
    "PolicyEngine",
]

# Instance ids become log file names; keep them flat and portable.
_WID_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.\-]{0,119}\Z")

_CONFIG_KEYS = {"facts", "workflows", "logs", "grounding_cap", "bind", "verbosity"}


class CorruptLogError(RuntimeError):
    """An instance log cannot be replayed to a trustworthy state."""


@dataclass(frozen=True)
class DecisionRecord:
    """Outcome of one submitted request."""

    decision: Decision
    verdict: Verdict
    coarse: bool
    seq: int


@dataclass(frozen=True)
class EngineConfig:
    facts_path: Path
    workflow_dir: Path
    log_dir: Path
    grounding_cap: int = 10**6
    bind: str = "127.0.0.1:8000"
    verbosity: str = "info"

    @classmethod
    def from_json_file(cls, path) -> "EngineConfig":
        """Load a config; relative paths resolve against the file's directory."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise PolicyError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise PolicyError(f"config {path} must be a JSON object")
        unknown = sorted(set(data) - _CONFIG_KEYS)
        if unknown:
            raise PolicyError(f"unknown config keys: {', '.join(unknown)}")
        root = path.parent
        return cls(
            facts_path=root / data.get("facts", "facts.txt"),
            workflow_dir=root / data.get("workflows", "."),
            log_dir=root / data.get("logs", "logs"),
            grounding_cap=int(data.get("grounding_cap", 10**6)),
            bind=str(data.get("bind", "127.0.0.1:8000")),
            verbosity=str(data.get("verbosity", "info")),
        )


class PolicyEngine:
    """Thread-safe decision point over one policy and many instances.

    Submissions for one instance serialize on a per-instance lock;
    engine-wide state (policy, version, instance table) sits behind a
    separate short-held lock. A policy reload briefly stops the world
    by taking every instance lock in sorted order, so it never
    interleaves with an in-flight decision on a known instance.
    """

    def __init__(self, config: EngineConfig):
        if config.grounding_cap < 1:
            raise PolicyError("grounding cap must be a positive integer")
        if not config.facts_path.is_file():
            raise PolicyError(f"facts file not found: {config.facts_path}")
        if not config.workflow_dir.is_dir():
            raise PolicyError(f"workflow directory not found: {config.workflow_dir}")
        config.log_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._policy = load_policy(
            config.facts_path.read_text(encoding="utf-8"),
            base_dir=config.workflow_dir,
        )
        self._version = 1
        self._state_lock = threading.Lock()
        self._compiled_cache: Dict[str, CompiledPurpose] = {}
        self._instances: Dict[str, MonitorState] = {}
        self._locks: Dict[str, threading.Lock] = {}
        for path in sorted(config.log_dir.glob("*.log")):
            wid, state = self._replay_file(path)
            self._instances[wid] = state

    @property
    def version(self) -> int:
        return self._version

    @property
    def policy(self) -> Policy:
        return self._policy

    # ------------------------------------------------------------------
    # decisions

    def submit(self, r: Request) -> DecisionRecord:
        """Decide one request, durably logging the outcome first."""
        if not _WID_RE.fullmatch(r.wid):
            raise PolicyError(f"unusable workflow instance id: {r.wid!r}")
        lock = self._wid_lock(r.wid)
        with lock:
            while True:
                with self._state_lock:
                    p, version = self._policy, self._version
                    s = self._instances.get(r.wid)
                opened = False
                if s is None:
                    # Refuse before the OPEN line is written.
                    validate_request(p, r)
                    s = init_instance(
                        p,
                        r.purpose,
                        r.wid,
                        compiled=self._compiled(r.purpose, p, version),
                        policy_version=version,
                    )
                    opened = True
                elif s.policy_version != version:
                    s = rebind_instance(
                        s, p, version, compiled=self._compiled(s.purpose, p, version)
                    )
                decision, v, s2 = step(s, r)
                with self._state_lock:
                    if self._version != version:
                        # Policy swapped mid-decision (new instance race);
                        # recompute under the newer snapshot.
                        continue
                    self._instances[r.wid] = s2
                break
        lines = []
        if opened:
            lines.append(f"# OPEN {r.wid} {r.purpose}")
        seq = len(s2.trace.requests)
        if decision is Decision.GRANT:
            lines.append(
                f"{r.wid} {r.subject} {r.task} {r.owner} {r.purpose}"
                f" # verdict={v.value} seq={seq}"
            )
        else:
            lines.append(
                f"# DENY {r.wid} {r.subject} {r.task} {r.owner} {r.purpose}"
                " verdict=false"
            )
        self._append(r.wid, lines)
        return DecisionRecord(decision, v, s2.coarse, seq)

    def close(self, wid: str) -> MonitorState:
        """Freeze a satisfied instance and record the close."""
        lock = self._wid_lock(wid)
        with lock:
            while True:
                with self._state_lock:
                    p, version = self._policy, self._version
                    s = self._instances.get(wid)
                if s is None:
                    raise KeyError(wid)
                if s.policy_version != version:
                    s = rebind_instance(
                        s, p, version, compiled=self._compiled(s.purpose, p, version)
                    )
                s2 = close_instance(s)
                with self._state_lock:
                    if self._version != version:
                        continue
                    self._instances[wid] = s2
                break
        self._append(wid, [f"# CLOSE {wid}"])
        return s2

    def instance(self, wid: str) -> MonitorState:
        """Current state of a known instance; raises KeyError otherwise."""
        with self._state_lock:
            return self._instances[wid]

    def instances(self) -> Dict[str, MonitorState]:
        with self._state_lock:
            return dict(self._instances)

    def achievable(self, purpose: str) -> AchievabilityResult:
        with self._state_lock:
            p, version = self._policy, self._version
        compiled = self._compiled(purpose, p, version)
        return purpose_achievable(p, purpose, automaton=compiled.automaton)

    # ------------------------------------------------------------------
    # policy replacement

    def reload_text(self, text: str) -> int:
        """Replace the facts file; returns the new policy version.

        The new text is parsed first, so a rejected policy leaves the
        engine, the facts file, and every instance untouched. Accepted
        text is persisted atomically, the version is bumped, and every
        live instance log gains a POLICY marker; instances re-evaluate
        lazily on their next request.
        """
        new_policy = load_policy(text, base_dir=self.config.workflow_dir)
        with self._state_lock:
            wids = sorted(self._locks)
            locks = [self._locks[w] for w in wids]
        for l in locks:
            l.acquire()
        try:
            self._persist_facts(text)
            with self._state_lock:
                self._policy = new_policy
                self._version += 1
                version = self._version
                self._compiled_cache = {}
                live = sorted(self._instances)
            for wid in live:
                self._append(wid, [f"# POLICY {version}"])
            return version
        finally:
            for l in locks:
                l.release()

    def _persist_facts(self, text: str) -> None:
        path = self.config.facts_path
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    # ------------------------------------------------------------------
    # internals

    def _wid_lock(self, wid: str) -> threading.Lock:
        with self._state_lock:
            lock = self._locks.get(wid)
            if lock is None:
                lock = threading.Lock()
                self._locks[wid] = lock
            return lock

    def _compiled(self, purpose: str, p: Policy, version: int) -> CompiledPurpose:
        with self._state_lock:
            if self._version == version:
                c = self._compiled_cache.get(purpose)
                if c is not None:
                    return c
        c = compile_purpose(p, purpose, grounding_cap=self.config.grounding_cap)
        with self._state_lock:
            if self._version == version:
                return self._compiled_cache.setdefault(purpose, c)
        return c

    def _append(self, wid: str, lines: List[str]) -> None:
        path = self.config.log_dir / f"{wid}.log"
        with open(path, "a", encoding="utf-8") as f:
            f.write("".join(line + "\n" for line in lines))
            f.flush()
            os.fsync(f.fileno())

    # ------------------------------------------------------------------
    # startup replay

    def _replay_file(self, path: Path) -> Tuple[str, MonitorState]:
        wid_file = path.stem
        raw = path.read_text(encoding="utf-8").splitlines()

        def corrupt(lineno: int, msg: str) -> None:
            raise CorruptLogError(
                f"corrupt instance log {path.name}, line {lineno}: {msg}"
            )

        last_marker = 0
        for i, line in enumerate(raw, start=1):
            body = line.strip()
            if body.startswith("#") and body[1:].split()[:1] == ["POLICY"]:
                last_marker = i

        s: Optional[MonitorState] = None
        for lineno, line in enumerate(raw, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].split()
                tag = body[0] if body else ""
                if tag == "OPEN":
                    if len(body) != 3:
                        corrupt(lineno, "malformed OPEN line")
                    if s is not None:
                        corrupt(lineno, "second OPEN line")
                    wid, purpose = body[1], body[2]
                    if wid != wid_file:
                        corrupt(
                            lineno,
                            f"instance id {wid!r} does not match the file name",
                        )
                    try:
                        s = init_instance(
                            self._policy,
                            purpose,
                            wid,
                            compiled=self._compiled(purpose, self._policy, self._version),
                            policy_version=self._version,
                        )
                    except PolicyError as e:
                        corrupt(lineno, str(e))
                elif tag == "CLOSE":
                    if s is None:
                        corrupt(lineno, "CLOSE before OPEN")
                    if s.frozen:
                        corrupt(lineno, "second CLOSE line")
                    if lineno > last_marker:
                        try:
                            s = close_instance(s)
                        except MonitorError as e:
                            corrupt(lineno, str(e))
                    else:
                        # Closed under an earlier policy; keep it frozen.
                        s = replace(s, frozen=True)
                # DENY markers and free comments carry no state.
                continue
            if s is None:
                corrupt(lineno, "request before OPEN")
            head, _, tail = text.partition("#")
            fields = head.split()
            meta = dict(tok.split("=", 1) for tok in tail.split() if "=" in tok)
            if len(fields) != 5 or "verdict" not in meta or "seq" not in meta:
                corrupt(lineno, "malformed request line")
            r = Request(*fields)
            if lineno > last_marker:
                try:
                    decision, v, s = step(s, r)
                except PolicyError as e:
                    corrupt(lineno, str(e))
                if decision is not Decision.GRANT:
                    corrupt(lineno, "recorded grant is denied on replay")
                if v.value != meta["verdict"]:
                    corrupt(
                        lineno,
                        f"replayed verdict {v.value!r} does not match"
                        f" recorded {meta['verdict']!r}",
                    )
            else:
                try:
                    s = adopt_granted(s, [r])
                except PolicyError as e:
                    corrupt(lineno, str(e))
            if str(len(s.trace.requests)) != meta["seq"]:
                corrupt(lineno, f"sequence number {meta['seq']!r} out of order")
        if s is None:
            corrupt(1, "no OPEN line")
        return wid_file, s
