"""Engine lifecycle: durable logs, crash replay, policy reload, locking."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from pamon.monitor import Decision, MonitorError, Verdict
from pamon.policy import PolicyError, Request, UndeclaredEntityError
from pamon.runtime import CorruptLogError, EngineConfig, PolicyEngine


@pytest.fixture()
def env(tmp_path, fixtures_dir):
    facts = tmp_path / "facts.txt"
    facts.write_text((fixtures_dir / "jobhunting.facts").read_text())
    wfdir = tmp_path / "workflows"
    wfdir.mkdir()
    (wfdir / "jobhunting.workflow").write_text(
        (fixtures_dir / "jobhunting.workflow").read_text()
    )
    return EngineConfig(
        facts_path=facts, workflow_dir=wfdir, log_dir=tmp_path / "logs"
    )


@pytest.fixture()
def onlybob_text(fixtures_dir):
    return (fixtures_dir / "onlybob.facts").read_text()


def req(wid, r):
    return Request(wid, r.subject, r.task, r.owner, r.purpose)


def log_lines(cfg, wid):
    return (cfg.log_dir / f"{wid}.log").read_text().splitlines()


class TestEngineConfig:
    def test_from_json_resolves_relative_paths(self, tmp_path, fixtures_dir):
        (tmp_path / "facts.txt").write_text((fixtures_dir / "jobhunting.facts").read_text())
        wfdir = tmp_path / "wf"
        wfdir.mkdir()
        (wfdir / "jobhunting.workflow").write_text(
            (fixtures_dir / "jobhunting.workflow").read_text()
        )
        cfg_path = tmp_path / "engine.json"
        cfg_path.write_text(json.dumps({"facts": "facts.txt", "workflows": "wf", "logs": "logs"}))
        cfg = EngineConfig.from_json_file(cfg_path)
        assert cfg.facts_path == tmp_path / "facts.txt"
        assert cfg.workflow_dir == wfdir
        assert cfg.log_dir == tmp_path / "logs"
        assert cfg.grounding_cap == 10**6
        assert cfg.bind == "127.0.0.1:8000"

    def test_missing_facts_refused(self, tmp_path):
        cfg = EngineConfig(
            facts_path=tmp_path / "absent.txt",
            workflow_dir=tmp_path,
            log_dir=tmp_path / "logs",
        )
        with pytest.raises(PolicyError):
            PolicyEngine(cfg)

    def test_nonpositive_cap_refused(self, tmp_path, env):
        with pytest.raises(PolicyError):
            PolicyEngine(
                EngineConfig(
                    facts_path=env.facts_path,
                    workflow_dir=env.workflow_dir,
                    log_dir=env.log_dir,
                    grounding_cap=0,
                )
            )


class TestSubmit:
    def test_first_request_opens_and_grants(self, env, golden_requests):
        engine = PolicyEngine(env)
        assert engine.version == 1
        rec = engine.submit(golden_requests[0])
        assert rec.decision is Decision.GRANT
        assert rec.verdict is Verdict.TEMP_FALSE
        assert rec.seq == 1 and not rec.coarse
        lines = log_lines(env, "w1")
        assert lines[0] == "# OPEN w1 jobHunting"
        assert lines[1] == "w1 bob interview sam jobHunting # verdict=temp_false seq=1"

    def test_golden_scenario_end_to_end(self, env, golden_requests):
        engine = PolicyEngine(env)
        for i, r in enumerate(golden_requests, start=1):
            rec = engine.submit(r)
            assert rec.decision is Decision.GRANT and rec.seq == i
        assert rec.verdict is Verdict.TEMP_TRUE
        closed = engine.close("w1")
        assert closed.frozen
        assert log_lines(env, "w1")[-1] == "# CLOSE w1"
        assert engine.instance("w1").frozen

    def test_denied_request_leaves_audit_line_only(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        rec = engine.submit(Request("w1", "bob", "findJobs", "sam", "jobHunting"))
        assert rec.decision is Decision.DENY
        assert rec.verdict is Verdict.FALSE
        assert rec.seq == 1  # granted count unchanged
        assert "# DENY w1 bob findJobs sam jobHunting verdict=false" in log_lines(env, "w1")
        assert len(engine.instance("w1").trace.requests) == 1

    def test_seq_counts_only_grants(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        engine.submit(Request("w1", "bob", "findJobs", "sam", "jobHunting"))
        rec = engine.submit(golden_requests[1])
        assert rec.seq == 2

    def test_bad_wid_rejected(self, env, golden_requests):
        engine = PolicyEngine(env)
        for wid in ("../evil", "a/b", ".hidden", ""):
            with pytest.raises(PolicyError):
                engine.submit(req(wid, golden_requests[0]))
        assert not list(env.log_dir.glob("*evil*"))

    def test_unknown_purpose_writes_nothing(self, env):
        engine = PolicyEngine(env)
        with pytest.raises(UndeclaredEntityError):
            engine.submit(Request("w9", "bob", "interview", "sam", "mystery"))
        assert not (env.log_dir / "w9.log").exists()

    def test_closed_instance_rejects_requests(self, env, golden_requests):
        engine = PolicyEngine(env)
        for r in golden_requests:
            engine.submit(r)
        engine.close("w1")
        before = log_lines(env, "w1")
        with pytest.raises(MonitorError):
            engine.submit(golden_requests[0])
        assert log_lines(env, "w1") == before

    def test_close_unknown_wid(self, env):
        engine = PolicyEngine(env)
        with pytest.raises(KeyError):
            engine.close("nosuch")

    def test_instances_are_independent(self, env, golden_requests):
        engine = PolicyEngine(env)
        for r in golden_requests:
            engine.submit(req("wa", r))
        engine.submit(req("wb", golden_requests[0]))
        assert engine.instance("wa").cached_verdict is Verdict.TEMP_TRUE
        assert engine.instance("wb").cached_verdict is Verdict.TEMP_FALSE
        assert (env.log_dir / "wa.log").exists() and (env.log_dir / "wb.log").exists()

    def test_achievability_passthrough(self, env):
        engine = PolicyEngine(env)
        assert engine.achievable("jobHunting").achievable

    def test_concurrent_distinct_wids(self, env, golden_requests):
        engine = PolicyEngine(env)
        wids = [f"w{i}" for i in range(8)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            recs = list(pool.map(lambda w: engine.submit(req(w, golden_requests[0])), wids))
        assert all(r.decision is Decision.GRANT for r in recs)
        assert all((env.log_dir / f"{w}.log").exists() for w in wids)


class TestReplay:
    def test_restart_reproduces_states(self, env, golden_requests):
        engine = PolicyEngine(env)
        for r in golden_requests:
            engine.submit(r)
        engine.submit(Request("w1", "bob", "findJobs", "sam", "jobHunting"))  # denied
        engine.close("w1")
        for r in golden_requests[:3]:
            engine.submit(req("w2", r))
        before1, before2 = engine.instance("w1"), engine.instance("w2")

        engine2 = PolicyEngine(env)
        after1, after2 = engine2.instance("w1"), engine2.instance("w2")
        for before, after in ((before1, after1), (before2, after2)):
            assert after.trace == before.trace
            assert after.cached_verdict is before.cached_verdict
            assert after.configs == before.configs
            assert after.frozen == before.frozen

    def test_every_log_prefix_replays_to_recorded_verdict(self, env, golden_requests, tmp_path):
        engine = PolicyEngine(env)
        for r in golden_requests:
            engine.submit(r)
        full = log_lines(env, "w1")
        grant_lines = [l for l in full if not l.startswith("#")]
        assert len(grant_lines) == 6
        for k in range(1, 7):
            prefix_dir = tmp_path / f"prefix{k}"
            prefix_dir.mkdir()
            kept = [full[0]] + grant_lines[:k]
            (prefix_dir / "w1.log").write_text("\n".join(kept) + "\n")
            cfg = EngineConfig(
                facts_path=env.facts_path, workflow_dir=env.workflow_dir, log_dir=prefix_dir
            )
            inst = PolicyEngine(cfg).instance("w1")
            recorded = grant_lines[k - 1].split("verdict=")[1].split()[0]
            assert inst.cached_verdict.value == recorded
            assert len(inst.trace.requests) == k

    def test_deny_audit_lines_are_ignored(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        engine.submit(Request("w1", "bob", "findJobs", "sam", "jobHunting"))
        engine2 = PolicyEngine(env)
        assert len(engine2.instance("w1").trace.requests) == 1

    def test_garbage_line_refuses_start(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        path = env.log_dir / "w1.log"
        path.write_text(path.read_text() + "xyzzy not a request\n")
        with pytest.raises(CorruptLogError) as e:
            PolicyEngine(env)
        assert "w1.log" in str(e.value) and "3" in str(e.value)

    def test_tampered_verdict_refuses_start(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        path = env.log_dir / "w1.log"
        path.write_text(path.read_text().replace("verdict=temp_false", "verdict=true"))
        with pytest.raises(CorruptLogError) as e:
            PolicyEngine(env)
        assert "w1.log" in str(e.value)

    def test_reordered_grants_refuse_start(self, env, golden_requests):
        engine = PolicyEngine(env)
        for r in golden_requests[:2]:
            engine.submit(r)
        path = env.log_dir / "w1.log"
        lines = path.read_text().splitlines()
        lines[1], lines[2] = lines[2], lines[1]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptLogError):
            PolicyEngine(env)

    def test_premature_close_refuses_start(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        path = env.log_dir / "w1.log"
        path.write_text(path.read_text() + "# CLOSE w1\n")
        with pytest.raises(CorruptLogError):
            PolicyEngine(env)

    def test_wrong_file_name_refuses_start(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        (env.log_dir / "w1.log").rename(env.log_dir / "other.log")
        with pytest.raises(CorruptLogError):
            PolicyEngine(env)


class TestReload:
    def test_reload_unchanged_facts_is_idempotent(self, env, golden_requests):
        engine = PolicyEngine(env)
        for r in golden_requests[:3]:
            engine.submit(r)
        v_before = engine.instance("w1").cached_verdict
        version = engine.reload_text(env.facts_path.read_text())
        assert version == 2 and engine.version == 2
        rec = engine.submit(golden_requests[3])
        assert rec.decision is Decision.GRANT
        assert rec.verdict is Verdict.TEMP_FALSE
        inst = engine.instance("w1")
        assert inst.policy_version == 2
        assert v_before is Verdict.TEMP_FALSE

    def test_reload_persists_facts_atomically(self, env, onlybob_text):
        engine = PolicyEngine(env)
        engine.reload_text(onlybob_text)
        assert env.facts_path.read_text() == onlybob_text

    def test_reload_revocation_denies_future_requests(
        self, env, golden_requests, onlybob_text
    ):
        engine = PolicyEngine(env)
        for r in golden_requests[:3]:
            engine.submit(r)
        engine.reload_text(onlybob_text)
        assert "# POLICY 2" in log_lines(env, "w1")
        rec = engine.submit(golden_requests[3])
        assert rec.decision is Decision.DENY
        assert engine.instance("w1").cached_verdict is Verdict.FALSE

    def test_restart_after_reload_boots(self, env, golden_requests, onlybob_text):
        engine = PolicyEngine(env)
        for r in golden_requests[:3]:
            engine.submit(r)
        engine.reload_text(onlybob_text)
        engine2 = PolicyEngine(env)
        inst = engine2.instance("w1")
        assert len(inst.trace.requests) == 3
        assert inst.cached_verdict is Verdict.FALSE

    def test_bad_facts_rejected_and_state_kept(self, env, golden_requests):
        engine = PolicyEngine(env)
        engine.submit(golden_requests[0])
        old = env.facts_path.read_text()
        with pytest.raises(PolicyError):
            engine.reload_text("subject bob\nsubject bob\n")
        assert engine.version == 1
        assert env.facts_path.read_text() == old
        rec = engine.submit(golden_requests[1])
        assert rec.decision is Decision.GRANT
