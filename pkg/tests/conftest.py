"""Shared fixtures: the job hunting policy and its golden trace."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pamon.compiler import build_pre_automaton, build_purpose_formula, specialize
from pamon.policy import load_policy_file, parse_trace

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def jobhunting_policy():
    return load_policy_file(FIXTURES / "jobhunting.facts")


@pytest.fixture(scope="session")
def onlybob_policy():
    return load_policy_file(FIXTURES / "onlybob.facts")


@pytest.fixture(scope="session")
def jobhunting_pf(jobhunting_policy):
    return build_purpose_formula(jobhunting_policy, "jobHunting")


@pytest.fixture(scope="session")
def jobhunting_automaton(jobhunting_policy, jobhunting_pf):
    return specialize(build_pre_automaton(jobhunting_pf), jobhunting_policy)


@pytest.fixture(scope="session")
def onlybob_automaton(onlybob_policy):
    pf = build_purpose_formula(onlybob_policy, "jobHunting")
    return specialize(build_pre_automaton(pf), onlybob_policy)


@pytest.fixture(scope="session")
def jobhunting_compiled(jobhunting_policy):
    from pamon.monitor import compile_purpose

    return compile_purpose(jobhunting_policy, "jobHunting")


@pytest.fixture(scope="session")
def onlybob_compiled(onlybob_policy):
    from pamon.monitor import compile_purpose

    return compile_purpose(onlybob_policy, "jobHunting")


@pytest.fixture(scope="session")
def golden_requests():
    return parse_trace((FIXTURES / "golden.trace").read_text())


@pytest.fixture()
def fixtures_dir():
    return FIXTURES
