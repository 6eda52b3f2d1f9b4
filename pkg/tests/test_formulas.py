"""Formula AST, parser, printer, and finite-trace evaluation tests.

Expected values are frozen from hand evaluation and cross-checked
against the independent reference evaluator in oracles.py.
"""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from pamon.formulas import (
    And,
    Atom,
    Eventually,
    FalseConst,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    ParseError,
    TrueConst,
    Until,
    WeakNext,
    WeakUntil,
    atoms,
    evaluate,
    format_formula,
    holds_on_empty,
    inject_single_task_constraint,
    negate_nnf,
    parse,
    subformulas,
)

from oracles import eval_at, eval_empty


def words(alphabet, max_len):
    """All nonempty words over subsets of alphabet, up to max_len letters."""
    letters = []
    alphabet = sorted(alphabet)
    for mask in range(2 ** len(alphabet)):
        letters.append(frozenset(a for i, a in enumerate(alphabet) if mask >> i & 1))
    out = []
    frontier = [[]]
    for _ in range(max_len):
        frontier = [w + [l] for w in frontier for l in letters]
        out.extend(frontier)
    return out


def _recursive_formulas(leaves, max_leaves):
    def extend(children):
        return st.one_of(
            st.builds(Not, children),
            st.builds(Next, children),
            st.builds(Globally, children),
            st.builds(Eventually, children),
            st.builds(And, children, children),
            st.builds(Or, children, children),
            st.builds(Implies, children, children),
            st.builds(Until, children, children),
            st.builds(WeakUntil, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


formulas_st = _recursive_formulas(
    st.sampled_from([Atom("a"), Atom("b"), Atom("c"), TrueConst(), FalseConst()]),
    max_leaves=12,
)

small_formulas_st = _recursive_formulas(
    st.sampled_from([Atom("a"), Atom("b"), TrueConst(), FalseConst()]),
    max_leaves=6,
)


class TestParser:
    def test_until_with_negated_left(self):
        assert parse("!getExms U optIn") == Until(Not(Atom("getExms")), Atom("optIn"))

    def test_mixed_binary_and_temporal(self):
        assert parse("F findJobs & (findJobs -> X propJobs)") == And(
            Eventually(Atom("findJobs")),
            Implies(Atom("findJobs"), Next(Atom("propJobs"))),
        )

    def test_unary_binds_tighter_than_until(self):
        assert parse("!a U b") == Until(Not(Atom("a")), Atom("b"))
        assert parse("X a U b") == Until(Next(Atom("a")), Atom("b"))

    def test_until_binds_tighter_than_and(self):
        assert parse("a U b & c") == And(Until(Atom("a"), Atom("b")), Atom("c"))

    def test_and_binds_tighter_than_or(self):
        assert parse("a | b & c") == Or(Atom("a"), And(Atom("b"), Atom("c")))

    def test_implies_is_weakest_and_right_associative(self):
        assert parse("a -> b -> c") == Implies(Atom("a"), Implies(Atom("b"), Atom("c")))
        assert parse("a | b -> c") == Implies(Or(Atom("a"), Atom("b")), Atom("c"))

    def test_until_right_associative(self):
        assert parse("a U b U c") == Until(Atom("a"), Until(Atom("b"), Atom("c")))

    def test_weak_until_and_constants(self):
        assert parse("a W false") == WeakUntil(Atom("a"), FalseConst())
        assert parse("true") == TrueConst()

    def test_comments_and_whitespace(self):
        assert parse("a &  # trailing words\n b") == And(Atom("a"), Atom("b"))

    def test_atom_names(self):
        assert parse("_x9 | Ab_c") == Or(Atom("_x9"), Atom("Ab_c"))

    def test_error_reports_position_and_expectations(self):
        with pytest.raises(ParseError) as e:
            parse("a &")
        assert e.value.line == 1
        assert e.value.column == 4
        assert e.value.expected

    def test_error_on_unclosed_paren(self):
        with pytest.raises(ParseError) as e:
            parse("(a | b")
        assert any(")" in t for t in e.value.expected)

    def test_error_on_garbage_token(self):
        with pytest.raises(ParseError):
            parse("a @ b")

    def test_error_position_on_later_line(self):
        with pytest.raises(ParseError) as e:
            parse("a &\n & b")
        assert e.value.line == 2


class TestPrinter:
    def test_simple_forms(self):
        assert format_formula(Until(Not(Atom("a")), Atom("b"))) == "!a U b"
        assert format_formula(And(Or(Atom("a"), Atom("b")), Atom("c"))) == "(a | b) & c"
        assert format_formula(Implies(Atom("a"), Implies(Atom("b"), Atom("c")))) == "a -> b -> c"

    def test_weak_next_prints_as_negated_strong_next(self):
        # WeakNext never comes out of the parser; it prints as its dual
        # so the printed form reparses to a semantically equal formula.
        printed = format_formula(WeakNext(Atom("a")))
        reparsed = parse(printed)
        for w in words({"a"}, 3):
            assert eval_at(reparsed, w, 0) == eval_at(WeakNext(Atom("a")), w, 0)

    @settings(max_examples=200, deadline=None)
    @given(formulas_st)
    def test_round_trip(self, f):
        assert parse(format_formula(f)) == f


class TestEvaluate:
    def test_strong_next_needs_a_next_instant(self):
        assert evaluate(Next(Atom("a")), [{"a"}], 0) is False

    def test_until_requires_the_right_side_to_occur(self):
        f = Until(Not(Atom("getExms")), Atom("optIn"))
        assert evaluate(f, [{"interview"}, {"optOut"}, {"getExp"}], 0) is False

    def test_until_fires_on_first_right_occurrence(self):
        f = Until(Not(Atom("getExms")), Atom("optIn"))
        assert evaluate(f, [{"interview"}, {"optIn"}, {"getExms"}], 0) is True

    def test_eventually_and_globally(self):
        assert evaluate(Eventually(Atom("a")), [set(), set(), {"a"}], 0) is True
        assert evaluate(Globally(Atom("a")), [{"a"}, {"a"}], 0) is True
        assert evaluate(Globally(Atom("a")), [{"a"}, set()], 0) is False

    def test_positions_other_than_zero(self):
        f = Next(Atom("a"))
        assert evaluate(f, [set(), set(), {"a"}], 1) is True
        assert evaluate(f, [set(), set(), {"a"}], 2) is False

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            evaluate(Atom("a"), [], 0)

    def test_position_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            evaluate(Atom("a"), [{"a"}], 1)

    @settings(max_examples=100, deadline=None)
    @given(small_formulas_st)
    def test_matches_reference_evaluator(self, f):
        for w in words({"a", "b"}, 3):
            assert evaluate(f, w, 0) == eval_at(f, w, 0)


class TestNegation:
    def test_negated_eventually_is_globally_not(self):
        assert negate_nnf(Eventually(Atom("a"))) == Globally(Not(Atom("a")))

    def test_negated_atom(self):
        assert negate_nnf(Atom("a")) == Not(Atom("a"))

    @settings(max_examples=120, deadline=None)
    @given(small_formulas_st)
    def test_complement_is_exclusive(self, f):
        g = negate_nnf(f)
        for w in words({"a", "b"}, 3):
            assert eval_at(f, w, 0) != eval_at(g, w, 0)

    @settings(max_examples=120, deadline=None)
    @given(small_formulas_st)
    def test_double_negation_is_semantically_identity(self, f):
        g = negate_nnf(negate_nnf(f))
        for w in words({"a", "b"}, 3):
            assert eval_at(f, w, 0) == eval_at(g, w, 0)

    def test_complement_on_longer_words(self):
        # Spot-check the exclusivity on all words up to length 6 for a
        # temporal nesting that exercises every negation rule.
        f = Until(Atom("a"), WeakUntil(Atom("b"), Next(Atom("a"))))
        g = negate_nnf(f)
        for w in words({"a", "b"}, 6):
            assert eval_at(f, w, 0) != eval_at(g, w, 0)


class TestWeakUntil:
    @settings(max_examples=80, deadline=None)
    @given(small_formulas_st, small_formulas_st)
    def test_weak_until_decomposition(self, f, g):
        w_form = WeakUntil(f, g)
        alt = Or(Until(f, g), Globally(f))
        for w in words({"a", "b"}, 3):
            assert eval_at(w_form, w, 0) == eval_at(alt, w, 0)

    def test_weak_until_decomposition_long_words(self):
        f, g = Atom("a"), And(Atom("b"), Next(Atom("a")))
        w_form, alt = WeakUntil(f, g), Or(Until(f, g), Globally(f))
        for w in words({"a", "b"}, 6):
            assert evaluate(w_form, w, 0) == evaluate(alt, w, 0)


class TestEmptySuffix:
    @settings(max_examples=150, deadline=None)
    @given(formulas_st)
    def test_matches_reference(self, f):
        assert holds_on_empty(f) == eval_empty(f)

    def test_pinned_values(self):
        assert holds_on_empty(Atom("a")) is False
        assert holds_on_empty(Next(TrueConst())) is False
        assert holds_on_empty(WeakNext(FalseConst())) is True
        assert holds_on_empty(Globally(Atom("a"))) is True
        assert holds_on_empty(Eventually(TrueConst())) is False
        assert holds_on_empty(WeakUntil(FalseConst(), FalseConst())) is True


class TestSingleTaskConstraint:
    def test_single_task(self):
        assert inject_single_task_constraint({"a"}) == And(
            Globally(Atom("a")), Globally(TrueConst())
        )

    def test_two_tasks(self):
        got = inject_single_task_constraint({"b", "a"})
        assert got == And(
            Globally(Or(Atom("a"), Atom("b"))),
            Globally(
                And(
                    Implies(Atom("a"), Not(Atom("b"))),
                    Implies(Atom("b"), Not(Atom("a"))),
                )
            ),
        )

    def test_semantics_three_tasks(self):
        f = inject_single_task_constraint({"a", "b", "c"})
        assert evaluate(f, [{"a"}, {"c"}, {"b"}], 0) is True
        assert evaluate(f, [{"a"}, {"b", "c"}], 0) is False
        assert evaluate(f, [{"a"}, set()], 0) is False

    def test_empty_task_set_rejected(self):
        with pytest.raises(ValueError):
            inject_single_task_constraint(set())


class TestHelpers:
    def test_atoms(self):
        assert atoms(parse("F a & (b -> X c)")) == frozenset({"a", "b", "c"})

    def test_subformulas_counts_each_distinct_node_once(self):
        f = parse("a U (a & b)")
        subs = subformulas(f)
        assert Atom("a") in subs and f in subs
        assert len(subs) == 4
