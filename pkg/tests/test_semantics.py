import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TOY_SIG, random_formula
from rwtn.fol import (Apply, Atom, Constant, Exists, ForAll, Implies, Not, Signature, Variable,
                      free_variables, parse_formula)
from rwtn.grounders import (ConstantPredicate, LinearFunctionParams, LtnPredicate,
                            LtnPredicateParams, PartWholeTable, TablePredicate, ground_function)
from rwtn.semantics import (EPS, Domain, EvaluationError, GroundedTheory, Grounding, Program,
                            eval_connectives, eval_formula, harmonic_mean, land, limplies, lnot,
                            lor, mereology_constraints, mereology_count, satisfiability)

GRID = np.linspace(0.0, 1.0, 101)
A, B = np.meshgrid(GRID, GRID, indexing="ij")


# -- connectives ------------------------------------------------------------

def test_connective_examples():
    assert eval_connectives("and", 0.7, 0.6) == pytest.approx(0.3)
    assert eval_connectives("and", 0.2, 0.3) == 0.0
    assert eval_connectives("or", 0.7, 0.6) == 1.0
    assert eval_connectives("or", 0.2, 0.3) == pytest.approx(0.5)
    assert eval_connectives("implies", 0.9, 0.4) == pytest.approx(0.5)
    assert eval_connectives("implies", 0.3, 0.8) == 1.0
    assert eval_connectives("not", 0.25) == 0.75


def test_truth_tables_on_grid():
    # scalar reference, one grid point at a time
    ref_and = np.array([[max(0.0, a + b - 1.0) for b in GRID] for a in GRID])
    ref_or = np.array([[min(1.0, a + b) for b in GRID] for a in GRID])
    ref_imp = np.array([[min(1.0, 1.0 - a + b) for b in GRID] for a in GRID])
    assert np.max(np.abs(land(A, B) - ref_and)) <= 1e-15
    assert np.max(np.abs(lor(A, B) - ref_or)) <= 1e-15
    assert np.max(np.abs(limplies(A, B) - ref_imp)) <= 1e-15
    assert np.max(np.abs(lnot(GRID) - (1.0 - GRID))) <= 1e-15


def test_laws_on_grid():
    assert np.array_equal(land(A, B), land(B, A))
    assert np.array_equal(lor(A, B), lor(B, A))
    assert np.max(np.abs(lnot(lnot(GRID)) - GRID)) <= 1e-15
    assert np.max(np.abs(limplies(A, B) - lor(lnot(A), B))) <= 1e-15
    # monotone in each argument along the grid
    assert np.all(np.diff(land(A, B), axis=0) >= 0)
    assert np.all(np.diff(lor(A, B), axis=0) >= 0)
    assert np.all(np.diff(limplies(A, B), axis=0) <= 0)
    assert np.all(np.diff(limplies(A, B), axis=1) >= 0)


def test_associativity_on_grid():
    g = np.linspace(0.0, 1.0, 21)
    a, b, c = np.meshgrid(g, g, g, indexing="ij")
    assert np.max(np.abs(land(land(a, b), c) - land(a, land(b, c)))) <= 1e-15
    assert np.max(np.abs(lor(lor(a, b), c) - lor(a, lor(b, c)))) <= 1e-15


def test_harmonic_mean_examples():
    assert harmonic_mean([1.0, 1.0, 1.0]) == 1.0
    assert harmonic_mean([1.0, 0.25]) == pytest.approx(0.4)
    assert harmonic_mean([0.5, 0.5]) == pytest.approx(0.5)
    assert harmonic_mean([0.0, 1.0]) == pytest.approx(2.0 / (1.0 / EPS + 1.0))
    with pytest.raises(EvaluationError):
        harmonic_mean([])


# -- evaluation examples -------------------------------------------------------

def _unary_sig(*preds, binary=()):
    return Signature.build([], list(preds), list(binary))


def test_forall_examples():
    sig = _unary_sig("P")
    f = parse_formula("forall x: P(x)", sig)
    dom = np.arange(10.0).reshape(5, 2)
    g = Grounding({}, {}, {"P": ConstantPredicate(1.0, 1, 2)})
    assert eval_formula(f, g, dom) == 1.0
    g = Grounding({}, {}, {"P": ConstantPredicate(0.5, 1, 2)})
    assert eval_formula(f, g, dom[:2]) == pytest.approx(0.5)


def test_exists_is_max():
    sig = _unary_sig("P")
    f = parse_formula("exists x: P(x)", sig)
    dom = np.array([[0.1], [0.7], [0.3]])
    g = Grounding({}, {}, {"P": TablePredicate(lambda r: r[0], 1, 1)})
    assert eval_formula(f, g, dom) == pytest.approx(0.7)


def test_asymmetry_matches_brute_force():
    sig = _unary_sig(binary=["partOf"])
    f = parse_formula("forall x, y: partOf(x, y) -> ~partOf(y, x)", sig)
    dom = np.array([[0.0], [1.0], [2.0]])
    for bits in itertools.product((0.0, 1.0), repeat=9):
        rel = np.array(bits).reshape(3, 3)
        g = Grounding({}, {}, {"partOf": TablePredicate(lambda r: rel[int(r[0]), int(r[1])], 2, 2)})
        truths = [min(1.0, 1.0 - rel[i, j] + (1.0 - rel[j, i])) for i in range(3) for j in range(3)]
        assert eval_formula(f, g, dom) == pytest.approx(harmonic_mean(truths), rel=1e-12)


def test_quantifiers_stay_inside_groups():
    sig = _unary_sig(binary=["R"])
    f = parse_formula("forall x, y: R(x, y)", sig)
    # R is false only across groups, so group-wise quantification sees only truths
    g = Grounding({}, {}, {"R": TablePredicate(lambda r: float(r[0] // 10 == r[1] // 10), 2, 2)})
    dom = Domain.grouped([np.array([[0.0], [1.0]]), np.array([[10.0], [11.0], [12.0]])])
    assert eval_formula(f, g, dom) == 1.0
    assert eval_formula(f, g, Domain.single(dom.vectors)) < 1e-3


def test_unmapped_symbol_and_empty_domain():
    sig = _unary_sig("P", "Q")
    f = parse_formula("forall x: P(x) | Q(x)", sig)
    g = Grounding({}, {}, {"P": ConstantPredicate(1.0, 1, 1)})
    with pytest.raises(EvaluationError):
        eval_formula(f, g, np.zeros((2, 1)))
    g.predicate_map["Q"] = ConstantPredicate(1.0, 1, 1)
    with pytest.raises(EvaluationError):
        eval_formula(f, g, np.zeros((0, 1)))


def test_free_variables_rejected():
    f = Atom("P", (Variable("x"),))
    with pytest.raises(EvaluationError):
        GroundedTheory([f], Grounding())


# -- a substitution-based oracle ---------------------------------------------------

def _toy_grounding(seed):
    r = np.random.default_rng(seed)
    consts = {c: r.normal(size=3) for c in TOY_SIG.constants}
    funcs = {"f": LinearFunctionParams(r.normal(size=(3, 3)) * 0.5, r.normal(size=3) * 0.1),
             "g": LinearFunctionParams(r.normal(size=(3, 6)) * 0.5, r.normal(size=3) * 0.1)}
    preds = {"P": LtnPredicate(LtnPredicateParams.init(3, 2, seed + 1, std=0.8)),
             "Q": LtnPredicate(LtnPredicateParams.init(3, 2, seed + 2, std=0.8)),
             "R": LtnPredicate(LtnPredicateParams.init(6, 2, seed + 3, std=0.8), arity=2)}
    return Grounding(consts, funcs, preds)


def _oracle(f, g, dom, env=None):
    env = env or {}

    def term(t):
        if isinstance(t, Variable):
            return env[t.name]
        if isinstance(t, Constant):
            return g.constant_map[t.symbol]
        return ground_function(g.function_map[t.function], np.concatenate([term(a) for a in t.args]))

    name = type(f).__name__
    if name == "Atom":
        x = np.concatenate([term(a) for a in f.terms])
        return float(g.predicate_map[f.predicate](x[None, :])[0])
    if name == "Not":
        return 1.0 - _oracle(f.body, g, dom, env)
    if name in ("And", "Or", "Implies"):
        a, b = _oracle(f.left, g, dom, env), _oracle(f.right, g, dom, env)
        return {"And": max(0.0, a + b - 1.0), "Or": min(1.0, a + b),
                "Implies": min(1.0, 1.0 - a + b)}[name]
    vals = []
    for rows in itertools.product(range(len(dom)), repeat=len(f.vars)):
        inner = dict(env)
        inner.update({v: dom[i] for v, i in zip(f.vars, rows)})
        vals.append(_oracle(f.body, g, dom, inner))
    return harmonic_mean(vals) if name == "ForAll" else max(vals)


def _close(f):
    fv = free_variables(f)
    return ForAll(fv, f) if fv else f


def test_compiled_evaluation_matches_substitution_oracle():
    r = np.random.default_rng(3)
    dom = r.normal(size=(3, 3))
    for trial in range(60):
        f = _close(random_formula(r, 4))
        g = _toy_grounding(trial)
        assert eval_formula(f, g, dom) == pytest.approx(_oracle(f, g, dom), rel=1e-10, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_outputs_in_unit_interval_whatever_the_grounders(seed):
    r = np.random.default_rng(seed)
    f = _close(random_formula(r, 4))
    wild = lambda row: float(np.sin(row.sum()) * 3.0)  # noqa: E731  out-of-range truths
    g = _toy_grounding(seed)
    g.predicate_map = {"P": TablePredicate(wild, 1, 3), "Q": TablePredicate(wild, 1, 3),
                       "R": TablePredicate(wild, 2, 6)}
    v = eval_formula(f, g, r.normal(size=(2, 3)))
    assert 0.0 <= v <= 1.0


def test_eval_mode_is_bit_deterministic():
    r = np.random.default_rng(9)
    dom = r.normal(size=(3, 3))
    clauses = [_close(random_formula(r, 3)) for _ in range(10)]
    g = _toy_grounding(4)
    th = GroundedTheory(clauses, g)
    a = satisfiability(th, dom)
    b = satisfiability(th, dom)
    assert a == b
    p = Program(clauses, g, dom)
    assert np.array_equal(p.forward().clause_truths, p.forward().clause_truths)


# -- satisfiability ----------------------------------------------------------------

def _value_theory(values):
    """One ground clause per value, each an atom of its own constant predicate."""
    names = [f"C{i}" for i in range(len(values))]
    g = Grounding({"a": np.zeros(1)}, {},
                  {n: ConstantPredicate(v, 1, 1) for n, v in zip(names, values)})
    return GroundedTheory([Atom(n, (Constant("a"),)) for n in names], g)


def test_satisfiability_examples():
    assert satisfiability(_value_theory([1.0, 1.0, 1.0])) == 1.0
    assert satisfiability(_value_theory([1.0, 0.25])) == pytest.approx(0.4)
    with pytest.raises(EvaluationError):
        satisfiability(GroundedTheory([], Grounding()))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.data())
def test_satisfiability_monotone_in_each_clause(values, data):
    i = data.draw(st.integers(0, len(values) - 1))
    raised = list(values)
    raised[i] = data.draw(st.floats(values[i], 1.0))
    assert satisfiability(_value_theory(raised)) >= satisfiability(_value_theory(values))


def test_toy_theory_hand_computation():
    sig = Signature.build(["a", "b"], ["P", "Q"], ["R"])
    text = ["P(a)", "~Q(a)", "forall x: P(x) -> Q(x)", "forall x, y: R(x, y) -> P(x)"]
    clauses = [parse_formula(t, sig) for t in text]
    va, vb = np.array([0.8]), np.array([0.3])
    g = Grounding({"a": va, "b": vb}, {},
                  {"P": TablePredicate(lambda r: r[0], 1, 1),
                   "Q": TablePredicate(lambda r: 1.0 - r[0], 1, 1),
                   "R": TablePredicate(lambda r: float(r[0] > r[1]), 2, 2)})
    dom = np.array([va, vb])
    # by hand: P(a)=0.8, Q(a)=0.2
    c1 = 0.8
    c2 = 0.8
    c3 = harmonic_mean([min(1.0, 1 - 0.8 + 0.2), min(1.0, 1 - 0.3 + 0.7)])  # 0.4 and 1.0
    c4 = harmonic_mean([1.0, min(1.0, 1 - 1 + 0.8), 1.0, 1.0])  # only R(a, b) holds
    expected = harmonic_mean([c1, c2, c3, c4])
    assert expected == pytest.approx(4 / (1 / 0.8 + 1 / 0.8 + 1 / (2 / (1 / 0.4 + 1)) + 1 / (4 / (3 + 1 / 0.8))))
    th = GroundedTheory(clauses, g, sig)
    assert satisfiability(th, dom) == pytest.approx(expected, rel=1e-12)
    truths = Program(clauses, g, dom).forward().clause_truths
    assert truths == pytest.approx([c1, c2, c3, c4], rel=1e-12)


def test_ground_atoms_share_rows_with_named_domain_elements():
    sig = Signature.build(["a"], ["P"], [])
    g = Grounding({"a": np.array([2.0])}, {}, {"P": TablePredicate(lambda r: r[0] / 4, 1, 1)})
    dom = Domain.grouped([np.array([[2.0], [4.0]])], [["a", "b"]])
    p = Program([parse_formula("P(a)", sig), parse_formula("forall x: P(x)", sig)], g, dom)
    assert p.input_matrix("P").shape[0] == 2
    assert p.forward().clause_truths[0] == 0.5


def test_functions_in_terms():
    sig = Signature.build(["a"], ["P"], functions=[("f", 1)])
    f = parse_formula("P(f(a))", sig)
    g = Grounding({"a": np.array([1.0, 2.0])},
                  {"f": LinearFunctionParams(np.array([[1.0, 1.0], [0.0, 1.0]]) / 4, np.zeros(2))},
                  {"P": TablePredicate(lambda r: r[0] - r[1], 1, 2)})
    assert eval_formula(f, g) == pytest.approx(0.25)
    g.function_map["f"] = LinearFunctionParams(np.array([[1.0, 1.0]]) / 4, np.zeros(1))
    with pytest.raises(EvaluationError):
        eval_formula(f, g)


# -- mereology ------------------------------------------------------------------

def _table(n_w, n_p, parts_of=None):
    t = PartWholeTable.from_parts(n_w, n_p, parts_of)
    names = [f"W{i}" for i in range(n_w)] + [f"P{i}" for i in range(n_p)]
    return t, Signature.build([], names, ["partOf"])


def test_empty_table_gives_only_asymmetry():
    t, sig = _table(0, 0)
    out = mereology_constraints(t, sig)
    assert len(out) == 1
    assert out[0] == parse_formula("forall x, y: partOf(x, y) -> ~partOf(y, x)", sig)


def test_one_whole_one_compatible_part():
    t, sig = _table(1, 1, {0: (0,)})
    out = mereology_constraints(t, sig)
    # asymmetry, W0 is not part of W0, P0 has no part P0
    assert len(out) == 3 == mereology_count(t)
    assert out[1] == parse_formula("forall x, y: W0(x) & W0(y) -> ~partOf(x, y)", sig)
    assert out[2] == parse_formula("forall x, y: P0(x) & P0(y) -> ~partOf(y, x)", sig)


def test_one_whole_one_incompatible_part():
    t, sig = _table(1, 1, {})
    out = mereology_constraints(t, sig)
    assert len(out) == 4
    assert out[1] == parse_formula("forall x, y: P0(x) & W0(y) -> ~partOf(x, y)", sig)


@pytest.mark.parametrize("n_w,n_p,parts_of", [
    (2, 2, {0: (0, 1), 1: (0, 1)}),
    (2, 2, {0: (0,), 1: ()}),
    (3, 4, None),
    (8, 8, None),
])
def test_count_matches_tally(n_w, n_p, parts_of):
    t, sig = _table(n_w, n_p, parts_of)
    zeros = sum(1 for p in range(n_w, n_w + n_p) for w in range(n_w) if t.w[p, w] == 0)
    assert len(mereology_constraints(t, sig)) == 1 + zeros + n_w ** 2 + n_p ** 2


def test_table_size_must_match_signature():
    t, _ = _table(2, 2)
    with pytest.raises(ValueError):
        mereology_constraints(t, Signature.build([], ["A"], ["partOf"]))


def test_constraints_are_closed_and_unit_on_consistent_crisp_world():
    t, sig = _table(1, 1, {0: (0,)})
    # element 0 is a W0, element 1 a P0 that is part of element 0
    g = Grounding({}, {}, {
        "W0": TablePredicate(lambda r: r[0] == 0, 1, 1),
        "P0": TablePredicate(lambda r: r[0] == 1, 1, 1),
        "partOf": TablePredicate(lambda r: r[0] == 1 and r[1] == 0, 2, 2)})
    clauses = mereology_constraints(t, sig)
    assert all(not free_variables(c) for c in clauses)
    assert satisfiability(GroundedTheory(clauses, g), np.array([[0.0], [1.0]])) == 1.0
    # a second whole (element 2) placed inside the first violates whole-not-part
    g.predicate_map["W0"] = TablePredicate(lambda r: r[0] in (0, 2), 1, 1)
    g.predicate_map["partOf"] = TablePredicate(lambda r: (r[0], r[1]) in ((1, 0), (2, 0)), 2, 2)
    assert satisfiability(GroundedTheory(clauses, g), np.array([[0.0], [1.0], [2.0]])) < 1e-3
