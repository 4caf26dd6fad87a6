import copy

import numpy as np
import pytest

from rwtn.fol import Signature, parse_formula
from rwtn.grounders import (ConstantPredicate, LtnPredicate, LtnPredicateParams, RwtnDecoderParams,
                            RwtnEncoderParams, RwtnPredicate, make_encoder)
from rwtn.reservoir import ReservoirConfig, ridge_readout
from rwtn import serialize
from rwtn.semantics import Domain, GroundedTheory, Grounding, Program, harmonic_mean
from rwtn.training import (DivergenceError, RMSPropConfig, TrainConfig, checkpoint_doc,
                           fit_ridge_decoder, learnable_params, loss, loss_and_grads, penalty,
                           train, train_shared, write_trace_csv)

CLAUSE_POOL = [
    "P(a)", "~P(b)", "forall x: P(x)", "forall x: ~P(x)", "forall x, y: R(x, y) -> P(x)",
    "exists x: R(x, a)", "forall x: ~R(x, x)", "R(a, b) -> ~R(b, a)", "P(a) & P(b)",
    "forall x: P(x) | R(x, b)", "R(b, a)",
]
SIG = Signature.build(["a", "b"], ["P"], ["R"])


# -- finite-difference oracle -------------------------------------------------------

def _instance(arch, seed):
    r = np.random.default_rng(seed)
    if arch == "ltn":
        n = int(r.integers(1, 4))  # binary predicate input 2n <= 6
        k = int(r.integers(1, 4))
        preds = {"P": LtnPredicate(LtnPredicateParams.init(n, k, seed, std=0.7)),
                 "R": LtnPredicate(LtnPredicateParams.init(2 * n, k, seed + 1, std=0.7), arity=2)}
    else:
        n = int(r.integers(1, 4))
        R, t = int(r.integers(1, 9)), int(r.integers(1, 4))
        preds = {}
        for j, (name, arity) in enumerate((("P", 1), ("R", 2))):
            enc = make_encoder(arity * n, ReservoirConfig(R=R, xi=0.05, seed=seed * 7 + j))
            preds[name] = RwtnPredicate(enc, RwtnDecoderParams.init(R, t, seed + j, std=0.7), arity)
    consts = {"a": r.normal(size=n), "b": r.normal(size=n)}
    picks = r.choice(len(CLAUSE_POOL), size=int(r.integers(1, 5)), replace=False)
    clauses = [parse_formula(CLAUSE_POOL[i], SIG) for i in picks]
    dom = Domain.grouped([r.normal(size=(int(r.integers(1, 4)), n)) for _ in range(int(r.integers(1, 3)))])
    lam = float(r.choice([0.0, 1e-3]))
    return Program(clauses, Grounding(consts, {}, preds), dom), lam


def _max_rel_error(program, lam, mode="eval", noise_seed=None, h=1e-5):
    def rng():
        return None if noise_seed is None else np.random.default_rng(noise_seed)

    _, _, grads, _ = loss_and_grads(program, lam, mode, rng())
    params = learnable_params(program)

    def f():
        fw = program.forward(mode, rng())
        return 1.0 - fw.satisfiability + lam * penalty(params)

    worst = 0.0
    for key, arr in params.items():
        g = grads[key]
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = f()
            arr[idx] = old - h
            down = f()
            arr[idx] = old
            fd = (up - down) / (2 * h)
            err = abs(g[idx] - fd) / max(abs(g[idx]), abs(fd), 1e-6)
            worst = max(worst, err)
    return worst


@pytest.mark.parametrize("arch", ["ltn", "rwtn"])
def test_gradients_match_finite_differences(arch):
    errors = [_max_rel_error(*_instance(arch, seed)) for seed in range(100)]
    assert max(errors) <= 1e-4, f"worst instance {int(np.argmax(errors))}: {max(errors):.2e}"


def test_single_atom_ltn_k1_mn2():
    sig = Signature.build(["a"], ["P"])
    p = LtnPredicate(LtnPredicateParams.init(2, 1, 5, std=0.5))
    prog = Program([parse_formula("P(a)", sig)], Grounding({"a": np.array([0.3, -0.8])}, {}, {"P": p}))
    assert _max_rel_error(prog, 0.0) <= 1e-4


def test_rwtn_decoder_r6_t3_three_clauses():
    sig = Signature.build(["a", "b"], ["P"])
    enc = make_encoder(3, ReservoirConfig(R=6, seed=2))
    p = RwtnPredicate(enc, RwtnDecoderParams.init(6, 3, 1, std=0.7))
    clauses = [parse_formula(t, sig) for t in ("P(a)", "~P(b)", "forall x: P(x) -> P(a)")]
    g = Grounding({"a": np.array([0.2, 0.5, -0.1]), "b": np.array([-0.4, 0.1, 0.9])}, {}, {"P": p})
    prog = Program(clauses, g, np.random.default_rng(0).normal(size=(4, 3)))
    assert _max_rel_error(prog, 1e-3) <= 1e-4


def test_train_mode_gradient_with_frozen_noise():
    prog, _ = _instance("rwtn", 11)
    assert _max_rel_error(prog, 0.0, mode="train", noise_seed=4) <= 1e-4


def test_zero_upstream_gives_zero_gradients():
    prog, _ = _instance("ltn", 3)
    fw = prog.forward()
    grads = prog.backward(fw, upstream=0.0)
    assert grads and all(not np.any(g) for per in grads.values() for g in per.values())


def test_no_gradient_slots_for_encoder():
    prog, _ = _instance("rwtn", 5)
    _, _, grads, _ = loss_and_grads(prog, 0.0, "eval")
    assert {name for _, name in grads} == {"u", "k_out"}
    per = prog.backward(prog.forward(), -1.0)
    assert all(set(d) <= {"u", "k_out"} for d in per.values())


# -- loss ----------------------------------------------------------------------------

def _const_theory(values, params=None):
    sig_preds = [f"C{i}" for i in range(len(values))]
    preds = {n: ConstantPredicate(v, 1, 1) for n, v in zip(sig_preds, values)}
    if params is not None:
        preds["L"] = params
    sig = Signature.build(["a"], list(preds))
    return GroundedTheory([parse_formula(f"{n}(a)", sig) for n in sig_preds],
                          Grounding({"a": np.zeros(1)}, {}, preds))


def test_loss_examples():
    assert loss(_const_theory([1.0, 1.0])) == 0.0
    ltn = LtnPredicate(LtnPredicateParams.init(1, 2, 0, std=0.5))
    th = _const_theory([1.0], ltn)
    lam = 1e-3
    expected = lam * sum(float(np.sum(a * a)) for a in ltn.learnable().values())
    assert loss(th, lam=lam) == expected
    th = _const_theory([0.5, 0.8])
    assert loss(th, lam=0.0) == pytest.approx(1.0 - harmonic_mean([0.5, 0.8]))


# -- train ---------------------------------------------------------------------------

def _separable(arch, seed=0):
    """20 constants in R^4, two classes split along the first coordinate."""
    r = np.random.default_rng(seed)
    X = r.normal(size=(20, 4)) * 0.5
    X[:10, 0] += 1.5
    X[10:, 0] -= 1.5
    names = [f"c{i}" for i in range(20)]
    sig = Signature.build(names, ["A", "B"])
    clauses = []
    for i, c in enumerate(names):
        pos, neg = ("A", "B") if i < 10 else ("B", "A")
        clauses += [parse_formula(f"{pos}({c})", sig), parse_formula(f"~{neg}({c})", sig)]
    preds = {}
    for j, name in enumerate("AB"):
        if arch == "ltn":
            preds[name] = LtnPredicate(LtnPredicateParams.init(4, 6, seed + j))
        else:
            enc = make_encoder(4, ReservoirConfig(seed=seed + 10 + j))
            preds[name] = RwtnPredicate(enc, RwtnDecoderParams.init(enc.R, 20, seed + j))
    g = Grounding(dict(zip(names, X)), {}, preds)
    return GroundedTheory(clauses, g, sig), None


@pytest.mark.parametrize("arch", ["ltn", "rwtn"])
def test_separable_toy_reaches_high_satisfiability(arch):
    th, dom = _separable(arch)
    res = train(th, dom, TrainConfig(epochs=1000))
    assert res.final_satisfiability >= 0.9
    assert res.final_satisfiability >= res.initial_satisfiability
    assert [e for e, _, _ in res.trace] == list(range(1, 1001))


def test_already_satisfied_theory_stays_put():
    ltn = LtnPredicate(LtnPredicateParams.init(1, 2, 0, std=0.5))
    th = _const_theory([1.0, 1.0], ltn)
    before = {k: v.copy() for k, v in ltn.learnable().items()}
    res = train(th, None, TrainConfig(epochs=20, lam=0.0))
    assert all(s == 1.0 and l == 0.0 for _, l, s in res.trace)
    assert all(np.array_equal(before[k], v) for k, v in ltn.learnable().items())
    # with a penalty the only force is shrinkage towards zero
    res = train(th, None, TrainConfig(epochs=5, lam=1e-6))
    assert all(s == 1.0 for _, _, s in res.trace)
    for k, v in ltn.learnable().items():
        big = np.abs(before[k]) > 0.05
        assert np.all(np.abs(v[big]) < np.abs(before[k][big]))
        assert np.all(np.sign(v[big]) == np.sign(before[k][big]))


def test_zero_learning_rate_leaves_parameters():
    th, dom = _separable("rwtn")
    before = {k: v.copy() for k, v in learnable_params(th).items()}
    train(th, dom, TrainConfig(epochs=25, rmsprop=RMSPropConfig(learning_rate=0.0)))
    assert all(np.array_equal(before[k], v) for k, v in learnable_params(th).items())


@pytest.mark.parametrize("arch", ["ltn", "rwtn"])
def test_same_seed_same_bytes(arch):
    outs = []
    for _ in range(2):
        th, dom = _separable(arch, seed=3)
        train(th, dom, TrainConfig(epochs=30, seed=9))
        outs.append(b"".join(v.tobytes() for v in learnable_params(th).values()))
    assert outs[0] == outs[1]


def test_noise_seed_changes_rwtn_training():
    outs = []
    for seed in (1, 2):
        th, dom = _separable("rwtn", seed=3)
        train(th, dom, TrainConfig(epochs=5, seed=seed))
        outs.append(b"".join(v.tobytes() for v in learnable_params(th).values()))
    assert outs[0] != outs[1]


def test_encoder_unchanged_by_training():
    th, dom = _separable("rwtn")
    encs = [p.encoder for p in th.grounding.predicate_map.values()]
    before = [e.digest() for e in encs]
    train(th, dom, TrainConfig(epochs=10))
    assert [e.digest() for e in encs] == before


def test_divergence_is_reported():
    th, dom = _separable("ltn")
    th.grounding.predicate_map["A"].params.b[0] = np.nan
    with pytest.raises(DivergenceError, match="epoch 1"):
        train(th, dom, TrainConfig(epochs=3))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch="mini")


def test_optimizer_accumulators_nonnegative():
    th, dom = _separable("ltn")
    res = train(th, dom, TrainConfig(epochs=10))
    assert res.optimizer.steps == 10
    assert all(np.all(a >= 0) for a in res.optimizer.accumulators.values())


# -- weight sharing -----------------------------------------------------------------

def _class_theories(enc, n_classes, seed=0):
    r = np.random.default_rng(seed)
    X = r.normal(size=(12, enc.dim))
    labels = np.arange(12) % n_classes
    X[np.arange(12), labels] += 2.0
    names = [f"c{i}" for i in range(12)]
    theories = []
    for j in range(n_classes):
        cname = f"K{j}"
        sig = Signature.build(names, [cname])
        pred = RwtnPredicate(enc, RwtnDecoderParams.init(enc.R, 4, 100 + j))
        clauses = [parse_formula(f"{'' if labels[i] == j else '~'}{cname}({c})", sig)
                   for i, c in enumerate(names)]
        theories.append(GroundedTheory(clauses, Grounding(dict(zip(names, X)), {}, {cname: pred})))
    return theories, X


def _solo(theory, enc_copy, config):
    (name, pred), = theory.grounding.predicate_map.items()
    twin = RwtnPredicate(enc_copy, copy.deepcopy(pred.decoder))
    g = Grounding(theory.grounding.constant_map, {}, {name: twin})
    train(GroundedTheory(theory.clauses, g), None, config)
    return twin


@pytest.mark.parametrize("i", [1, 3])
def test_shared_training_equals_independent_runs(i):
    enc = make_encoder(5, ReservoirConfig(R=30, seed=4))
    config = TrainConfig(epochs=40, seed=6)
    theories, X = _class_theories(enc, i)
    solos = [_solo(th, RwtnEncoderParams.from_doc(enc.to_doc()), config) for th in theories]
    before = enc.digest()
    results = train_shared(theories, enc, None, config)
    assert enc.digest() == before and len(results) == i
    for th, solo in zip(theories, solos):
        (pred,) = th.grounding.predicate_map.values()
        assert np.array_equal(pred(X), solo(X))
        assert pred.decoder.u.tobytes() == solo.decoder.u.tobytes()


def test_shared_training_rejects_foreign_encoders():
    enc = make_encoder(5, ReservoirConfig(R=10, seed=4))
    other = make_encoder(5, ReservoirConfig(R=10, seed=5))
    theories, _ = _class_theories(enc, 2)
    theories2, _ = _class_theories(other, 1)
    with pytest.raises(ValueError):
        train_shared(theories + theories2, enc, None, TrainConfig(epochs=1))


# -- ridge mode and files ---------------------------------------------------------------

def test_ridge_decoder_matches_closed_form():
    enc = make_encoder(4, ReservoirConfig(R=40, seed=1))
    r = np.random.default_rng(0)
    X = r.normal(size=(60, 4))
    y = (X[:, 0] > 0).astype(float)
    p = fit_ridge_decoder(enc, X, y, 1e-3)
    assert p.learnable() == {}
    V_o, v_o = ridge_readout(np.tanh(enc.encode(X)), y, 1e-3)
    assert np.allclose(p(X), np.clip(np.tanh(enc.encode(X)) @ np.ravel(V_o) + v_o, 0, 1))
    assert np.mean((p(X) > 0.5) == (y > 0.5)) >= 0.9


def test_trace_csv_and_checkpoint(tmp_path):
    th, dom = _separable("ltn")
    config = TrainConfig(epochs=4)
    res = train(th, dom, config)
    write_trace_csv(res.trace, tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,satisfiability" and len(lines) == 5
    e, l, s = lines[-1].split(",")
    assert (int(e), float(l), float(s)) == res.trace[-1]
    doc = checkpoint_doc({"format": "stub"}, res, config)
    serialize.save(doc, tmp_path / "ck.json")
    back = serialize.load(tmp_path / "ck.json")
    assert back["final_satisfiability"] == res.final_satisfiability
    assert back["optimizer"]["steps"] == 4
    assert back["train_config"]["rmsprop"]["learning_rate"] == 1e-3
