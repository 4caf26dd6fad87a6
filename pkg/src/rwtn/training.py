"""Best-satisfiability training with RMSProp.

The loss is ``1 - sat + lam * ||theta||^2`` where ``sat`` is the harmonic
mean of the clause truths and ``theta`` every learnable array (frozen RWTN
encoders have no slots). Gradients are exact: the compiled program supplies
the reverse pass through the fuzzy connectives and aggregators, and each
predicate supplies its own hand-derived reverse pass.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import serialize
from .grounders import RidgeReadoutPredicate, RwtnEncoderParams, RwtnPredicate
from .reservoir import ridge_readout
from .rng import stream
from .semantics import GroundedTheory, Program

ParamKey = tuple[str, str]


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class RMSPropConfig:
    learning_rate: float = 1e-3
    decay: float = 0.9
    epsilon: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lam: float = 1e-10
    rmsprop: RMSPropConfig = field(default_factory=RMSPropConfig)
    batch: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.batch != "full":
            raise ValueError("only full-batch training is supported")


class RMSProp:
    """``acc = decay*acc + (1-decay)*g^2;  p -= lr * g / (sqrt(acc) + eps)``."""

    def __init__(self, config: RMSPropConfig):
        self.config = config
        self.accumulators: dict[ParamKey, np.ndarray] = {}
        self.steps = 0

    def step(self, params: dict[ParamKey, np.ndarray], grads: dict[ParamKey, np.ndarray]) -> None:
        c = self.config
        for key in params:
            g = grads[key]
            acc = self.accumulators.get(key)
            if acc is None:
                acc = self.accumulators[key] = np.zeros_like(g)
            acc *= c.decay
            acc += (1.0 - c.decay) * g * g
            params[key] -= c.learning_rate * g / (np.sqrt(acc) + c.epsilon)
        self.steps += 1

    def to_doc(self) -> dict:
        return {"config": asdict(self.config),
                "steps": self.steps,
                "accumulators": {f"{p}/{n}": serialize.encode_array(a)
                                 for (p, n), a in self.accumulators.items()}}


@dataclass
class TrainResult:
    trace: list[tuple[int, float, float]]  # (epoch, loss, satisfiability), eval mode
    initial_satisfiability: float
    final_satisfiability: float
    optimizer: RMSProp

    @property
    def final_loss(self) -> float:
        return self.trace[-1][1]


def learnable_params(theory_or_program) -> dict[ParamKey, np.ndarray]:
    preds = theory_or_program.grounding.predicate_map
    out: dict[ParamKey, np.ndarray] = {}
    for pname, handle in preds.items():
        for aname, arr in handle.learnable().items():
            out[(pname, aname)] = arr
    return out


def penalty(params: dict[ParamKey, np.ndarray]) -> float:
    return float(sum(np.sum(a * a) for a in params.values()))


def _is_stochastic(program: Program) -> bool:
    return any(isinstance(h, RwtnPredicate) and h.encoder.xi > 0
               for p, h in program.grounding.predicate_map.items() if p in program.inputs)


def loss_and_grads(program: Program, lam: float, mode: str = "train",
                   rng: np.random.Generator | None = None):
    """``(loss, satisfiability, grads)`` with ``grads`` keyed like :func:`learnable_params`."""
    fw = program.forward(mode, rng)
    params = learnable_params(program)
    loss_value = 1.0 - fw.satisfiability + lam * penalty(params)
    return loss_value, fw.satisfiability, _grads_from(program, fw, params, lam), fw


def loss(theory: GroundedTheory, domain=None, lam: float = 0.0, mode: str = "eval",
         rng: np.random.Generator | None = None) -> float:
    program = Program(theory.clauses, theory.grounding, domain)
    fw = program.forward(mode, rng)
    return 1.0 - fw.satisfiability + lam * penalty(learnable_params(program))


def train(theory: GroundedTheory, domain, config: TrainConfig,
          program: Program | None = None, log_every: int = 0, log=print) -> TrainResult:
    """Full-batch RMSProp on ``1 - sat + lam ||theta||^2``; updates parameters in place.

    Training passes draw encoder noise from the ``(seed, "train_noise")``
    stream; the trace records noiseless evaluation after every update.
    """
    if program is None:
        program = Program(theory.clauses, theory.grounding, domain)
    params = learnable_params(program)
    opt = RMSProp(config.rmsprop)
    rng = stream(config.seed, "train_noise")
    stochastic = _is_stochastic(program)
    fw = program.forward("eval")
    initial = fw.satisfiability
    trace: list[tuple[int, float, float]] = []
    for epoch in range(1, config.epochs + 1):
        if not params:
            trace.append((epoch, 1.0 - fw.satisfiability, fw.satisfiability))
            continue
        if stochastic:
            _, _, grads, _ = loss_and_grads(program, config.lam, "train", rng)
        else:
            grads = _grads_from(program, fw, params, config.lam)
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient at epoch {epoch}")
        opt.step(params, grads)
        fw = program.forward("eval")
        value = 1.0 - fw.satisfiability + config.lam * penalty(params)
        if not np.isfinite(value):
            raise DivergenceError(f"loss became {value} at epoch {epoch}")
        trace.append((epoch, value, fw.satisfiability))
        if log_every and epoch % log_every == 0:
            log(f"epoch {epoch:5d}  loss {value:.6f}  sat {fw.satisfiability:.6f}")
    return TrainResult(trace, initial, fw.satisfiability, opt)


def _grads_from(program, fw, params, lam):
    per_pred = program.backward(fw, upstream=-1.0)
    grads = {}
    for key, arr in params.items():
        g = per_pred.get(key[0], {}).get(key[1])
        g = np.zeros_like(arr) if g is None else g
        grads[key] = g + 2.0 * lam * arr
    return grads


def train_shared(theories: Sequence[GroundedTheory], encoder: RwtnEncoderParams, domain,
                 config: TrainConfig) -> list[TrainResult]:
    """Train one decoder per theory, all reading the same frozen encoder.

    Each theory must ground its learnable predicates with
    :class:`RwtnPredicate` handles built on ``encoder``. Decoders are trained
    one after another with identical configs, so each result equals a solo
    run against a copy of the encoder.
    """
    dims = set()
    for th in theories:
        for handle in th.grounding.predicate_map.values():
            if handle.learnable():
                if not isinstance(handle, RwtnPredicate) or handle.encoder is not encoder:
                    raise ValueError("every learnable predicate must use the shared encoder")
                dims.add(handle.dim)
    if len(dims) > 1:
        raise ValueError(f"theories disagree on feature dimensionality: {sorted(dims)}")
    before = encoder.digest()
    results = [train(th, domain, config) for th in theories]
    if encoder.digest() != before:
        raise RuntimeError("shared encoder changed during training")
    return results


def fit_ridge_decoder(encoder: RwtnEncoderParams, X, targets, lam: float) -> RidgeReadoutPredicate:
    """Closed-form linear readout on noiseless encoder states (optional mode).

    Not used for the LTN/RWTN comparison, which trains every decoder with
    RMSProp.
    """
    Z = np.tanh(encoder.encode(X))
    V_o, v_o = ridge_readout(Z, np.asarray(targets, dtype=np.float64), lam)
    return RidgeReadoutPredicate(encoder, np.asarray(V_o), float(v_o))


# -- files -------------------------------------------------------------------------

def write_trace_csv(trace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "satisfiability"])
        for epoch, value, sat in trace:
            w.writerow([epoch, repr(float(value)), repr(float(sat))])


def checkpoint_doc(model_doc: dict, result: TrainResult, config: TrainConfig) -> dict:
    return {
        "format": "rwtn-checkpoint",
        "version": 1,
        "model": model_doc,
        "train_config": {"epochs": config.epochs, "lam": config.lam, "batch": config.batch,
                         "seed": config.seed,
                         "rmsprop": asdict(config.rmsprop)},
        "optimizer": result.optimizer.to_doc(),
        "trace": [[e, v, s] for e, v, s in result.trace],
        "initial_satisfiability": result.initial_satisfiability,
        "final_satisfiability": result.final_satisfiability,
    }
