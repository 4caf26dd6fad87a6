"""Semantic image interpretation as grounded theories.

Boxes become constants ``b<id>``; every class is a unary predicate and
``partOf`` the single binary predicate. The training theory holds

* the positive type literal of each box and the negative literals for the
  other classes,
* ``partOf(b, b')`` for every labelled pair and ``~partOf(b, b')`` for every
  other ordered pair of distinct boxes of the same scene,
* the mereological constraints, quantified per scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import serialize
from .fol import Atom, Constant, Formula, Not, Signature
from .grounders import (
    CrispPartOfPredicate, CrispTypePredicate, LtnPredicate, LtnPredicateParams, PartWholeTable,
    Predicate, RwtnDecoderParams, RwtnEncoderParams, RwtnPredicate, TablePredicate, make_encoder,
)
from .reservoir import ReservoirConfig
from .rng import derive_seed
from .scenes import BoxRecord, Scene, all_boxes, grounding_vector
from .semantics import Domain, GroundedTheory, Grounding, mereology_constraints

PART_OF = "partOf"
MODEL_KINDS = ("ltn", "rwtn", "rwtn-shared")


def const_name(b: BoxRecord) -> str:
    return f"b{b.id}"


def sii_signature(scenes: list[Scene], class_names: list[str]) -> Signature:
    return Signature.build([const_name(b) for b in all_boxes(scenes)], class_names, [PART_OF])


def scene_domain(scenes: list[Scene]) -> Domain:
    """One quantification group per scene; rows named after the box constants."""
    groups = [np.array([grounding_vector(b) for b in s.boxes]) for s in scenes if s.boxes]
    names = [[const_name(b) for b in s.boxes] for s in scenes if s.boxes]
    return Domain.grouped(groups, names)


def type_literals(scenes: list[Scene], class_names: list[str], classes=None,
                  negatives: bool = True) -> list[Formula]:
    wanted = range(len(class_names)) if classes is None else classes
    out: list[Formula] = []
    for b in all_boxes(scenes):
        c = Constant(const_name(b))
        for i in wanted:
            if b.true_class == i:
                out.append(Atom(class_names[i], (c,)))
            elif negatives:
                out.append(Not(Atom(class_names[i], (c,))))
    return out


def part_of_literals(scenes: list[Scene], negatives: bool = True) -> list[Formula]:
    out: list[Formula] = []
    for s in scenes:
        for b in s.boxes:
            for b2 in s.boxes:
                if b.id == b2.id:
                    continue
                atom = Atom(PART_OF, (Constant(const_name(b)), Constant(const_name(b2))))
                if b.parent == b2.id:
                    out.append(atom)
                elif negatives:
                    out.append(Not(atom))
    return out


def sii_clauses(scenes: list[Scene], class_names: list[str], table: PartWholeTable,
                constraints: bool = True) -> list[Formula]:
    clauses = type_literals(scenes, class_names) + part_of_literals(scenes)
    if constraints:
        sig = Signature.build([], class_names, [PART_OF])
        clauses += mereology_constraints(table, sig, PART_OF)
    return clauses


def crisp_grounding(scenes: list[Scene], class_names: list[str], table: PartWholeTable,
                    th_ir: float = 0.7) -> Grounding:
    """Argmax typing plus the thresholded inclusion-ratio part-of rule."""
    preds: dict[str, Predicate] = {
        name: CrispTypePredicate(i, len(class_names)) for i, name in enumerate(class_names)}
    preds[PART_OF] = CrispPartOfPredicate(table, th_ir)
    consts = {const_name(b): grounding_vector(b) for b in all_boxes(scenes)}
    return Grounding(consts, {}, preds)


def truth_grounding(scenes: list[Scene], class_names: list[str]) -> Grounding:
    """Groundings read straight from the labels (for consistency checks)."""
    boxes = all_boxes(scenes)
    by_vec = {grounding_vector(b).tobytes(): b for b in boxes}
    n = len(class_names) + 4
    preds: dict[str, Predicate] = {}
    for i, name in enumerate(class_names):
        preds[name] = TablePredicate(lambda r, i=i: by_vec[r.tobytes()].true_class == i, 1, n)
    preds[PART_OF] = TablePredicate(
        lambda r: by_vec[r[:n].tobytes()].parent == by_vec[r[n:].tobytes()].id, 2, 2 * n)
    return Grounding({const_name(b): grounding_vector(b) for b in boxes}, {}, preds)


# -- models --------------------------------------------------------------------

@dataclass
class ModelConfig:
    kind: str = "rwtn"
    k: int = 6
    t: int = 20
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}")

    def to_doc(self) -> dict:
        r = self.reservoir
        return {"kind": self.kind, "k": self.k, "t": self.t, "seed": self.seed,
                "reservoir": {"rho": r.rho, "beta": r.beta, "R": r.R, "omega": r.omega,
                              "xi": r.xi, "seed": r.seed}}

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelConfig":
        return cls(doc["kind"], int(doc["k"]), int(doc["t"]), ReservoirConfig(**doc["reservoir"]),
                   int(doc["seed"]))


@dataclass
class SiiModel:
    """Learnable groundings for every class predicate and (optionally) ``partOf``."""

    config: ModelConfig
    class_names: list[str]
    predicates: dict[str, Predicate]
    shared_encoder: RwtnEncoderParams | None = None

    @property
    def feature_dim(self) -> int:
        return len(self.class_names) + 4

    def grounding(self, scenes: list[Scene] | None = None) -> Grounding:
        consts = {const_name(b): grounding_vector(b) for b in all_boxes(scenes or [])}
        return Grounding(consts, {}, dict(self.predicates))

    def encoders(self) -> dict[str, RwtnEncoderParams]:
        return {n: p.encoder for n, p in self.predicates.items() if isinstance(p, RwtnPredicate)}

    def encoder_digests(self) -> dict[str, str]:
        return {n: e.digest() for n, e in self.encoders().items()}

    def learnable_count(self) -> int:
        return sum(a.size for p in self.predicates.values() for a in p.learnable().values())

    def to_doc(self) -> dict:
        doc = {"format": "rwtn-model", "version": 1, "config": self.config.to_doc(),
               "class_names": list(self.class_names), "predicates": {}}
        if self.shared_encoder is not None:
            doc["shared_encoder"] = self.shared_encoder.to_doc()
        for name, p in self.predicates.items():
            if isinstance(p, RwtnPredicate) and p.encoder is self.shared_encoder:
                doc["predicates"][name] = p.to_doc(encoder_ref="shared_encoder")
            else:
                doc["predicates"][name] = p.to_doc()
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "SiiModel":
        if doc.get("format") != "rwtn-model":
            raise ValueError("not a model document")
        shared = RwtnEncoderParams.from_doc(doc["shared_encoder"]) if "shared_encoder" in doc else None
        preds: dict[str, Predicate] = {}
        for name, pd in doc["predicates"].items():
            preds[name] = predicate_from_doc(pd, shared)
        return cls(ModelConfig.from_doc(doc["config"]), list(doc["class_names"]), preds, shared)

    def save(self, path: str | Path) -> None:
        serialize.save(self.to_doc(), path)

    @classmethod
    def load(cls, path: str | Path) -> "SiiModel":
        return cls.from_doc(serialize.load(path))


def predicate_from_doc(pd: dict, shared: RwtnEncoderParams | None = None) -> Predicate:
    arr = serialize.decode_array
    if pd["kind"] == "ltn":
        return LtnPredicate(LtnPredicateParams(arr(pd["W"]), arr(pd["V"]), arr(pd["b"]), arr(pd["u"])),
                            int(pd["arity"]))
    if pd["kind"] == "rwtn":
        enc = shared if "encoder_ref" in pd else RwtnEncoderParams.from_doc(pd["encoder"])
        if enc is None:
            raise ValueError("decoder refers to a missing shared encoder")
        return RwtnPredicate(enc, RwtnDecoderParams(arr(pd["u"]), arr(pd["k_out"])), int(pd["arity"]))
    raise ValueError(f"unknown predicate kind {pd['kind']!r}")


def build_model(config: ModelConfig, class_names: list[str], with_part_of: bool = True,
                shared_encoder: RwtnEncoderParams | None = None) -> SiiModel:
    """Fresh model; every random draw is keyed by the config seed and the predicate name."""
    n = len(class_names) + 4
    preds: dict[str, Predicate] = {}
    names = list(class_names) + ([PART_OF] if with_part_of else [])
    shared = None
    if config.kind == "rwtn-shared":
        shared = shared_encoder or make_encoder(
            n, replace(config.reservoir, seed=derive_seed(config.seed, "encoder", "shared")))
    for name in names:
        arity = 2 if name == PART_OF else 1
        dim = arity * n
        init_seed = derive_seed(config.seed, "init", name)
        if config.kind == "ltn":
            preds[name] = LtnPredicate(LtnPredicateParams.init(dim, config.k, init_seed), arity)
            continue
        if shared is not None and arity == 1:
            enc = shared
        else:
            enc = make_encoder(dim, replace(config.reservoir, seed=derive_seed(config.seed, "encoder", name)))
        preds[name] = RwtnPredicate(enc, RwtnDecoderParams.init(enc.R, config.t, init_seed), arity)
    return SiiModel(config, list(class_names), preds, shared)


def sii_theory(model: SiiModel, scenes: list[Scene], table: PartWholeTable,
               constraints: bool = True) -> tuple[GroundedTheory, Domain]:
    clauses = sii_clauses(scenes, model.class_names, table, constraints)
    sig = sii_signature(scenes, model.class_names)
    return GroundedTheory(clauses, model.grounding(scenes), sig), scene_domain(scenes)


def class_theory(model: SiiModel, scenes: list[Scene], class_index: int) -> tuple[GroundedTheory, Domain]:
    """Type literals of a single class: the theory one shared-encoder decoder learns."""
    clauses = type_literals(scenes, model.class_names, classes=[class_index])
    name = model.class_names[class_index]
    g = model.grounding(scenes)
    g.predicate_map = {name: model.predicates[name]}
    return GroundedTheory(clauses, g), scene_domain(scenes)
