"""Training and evaluation runs shared by the command line and the scripts.

A run is one (model kind, seed) pair on one dataset. Joint models (``ltn``
and ``rwtn``) learn every class predicate plus ``partOf`` from the full
theory. The ``rwtn-shared`` model trains one decoder per class on that
class's type literals, all on top of a single frozen encoder, so it covers
T1 only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import serialize
from .evalkit import ComparisonReport, eval_t1, eval_t2, ir_baseline, score_baseline_t1
from .grounders import RwtnEncoderParams
from .scenes import Dataset
from .semantics import Program
from .tasks import (ModelConfig, SiiModel, build_model, class_theory, crisp_grounding, predicate_from_doc,
                    sii_theory)
from .training import TrainConfig, TrainResult, checkpoint_doc, train, train_shared, write_trace_csv


@dataclass
class RunOutput:
    model: SiiModel
    results: dict[str, TrainResult]  # "joint" or one entry per class
    encoder_digests_before: dict[str, str] = field(default_factory=dict)


def run_dir_name(kind: str, seed: int) -> str:
    return f"{kind}-seed{seed}"


def train_run(data: Dataset, model_config: ModelConfig, train_config: TrainConfig,
              constraints: bool = True, log_every: int = 0, log=print,
              classes: Sequence[str] | None = None) -> RunOutput:
    """Train a fresh model; ``classes`` restricts which shared decoders are trained."""
    names = data.class_names
    if model_config.kind == "rwtn-shared":
        model = build_model(model_config, names, with_part_of=False)
        chosen = list(names) if classes is None else list(classes)
        model.predicates = {n: model.predicates[n] for n in chosen}
        before = model.encoder_digests()
        theories = [class_theory(model, data.train, names.index(n)) for n in chosen]
        results = train_shared([t for t, _ in theories], model.shared_encoder,
                               theories[0][1], train_config)
        return RunOutput(model, dict(zip(chosen, results)), before)
    if classes is not None:
        raise ValueError("class selection applies to shared-encoder models only")
    model = build_model(model_config, names)
    before = model.encoder_digests()
    theory, domain = sii_theory(model, data.train, data.table, constraints)
    program = Program(theory.clauses, theory.grounding, domain)
    result = train(theory, domain, train_config, program=program, log_every=log_every, log=log)
    return RunOutput(model, {"joint": result}, before)


def evaluate_model(model: SiiModel, data: Dataset, th: float = 0.7) -> dict:
    t1 = eval_t1(model, data.test, data.class_names, th)
    report = {
        "model": model.config.kind,
        "seed": model.config.seed,
        "th": th,
        "t1": {"macro_auc": t1.macro_auc, "per_class": t1.aucs(), "skipped": t1.skipped,
               "operating_point": {k: {"precision": p, "recall": r}
                                   for k, (p, r) in t1.operating.items()}},
        "t2": None,
    }
    curves = {f"t1-{k}": c for k, c in t1.curves.items()}
    if "partOf" in model.predicates:
        t2 = eval_t2(model, data.test)
        report["t2"] = {"auc": t2.auc, "prevalence": t2.prevalence}
        curves["t2"] = t2
    return {"report": report, "curves": curves}


def baselines(data: Dataset, th: float = 0.7) -> dict:
    crisp = crisp_grounding(data.test, data.class_names, data.table)
    return {"t1_scores_macro_auc": score_baseline_t1(data.test, data.class_names).macro_auc,
            "t1_argmax_macro_auc": eval_t1(crisp, data.test, data.class_names).macro_auc,
            "t2_ir_auc": ir_baseline(data.test, th).auc}


# -- files -----------------------------------------------------------------------

def save_run(out: RunOutput, train_config: TrainConfig, directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    model = out.model
    if model.config.kind == "rwtn-shared":
        enc_path = d / "encoder.json"
        serialize.save({"format": "rwtn-encoder", "version": 1, "config": model.config.to_doc(),
                        "encoder": model.shared_encoder.to_doc()}, enc_path)
        written.append(enc_path)
        dec_dir = d / "decoders"
        dec_dir.mkdir(exist_ok=True)
        for name, result in out.results.items():
            doc = checkpoint_doc(model.predicates[name].to_doc(encoder_ref="encoder.json"), result,
                                 train_config)
            p = dec_dir / f"{name}.json"
            serialize.save(doc, p)
            write_trace_csv(result.trace, dec_dir / f"{name}-trace.csv")
            written += [p, dec_dir / f"{name}-trace.csv"]
        manifest = {"format": "rwtn-shared-run", "version": 1, "class_names": model.class_names,
                    "config": model.config.to_doc(), "encoder": "encoder.json",
                    "decoders": {n: f"decoders/{n}.json" for n in out.results}}
        serialize.save(manifest, d / "manifest.json")
        written.append(d / "manifest.json")
        return written
    result = out.results["joint"]
    serialize.save(checkpoint_doc(model.to_doc(), result, train_config), d / "checkpoint.json")
    write_trace_csv(result.trace, d / "trace.csv")
    return written + [d / "checkpoint.json", d / "trace.csv"]


def load_model(directory: str | Path) -> SiiModel:
    d = Path(directory)
    if (d / "checkpoint.json").exists():
        return SiiModel.from_doc(serialize.load(d / "checkpoint.json")["model"])
    if (d / "manifest.json").exists():
        manifest = serialize.load(d / "manifest.json")
        enc = RwtnEncoderParams.from_doc(serialize.load(d / manifest["encoder"])["encoder"])
        preds = {name: predicate_from_doc(serialize.load(d / rel)["model"], enc)
                 for name, rel in manifest["decoders"].items()}
        return SiiModel(ModelConfig.from_doc(manifest["config"]), list(manifest["class_names"]),
                        preds, enc)
    raise FileNotFoundError(f"no checkpoint or manifest in {d}")


def write_eval(evaluation: dict, directory: str | Path) -> list[Path]:
    d = Path(directory)
    (d / "curves").mkdir(parents=True, exist_ok=True)
    report_path = d / "report.json"
    report_path.write_text(serialize.dumps(evaluation["report"]), encoding="utf-8")
    paths = [report_path]
    for name, curve in evaluation["curves"].items():
        p = d / "curves" / f"{name}.csv"
        curve.to_csv(p)
        paths.append(p)
    return paths


# -- comparisons --------------------------------------------------------------------

def comparison_report(evaluations: dict[str, Sequence[dict]], data: Dataset, th: float = 0.7) -> ComparisonReport:
    """``evaluations[kind]`` holds one :func:`evaluate_model` report per seed."""
    report = ComparisonReport(meta={"th": th, "baselines": baselines(data, th),
                                    "seeds": {k: [r["seed"] for r in v] for k, v in evaluations.items()}})
    for kind, runs in evaluations.items():
        report.add("all", "T1", kind, [r["t1"]["macro_auc"] for r in runs])
        if all(r["t2"] is not None for r in runs):
            report.add("all", "T2", kind, [r["t2"]["auc"] for r in runs])
        for name in data.class_names:
            vals = [r["t1"]["per_class"][name] for r in runs if name in r["t1"]["per_class"]]
            if vals:
                report.add(name, "T1", kind, vals)
    return report


# -- desk-scale comparison ----------------------------------------------------------

DESK_SPEC = dict(n_whole_classes=8, n_part_classes=8, n_scenes=200, score_noise=0.15, seed=7)


@dataclass
class DeskResult:
    report: ComparisonReport
    evaluations: dict[str, list[dict]]
    seconds: dict[str, float]


def desk_comparison(data: Dataset, seeds: Sequence[int] = range(5),
                    kinds: Sequence[str] = ("ltn", "rwtn", "rwtn-shared"),
                    train_config: TrainConfig | None = None, model_config: ModelConfig | None = None,
                    root: str | Path | None = None, th: float = 0.7, log=print) -> DeskResult:
    """Train and evaluate every (kind, seed) pair; optionally save runs under ``root``."""
    base_train = train_config or TrainConfig()
    base_model = model_config or ModelConfig()
    evaluations: dict[str, list[dict]] = {k: [] for k in kinds}
    seconds: dict[str, float] = {k: 0.0 for k in kinds}
    for kind in kinds:
        for seed in seeds:
            start = time.perf_counter()
            tc = replace(base_train, seed=seed)
            out = train_run(data, replace(base_model, kind=kind, seed=seed), tc)
            if out.model.encoder_digests() != out.encoder_digests_before:
                raise RuntimeError("encoder weights changed during training")
            ev = evaluate_model(out.model, data, th)
            seconds[kind] += time.perf_counter() - start
            if root is not None:
                save_run(out, tc, Path(root) / "models" / run_dir_name(kind, seed))
                write_eval(ev, Path(root) / "reports" / run_dir_name(kind, seed))
            evaluations[kind].append(ev["report"])
            t2 = ev["report"]["t2"]
            log(f"{kind:<12} seed {seed}: T1 {ev['report']['t1']['macro_auc']:.4f}"
                + (f"  T2 {t2['auc']:.4f}" if t2 else "")
                + f"  ({time.perf_counter() - start:.0f}s)")
    report = comparison_report(evaluations, data, th)
    if root is not None:
        report.save(Path(root) / "reports" / "compare.json")
    return DeskResult(report, evaluations, seconds)


def shared_gap(evaluations: dict[str, list[dict]], shared: str = "rwtn-shared",
               joint: str = "rwtn") -> dict[str, float]:
    """Largest per-class T1 AUC gap between shared and joint runs with matched seeds."""
    by_seed = {r["seed"]: r for r in evaluations[joint]}
    gaps: dict[str, float] = {}
    for r in evaluations[shared]:
        other = by_seed[r["seed"]]["t1"]["per_class"]
        for name, auc in r["t1"]["per_class"].items():
            gaps[name] = max(gaps.get(name, 0.0), abs(auc - other[name]))
    return gaps
