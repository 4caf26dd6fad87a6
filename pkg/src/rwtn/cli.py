"""Command line: ``rwtn [--config FILE] {gen-data,train,eval,compare,param-count} ...``.

Settings resolve as built-in defaults, then the optional ``key=value``
config file, then command-line flags. Outputs go under ``--root``::

    data/                       header.json, train.jsonl, test.jsonl
    models/<model>-seed<seed>/  checkpoint + trace (or encoder + decoders)
    reports/<model>-seed<seed>/ report.json + curves/*.csv
    reports/compare.json

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .grounders import ltn_param_count, rwtn_param_count, shared_space
from .reservoir import ReservoirConfig
from .scenes import DatasetSpec, SpecError, generate, read_dataset, write_dataset
from .tasks import MODEL_KINDS, ModelConfig
from .training import DivergenceError, RMSPropConfig, TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- parser -----------------------------------------------------------------------

def _reservoir_flags(p):
    g = p.add_argument_group("reservoir")
    g.add_argument("--rho", type=float, default=0.6, help="spectral radius of every encoder slice")
    g.add_argument("--beta", type=float, default=0.25, help="fraction of nonzero encoder weights")
    g.add_argument("--R", type=int, default=200, help="encoder width (reservoir units)")
    g.add_argument("--omega", type=float, default=0.5, help="input weight half-range")
    g.add_argument("--xi", type=float, default=0.01, help="training noise standard deviation")


def _model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=MODEL_KINDS, default="rwtn", help="grounder architecture")
    g.add_argument("--k", type=int, default=6, help="LTN tensor slices")
    g.add_argument("--t", type=int, default=20, help="RWTN decoder hidden units")


def _train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=1000, help="full-batch RMSProp epochs")
    g.add_argument("--lam", type=float, default=1e-10, help="L2 coefficient on learnable weights")
    g.add_argument("--lr", type=float, default=1e-3, help="RMSProp learning rate")
    g.add_argument("--decay", type=float, default=0.9, help="RMSProp squared-gradient decay")
    g.add_argument("--rms-eps", type=float, default=1e-8, help="RMSProp denominator epsilon")
    g.add_argument("--no-constraints", action="store_true", default=False,
                   help="drop the mereological constraints from the training theory")
    g.add_argument("--log-every", type=int, default=0, help="print progress every N epochs (0: off)")


def _data_flag(p):
    p.add_argument("--data", default=None, help="dataset directory (None: ROOT/data)")


def _th_flag(p):
    p.add_argument("--th", type=float, default=0.7, help="classification threshold for operating points")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="rwtn", formatter_class=fmt,
                                     description="Logic tensor networks with reservoir grounders.")
    parser.add_argument("--config", default=None, help="key=value file overriding built-in defaults")
    parser.add_argument("--root", default="runs", help="output root holding data/, models/, reports/")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", formatter_class=fmt, help="generate a synthetic scene dataset")
    p.add_argument("--scenes", type=int, default=200, help="number of scenes")
    p.add_argument("--wholes", type=int, default=8, help="whole-object classes")
    p.add_argument("--parts", type=int, default=8, help="part classes")
    p.add_argument("--noise", type=float, default=0.15, help="score noise standard deviation")
    p.add_argument("--jitter", type=float, default=0.02, help="part geometry jitter")
    p.add_argument("--train-fraction", type=float, default=0.8, help="share of scenes used for training")
    p.add_argument("--seed", type=int, default=7, help="dataset seed")
    p.add_argument("--out", default=None, help="dataset directory (None: ROOT/data)")

    p = sub.add_parser("train", formatter_class=fmt, help="train one model on a dataset")
    _data_flag(p)
    _model_flags(p)
    _reservoir_flags(p)
    _train_flags(p)
    p.add_argument("--classes", default="all",
                   help="classes to train shared decoders for: 'all' or comma-separated names")
    p.add_argument("--seed", type=int, default=0, help="model and noise seed")
    p.add_argument("--out", default=None, help="model directory (None: ROOT/models/<model>-seed<seed>)")

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate a trained model on the test split")
    _data_flag(p)
    p.add_argument("--model-dir", required=True, help="directory written by 'train'")
    _th_flag(p)
    p.add_argument("--out", default=None, help="report directory (None: ROOT/reports/<run>)")

    p = sub.add_parser("compare", formatter_class=fmt, help="compare models over several seeds")
    _data_flag(p)
    p.add_argument("--models", default="ltn,rwtn,rwtn-shared", help="comma-separated model kinds")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0 .. seeds-1)")
    p.add_argument("--train-missing", action="store_true", default=False,
                   help="train runs whose checkpoints are absent (with the training flags below)")
    _th_flag(p)
    _model_flags_no_choice(p)
    _reservoir_flags(p)
    _train_flags(p)

    p = sub.add_parser("param-count", formatter_class=fmt, help="parameter and storage accounting")
    p.add_argument("--model", choices=MODEL_KINDS + ("all",), default="all", help="model kind")
    p.add_argument("--n", type=int, default=64, help="feature length of one argument")
    p.add_argument("--m", type=int, default=1, help="predicate arity")
    p.add_argument("--k", type=int, default=6, help="LTN tensor slices")
    p.add_argument("--R", type=int, default=200, help="encoder width")
    p.add_argument("--t", type=int, default=20, help="decoder hidden units")
    p.add_argument("--i", type=int, default=11, help="number of classifiers sharing one encoder")
    return parser


def _model_flags_no_choice(p):
    g = p.add_argument_group("model")
    g.add_argument("--k", type=int, default=6, help="LTN tensor slices")
    g.add_argument("--t", type=int, default=20, help="RWTN decoder hidden units")


# -- config file --------------------------------------------------------------------

def read_config(path: str) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _explicit_flags(sub: argparse.ArgumentParser, argv: list[str]) -> set[str]:
    seen = set()
    for action in sub._actions:
        for opt in action.option_strings:
            if any(a == opt or a.startswith(opt + "=") for a in argv):
                seen.add(action.dest)
    return seen


def parse(argv: list[str]):
    """Parse ``argv`` with config-file values injected as subcommand defaults."""
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    from_file: dict[str, str] = {}
    if known.config:
        from_file = read_config(known.config)
        args0, _ = parser.parse_known_args(argv)
        sub = _subparser(parser, args0.command)
        dests = {a.dest: a for a in sub._actions}
        for key, value in from_file.items():
            action = dests.get(key)
            if action is None or key in ("help",):
                raise UsageError(f"config key {key!r} is not an option of {args0.command!r}")
            if isinstance(action, argparse._StoreTrueAction):
                from_file[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    from_file[key] = action.type(value)
                except ValueError:
                    raise UsageError(f"config key {key!r}: bad value {value!r}") from None
        sub.set_defaults(**from_file)
    args = parser.parse_args(argv)
    flags = _explicit_flags(_subparser(parser, args.command), argv)
    sources = {}
    for key in vars(args):
        sources[key] = "flag" if key in flags else ("config" if key in from_file else "default")
    return args, sources


def _print_settings(args, sources, out) -> None:
    chain = "defaults < " + (f"config {args.config} < " if args.config else "") + "flags"
    print(f"settings ({chain}):", file=out)
    for key in sorted(vars(args)):
        if key in ("command", "config"):
            continue
        print(f"  {key} = {getattr(args, key)!r} [{sources.get(key, 'default')}]", file=out)


# -- run configuration ----------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything one training run depends on."""

    model: ModelConfig
    train: TrainConfig
    constraints: bool = True

    @classmethod
    def from_args(cls, args, kind: str | None = None, seed: int | None = None) -> "RunConfig":
        seed = args.seed if seed is None else seed
        try:
            reservoir = ReservoirConfig(rho=args.rho, beta=args.beta, R=args.R, omega=args.omega,
                                        xi=args.xi, seed=0)
            model = ModelConfig(kind or args.model, args.k, args.t, reservoir, seed)
            train = TrainConfig(args.epochs, args.lam, RMSPropConfig(args.lr, args.decay, args.rms_eps),
                                "full", seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.k < 1 or args.t < 1:
            raise UsageError("k and t must be at least 1")
        return cls(model, train, not args.no_constraints)


def _root(args) -> Path:
    return Path(args.root)


def _load_data(path):
    try:
        return read_dataset(path)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"unreadable dataset {path}: {exc}") from None


# -- commands --------------------------------------------------------------------------

def cmd_gen_data(args, out) -> int:
    spec = DatasetSpec(n_whole_classes=args.wholes, n_part_classes=args.parts, n_scenes=args.scenes,
                       score_noise=args.noise, geometry_jitter=args.jitter,
                       train_fraction=args.train_fraction, seed=args.seed)
    try:
        spec.validate()
        train, test = generate(spec)
    except SpecError as exc:
        raise UsageError(f"invalid dataset spec: {exc}") from None
    directory = Path(args.out) if args.out else _root(args) / "data"
    write_dataset(directory, spec, train, test)
    n_tr = sum(len(s.boxes) for s in train)
    n_te = sum(len(s.boxes) for s in test)
    print(f"wrote {directory}: {len(train)} train scenes ({n_tr} boxes), "
          f"{len(test)} test scenes ({n_te} boxes)", file=out)
    return EXIT_OK


def _select_classes(data, spec: str) -> list[str] | None:
    if spec == "all":
        return None
    wanted = [c.strip() for c in spec.split(",") if c.strip()]
    unknown = [c for c in wanted if c not in data.class_names]
    if unknown or not wanted:
        raise UsageError(f"unknown classes: {', '.join(unknown) or '(none)'}")
    return [c for c in data.class_names if c in wanted]


def _train_one(args, data, kind, seed, directory, out, classes=None):
    from .experiment import save_run, train_run
    rc = RunConfig.from_args(args, kind, seed)
    run = train_run(data, rc.model, rc.train, rc.constraints, log_every=args.log_every,
                    log=lambda s: print(s, file=out), classes=classes)
    if run.model.encoder_digests() != run.encoder_digests_before:
        raise RuntimeError("encoder weights changed during training")
    save_run(run, rc.train, directory)
    return run


def cmd_train(args, out) -> int:
    data = _load_data(args.data or _root(args) / "data")
    classes = _select_classes(data, args.classes)
    if classes is not None and args.model != "rwtn-shared":
        raise UsageError("--classes other than 'all' needs --model rwtn-shared")
    RunConfig.from_args(args)  # validate before the slow part
    directory = Path(args.out) if args.out else _root(args) / "models" / f"{args.model}-seed{args.seed}"
    run = _train_one(args, data, args.model, args.seed, directory, out, classes)
    for name, result in run.results.items():
        label = "" if name == "joint" else f" [{name}]"
        print(f"final satisfiability{label}: {result.final_satisfiability:.6f}", file=out)
    print(f"wrote {directory}", file=out)
    return EXIT_OK


def cmd_eval(args, out) -> int:
    from .experiment import evaluate_model, load_model, write_eval
    data = _load_data(args.data or _root(args) / "data")
    try:
        model = load_model(args.model_dir)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    evaluation = evaluate_model(model, data, args.th)
    directory = Path(args.out) if args.out else _root(args) / "reports" / Path(args.model_dir).name
    write_eval(evaluation, directory)
    rep = evaluation["report"]
    print(f"T1 macro AUC: {rep['t1']['macro_auc']:.4f}", file=out)
    if rep["t2"] is not None:
        print(f"T2 AUC: {rep['t2']['auc']:.4f}", file=out)
    print(f"wrote {directory}", file=out)
    return EXIT_OK


def cmd_compare(args, out) -> int:
    from .experiment import comparison_report, evaluate_model, load_model, run_dir_name, write_eval
    data = _load_data(args.data or _root(args) / "data")
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad or not kinds:
        raise UsageError(f"unknown model kinds: {', '.join(bad) or '(none)'}")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    evaluations = {}
    for kind in kinds:
        evaluations[kind] = []
        for seed in range(args.seeds):
            mdir = _root(args) / "models" / run_dir_name(kind, seed)
            if not mdir.exists():
                if not args.train_missing:
                    raise DataError(f"missing checkpoint {mdir} (use --train-missing)")
                print(f"training {kind} seed {seed}", file=out)
                _train_one(args, data, kind, seed, mdir, out)
            ev = evaluate_model(load_model(mdir), data, args.th)
            write_eval(ev, _root(args) / "reports" / run_dir_name(kind, seed))
            evaluations[kind].append(ev["report"])
    report = comparison_report(evaluations, data, args.th)
    path = _root(args) / "reports" / "compare.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    report.save(path)
    print(report.table(), file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_param_count(args, out) -> int:
    if min(args.n, args.m, args.k, args.R, args.t, args.i) < 1:
        raise UsageError("all sizes must be positive")
    rows = []
    if args.model in ("ltn", "all"):
        rows.append(("ltn learnable", ltn_param_count(args.n, args.m, args.k)))
    if args.model in ("rwtn", "all"):
        rows.append(("rwtn learnable", rwtn_param_count(args.R, args.t)))
    if args.model in ("rwtn-shared", "all"):
        unshared, shared = shared_space(args.n, args.m, args.R, args.t, args.i)
        rows.append((f"rwtn stored x{args.i} (separate encoders)", unshared))
        rows.append((f"rwtn stored x{args.i} (shared encoder)", shared))
    width = max(len(r[0]) for r in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value}", file=out)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "compare": cmd_compare, "param-count": cmd_param_count}


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, sources = parse(argv)
    except UsageError as exc:
        print(f"rwtn: error: {exc}", file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help (0) or usage error (2)
        return int(exc.code or 0)
    if args.command != "param-count":
        _print_settings(args, sources, out)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"rwtn: error: {exc}", file=err)
        return EXIT_USAGE
    except DataError as exc:
        print(f"rwtn: data error: {exc}", file=err)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"rwtn: training diverged: {exc}", file=err)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
