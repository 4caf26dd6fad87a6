import io
import json
import re

import pytest

from rwtn import serialize
from rwtn.cli import main

SMALL_DATA = ["gen-data", "--scenes", "12", "--wholes", "2", "--parts", "2", "--seed", "3"]
FAST = ["--epochs", "3", "--R", "10", "--t", "3", "--k", "2"]


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def root(tmp_path):
    code, out, _ = run(["--root", str(tmp_path)] + SMALL_DATA)
    assert code == 0
    return tmp_path


def test_gen_data_writes_files_and_counts(root):
    header = json.loads((root / "data" / "header.json").read_text())
    counts = header["counts"]
    train_lines = (root / "data" / "train.jsonl").read_text().splitlines()
    test_lines = (root / "data" / "test.jsonl").read_text().splitlines()
    assert len(train_lines) == counts["train_boxes"] and len(test_lines) == counts["test_boxes"]
    assert counts["train_scenes"] + counts["test_scenes"] == 12
    code, out, _ = run(["--root", str(root)] + SMALL_DATA)
    assert re.search(r"\d+ train scenes \(\d+ boxes\), \d+ test scenes \(\d+ boxes\)", out)


def test_gen_data_is_byte_stable(tmp_path):
    for d in ("a", "b"):
        assert run(SMALL_DATA + ["--out", str(tmp_path / d)])[0] == 0
    for name in ("header.json", "train.jsonl", "test.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_data_rejects_zero_scenes(tmp_path):
    code, _, err = run(["--root", str(tmp_path), "gen-data", "--scenes", "0"])
    assert code == 2 and "scene" in err


def test_train_and_eval_joint_models(root):
    for kind in ("ltn", "rwtn"):
        code, out, _ = run(["--root", str(root), "train", "--model", kind, "--seed", "1"] + FAST)
        assert code == 0 and "final satisfiability" in out
        mdir = root / "models" / f"{kind}-seed1"
        assert (mdir / "checkpoint.json").exists()
        assert len((mdir / "trace.csv").read_text().splitlines()) == 4
        code, out, _ = run(["--root", str(root), "eval", "--model-dir", str(mdir)])
        assert code == 0 and "T1 macro AUC" in out and "T2 AUC" in out
        report = json.loads((root / "reports" / f"{kind}-seed1" / "report.json").read_text())
        assert report["model"] == kind and 0.0 <= report["t1"]["macro_auc"] <= 1.0
        assert (root / "reports" / f"{kind}-seed1" / "curves" / "t2.csv").exists()


def test_shared_training_artifacts(root):
    code, out, _ = run(["--root", str(root), "train", "--model", "rwtn-shared", "--classes", "all"] + FAST)
    assert code == 0
    mdir = root / "models" / "rwtn-shared-seed0"
    names = json.loads((root / "data" / "header.json").read_text())["class_names"]
    assert (mdir / "encoder.json").exists()
    assert sorted(p.name for p in (mdir / "decoders").glob("*.json")) == sorted(f"{n}.json" for n in names)
    for n in names:
        doc = serialize.load(mdir / "decoders" / f"{n}.json")
        assert "encoder" not in doc["model"] and doc["model"]["encoder_ref"] == "encoder.json"
    code, out, _ = run(["--root", str(root), "eval", "--model-dir", str(mdir)])
    assert code == 0 and "T2 AUC" not in out


def test_epochs_zero_is_usage_error(root):
    code, _, err = run(["--root", str(root), "train", "--model", "ltn", "--epochs", "0"])
    assert code == 2 and "epochs" in err


def test_missing_inputs_are_data_errors(tmp_path):
    code, _, err = run(["--root", str(tmp_path), "train", "--model", "ltn"])
    assert code == 3
    run(["--root", str(tmp_path)] + SMALL_DATA)
    code, _, err = run(["--root", str(tmp_path), "eval", "--model-dir", str(tmp_path / "nowhere")])
    assert code == 3
    code, _, err = run(["--root", str(tmp_path), "compare", "--models", "ltn", "--seeds", "1"])
    assert code == 3 and "--train-missing" in err


def test_bad_flags_exit_two(root):
    assert run(["--root", str(root), "train", "--model", "mlp"])[0] == 2
    assert run(["--root", str(root), "compare", "--models", "ltn,foo"])[0] == 2
    assert run(["--root", str(root), "train", "--model", "ltn", "--classes", "Whole0"])[0] == 2


@pytest.mark.parametrize("argv,expected", [
    (["param-count", "--model", "ltn", "--n", "64", "--k", "6"], ["24972"]),
    (["param-count", "--model", "rwtn", "--R", "200", "--t", "20"], ["4020"]),
    (["param-count"], ["24972", "4020", "9196220", "876220"]),
])
def test_param_count(argv, expected):
    code, out, _ = run(argv)
    assert code == 0
    assert re.findall(r"\d+$", out, flags=re.M) == expected


def _help(capsys, argv):
    assert main(argv) == 0
    return " ".join(capsys.readouterr().out.split())


def test_help_lists_reference_defaults(capsys):
    text = _help(capsys, ["train", "--help"])
    for flag, value in [("--rho", "0.6"), ("--beta", "0.25"), ("--R", "200"), ("--omega", "0.5"),
                        ("--xi", "0.01"), ("--t", "20"), ("--k", "6"), ("--lam", "1e-10"),
                        ("--epochs", "1000")]:
        assert re.search(re.escape(flag) + r" \S+ .*?\(default: " + re.escape(value) + r"\)", text), flag
    assert "(default: 0.7)" in _help(capsys, ["eval", "--help"])
    compare = _help(capsys, ["compare", "--help"])
    assert "(default: 5)" in compare and "(default: 0.7)" in compare
    for cmd in ("gen-data", "param-count"):
        text = _help(capsys, [cmd, "--help"])
        options = re.findall(r"(--[a-z][a-zA-Z-]*)", text)
        assert options and text.count("(default:") >= len(set(options)) - 1  # all but --help


def test_config_precedence(root):
    cfg = root / "run.cfg"
    cfg.write_text("# overrides\nepochs = 2\nR = 8\nt=2\n")
    code, out, _ = run(["--root", str(root), "--config", str(cfg), "train", "--model", "rwtn", "--t", "3"])
    assert code == 0
    assert "epochs = 2 [config]" in out and "R = 8 [config]" in out
    assert "t = 3 [flag]" in out and "rho = 0.6 [default]" in out
    assert f"defaults < config {cfg} < flags" in out
    doc = serialize.load(root / "models" / "rwtn-seed0" / "checkpoint.json")
    assert doc["train_config"]["epochs"] == 2 and len(doc["trace"]) == 2
    cfg.write_text("bogus = 1\n")
    assert run(["--root", str(root), "--config", str(cfg), "train"])[0] == 2


def test_compare_trains_missing_runs(root):
    code, out, _ = run(["--root", str(root), "compare", "--models", "ltn,rwtn", "--seeds", "2",
                        "--train-missing"] + FAST)
    assert code == 0
    doc = json.loads((root / "reports" / "compare.json").read_text())
    rows = {(r["group"], r["task"], r["model"]): r for r in doc["rows"]}
    for kind in ("ltn", "rwtn"):
        for task in ("T1", "T2"):
            r = rows[("all", task, kind)]
            assert r["n"] == 2 and r["ci_low"] <= r["mean"] <= r["ci_high"]
    assert "t2_ir_auc" in doc["meta"]["baselines"]


def test_train_eval_reruns_are_byte_identical(tmp_path):
    outputs = []
    for d in ("a", "b"):
        r = tmp_path / d
        run(["--root", str(r)] + SMALL_DATA)
        run(["--root", str(r), "train", "--model", "rwtn", "--seed", "2"] + FAST)
        run(["--root", str(r), "eval", "--model-dir", str(r / "models" / "rwtn-seed2")])
        files = sorted(p for p in r.rglob("*") if p.is_file())
        outputs.append({p.relative_to(r): p.read_bytes() for p in files})
    assert outputs[0] == outputs[1]
    assert any(str(k).endswith("checkpoint.json") for k in outputs[0])
