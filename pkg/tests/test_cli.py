import csv
import json

import pytest

from ceaudit.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--structure", "chain", "--n", "300", "--seed", "1", "--out", str(d)]) == 0
    assert main(["train", "--data", str(d / "data.csv"), "--out", str(d / "model.json")]) == 0
    return d


def _explain(d, name, **extra):
    argv = ["explain", "--model", str(d / "model.json"), "--data", str(d / "data.csv"), "--units", "3", "--out", str(d / name)]
    for k, v in extra.items():
        argv += [f"--{k}", str(v)]
    return main(argv)


def test_pipeline_and_determinism(workdir):
    d = workdir
    assert _explain(d, "ces.csv") == 0
    assert _explain(d, "ces2.csv") == 0
    assert (d / "ces.csv").read_bytes() == (d / "ces2.csv").read_bytes()
    rows = list(csv.DictReader(open(d / "ces.csv")))
    assert len(rows) == 6
    assert list(rows[0])[:2] == ["unit_id", "ce_id"]
    argv = ["validate", "--scm", str(d / "scm.json"), "--data", str(d / "data.csv"), "--ces", str(d / "ces.csv")]
    assert main([*argv, "--out", str(d / "v.csv")]) == 0
    verdicts = list(csv.DictReader(open(d / "v.csv")))
    assert len(verdicts) == 6
    for v in verdicts:
        assert v["conflict"] == str(int(v["ce_class"] != v["pcm_class"]))


def test_wachter_requires_k1(workdir):
    assert _explain(workdir, "w.csv", method="wachter", k=2) == 1
    assert _explain(workdir, "w.csv", method="wachter", k=1) == 0


def test_generate_repeatable(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", "--structure", "fork", "--n", "50", "--out", str(tmp_path / name)]) == 0
    for f in ("data.csv", "data.json", "scm.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_exit_codes(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"structure": "chain", "nope": 1}))
    assert main(["experiment", "--config", str(bad)]) == 1
    # single-class labels: every y equals the mean threshold
    deg = tmp_path / "deg.csv"
    deg.write_text("x1,y,class\n1,0,1\n2,0,1\n")
    assert main(["train", "--data", str(deg), "--out", str(tmp_path / "m.json")]) == 2
    cyc = tmp_path / "cyc.json"
    cyc.write_text(
        json.dumps(
            {
                "outcome": "y",
                "nodes": [
                    {"name": "a", "noise": {"kind": "gaussian", "mu": 0, "sigma": 1}, "intercept": 0, "parents": [{"name": "y", "coeff": 1}]},
                    {"name": "y", "noise": {"kind": "gaussian", "mu": 0, "sigma": 1}, "intercept": 0, "parents": [{"name": "a", "coeff": 1}]},
                ],
            }
        )
    )
    assert main(["generate", "--scm", str(cyc), "--out", str(tmp_path / "g")]) == 1


def test_experiment_and_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"structures": ["chain", "collider"], "n_units": 3, "seed": 2}))
    outs = []
    for name, workers in (("r1", 1), ("r2", 2)):
        out = tmp_path / name
        assert main(["experiment", "--config", str(cfg), "--out", str(out), "--workers", str(workers)]) == 0
        outs.append(out)
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert set(summary["per_structure"]) == {"chain", "collider"}
    for f in sorted(p.name for p in outs[0].iterdir()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    capsys.readouterr()
    assert main(["report", "--in", str(outs[0] / "report_chain.csv"), "--format", "json"]) == 0
    assert capsys.readouterr().out == (outs[0] / "report_chain.json").read_text()
