import json

import numpy as np
import pytest

from oslfmvc.cli import main
from oslfmvc.data_io import load_result


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "out"
    assert main(["synth", "--n", "150", "--mu", "3", "--p", "2", "--seed", "4",
                 "--out", str(out)]) == 0
    return out, out / "manifest.json"


def cli(out, manifest, *extra):
    return main([*extra, "--manifest", str(manifest), "--out", str(out), "--mu", "3"])


def test_full_pipeline(dataset, capsys):
    out, man = dataset
    assert cli(out, man, "kernels") == 0
    assert (out / "kernels" / "kernels.json").exists()
    assert cli(out, man, "partitions") == 0
    assert (out / "partitions" / "partitions_k6.json").exists()
    assert cli(out, man, "cluster", "--repeats", "1") == 0
    res = load_result(out / "result.json")
    assert res.acc >= 0.95
    assert (out / "result.trace.csv").read_text().startswith("iter,objective\n")
    capsys.readouterr()
    assert main(["eval", "--pred", str(out / "result.json"), "--truth", str(out / "labels.csv")]) == 0
    acc, nmi, pur = map(float, capsys.readouterr().out.strip().split(","))
    assert acc == pytest.approx(res.acc, abs=1e-6)
    assert 0.0 <= nmi <= 1.0 and pur >= acc - 1e-9


def test_cluster_reproducible(dataset):
    out, man = dataset
    docs = []
    for _ in range(2):
        assert cli(out, man, "cluster", "--repeats", "1", "--seed", "11") == 0
        doc = json.loads((out / "result.json").read_text())
        doc.pop("seconds")
        docs.append(doc)
    assert docs[0] == docs[1]


def test_repeats_csv(dataset):
    out, man = dataset
    assert cli(out, man, "cluster", "--repeats", "3") == 0
    lines = (out / "repeats.csv").read_text().splitlines()
    assert lines[0] == "seed,acc,nmi,purity"
    assert [int(r.split(",")[0]) for r in lines[1:]] == [0, 1, 2]
    assert (out / "result_seed2.json").exists()


def test_kernel_cache_reused(dataset):
    out, man = dataset
    assert cli(out, man, "kernels") == 0
    kfile = out / "kernels" / "kernel_0.bin"
    stamp = kfile.stat().st_mtime_ns
    assert cli(out, man, "kernels") == 0
    assert kfile.stat().st_mtime_ns == stamp


@pytest.mark.parametrize("method", ["avg", "sb", "mkkm"])
def test_baselines(dataset, method):
    out, man = dataset
    assert cli(out, man, "baseline", "--method", method, "--repeats", "1") == 0
    doc = json.loads((out / ("baseline_%s.json" % method)).read_text())
    assert len(doc["labels"]) == 150
    assert doc["acc"] >= 0.9


def test_eval_length_mismatch(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("0\n1\n1\n")
    b.write_text("0\n1\n")
    assert main(["eval", "--pred", str(a), "--truth", str(b)]) == 2
    assert "length mismatch" in capsys.readouterr().err


def test_eval_worked_example(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("0\n0\n1\n1\n")
    b.write_text("0\n1\n1\n1\n")
    assert main(["eval", "--pred", str(a), "--truth", str(b)]) == 0
    assert capsys.readouterr().out.strip() == "0.750000,0.345592,0.750000"


def test_missing_manifest(tmp_path, capsys):
    assert main(["cluster", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_m_larger_than_n(dataset):
    out, man = dataset
    assert cli(out, man, "cluster", "--m", "500", "--repeats", "1") == 2


def test_bench_grid(tmp_path):
    out = tmp_path / "g"
    assert main(["bench", "--grid", "--n", "90", "--mu", "3", "--p", "2", "--out", str(out)]) == 0
    lines = (out / "grid.csv").read_text().splitlines()
    assert lines[0] == "k,m,acc,nmi,purity"
    assert len(lines) == 10
    assert {tuple(map(int, r.split(",")[:2])) for r in lines[1:]} == {
        (k, m) for k in (3, 6, 12) for m in (3, 6, 12)}


def test_bench_scaling(tmp_path):
    out = tmp_path / "s"
    assert main(["bench", "--scaling", "--sizes", "400,200", "--max-iters", "3",
                 "--out", str(out)]) == 0
    rows = (out / "scaling.csv").read_text().splitlines()[1:]
    ns = [int(r.split(",")[0]) for r in rows]
    assert ns == [200, 400]
    assert all(float(r.split(",")[1]) > 0 for r in rows)


def test_bench_convergence(tmp_path):
    out = tmp_path / "c"
    assert main(["bench", "--n", "90", "--mu", "3", "--p", "2", "--out", str(out)]) == 0
    rows = (out / "convergence.csv").read_text().splitlines()
    assert rows[0] == "iter,objective"
    vals = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert int(rows[1].split(",")[0]) == 0
    assert np.all(np.isfinite(vals))
