import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ulda import io as uio
from ulda.cli import main
from ulda.data import DataError, Sequence, SequenceDataset
from ulda.label_dist import LabelBinning, bin_labels, build_kernel, convolve, make_plan

finite = st.floats(-1e6, 1e6, allow_nan=False, width=64)


@st.composite
def datasets(draw):
    d = draw(st.integers(1, 3))
    seqs = []
    for k in range(draw(st.integers(1, 3))):
        m = draw(st.integers(1, 8))
        labels = draw(arrays(np.float64, m, elements=st.floats(-1, 1)))
        feats = draw(arrays(np.float64, (m, d), elements=finite))
        utopia = draw(st.none() | arrays(np.float64, m, elements=st.floats(-1, 1)))
        seqs.append(Sequence(f"s{k}", np.arange(m) * 2, labels, feats, utopia))
    return SequenceDataset(tuple(seqs), (-1.0, 1.0), d)


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(datasets())
def test_dataset_round_trip(tmp_path, ds):
    out = tmp_path / "rt"
    uio.write_dataset(ds, out)
    back = uio.read_dataset(out)
    assert back.equals(ds)


def test_plan_round_trip(tmp_path):
    b = LabelBinning(-1, 1, 10)
    h = bin_labels(np.linspace(-1, 1, 30), b)
    plan = make_plan(h, convolve(h, build_kernel(0.6, 0.2, b.bin_width)))
    path = tmp_path / "plan.csv"
    uio.write_text(path, uio.plan_table([("a", plan)]))
    back = uio.read_plans(path, b)["a"]
    assert np.array_equal(back.n_before, plan.n_before)
    assert np.array_equal(back.n_after, plan.n_after)


def _write_tiny(tmp_path, body, header="t,label,f0"):
    d = tmp_path / "bad"
    d.mkdir()
    (d / "manifest.json").write_text(json.dumps(
        {"d": 1, "label_range": [-1, 1], "sequences": [{"id": "a", "file": "a.csv"}]}))
    (d / "a.csv").write_text(header + "\n" + body)
    return d


def test_malformed_number_reports_line(tmp_path):
    d = _write_tiny(tmp_path, "0,0.1,1.0\n1,oops,2.0\n")
    with pytest.raises(DataError, match=r"a\.csv:3: not a number"):
        uio.read_dataset(d)


def test_non_increasing_t(tmp_path):
    d = _write_tiny(tmp_path, "0,0.1,1.0\n0,0.2,2.0\n")
    with pytest.raises(DataError, match=r":3: t=0 is not strictly increasing"):
        uio.read_dataset(d)


def test_bad_header_and_width(tmp_path):
    d = _write_tiny(tmp_path, "0,0.1\n", header="t,label,f0")
    with pytest.raises(DataError, match=":2: expected 3 fields"):
        uio.read_dataset(d)


def test_bad_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DataError, match="invalid JSON"):
        uio.read_manifest(tmp_path)


# ---------------------------------------------------------------------- CLI

SIM = ["--sequences", "3", "--frames", "60", "--dim", "2"]


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), "--seed", "1"] + SIM) == 0
    return out


def test_cli_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["stats"]) == 1
    assert main(["stats", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    d = _write_tiny(tmp_path, "0,5.0,1.0\n")
    assert main(["stats", str(d), "--out", str(tmp_path / "o")]) == 2
    assert "outside" in capsys.readouterr().err
    assert main(["stats", str(d), "--out", str(tmp_path / "o"), "--clamp"]) == 0


def test_cli_bad_kernel_is_usage_or_data(corpus, tmp_path):
    code = main(["convolve", str(corpus), "--out", str(tmp_path / "c"), "--kernel-size", "0.001"])
    assert code in (1, 2)


def test_simulate_then_stats(corpus, tmp_path):
    out = tmp_path / "stats"
    assert main(["stats", str(corpus), "--out", str(out)]) == 0
    rows = (out / "histograms.csv").read_text().splitlines()[1:]
    per_seq = {}
    for r in rows:
        sid, _, _, _, c = r.split(",")
        per_seq[sid] = per_seq.get(sid, 0) + float(c)
    assert per_seq == {"seq000": 60.0, "seq001": 60.0, "seq002": 60.0}
    assert (out / "stats_seq000.svg").read_text().startswith("<svg")


def test_identity_convolve_is_noop(corpus, tmp_path):
    out = tmp_path / "c"
    assert main(["convolve", str(corpus), "--out", str(out), "--identity-kernel"]) == 0
    for line in (out / "histograms.csv").read_text().splitlines()[1:]:
        cols = line.split(",")
        assert cols[4] == cols[5]


def test_noop_augment_is_byte_identical(corpus, tmp_path):
    out = tmp_path / "a"
    assert main(["augment", str(corpus), "--out", str(out), "--identity-kernel"]) == 0
    for f in corpus.glob("seq*.csv"):
        assert (out / f.name).read_bytes() == f.read_bytes()
    assert (out / "provenance.jsonl").read_text() == ""


def test_augment_with_plan_file(corpus, tmp_path):
    conv = tmp_path / "c"
    assert main(["convolve", str(corpus), "--out", str(conv)]) == 0
    out = tmp_path / "a"
    assert main(["augment", str(corpus), "--out", str(out), "--plan", str(conv / "plan.csv")]) == 0
    aug = uio.read_dataset(out)
    prov = [json.loads(l) for l in (out / "provenance.jsonl").read_text().splitlines()]
    orig = uio.read_dataset(corpus)
    assert sum(len(s) for s in aug) == sum(len(s) for s in orig) + len(prov)
    assert main(["augment", str(corpus), "--out", str(tmp_path / "e"),
                 "--missing-bins", "error"]) == 2


def test_weights_columns(corpus, tmp_path):
    out = tmp_path / "w"
    assert main(["weights", str(corpus), "--out", str(out), "--scheme", "cwl", "--scheme", "inv"]) == 0
    header, *rows = (out / "seq000.csv").read_text().splitlines()
    assert header.endswith("weight_cwl,weight_inv")
    w = np.array([float(r.split(",")[-2]) for r in rows])
    assert w.sum() == pytest.approx(60.0, abs=1e-9)


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "sim": {"frames_per_sequence": 40}}))
    args = ["simulate", "--config", str(cfg), "--sequences", "1"]

    def labels(name, extra=(), env=None):
        if env is None:
            monkeypatch.delenv("ULDA_SEED", raising=False)
        else:
            monkeypatch.setenv("ULDA_SEED", env)
        out = tmp_path / name
        assert main(args + ["--out", str(out)] + list(extra)) == 0
        return (out / "seq000.csv").read_text()

    from_file = labels("file")
    assert len(from_file.splitlines()) == 41
    assert labels("explicit5", ["--seed", "5"]) == from_file
    from_env = labels("env", env="6")
    assert from_env != from_file
    assert labels("explicit6", ["--seed", "6"]) == from_env
    assert labels("flag_beats_env", ["--seed", "5"], env="6") == from_file


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 1


def test_bench_small(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--out", str(out), "--repeats", "1"] + SIM) == 0
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["summary"]) >= {"baseline", "cwl", "tns+cwl"}
    assert (out / "bench.svg").read_text().count("<polyline") > 0
