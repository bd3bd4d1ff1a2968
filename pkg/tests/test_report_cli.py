import json

import numpy as np
import pytest

from netgen import random_graph, random_params
from streamcnn import cli, containers
from streamcnn.balancer import ResourceBudget, allocate
from streamcnn.fixed_point import FxFormat, QTensor
from streamcnn.model_ir import (LayerParams, ModelGraph, ParamSet, make_layer, op_count,
                                parse_architecture, serialize_architecture)
from streamcnn.report import (budget_from_description, describe_pipeline, plan_from_description,
                              render_human, render_machine, sim_report)
from streamcnn.stream_sim import build_pipeline, run


@pytest.fixture
def example(tmp_path):
    assert cli.main(["init-example", str(tmp_path), "--seed", "3"]) == 0
    return tmp_path, [str(tmp_path / n) for n in ("arch.json", "params.nn2c", "input.nntf")]


def test_compile_machine_report(example, tmp_path, capsys):
    _, (arch, params, _) = example
    out = tmp_path / "desc.json"
    assert cli.main(["compile", arch, params, "--format", "machine", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["document"] == "pipeline"
    assert len(doc["layers"]) == 3
    graph = parse_architecture(open(arch).read())
    plan_from_description(doc, graph).check(graph)
    # re-running the allocator on the recorded budget gives the recorded plan
    again, _ = allocate(graph, budget_from_description(doc))
    assert again == plan_from_description(doc, graph)


def test_simulate_with_oracle(example, tmp_path, capsys):
    _, (arch, params, x) = example
    out = tmp_path / "out.nntf"
    rc = cli.main(["simulate", arch, params, x, "--out", str(out), "--oracle", "--format",
                   "machine"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["document"] == "simulation"
    ref = tmp_path / "ref.nntf"
    assert cli.main(["oracle", arch, params, x, "--out", str(ref)]) == 0
    assert containers.load_tensor(out.read_bytes()) == containers.load_tensor(ref.read_bytes())


def test_oracle_real_mode_writes_npy(example, tmp_path):
    _, (arch, params, x) = example
    out = tmp_path / "real.npy"
    assert cli.main(["oracle", arch, params, x, "--mode", "real", "--out", str(out)]) == 0
    assert np.load(out).shape == parse_architecture(open(arch).read()).output_shape


def test_exit_codes(example, tmp_path, capsys):
    _, (arch, params, x) = example
    assert cli.main(["compile", arch, str(tmp_path / "missing")]) == 2
    bad_arch = tmp_path / "bad.json"
    bad_arch.write_text("{")
    assert cli.main(["compile", str(bad_arch), params]) == 2
    corrupt = tmp_path / "corrupt.nn2c"
    corrupt.write_bytes(open(params, "rb").read()[:-1])
    assert cli.main(["compile", arch, str(corrupt)]) == 2
    assert cli.main(["compile", arch, params, "--dsp", "5", "--reserve-dsp", "9"]) == 2
    assert cli.main(["compile", arch, params, "--fifo-depth", "0"]) == 2
    assert cli.main(["compile", arch, params, "--lut", "10", "--reserve-lut", "10"]) == 3
    wrong = tmp_path / "wrong.nntf"
    wrong.write_bytes(containers.dump_tensor(QTensor(np.zeros((2, 2, 2)), FxFormat(8, 4))))
    assert cli.main(["simulate", arch, params, str(wrong)]) == 4
    junk = tmp_path / "junk.nntf"
    junk.write_bytes(b"NNTF\0")
    assert cli.main(["simulate", arch, params, str(junk)]) == 4
    err = capsys.readouterr().err
    assert "infeasible budget" in err and "does not match" in err


def test_oracle_mismatch_exit_code(example, monkeypatch, capsys):
    _, (arch, params, x) = example
    real = cli.oracle.run_network_ref

    def off_by_one(*a, **kw):
        r = real(*a, **kw)
        return QTensor(r.data + 1, r.fmt)
    monkeypatch.setattr(cli.oracle, "run_network_ref", off_by_one)
    assert cli.main(["simulate", arch, params, x, "--oracle"]) == 5
    assert "differs from reference" in capsys.readouterr().err


def documents(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    p = random_params(rng, g)
    budget = ResourceBudget(dsp=64, bram=200, lut=5000)
    plan, usage = allocate(g, budget)
    desc = describe_pipeline(g, plan, usage, budget)
    x = QTensor(rng.integers(g.input_fmt.min_raw, g.input_fmt.max_raw + 1, g.input_shape),
                g.input_fmt)
    _, timing = run(build_pipeline(g, plan, p), x)
    return g, desc, sim_report(g, desc, timing)


@pytest.mark.parametrize("seed", range(5))
def test_machine_round_trip_and_stability(seed):
    g, desc, rep = documents(seed)
    for doc in (desc, rep):
        text = render_machine(doc)
        assert json.loads(text) == doc
        assert render_machine(json.loads(text)) == text
    _, desc2, rep2 = documents(seed)
    assert render_machine(desc2) == render_machine(desc)
    assert render_machine(rep2) == render_machine(rep)


@pytest.mark.parametrize("seed", range(5))
def test_throughput_identity(seed):
    g, desc, rep = documents(seed)
    ops = op_count(g)["ops"]
    for t in (desc["estimate"], rep):
        assert t["ops"] == ops
        assert abs(t["throughput_gops"] * t["latency_ms"] * 1e6 - ops) <= 1e-9 * ops


def test_human_table(example):
    _, (arch, params, x) = example
    graph = parse_architecture(open(arch).read())
    budget = ResourceBudget()
    plan, usage = allocate(graph, budget)
    text = render_human(describe_pipeline(graph, plan, usage, budget))
    header = [l for l in text.splitlines() if "Latency [ms]" in l]
    assert header and "Throughput [GOP/s]" in header[0] and "FF" in header[0]
    assert "n/a" in text.splitlines()[-1]
    rows = [l.split() for l in text.splitlines() if l.split() and l.split()[0] in "123"]
    # binary-weight layers use no DSP
    assert [r[-3] for r in rows][1:] == ["0", "0"]


def test_identity_network_through_simulate(tmp_path):
    q_in, q_out = FxFormat(8, 4), FxFormat(8, 2)
    layer = make_layer("Conv", x_in=5, c_in=1, c_out=1, a_fmt=q_out)
    g = ModelGraph("identity", q_in, (layer,)).validate()
    p = ParamSet([LayerParams(np.full((1, 1, 1, 1), 16))]).check(g)   # 1.0 at frac 4
    x = QTensor(np.arange(-12, 13).reshape(5, 5, 1), q_in)
    (tmp_path / "a.json").write_text(serialize_architecture(g))
    (tmp_path / "p.nn2c").write_bytes(containers.dump_params(p, g))
    (tmp_path / "x.nntf").write_bytes(containers.dump_tensor(x))
    rc = cli.main(["simulate", str(tmp_path / "a.json"), str(tmp_path / "p.nn2c"),
                   str(tmp_path / "x.nntf"), "--out", str(tmp_path / "y.nntf"),
                   "--report", str(tmp_path / "r.txt")])
    assert rc == 0
    y = containers.load_tensor((tmp_path / "y.nntf").read_bytes())
    # acc frac 8 -> output frac 2 drops the two low input bits
    assert np.array_equal(y.data, x.data >> 2)
