"""Command-line front end.

Exit codes:
  0  success
  2  unreadable input, malformed architecture/parameters, invalid flags
  3  the resource budget cannot hold even one MAC lane per layer
  4  input tensor file malformed or not matching the network input
  5  --oracle cross-check found a mismatch between simulator and reference
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import balancer, containers, oracle
from .errors import ArchitectureError, ContainerError, InfeasibleBudgetError, StreamCNNError
from .fixed_point import BINARY, Activation, FxFormat, QTensor
from .model_ir import ModelGraph, LayerParams, ParamSet, make_layer, parse_architecture, \
    serialize_architecture
from .report import describe_pipeline, render_report, sim_report
from .stream_sim import build_pipeline, run

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_TENSOR, EXIT_MISMATCH = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str, binary: bool = False):
    try:
        p = Path(path)
        return p.read_bytes() if binary else p.read_text()
    except OSError as e:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {e.strerror or e}") from e


def _write(path: str | None, data, binary: bool = False):
    if path is None or path == "-":
        if binary:
            raise CliError(EXIT_INPUT, "binary output needs --out PATH")
        sys.stdout.write(data)
        return
    try:
        p = Path(path)
        p.write_bytes(data) if binary else p.write_text(data)
    except OSError as e:
        raise CliError(EXIT_INPUT, f"cannot write {path}: {e.strerror or e}") from e


def _load_model(args) -> tuple[ModelGraph, ParamSet]:
    text = _read(args.arch)
    try:
        graph = parse_architecture(text)
    except ArchitectureError as e:
        raise CliError(EXIT_INPUT, f"{args.arch}: {e}") from e
    data = _read(args.params, binary=True)
    try:
        params = containers.load_params(data, graph)
    except ContainerError as e:
        raise CliError(EXIT_INPUT, f"{args.params}: {e}") from e
    return graph, params


def _load_input(path: str, graph: ModelGraph) -> QTensor:
    data = _read(path, binary=True)
    try:
        x = containers.load_tensor(data)
    except ContainerError as e:
        raise CliError(EXIT_TENSOR, f"{path}: {e}") from e
    if tuple(x.data.shape) != graph.input_shape or x.fmt != graph.input_fmt:
        raise CliError(EXIT_TENSOR, f"{path}: tensor {x.data.shape} {x.fmt} does not match "
                                    f"network input {graph.input_shape} {graph.input_fmt}")
    return x


def _budget(args) -> balancer.ResourceBudget:
    if args.fifo_depth is not None and args.fifo_depth < 1:
        raise CliError(EXIT_INPUT, "--fifo-depth must be positive")
    if args.input_width < 1:
        raise CliError(EXIT_INPUT, "--input-width must be positive")
    try:
        return balancer.ResourceBudget(
            dsp=args.dsp, bram=args.bram, lut=args.lut, reserved_dsp=args.reserve_dsp,
            reserved_bram=args.reserve_bram, reserved_lut=args.reserve_lut,
            lut_per_binary_mac=args.lut_per_binmac, lut_overhead_per_layer=args.lut_overhead,
            clock_mhz=args.clock_mhz)
    except ValueError as e:
        raise CliError(EXIT_INPUT, f"invalid budget: {e}") from e


def _compile(args, graph, params):
    budget = _budget(args)
    try:
        plan, usage = balancer.allocate(graph, budget, params, args.fifo_depth)
    except InfeasibleBudgetError as e:
        raise CliError(EXIT_BUDGET, f"infeasible budget: {e}") from e
    doc = describe_pipeline(graph, plan, usage, budget, args.fifo_depth, args.input_width)
    return plan, doc


def cmd_compile(args) -> int:
    graph, params = _load_model(args)
    _, doc = _compile(args, graph, params)
    _write(args.out, render_report(doc, args.format))
    return EXIT_OK


def cmd_simulate(args) -> int:
    graph, params = _load_model(args)
    x = _load_input(args.input, graph)
    plan, desc = _compile(args, graph, params)
    sim = build_pipeline(graph, plan, params, fifo_depth=args.fifo_depth,
                         input_width=args.input_width, clock_mhz=args.clock_mhz)
    out, timing = run(sim, x)
    if args.out:
        _write(args.out, containers.dump_tensor(out), binary=True)
    doc = sim_report(graph, desc, timing)
    _write(args.report, render_report(doc, args.format))
    if args.oracle:
        ref = oracle.run_network_ref(graph, params, x)
        if out != ref:
            n = int(np.count_nonzero(out.data != ref.data))
            raise CliError(EXIT_MISMATCH, f"simulator output differs from reference in {n} elements")
    return EXIT_OK


def cmd_oracle(args) -> int:
    graph, params = _load_model(args)
    x = _load_input(args.input, graph)
    result = oracle.run_network_ref(graph, params, x, args.mode)
    if args.mode == "quantized":
        _write(args.out, containers.dump_tensor(result), binary=True)
    else:
        try:
            with open(args.out, "wb") as f:
                np.save(f, result)
        except OSError as e:
            raise CliError(EXIT_INPUT, f"cannot write {args.out}: {e.strerror or e}") from e
    return EXIT_OK


def example_model(seed: int = 0):
    """A small three-layer network with random parameters and input."""
    rng = np.random.default_rng(seed)
    q = FxFormat(8, 4)
    layers = (
        make_layer("Conv", x_in=8, c_in=2, c_out=4, k=3, p=1, a_fmt=q, act_fn=Activation.RELU,
                   has_bias=True),
        make_layer("Conv", x_in=8, c_in=4, c_out=8, k=3, s=1, p=1, w_fmt=BINARY, a_fmt=BINARY,
                   act_fn=Activation.BINARY_SIGN),
        make_layer("FC", x_in=8, c_in=8, c_out=4, w_fmt=BINARY, a_fmt=FxFormat(16, 4)),
    )
    graph = ModelGraph("example", q, layers).validate()
    params = []
    for layer in layers:
        f = layer.w_fmt
        w = rng.integers(f.min_raw, f.max_raw + 1, size=layer.weight_shape)
        b = rng.integers(-64, 65, size=layer.bias_count)
        params.append(LayerParams(w, b))
    x = QTensor(rng.integers(q.min_raw, q.max_raw + 1, size=graph.input_shape), q)
    return graph, ParamSet(params).check(graph), x


def cmd_init_example(args) -> int:
    d = Path(args.dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(EXIT_INPUT, f"cannot create {d}: {e.strerror or e}") from e
    graph, params, x = example_model(args.seed)
    _write(str(d / "arch.json"), serialize_architecture(graph))
    _write(str(d / "params.nn2c"), containers.dump_params(params, graph), binary=True)
    _write(str(d / "input.nntf"), containers.dump_tensor(x), binary=True)
    print(f"wrote {d / 'arch.json'}, {d / 'params.nn2c'}, {d / 'input.nntf'}")
    return EXIT_OK


def _add_model_args(p, with_input: bool):
    p.add_argument("arch", help="architecture document (JSON)")
    p.add_argument("params", help="parameter container (NN2C)")
    if with_input:
        p.add_argument("input", help="input tensor (NNTF)")


def _add_budget_args(p):
    d = balancer.ResourceBudget()
    g = p.add_argument_group("resource budget")
    g.add_argument("--dsp", type=int, default=d.dsp)
    g.add_argument("--bram", type=int, default=d.bram, help="18-kbit blocks")
    g.add_argument("--lut", type=int, default=d.lut)
    g.add_argument("--reserve-dsp", type=int, default=0, help="taken by the host design")
    g.add_argument("--reserve-bram", type=int, default=0)
    g.add_argument("--reserve-lut", type=int, default=0)
    g.add_argument("--lut-per-binmac", type=int, default=d.lut_per_binary_mac)
    g.add_argument("--lut-overhead", type=int, default=d.lut_overhead_per_layer,
                   help="fixed LUT cost per layer block")
    g.add_argument("--clock-mhz", type=float, default=d.clock_mhz)
    g.add_argument("--fifo-depth", type=int, default=None,
                   help="inter-layer FIFO depth (default: 2 x consumer c_in)")
    g.add_argument("--input-width", type=int, default=1,
                   help="input elements injected per cycle")
    p.add_argument("--format", choices=("human", "machine"), default="human")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamcnn", description="Streaming CNN accelerator compiler and simulator.",
        epilog=__doc__.split("\n", 1)[1], formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="allocate MAC units and describe the pipeline")
    _add_model_args(p, False)
    _add_budget_args(p)
    p.add_argument("--out", help="description file (default: stdout)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="compile, then run the cycle simulation")
    _add_model_args(p, True)
    _add_budget_args(p)
    p.add_argument("--out", help="output tensor file (NNTF)")
    p.add_argument("--report", help="report file (default: stdout)")
    p.add_argument("--oracle", action="store_true",
                   help="cross-check against the reference execution")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="reference execution, layer by layer")
    _add_model_args(p, True)
    p.add_argument("--mode", choices=("quantized", "real"), default="quantized")
    p.add_argument("--out", required=True,
                   help="output file: NNTF (quantized) or .npy float array (real)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("init-example", help="write a small example network")
    p.add_argument("dir")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_example)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except StreamCNNError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
