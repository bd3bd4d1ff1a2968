"""Pipeline descriptions, simulation reports and their renderings."""
from __future__ import annotations

import json

from . import sizing
from .balancer import AllocationPlan, ResourceBudget, ResourceUsage
from .model_ir import ModelGraph, op_count
from .stream_sim.analytic import throughput_model
from .stream_sim.pipeline import TimingReport

FF_PLACEHOLDER = "n/a"


def _dims(layer) -> dict:
    return {"x_in": layer.x_in, "y_in": layer.y_in, "c_in": layer.c_in,
            "x_out": layer.x_out, "y_out": layer.y_out, "c_out": layer.c_out,
            "k_x": layer.k_x, "k_y": layer.k_y, "s_x": layer.s_x, "s_y": layer.s_y,
            "p_x": layer.p_x, "p_y": layer.p_y}


def _timing_fields(total_cycles: int, clock_mhz: float, ops: int) -> dict:
    latency_ms = total_cycles / (clock_mhz * 1e3)
    # derived from the stored latency so that gops * latency_s == ops holds for the document
    return {"total_cycles": total_cycles, "clock_mhz": clock_mhz, "ops": ops,
            "latency_ms": latency_ms, "throughput_gops": ops / (latency_ms * 1e6)}


def describe_pipeline(graph: ModelGraph, plan: AllocationPlan, usage: ResourceUsage,
                      budget: ResourceBudget, fifo_depth: int | None = None,
                      input_width: int = 1) -> dict:
    layers = []
    for i, (layer, a, res) in enumerate(zip(graph.layers, plan.layers, usage.per_layer)):
        groups = -(-layer.c_out // a.pe)
        layers.append({
            "index": i + 1,
            "kind": layer.kind.value,
            "dims": _dims(layer),
            "pe": a.pe,
            "simd": a.simd,
            "mac_units": a.mac_units,
            "kernel_cycles": a.kernel_cycles,
            "cycles_per_position": groups * a.kernel_cycles,
            "window_buffer_elems": sizing.window_buffer_elems(layer),
            "fifo_depth": sizing.fifo_depth(graph, i, fifo_depth),
            "weight_memory_words": groups * a.kernel_cycles if layer.has_weights else 0,
            "resources": dict(res),
        })
    est = throughput_model(graph, plan, budget.clock_mhz, input_width, fifo_depth)
    ops = op_count(graph)
    return {
        "document": "pipeline",
        "name": graph.name,
        "clock_mhz": budget.clock_mhz,
        "fifo_depth": fifo_depth,
        "input_width": input_width,
        "budget": budget.to_dict(),
        "usage": {"dsp": usage.dsp_used, "bram": usage.bram_used, "lut": usage.lut_used},
        "totals": {"mac_units": sum(plan.mac_units), **ops},
        "layers": layers,
        "estimate": {**_timing_fields(est.total_cycles, budget.clock_mhz, ops["ops"]),
                     "bottleneck_layer": est.bottleneck + 1, "fill_cycles": est.fill_cycles},
    }


def plan_from_description(doc: dict, graph: ModelGraph) -> AllocationPlan:
    return AllocationPlan.from_pairs(graph, [(l["pe"], l["simd"]) for l in doc["layers"]])


def budget_from_description(doc: dict) -> ResourceBudget:
    return ResourceBudget(**doc["budget"])


def sim_report(graph: ModelGraph, description: dict, timing: TimingReport) -> dict:
    ops = op_count(graph)
    stalls = []
    for i, t in enumerate(timing.layers):
        stalls.append({"index": i + 1, **t.to_dict(), "active": t.active,
                       "input_stall_fraction": t.input_stall_fraction})
    return {
        "document": "simulation",
        "name": graph.name,
        **_timing_fields(timing.total_cycles, timing.clock_mhz, ops["ops"]),
        "macs": ops["macs"],
        "adds": ops["adds"],
        "usage": description["usage"],
        "budget": description["budget"],
        "plan": [{"index": l["index"], "pe": l["pe"], "simd": l["simd"]}
                 for l in description["layers"]],
        "layers": stalls,
    }


def render_machine(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _timing(doc: dict) -> dict:
    return doc["estimate"] if doc.get("document") == "pipeline" else doc


def render_human(doc: dict) -> str:
    lines = [f"network: {doc['name']}"]
    if doc.get("document") == "pipeline":
        head = f"{'layer':>5} {'kind':<8} {'in':>12} {'out':>12} {'pe':>5} {'simd':>5} " \
               f"{'lanes':>7} {'cyc/pos':>8} {'DSP':>6} {'BRAM':>5} {'LUT':>7}"
        lines.append(head)
        for l in doc["layers"]:
            d = l["dims"]
            r = l["resources"]
            lines.append(
                f"{l['index']:>5} {l['kind']:<8} "
                f"{'%dx%dx%d' % (d['x_in'], d['y_in'], d['c_in']):>12} "
                f"{'%dx%dx%d' % (d['x_out'], d['y_out'], d['c_out']):>12} "
                f"{l['pe']:>5} {l['simd']:>5} {l['mac_units']:>7} {l['cycles_per_position']:>8} "
                f"{r['dsp']:>6} {r['bram']:>5} {r['lut']:>7}")
    else:
        lines.append(f"{'layer':>5} {'busy':>10} {'stall_in':>10} {'stall_out':>10} {'in-stall %':>10}")
        for l in doc["layers"]:
            lines.append(f"{l['index']:>5} {l['busy']:>10} {l['stall_in']:>10} {l['stall_out']:>10} "
                         f"{100 * l['input_stall_fraction']:>10.2f}")
    t = _timing(doc)
    u = doc["usage"]
    lines.append("")
    lines.append(f"{'Latency [ms]':>14} {'Throughput [GOP/s]':>20} {'LUT':>8} {'FF':>6} "
                 f"{'DSP':>6} {'BRAM':>6}")
    lines.append(f"{t['latency_ms']:>14.4f} {t['throughput_gops']:>20.3f} {u['lut']:>8} "
                 f"{FF_PLACEHOLDER:>6} {u['dsp']:>6} {u['bram']:>6}")
    return "\n".join(lines) + "\n"


def render_report(doc: dict, fmt: str = "human") -> str:
    if fmt == "machine":
        return render_machine(doc)
    if fmt == "human":
        return render_human(doc)
    raise ValueError(f"unknown report format {fmt!r}")
