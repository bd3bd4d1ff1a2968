"""Throughput balancing: split a global MAC-unit budget over the layers.

Every layer i gets pe*simd MAC lanes. A layer emits pe*simd/K_i elements per
cycle and consumes that divided by its rate ratio R_i, so a chain is balanced
when the per-layer output rates follow the running product of the R_i.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import sizing
from .errors import InfeasibleBudgetError, PlanMismatchError
from .model_ir import LayerKind, LayerSpec, ModelGraph

DEFAULT_DSP = 840
DEFAULT_BRAM = 445
DEFAULT_LUT = 203800
BRAM_BITS = 18432
BIAS_BITS = 32


@dataclass(frozen=True)
class ResourceBudget:
    dsp: int = DEFAULT_DSP
    bram: int = DEFAULT_BRAM
    lut: int = DEFAULT_LUT
    reserved_dsp: int = 0
    reserved_bram: int = 0
    reserved_lut: int = 0
    lut_per_binary_mac: int = 5
    lut_overhead_per_layer: int = 64
    bram_bits: int = BRAM_BITS
    clock_mhz: float = 100.0

    def __post_init__(self):
        for name in ("dsp", "bram", "lut", "reserved_dsp", "reserved_bram", "reserved_lut",
                     "lut_per_binary_mac", "lut_overhead_per_layer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for res in ("dsp", "bram", "lut"):
            if getattr(self, "reserved_" + res) > getattr(self, res):
                raise ValueError(f"reserved {res} exceeds the {res} budget")
        if self.bram_bits < 1 or self.clock_mhz <= 0:
            raise ValueError("bram_bits and clock_mhz must be positive")

    def available(self) -> dict:
        return {r: getattr(self, r) - getattr(self, "reserved_" + r) for r in ("dsp", "bram", "lut")}

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LayerAlloc:
    pe: int
    simd: int
    kernel_elems: int

    @property
    def mac_units(self) -> int:
        return self.pe * self.simd

    @property
    def kernel_cycles(self) -> int:
        return self.kernel_elems // self.simd


@dataclass(frozen=True)
class AllocationPlan:
    layers: tuple[LayerAlloc, ...]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i) -> LayerAlloc:
        return self.layers[i]

    @property
    def mac_units(self) -> list[int]:
        return [a.mac_units for a in self.layers]

    @classmethod
    def from_pairs(cls, graph: ModelGraph, pairs) -> "AllocationPlan":
        return cls(tuple(LayerAlloc(pe, simd, layer.kernel_elems)
                         for layer, (pe, simd) in zip(graph.layers, pairs)))

    def check(self, graph: ModelGraph) -> "AllocationPlan":
        if len(self.layers) != len(graph.layers):
            raise PlanMismatchError(f"plan has {len(self.layers)} layers, graph has {len(graph.layers)}")
        for i, (layer, a) in enumerate(zip(graph.layers, self.layers)):
            if a.kernel_elems != layer.kernel_elems:
                raise PlanMismatchError(f"layer {i + 1}: plan kernel size {a.kernel_elems} "
                                        f"!= {layer.kernel_elems}")
            if not 1 <= a.pe <= layer.c_out:
                raise PlanMismatchError(f"layer {i + 1}: pe={a.pe} outside 1..{layer.c_out}")
            if a.simd < 1 or layer.kernel_elems % a.simd:
                raise PlanMismatchError(f"layer {i + 1}: simd={a.simd} does not divide "
                                        f"{layer.kernel_elems}")
        return self


@dataclass
class ResourceUsage:
    dsp_used: int
    bram_used: int
    lut_used: int
    per_layer: list[dict] = field(default_factory=list)

    def fits(self, budget: ResourceBudget) -> bool:
        avail = budget.available()
        return (self.dsp_used <= avail["dsp"] and self.bram_used <= avail["bram"]
                and self.lut_used <= avail["lut"])

    def to_dict(self) -> dict:
        return {"dsp_used": self.dsp_used, "bram_used": self.bram_used,
                "lut_used": self.lut_used, "per_layer": self.per_layer}


def compute_ratio(layer: LayerSpec) -> Fraction:
    """R = c_out / (s_y * s_x * c_in); an FC layer strides over its whole input."""
    if layer.kind is LayerKind.FC:
        s_x, s_y = layer.x_in, layer.y_in
    else:
        s_x, s_y = layer.s_x, layer.s_y
    return Fraction(layer.c_out, s_y * s_x * layer.c_in)


def compute_distribution(graph: ModelGraph) -> list[Fraction]:
    prods, acc = [], Fraction(1)
    for layer in graph.layers:
        acc *= compute_ratio(layer)
        prods.append(acc)
    total = sum(prods)
    return [p / total for p in prods]


def border_ratio(layer: LayerSpec) -> Fraction:
    """Rate ratio with the exact output width instead of x_in/s_x.

    Rows stream one after another, so along y only the stride matters, but
    within a row the kernel border drops (k_x - 1 - 2 p_x) / s_x columns.
    """
    if layer.kind is LayerKind.FC:
        return compute_ratio(layer)
    return Fraction(layer.c_out * layer.x_out, layer.s_y * layer.x_in * layer.c_in)


def mac_shares(graph: ModelGraph) -> list[Fraction]:
    """Fraction of the MAC lanes for each layer.

    Output rates follow the running rate-ratio product; lanes needed for a rate
    scale with the kernel size, hence the extra K_i factor.
    """
    raw, acc = [], Fraction(1)
    for layer in graph.layers:
        acc *= border_ratio(layer)
        raw.append(acc * layer.kernel_elems)
    total = sum(raw)
    return [r / total for r in raw]


def divisors(n: int) -> list[int]:
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def snap_allocation(layer: LayerSpec, target_macs: int) -> tuple[int, int]:
    """Largest pe*simd <= target with pe <= c_out and simd | K; ties prefer larger simd."""
    target = max(1, int(target_macs))
    best = (1, 1)
    for simd in divisors(layer.kernel_elems):
        pe = min(layer.c_out, target // simd)
        if pe < 1:
            break
        if pe * simd > best[0] * best[1] or (pe * simd == best[0] * best[1] and simd > best[1]):
            best = (pe, simd)
    return best


def feasible_products(layer: LayerSpec) -> set[int]:
    return {pe * simd for simd in divisors(layer.kernel_elems) for pe in range(1, layer.c_out + 1)}


def _bram_blocks(bits: int, block: int) -> int:
    return -(-bits // block)


def estimate_resources(graph: ModelGraph, plan: AllocationPlan, params=None,
                       budget: ResourceBudget | None = None,
                       fifo_depth: int | None = None) -> ResourceUsage:
    budget = budget or ResourceBudget()
    blk = budget.bram_bits
    rows = []
    for i, (layer, a) in enumerate(zip(graph.layers, plan.layers)):
        lanes = a.pe * a.simd
        dsp = lut = 0
        if layer.has_weights and not layer.binary_weights:
            dsp = lanes
        else:
            lut = lanes * budget.lut_per_binary_mac
        lut += budget.lut_overhead_per_layer
        bram = 0
        if layer.has_weights:
            per_pe = -(-layer.c_out // a.pe)
            bits = per_pe * layer.kernel_elems * layer.w_fmt.total_bits
            if layer.has_bias:
                bits += per_pe * BIAS_BITS
            bram += a.pe * _bram_blocks(bits, blk)
        bram += _bram_blocks(sizing.window_buffer_bits(graph, i), blk)
        bram += _bram_blocks(sizing.fifo_bits(graph, i, fifo_depth), blk)
        rows.append({"dsp": dsp, "bram": bram, "lut": lut})
    return ResourceUsage(sum(r["dsp"] for r in rows), sum(r["bram"] for r in rows),
                         sum(r["lut"] for r in rows), rows)


def allocate(graph: ModelGraph, budget: ResourceBudget, params=None,
             fifo_depth: int | None = None) -> tuple[AllocationPlan, ResourceUsage]:
    """Largest global MAC budget B whose snapped per-layer targets fit the resources.

    Snapped plans only change where floor(B * share_i) reaches a feasible
    pe*simd product, so those breakpoints are visited in increasing order and
    the search stops at the first one that does not fit. Stopping there (rather
    than jumping over infeasible points) keeps the result monotone in budget.
    """
    shares = mac_shares(graph)

    def plan_for(B: int) -> AllocationPlan:
        pairs = [snap_allocation(layer, max(1, math.floor(B * s)))
                 for layer, s in zip(graph.layers, shares)]
        return AllocationPlan.from_pairs(graph, pairs)

    best = plan_for(1)
    usage = estimate_resources(graph, best, params, budget, fifo_depth)
    if not usage.fits(budget):
        avail = budget.available()
        raise InfeasibleBudgetError(
            f"even one MAC lane per layer needs dsp={usage.dsp_used} bram={usage.bram_used} "
            f"lut={usage.lut_used}; available dsp={avail['dsp']} bram={avail['bram']} "
            f"lut={avail['lut']}")

    points = sorted({math.ceil(Fraction(p) / s)
                     for layer, s in zip(graph.layers, shares)
                     for p in feasible_products(layer) if p > 1})
    for B in points:
        plan = plan_for(B)
        if plan == best:
            continue
        u = estimate_resources(graph, plan, params, budget, fifo_depth)
        if not u.fits(budget):
            break
        best, usage = plan, u
    return best, usage


def layer_rates(graph: ModelGraph, plan: AllocationPlan) -> list[tuple[Fraction, Fraction]]:
    """(in_rate, out_rate) in elements per cycle for each layer under the cycle contract."""
    out = []
    for layer, a in zip(graph.layers, plan.layers):
        out_rate = Fraction(a.mac_units, layer.kernel_elems)
        out.append((out_rate / compute_ratio(layer), out_rate))
    return out
