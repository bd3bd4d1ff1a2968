from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgen import random_graph
from streamcnn import sizing
from streamcnn.balancer import (AllocationPlan, LayerAlloc, ResourceBudget, allocate,
                                border_ratio, compute_distribution, compute_ratio, divisors,
                                estimate_resources, layer_rates, mac_shares, snap_allocation)
from streamcnn.errors import InfeasibleBudgetError, PlanMismatchError
from streamcnn.fixed_point import BINARY, Activation, FxFormat
from streamcnn.model_ir import ModelGraph, make_layer

Q8 = FxFormat(8, 4)
Q16 = FxFormat(16, 8)


def chain(*layers, fmt=Q8):
    return ModelGraph("t", fmt, tuple(layers)).validate()


def test_ratio_examples():
    assert compute_ratio(make_layer("Conv", x_in=8, c_in=8, c_out=16, k=3, p=1)) == 2
    assert compute_ratio(make_layer("Conv", x_in=8, c_in=3, c_out=12, k=2, s=2)) == 1
    fc = make_layer("FC", x_in=1, c_in=256, c_out=10)
    assert compute_ratio(fc) == Fraction(10, 256)
    assert compute_ratio(make_layer("AvgPool", x_in=4, c_in=5, c_out=5, k=2, s=2)) == Fraction(1, 4)


def test_distribution_examples():
    g = chain(make_layer("Conv", x_in=4, c_in=2, c_out=4),
              make_layer("Conv", x_in=4, c_in=4, c_out=2),
              make_layer("Conv", x_in=4, c_in=2, c_out=2))
    assert [compute_ratio(l) for l in g.layers] == [2, Fraction(1, 2), 1]
    assert compute_distribution(g) == [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]
    assert compute_distribution(chain(make_layer("Conv", x_in=4, c_in=2, c_out=4))) == [1]
    same = chain(*[make_layer("Conv", x_in=4, c_in=3, c_out=3) for _ in range(5)])
    assert compute_distribution(same) == [Fraction(1, 5)] * 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_distribution_exact(seed):
    g = random_graph(np.random.default_rng(seed))
    d = compute_distribution(g)
    assert sum(d) == 1
    assert all(isinstance(v, Fraction) and v > 0 for v in d)
    assert sum(mac_shares(g)) == 1


def brute_snap(c_out, K, target):
    best = None
    for pe in range(1, c_out + 1):
        for simd in range(1, K + 1):
            if K % simd or pe * simd > target:
                continue
            key = (pe * simd, simd, -pe)
            if best is None or key > best[0]:
                best = (key, (pe, simd))
    return best[1]


def test_snap_examples():
    layer = make_layer("Conv", x_in=4, c_in=8, c_out=16, k=3, p=1)
    assert layer.kernel_elems == 72
    assert snap_allocation(layer, 32) == (4, 8)
    assert snap_allocation(layer, 1) == (1, 1)
    small = make_layer("Conv", x_in=4, c_in=1, c_out=2, k=3, p=1)
    assert snap_allocation(small, 100) == (2, 9)


@settings(max_examples=200, deadline=None)
@given(c_out=st.integers(1, 12), c_in=st.integers(1, 6), k=st.sampled_from([1, 2, 3]),
       target=st.integers(1, 200))
def test_snap_is_maximal(c_out, c_in, k, target):
    layer = make_layer("Conv", x_in=4, c_in=c_in, c_out=c_out, k=k, p=0)
    pe, simd = snap_allocation(layer, target)
    assert pe * simd <= target and pe <= c_out and layer.kernel_elems % simd == 0
    assert (pe, simd) == brute_snap(c_out, layer.kernel_elems, target)


def test_divisors():
    assert divisors(72) == [1, 2, 3, 4, 6, 8, 9, 12, 18, 24, 36, 72]
    assert divisors(1) == [1]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 10 ** 6))
def test_balance_property(seed, B):
    """Unsnapped targets make every layer's output rate equal the next layer's input rate."""
    g = random_graph(np.random.default_rng(seed))
    shares = mac_shares(g)
    targets = [B * s for s in shares]
    out_rate = [t / l.kernel_elems for t, l in zip(targets, g.layers)]   # pe*simd / K
    for i in range(1, len(g.layers)):
        in_rate = out_rate[i] / border_ratio(g.layers[i])
        assert in_rate == out_rate[i - 1]


def test_shares_follow_distribution_without_borders():
    g = chain(make_layer("Conv", x_in=8, c_in=2, c_out=4, k=3, p=1),
              make_layer("Conv", x_in=8, c_in=4, c_out=4, k=3, p=1),
              make_layer("Conv", x_in=8, c_in=4, c_out=8, k=1))
    d = compute_distribution(g)
    shares = mac_shares(g)
    ratio = [s / l.kernel_elems / dd for s, l, dd in zip(shares, g.layers, d)]
    assert len(set(ratio)) == 1


def test_layer_rates_balanced_plan():
    g = chain(make_layer("Conv", x_in=8, c_in=2, c_out=4, k=3, p=1),
              make_layer("Conv", x_in=8, c_in=4, c_out=4, k=3, p=1))
    plan = AllocationPlan.from_pairs(g, [(2, 9), (4, 9)])
    (_, out0), (in1, _) = layer_rates(g, plan)
    assert out0 == in1


def identical_fixed():
    return chain(make_layer("Conv", x_in=8, c_in=8, c_out=8, k=3, p=1),
                 make_layer("Conv", x_in=8, c_in=8, c_out=8, k=3, p=1))


def test_allocate_two_identical_fixed_layers():
    budget = ResourceBudget(dsp=8, bram=10 ** 6, lut=10 ** 9)
    plan, usage = allocate(identical_fixed(), budget)
    assert plan.mac_units == [4, 4]
    assert usage.dsp_used == 8


def test_allocate_fully_binary_splits_luts():
    layer = make_layer("Conv", x_in=8, c_in=16, c_out=16, k=3, p=1, w_fmt=BINARY, a_fmt=BINARY,
                       act_fn=Activation.BINARY_SIGN)
    g = chain(layer, layer, fmt=BINARY)
    budget = ResourceBudget(dsp=0, bram=10 ** 6, lut=1000, lut_per_binary_mac=5,
                            lut_overhead_per_layer=0)
    plan, usage = allocate(g, budget)
    assert usage.dsp_used == 0
    assert sum(plan.mac_units) <= 200
    assert all(90 <= m <= 100 for m in plan.mac_units)


def test_allocate_reserved_equals_budget_is_infeasible():
    budget = ResourceBudget(dsp=100, reserved_dsp=100)
    with pytest.raises(InfeasibleBudgetError):
        allocate(identical_fixed(), budget)


def test_budget_validation():
    with pytest.raises(ValueError, match="reserved"):
        ResourceBudget(dsp=1, reserved_dsp=2)
    with pytest.raises(ValueError):
        ResourceBudget(lut=-1)


def test_estimate_examples():
    bin_layer = make_layer("Conv", x_in=4, c_in=4, c_out=4, k=3, p=1, w_fmt=BINARY, a_fmt=BINARY,
                           act_fn=Activation.BINARY_SIGN)
    g = chain(bin_layer, fmt=BINARY)
    plan = AllocationPlan.from_pairs(g, [(4, 36)])
    assert estimate_resources(g, plan).dsp_used == 0

    def weight_blocks(c_in):
        layer = make_layer("Conv", x_in=1, c_in=c_in, c_out=1, w_fmt=FxFormat(16, 0))
        gg = chain(layer)
        u = estimate_resources(gg, AllocationPlan.from_pairs(gg, [(1, 1)]))
        buffers = sum(-(-bits // 18432) for bits in (sizing.window_buffer_bits(gg, 0),
                                                       sizing.fifo_bits(gg, 0)))
        return u.per_layer[0]["bram"] - buffers
    assert weight_blocks(1000) == 1
    assert weight_blocks(1200) == 2


def test_estimate_counts_pe_blocks_and_luts():
    layer = make_layer("Conv", x_in=8, c_in=8, c_out=8, k=3, p=1, w_fmt=BINARY)
    g = chain(layer)
    budget = ResourceBudget(lut_per_binary_mac=5, lut_overhead_per_layer=64)
    u = estimate_resources(g, AllocationPlan.from_pairs(g, [(4, 9)]), budget=budget)
    assert u.lut_used == 36 * 5 + 64
    assert u.per_layer[0]["bram"] == 4 + 1 + 1


def test_plan_check():
    g = identical_fixed()
    with pytest.raises(PlanMismatchError, match="pe=9"):
        AllocationPlan.from_pairs(g, [(9, 1), (1, 1)]).check(g)
    with pytest.raises(PlanMismatchError, match="simd=5"):
        AllocationPlan.from_pairs(g, [(1, 5), (1, 1)]).check(g)
    with pytest.raises(PlanMismatchError):
        AllocationPlan.from_pairs(g, [(1, 1)]).check(g)
    a = LayerAlloc(4, 8, 72)
    assert (a.mac_units, a.kernel_cycles) == (32, 9)


def random_budget(rng):
    dsp = int(rng.integers(0, 400))
    bram = int(rng.integers(5, 300))
    lut = int(rng.integers(0, 20000))
    return ResourceBudget(dsp=dsp, bram=bram, lut=lut,
                          reserved_dsp=int(rng.integers(0, dsp + 1)) // 4,
                          reserved_bram=int(rng.integers(0, bram + 1)) // 4,
                          reserved_lut=int(rng.integers(0, lut + 1)) // 4,
                          lut_per_binary_mac=int(rng.integers(1, 10)),
                          lut_overhead_per_layer=int(rng.integers(0, 100)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_allocate_respects_budget(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    budget = random_budget(rng)
    try:
        plan, usage = allocate(g, budget)
    except InfeasibleBudgetError:
        return
    plan.check(g)
    assert usage.fits(budget)
    assert estimate_resources(g, plan, budget=budget) == usage


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["dsp", "bram", "lut"]), st.integers(1, 500))
def test_allocate_monotone(seed, resource, extra):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    small = random_budget(rng)
    kw = small.to_dict()
    kw[resource] += extra
    large = ResourceBudget(**kw)
    try:
        p_small, _ = allocate(g, small)
    except InfeasibleBudgetError:
        return
    p_large, _ = allocate(g, large)
    assert all(b >= a for a, b in zip(p_small.mac_units, p_large.mac_units))


def test_allocate_deterministic():
    g = random_graph(np.random.default_rng(11))
    assert allocate(g, ResourceBudget()) == allocate(g, ResourceBudget())
