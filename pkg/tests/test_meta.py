import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundinfer.engines import (
    DefaultEntry,
    DefaultPolicyTable,
    make_bound_propagator,
    make_completeness_modulator,
    make_default_policy,
    make_logic_sampler,
)
from boundinfer.errors import BoundInferError
from boundinfer.exact import ResourceLedger
from boundinfer.generators import calibration_problem, chain_network, problem_class
from boundinfer.meta import (
    PrecisionProfile,
    ValueCurve,
    analytic_profile,
    check_bounded_discontinuity,
    check_endpoint_convergence,
    dominance_intervals,
    eval_profile,
    execute_with_monitoring,
    load_catalog,
    load_profile,
    peak,
    profile_strategy,
    save_profile,
    select_strategy,
    step_profile,
    value_curve,
)
from boundinfer.network import Evidence, Query
from boundinfer.scenarios import icu_catalog
from boundinfer.value import (
    DiscountFunction,
    UtilityTable,
    ValueContext,
    ValuePoint,
    optimal_object_value,
    validate_tradeoff,
)

from oracles import grid_argmax

LINEAR = ValueContext(UtilityTable(1, 0, 0, 1), DiscountFunction.exponential(0.0), object_model="linear")
NO_DISCOUNT = DiscountFunction.exponential(0.0)


def curve_from(values, t=None):
    t = np.arange(len(values), dtype=float) if t is None else t
    return ValueCurve("x", tuple(ValuePoint(float(a), 1.0, float(v), 1.0, float(v)) for a, v in zip(t, values)))


# profiles -----------------------------------------------------------------


def test_eval_profile():
    p = PrecisionProfile("s", "c", ((0, 0), (10, 1)))
    assert eval_profile(p, 5) == 0.5
    assert eval_profile(p, 50) == 1.0
    assert eval_profile(p, 10) == 1.0
    assert eval_profile(p, 0) == 0.0
    with pytest.raises(BoundInferError):
        eval_profile(p, -1)


def test_profile_invariants():
    with pytest.raises(BoundInferError):
        PrecisionProfile("s", "c", ((0, 0.5), (1, 0.4)))
    with pytest.raises(BoundInferError):
        PrecisionProfile("s", "c", ((1, 0.5), (0, 0.6)))
    with pytest.raises(BoundInferError):
        PrecisionProfile("s", "c", ())
    with pytest.raises(BoundInferError):
        PrecisionProfile("s", "c", ((0, 1.5),))


def test_profile_store_round_trip(tmp_path, monkeypatch):
    for p in icu_catalog(5.0):
        save_profile(p, tmp_path)
    loaded = load_catalog(tmp_path)
    assert [p.strategy_id for p in loaded] == ["E-1", "E-2", "E-3"]
    assert load_profile(tmp_path / "E-2.json") == icu_catalog(5.0)[1]
    monkeypatch.setenv("BOUNDINFER_CATALOG", str(tmp_path))
    assert load_catalog() == loaded
    monkeypatch.delenv("BOUNDINFER_CATALOG")
    with pytest.raises(BoundInferError):
        load_catalog()


# value curves and peaks ---------------------------------------------------


def test_curve_monotone_without_discount():
    prof = analytic_profile("E-1", lambda t: 1 - np.exp(-t), 5)
    for ctx in (LINEAR, ValueContext(UtilityTable(1, 0, 0, 1))):
        v = value_curve(prof, ctx, 5, 64).v_c
        assert all(b >= a - 1e-12 for a, b in zip(v, v[1:]))


def test_ln3_peak():
    horizon, n = 5.0, 512
    prof = analytic_profile("E-1", lambda t: 1 - np.exp(-t), horizon)
    ctx = LINEAR.with_discount(DiscountFunction.exponential(0.5))
    t_max, v_max = peak(value_curve(prof, ctx, horizon, n))
    t_oracle, v_oracle = grid_argmax(lambda t: (1 - np.exp(-t)) * np.exp(-0.5 * t), 0, horizon)
    # stationarity: e^-t = (1 - e^-t) / 3  ->  t = ln 3
    assert t_oracle == pytest.approx(math.log(3), abs=1e-5)
    assert abs(t_max - math.log(3)) <= horizon / (n - 1)
    assert v_max == pytest.approx(v_oracle, abs=1e-3)
    assert v_max == pytest.approx(0.3849, abs=1e-3)


def test_curve_hits_step_availability():
    prof = step_profile("E-3", 0.15, 0.01)
    t, v = peak(value_curve(prof, LINEAR.with_discount(DiscountFunction.exponential(1.5)), 5.0, 16))
    assert t == pytest.approx(0.01)
    assert v == pytest.approx(0.15 * math.exp(-0.015))


def test_flat_default_peaks_at_availability():
    prof = step_profile("E-3", 0.15, 0.5)
    ctx = LINEAR.with_discount(DiscountFunction.exponential(1.0))
    curve = value_curve(prof, ctx, 4.0, 401)
    t_max, v_max = peak(curve)
    assert t_max == pytest.approx(0.5)
    assert v_max == pytest.approx(0.15 * math.exp(-0.5))


def test_peak_boundaries():
    assert peak(curve_from([5, 4, 3, 1]))[0] == 0.0
    assert peak(curve_from([1, 3, 3, 3, 2])) == (1.0, 3.0)


def test_value_curve_validation():
    prof = step_profile("E-3", 0.15, 0.5)
    with pytest.raises(BoundInferError):
        value_curve(prof, LINEAR, 0.0, 10)
    with pytest.raises(BoundInferError):
        value_curve(prof, LINEAR, 1.0, 1)


# selection ----------------------------------------------------------------


def pi1(t):
    return 1 - np.exp(-0.5 * t)


def pi2(t):
    return 0.8 * (1 - np.exp(-2 * t))


def pi3(t):
    return np.where(t >= 0.01, 0.15, 0.0)


@pytest.mark.parametrize(
    "d,horizon,winner,expected",
    [
        (DiscountFunction.exponential(0.02), 20.0, "E-1", {"E-1": 0.844, "E-2": 0.756, "E-3": 0.15}),
        (DiscountFunction.exponential(1.5), 5.0, "E-2", {"E-1": 0.106, "E-2": 0.242, "E-3": 0.148}),
        (DiscountFunction.step(0.05, 0.0), 0.1, "E-3", {"E-1": 0.025, "E-2": 0.076, "E-3": 0.15}),
    ],
)
def test_dominance_reversals(d, horizon, winner, expected):
    ctx = LINEAR.with_discount(d)
    decision = select_strategy(icu_catalog(horizon), ctx, horizon, 512)
    assert decision.selected == winner
    dense = {
        "E-1": grid_argmax(lambda t: pi1(t) * np.vectorize(d)(t), 0, horizon, 200_001)[1],
        "E-2": grid_argmax(lambda t: pi2(t) * np.vectorize(d)(t), 0, horizon, 200_001)[1],
        "E-3": grid_argmax(lambda t: pi3(t) * np.vectorize(d)(t), 0, horizon, 200_001)[1],
    }
    for sid, curve in decision.curves.items():
        v = peak(curve)[1]
        assert v == pytest.approx(dense[sid], abs=2e-3)
        assert v == pytest.approx(expected[sid], abs=2e-3)
    assert decision.v_c_max == max(peak(c)[1] for c in decision.curves.values())
    assert (decision.t_max, decision.v_c_max) == peak(decision.curves[winner])
    assert decision.ledger.allocated == decision.t_max
    assert decision.metalevel_overhead >= 0


def test_select_tie_breaks():
    a = PrecisionProfile("b", "c", ((0, 0.5), (1, 0.5)))
    b = PrecisionProfile("a", "c", ((0, 0.5), (1, 0.5)))
    assert select_strategy([a, b], LINEAR, 1.0, 5).selected == "a"
    late = PrecisionProfile("a", "c", ((0, 0.0), (1, 0.5)))
    early = PrecisionProfile("z", "c", ((0, 0.5), (1, 0.5)))
    assert select_strategy([late, early], LINEAR, 1.0, 5).selected == "z"


def test_select_errors():
    with pytest.raises(BoundInferError):
        select_strategy([], LINEAR, 1.0)
    p = PrecisionProfile("a", "c", ((0, 0.5),))
    with pytest.raises(BoundInferError):
        select_strategy([p, p], LINEAR, 1.0)


def random_catalog(rng, k):
    out = []
    for i in range(k):
        rate, cap = rng.uniform(0.2, 5), rng.uniform(0.2, 1)
        out.append(analytic_profile(f"S{i}", lambda t, r=rate, c=cap: c * (1 - np.exp(-r * t)), 5.0, knots=129))
    return out


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 20))
def test_rescaling_utilities_keeps_selection(seed, scale):
    rng = np.random.default_rng(seed)
    catalog = random_catalog(rng, 3)
    ctx = ValueContext(UtilityTable(0.9, 0.1, 0.3, 0.8), DiscountFunction.exponential(rng.uniform(0.1, 2)))
    base = select_strategy(catalog, ctx, 5.0, 64)
    scaled = select_strategy(catalog, ctx.with_utilities(ctx.utilities.scaled(scale)), 5.0, 64)
    assert (scaled.selected, scaled.t_max) == (base.selected, base.t_max)
    assert scaled.v_c_max == pytest.approx(scale * base.v_c_max, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adding_strategy_never_hurts(seed):
    rng = np.random.default_rng(seed)
    catalog = random_catalog(rng, 4)
    ctx = LINEAR.with_discount(DiscountFunction.exponential(rng.uniform(0.1, 2)))
    small = select_strategy(catalog[:3], ctx, 5.0, 128)
    big = select_strategy(catalog, ctx, 5.0, 128)
    assert big.v_c_max >= small.v_c_max


def test_reversion_to_object_level_rationality():
    ctx = ValueContext(UtilityTable(100, -20, -80, 0), NO_DISCOUNT)
    catalog = icu_catalog(10.0)[1:] + [PrecisionProfile("exact", "icu", ((0, 0), (2, 1)))]
    decision = select_strategy(catalog, ctx, 10.0, 256)
    assert decision.selected == "exact"
    assert decision.v_c_max == pytest.approx(optimal_object_value(ctx), abs=1e-9)


# desiderata ---------------------------------------------------------------


def test_dominance_intervals():
    assert dominance_intervals(curve_from([1, 2, 3, 4])) == [(0.0, 3.0)]
    assert dominance_intervals(curve_from([1, 2, 3, 2, 1])) == [(0.0, 2.0)]
    assert dominance_intervals(curve_from([1, 1, 1])) == []
    assert dominance_intervals(curve_from([1, 2, 1, 2])) == [(0.0, 1.0), (2.0, 3.0)]


@settings(max_examples=40)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=40))
def test_dominance_cover(values):
    curve = curve_from(values)
    increasing = set()
    for a, b in dominance_intervals(curve):
        increasing.update(range(int(a), int(b)))
    for i in range(len(values) - 1):
        # every step is either inside a dominance interval or non-increasing
        assert (i in increasing) == (values[i + 1] > values[i])


def test_bounded_discontinuity():
    r = np.linspace(0, 1, 101)
    ledger = ResourceLedger(1.0)
    lipschitz = curve_from(r, r)
    assert check_bounded_discontinuity(lipschitz, ledger, 0.1).epsilon <= 0.1 + 1e-12
    jump = curve_from(np.where(r < 0.5, 0.0, 0.4), r)
    assert check_bounded_discontinuity(jump, ledger, 0.05).epsilon >= 0.4
    wiggle = curve_from(np.sin(6 * r), r)
    whole = check_bounded_discontinuity(wiggle, ledger, 2.0).epsilon
    assert whole == pytest.approx(np.sin(6 * r).max() - np.sin(6 * r).min())
    # R_f = t / R_c: doubling R_c halves the resource spacing
    assert check_bounded_discontinuity(jump, ledger, 0.006).epsilon == 0.0
    assert check_bounded_discontinuity(jump, ResourceLedger(2.0), 0.006).epsilon == 0.4
    with pytest.raises(BoundInferError):
        check_bounded_discontinuity(jump, ledger, 0.0)


def test_endpoint_convergence():
    net, ev, q = calibration_problem()
    assert check_endpoint_convergence(make_bound_propagator, net, ev, q, 1e-9)
    assert check_endpoint_convergence(
        lambda n, e, qq: make_completeness_modulator(n, e, qq, [0.6, 0.0]), net, ev, q, 1e-9
    )
    table = DefaultPolicyTable({"k": DefaultEntry("treat", 0.15, 1)})
    assert not check_endpoint_convergence(lambda *a: make_default_policy(table, "k"), net, ev, q, 1e-3)
    # sampler: statistical tolerance at the configured budget
    assert check_endpoint_convergence(
        lambda n, e, qq: make_logic_sampler(n, e, qq, seed=4), net, ev, q, 0.02, max_steps=100_000
    )


# profiling ----------------------------------------------------------------


def bounds_factory(net, ev, q, seed):
    return make_bound_propagator(net, ev, q)


def sampler_factory(net, ev, q, seed):
    return make_logic_sampler(net, ev, q, seed)


def test_profile_bounds_reaches_one():
    prof = profile_strategy(bounds_factory, problem_class(6), [1, 8, 32, 64], 10, 1, steps_per_second=100)
    assert prof.points[-1][0] == 0.64
    assert prof.points[-1][1] == pytest.approx(1.0, abs=1e-12)
    assert prof.source["kind"] == "empirical"
    assert validate_tradeoff(prof.points).valid


def test_profile_default_is_flat():
    table = DefaultPolicyTable({"k": DefaultEntry("treat", 0.15, 1)})
    prof = profile_strategy(
        lambda *a: make_default_policy(table, "k"), problem_class(5), [1, 10, 100], 10, 0, steps_per_second=10
    )
    assert [p for _, p in prof.points] == pytest.approx([0.15] * 3)


def test_profile_sampler_improves():
    prof = profile_strategy(sampler_factory, problem_class(6), [100, 10_000], 20, 3, steps_per_second=1000)
    assert prof.points[1][1] > prof.points[0][1]


def test_profile_parallel_matches_serial():
    args = (sampler_factory, problem_class(5), [10, 100, 1000], 12, 7)
    serial = profile_strategy(*args, steps_per_second=50)
    parallel = profile_strategy(*args, steps_per_second=50, workers=4)
    assert serial.points == parallel.points


def test_profile_measures_step_rate():
    prof = profile_strategy(bounds_factory, problem_class(4), [1, 4], 10, 0)
    assert prof.steps_per_second > 0


def test_profile_argument_checks():
    with pytest.raises(BoundInferError):
        profile_strategy(bounds_factory, problem_class(4), [1, 4], 5, 0)
    with pytest.raises(BoundInferError):
        profile_strategy(bounds_factory, problem_class(4), [4, 1], 10, 0)


# monitoring ---------------------------------------------------------------


def test_monitor_default_halts_at_availability():
    table = DefaultPolicyTable({"k": DefaultEntry("treat", 0.15, 1)})
    prof = PrecisionProfile("E-3", "icu", ((0.0, 0.0), (0.01, 0.15)), 100.0, {"kind": "analytic", "engine": "default"})
    ctx = LINEAR.with_discount(DiscountFunction.exponential(1.0))
    decision = select_strategy([prof], ctx, 1.0, 101)
    est, log = execute_with_monitoring(decision, make_default_policy(table, "k"), ctx, 1)
    assert len(log.checkpoints) == 1
    assert est.precision == pytest.approx(0.15)


def test_monitor_runs_to_t_max_without_discount():
    net, ev, q = calibration_problem()
    prof = PrecisionProfile("B", "c", ((0, 0), (2.56, 1.0)), 100.0, {"kind": "analytic", "engine": "bounds"})
    ctx = ValueContext(UtilityTable(1, 0, 0, 1), NO_DISCOUNT)
    decision = select_strategy([prof], ctx, 2.56, 257)
    assert decision.t_max == pytest.approx(2.56)
    est, log = execute_with_monitoring(decision, make_bound_propagator(net, ev, q), ctx, 16)
    assert log.stop_reason in ("reached t_max", "engine completed")
    assert log.checkpoints[-1].steps == 256
    assert est.width < 1e-9


def test_monitor_sampler_stops_near_predicted_peak():
    net, ev, q = chain_network(), Evidence(), Query("B", "t")
    sps = 1000.0
    c = 2 * 1.96 * math.sqrt(0.31 * 0.69 / sps)
    prof = analytic_profile("E-1", lambda t: 1 - c / np.sqrt(np.maximum(t, 1e-12)), 3.0, knots=3001)
    prof = PrecisionProfile(prof.strategy_id, "chain", prof.points, sps, {"kind": "analytic", "engine": "sample"})
    ctx = LINEAR.with_discount(DiscountFunction.exponential(0.05))
    decision = select_strategy([prof], ctx, 3.0, 512)
    check_every = 50
    est, log = execute_with_monitoring(decision, make_logic_sampler(net, ev, q, seed=7), ctx, check_every)
    assert abs(log.stop_time - decision.t_max) <= check_every / sps
    assert [cp.t for cp in log.checkpoints] == sorted(cp.t for cp in log.checkpoints)


def test_monitor_halts_on_two_drops():
    # selection saw no discount and planned to run to the horizon; the live
    # context discounts steeply, so realized value falls once bounds settle
    net, ev, q = calibration_problem()
    prof = PrecisionProfile("B", "c", ((0, 0), (0.02, 1.0), (10.0, 1.0)), 100.0, {"kind": "analytic", "engine": "bounds"})
    decision = select_strategy([prof], LINEAR, 10.0, 11)
    ctx = LINEAR.with_discount(DiscountFunction.exponential(3.0))
    est, log = execute_with_monitoring(decision, make_bound_propagator(net, ev, q), ctx, 10)
    assert log.stop_reason.startswith("realized value fell")
    assert len(log.checkpoints) >= 3


def test_monitor_engine_mismatch():
    net, ev, q = calibration_problem()
    prof = PrecisionProfile("B", "c", ((0, 0), (1, 1.0)), 100.0, {"kind": "analytic", "engine": "bounds"})
    decision = select_strategy([prof], LINEAR, 1.0, 11)
    with pytest.raises(BoundInferError):
        execute_with_monitoring(decision, make_logic_sampler(net, ev, q), LINEAR, 10)
