import itertools

import numpy as np
import pytest

import sesame as ss
from sesame.collector import export_design_csv, import_design_csv
from sesame.errors import (
    RateError,
    TruncationError,
    UnknownPredictorError,
)


def flat_system():
    model = ss.ComponentStateModel(
        components=(ss.Component("cpu", (1.0, 9.0)),), base_power_w=1.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 20.0, {"cpu": ss.DutyCycle(0.01, 0.5, 1, 0)}),),
        seed=0)
    trace = ss.gen_trace(model, wl, 20.0, 0.001)
    return model, trace


def three_predictor_setup(duration=30.0):
    model = ss.ComponentStateModel(
        components=(
            ss.Component("cpu", (1.0, 9.0)),
            ss.Component("disk", (0.0, 2.0)),
            ss.Component("lcd", (0.5, 1.5)),
        ),
        base_power_w=1.0,
    )
    wl = ss.WorkloadSpec(phases=(
        ss.Phase("a", duration / 2, {
            "cpu": ss.MarkovChain(((0.9, 0.1), (0.1, 0.9)), step_s=0.05),
            "disk": ss.MarkovChain(((0.95, 0.05), (0.1, 0.9)), step_s=0.05),
            "lcd": ss.FixedState(0),
        }),
        ss.Phase("b", duration / 2, {
            "cpu": ss.MarkovChain(((0.8, 0.2), (0.2, 0.8)), step_s=0.05),
            "disk": ss.MarkovChain(((0.9, 0.1), (0.2, 0.8)), step_s=0.05),
            "lcd": ss.FixedState(1),
        }),
    ), seed=5)
    trace = ss.gen_trace(model, wl, duration, 0.001)
    specs = [
        ss.PredictorSpec(id="cpu_busy", component="cpu", kind="residency",
                         weights={1: 1.0}, update_rate_hz=250.0),
        ss.PredictorSpec(id="disk_ops", component="disk", kind="counter",
                         weights={1: 120.0}, update_rate_hz=250.0),
        ss.PredictorSpec(id="backlight", component="lcd", kind="level",
                         weights={0: 0.2, 1: 0.8}, policy="event-driven"),
    ]
    streams = ss.observe_predictors(trace, specs, 100.0)
    return trace, specs, streams


def test_constant_predictor_collected_flat():
    model, trace = flat_system()
    spec = ss.PredictorSpec(id="cpu_busy", component="cpu", kind="residency",
                            weights={1: 1.0}, update_rate_hz=1000.0)
    streams = ss.observe_predictors(trace, [spec], 100.0)
    dm = ss.collect(streams, [spec], 100.0, 1.0)
    assert dm.m == 100
    assert np.allclose(dm.x[:, 0], 0.5)


def test_fast_residency_within_one_update_quantum():
    trace, specs, streams = three_predictor_setup()
    dm = ss.collect(streams, specs, 100.0, 30.0)
    truth = trace.interval_truth(specs[0], 0.01)
    quantum = 1.0 / 250.0 / 0.01  # one update period as a fraction of the interval
    assert np.max(np.abs(dm.x[:, 0] - truth[: dm.m])) <= quantum + 1e-9


def test_event_driven_level_rows():
    model = ss.ComponentStateModel(
        components=(ss.Component("lcd", (0.5, 1.5)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(phases=(
        ss.Phase("dim", 5.0, {"lcd": ss.FixedState(0)}),
        ss.Phase("bright", 5.0, {"lcd": ss.FixedState(1)}),
    ), seed=0)
    trace = ss.gen_trace(model, wl, 10.0, 0.001)
    spec = ss.PredictorSpec(id="backlight", component="lcd", kind="level",
                            weights={0: 0.2, 1: 0.8}, policy="event-driven")
    streams = ss.observe_predictors(trace, [spec], 100.0)
    dm = ss.collect(streams, [spec], 1.0, 10.0)
    assert np.allclose(dm.x[:5, 0], 0.2)
    assert np.allclose(dm.x[5:, 0], 0.8)


def test_polled_slow_holds_between_updates():
    trace, _, _ = three_predictor_setup()
    slow = ss.PredictorSpec(id="io", component="disk", kind="counter",
                            weights={1: 40.0}, update_rate_hz=0.5,
                            policy="polled-slow")
    streams = ss.observe_predictors(trace, [slow], 100.0)
    dm = ss.collect(streams, [slow], 2.0, 30.0)
    # update period is 2 s; at a 0.5 s collection interval the value may only
    # change when a new update lands, i.e. every 4th row
    dm_fine = ss.collect(streams, [slow], 2.0, 30.0)
    values = dm_fine.x[:, 0]
    for i in range(len(values) - 1):
        same_update = int(dm_fine.t_start_s[i] // 2.0) == int(
            dm_fine.t_start_s[i + 1] // 2.0)
        if same_update:
            assert values[i + 1] == values[i]


def test_truncation_error_counts_missing_rows():
    trace, specs, streams = three_predictor_setup()
    with pytest.raises(TruncationError) as err:
        ss.collect(streams, specs, 1.0, 40.0)
    assert err.value.missing == 10


def test_bundle_read_consistency_with_collect():
    trace, specs, streams = three_predictor_setup()
    dm = ss.collect(streams, specs, 10.0, 30.0)
    t = 12.34
    row = dm.x[int(t * 10)]
    full = ss.bundle_read(streams, specs, {s.id for s in specs}, t, 10.0)
    assert np.allclose([full[s.id] for s in specs], row)


def test_bundle_read_single_and_unknown():
    trace, specs, streams = three_predictor_setup()
    one = ss.bundle_read(streams, specs, {"cpu_busy"}, 3.0, 10.0)
    assert set(one) == {"cpu_busy"}
    with pytest.raises(UnknownPredictorError):
        ss.bundle_read(streams, specs, {"nope"}, 3.0, 10.0)


def test_bundle_read_disjoint_masks_union_exhaustive():
    trace, specs, streams = three_predictor_setup()
    ids = [s.id for s in specs]
    t = 7.5
    full = ss.bundle_read(streams, specs, set(ids), t, 10.0)
    for r in range(1, len(ids)):
        for combo in itertools.combinations(ids, r):
            rest = set(ids) - set(combo)
            a = ss.bundle_read(streams, specs, set(combo), t, 10.0)
            b = ss.bundle_read(streams, specs, rest, t, 10.0)
            merged = {**a, **b}
            assert merged == full


def test_bundle_read_charges_one_access():
    trace, specs, streams = three_predictor_setup()
    before = streams.accesses
    ss.bundle_read(streams, specs, {s.id for s in specs}, 1.0, 10.0)
    assert streams.accesses == before + 1


def test_aggregate_response_instant_paper_arithmetic():
    # 0.5 Hz readings of 2 A at 5 V over 100 s: 50 readings x 2 A x 5 V x 2 s
    model = ss.ComponentStateModel(
        components=(ss.Component("box", (10.0,)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 200.0, {"box": ss.FixedState(0)}),), seed=0)
    trace = ss.gen_trace(model, wl, 200.0, 0.01)
    cfg = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=0.5,
                                   supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, cfg)
    y = ss.aggregate_response(readings, 100.0)
    assert np.allclose(y, 1000.0)


def test_aggregate_response_capacity_drop():
    model = ss.ComponentStateModel(
        components=(ss.Component("box", (1.0,)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 500.0, {"box": ss.FixedState(0)}),), seed=0)
    trace = ss.gen_trace(model, wl, 500.0, 0.01)
    cfg = ss.BatteryInterfaceModel(kind="capacity", reading_rate_hz=0.1,
                                   supply_voltage_v=5.0,
                                   initial_capacity_c=20000.0)
    readings = ss.sample_capacity(trace, cfg)
    y = ss.aggregate_response(readings, 100.0)
    # 0.2 A for 100 s drops 20 C; at 5 V that is 100 J
    assert np.allclose(y, 100.0)


def test_aggregate_response_noiseless_equals_truth():
    trace, specs, streams = three_predictor_setup()
    cfg = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=10.0,
                                   supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, cfg)
    y = ss.aggregate_response(readings, 1.0)
    truth = ss.true_energy(trace, 1.0)
    assert np.allclose(y, truth[: len(y)], rtol=1e-12)


def test_aggregate_response_rate_error():
    model = ss.ComponentStateModel(
        components=(ss.Component("box", (10.0,)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 100.0, {"box": ss.FixedState(0)}),), seed=0)
    trace = ss.gen_trace(model, wl, 100.0, 0.01)
    cfg = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=0.5,
                                   supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, cfg)
    with pytest.raises(RateError):
        ss.aggregate_response(readings, 1.0)


def test_rate_consistency_summed_rows_match_lower_rate():
    trace, specs, streams = three_predictor_setup()
    cfg = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=10.0,
                                   supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, cfg)
    fine = ss.attach_response(ss.collect(streams, specs, 1.0, 30.0), readings)
    coarse = ss.attach_response(ss.collect(streams, specs, 0.2, 30.0), readings)
    # responses and counter columns are additive; 5 fine rows = 1 coarse row
    summed_y = fine.y[:30].reshape(6, 5).sum(axis=1)
    assert np.allclose(summed_y, coarse.y[:6], rtol=1e-12)
    i_counter = fine.columns.index("disk_ops")
    summed_cnt = fine.x[:30, i_counter].reshape(6, 5).sum(axis=1)
    assert np.allclose(summed_cnt, coarse.x[:6, i_counter], rtol=1e-12)


def test_design_csv_round_trip(tmp_path):
    trace, specs, streams = three_predictor_setup()
    cfg = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=10.0,
                                   supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, cfg)
    dm = ss.attach_response(ss.collect(streams, specs, 1.0, 30.0), readings)
    path = tmp_path / "design.csv"
    export_design_csv(dm, str(path))
    header = path.read_text().splitlines()[0]
    assert header == "t_start_s,cpu_busy,disk_ops,backlight,y_j"
    back = import_design_csv(str(path), {s.id: s.kind for s in specs})
    assert back.columns == dm.columns
    assert np.allclose(back.x, dm.x, rtol=1e-9)
    assert np.allclose(back.y, dm.y, rtol=1e-9)
