import numpy as np
import pytest

import sesame as ss
from sesame.errors import AlignmentError, ConfigurationError


def single_state_model(power=5.0, base=0.0):
    return ss.ComponentStateModel(
        components=(ss.Component("box", (power,), ("on",)),),
        base_power_w=base,
    )


def duty_cycle_system():
    """CPU idle 1 W / busy 9 W at 50% over a 1 s period, disk 2 W, base 3 W."""
    model = ss.ComponentStateModel(
        components=(
            ss.Component("cpu", (1.0, 9.0), ("idle", "busy")),
            ss.Component("disk", (2.0,), ("on",)),
        ),
        base_power_w=3.0,
    )
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("main", 10.0, {
            "cpu": ss.DutyCycle(1.0, 0.5, 1, 0),
            "disk": ss.FixedState(0),
        }),),
        seed=0,
    )
    return model, wl


def markov_cpu(seed=11, duration=50.0):
    model = ss.ComponentStateModel(
        components=(ss.Component("cpu", (1.0, 5.0, 9.0)),),
        base_power_w=0.5,
    )
    chain = ss.MarkovChain(
        ((0.90, 0.08, 0.02), (0.10, 0.80, 0.10), (0.05, 0.15, 0.80)),
        step_s=0.1,
    )
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("main", duration, {"cpu": chain}),), seed=seed)
    return model, wl, duration


def test_single_state_trace_is_flat():
    model = single_state_model()
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 10.0, {"box": ss.FixedState(0)}),), seed=1)
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    assert len(trace) == 1000
    assert np.all(trace.power_w == 5.0)


def test_duty_cycle_mean_power_matches_closed_form():
    model, wl = duty_cycle_system()
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    # closed form: 3 + 2 + (1 + 9) / 2 = 10 W over any whole period
    per_period = trace.power_w.reshape(10, 100).mean(axis=1)
    assert np.allclose(per_period, 10.0)


def test_same_seed_same_trace():
    model, wl, duration = markov_cpu()
    a = ss.gen_trace(model, wl, duration, 0.01)
    b = ss.gen_trace(model, wl, duration, 0.01)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.power_w, b.power_w)


def test_different_seed_differs():
    model, wl, duration = markov_cpu(seed=11)
    model2, wl2, _ = markov_cpu(seed=12)
    a = ss.gen_trace(model, wl, duration, 0.01)
    b = ss.gen_trace(model2, wl2, duration, 0.01)
    assert not np.array_equal(a.states, b.states)


def test_invalid_markov_rows_rejected():
    with pytest.raises(ConfigurationError):
        ss.MarkovChain(((0.5, 0.4), (0.5, 0.5)))


def test_true_energy_constant_trace():
    model = single_state_model()
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 200.0, {"box": ss.FixedState(0)}),), seed=1)
    trace = ss.gen_trace(model, wl, 200.0, 0.01)
    energy = ss.true_energy(trace, 100.0)
    assert np.allclose(energy, 500.0)


def test_true_energy_duty_cycle_per_second():
    model, wl = duty_cycle_system()
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    # oracle: direct tick sums
    expect = trace.power_w.reshape(10, 100).sum(axis=1) * 0.01
    assert np.allclose(ss.true_energy(trace, 1.0), expect)
    assert np.allclose(expect, 10.0)


def test_true_energy_whole_trace_additivity():
    model, wl, duration = markov_cpu()
    trace = ss.gen_trace(model, wl, duration, 0.01)
    total = ss.true_energy(trace, duration)
    assert total.shape == (1,)
    assert total[0] == pytest.approx(trace.power_w.sum() * 0.01, rel=1e-12)


def test_true_energy_alignment_error():
    model, wl = duty_cycle_system()
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    with pytest.raises(AlignmentError):
        ss.true_energy(trace, 0.0151)


def test_partition_additivity():
    model, wl, duration = markov_cpu(duration=40.0)
    trace = ss.gen_trace(model, wl, duration, 0.01)
    whole = ss.true_energy(trace, 40.0)[0]
    for interval in (0.1, 0.5, 2.0, 8.0):
        parts = ss.true_energy(trace, interval)
        assert abs(parts.sum() - whole) <= 1e-9 * whole


def test_residency_closure():
    model, wl, duration = markov_cpu(duration=30.0)
    trace = ss.gen_trace(model, wl, duration, 0.01)
    specs = [
        ss.PredictorSpec(id=f"s{j}", component="cpu", kind="residency",
                         weights={j: 1.0})
        for j in range(3)
    ]
    fractions = np.column_stack(
        [trace.interval_truth(s, 1.0) for s in specs])
    assert np.allclose(fractions.sum(axis=1), 1.0, atol=1e-12)
    # same closure through the per-interval residency records
    for idx in (0, 7, 29):
        residencies = trace.state_residencies(1.0, idx)
        per_comp: dict[int, float] = {}
        for r in residencies:
            per_comp[r.component] = per_comp.get(r.component, 0.0) + r.seconds
        assert all(abs(total - 1.0) < 1e-12 for total in per_comp.values())


def test_ground_truth_linearity_beta_true():
    model, wl, duration = markov_cpu(duration=60.0)
    trace = ss.gen_trace(model, wl, duration, 0.01)
    specs = ss.residency_predictors(model)
    beta = ss.residency_beta_true(model, 2.0, specs)
    x = np.column_stack([trace.interval_truth(s, 2.0) for s in specs])
    predicted = beta[0] + x @ beta[1:]
    assert np.allclose(predicted, ss.true_energy(trace, 2.0), rtol=1e-12)


def test_trace_sample_view():
    model, wl = duty_cycle_system()
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    s = trace[0]
    assert s.timestamp_s == 0.0
    assert s.power_w == trace.power_w[0]
    assert s.x.sum() == pytest.approx(2.0)  # one active state per component


def test_phases_switch_and_last_phase_extends():
    model = single_state_model(power=1.0)
    model = ss.ComponentStateModel(
        components=(ss.Component("box", (1.0, 4.0)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(phases=(
        ss.Phase("a", 2.0, {"box": ss.FixedState(0)}),
        ss.Phase("b", 2.0, {"box": ss.FixedState(1)}),
    ), seed=3)
    trace = ss.gen_trace(model, wl, 6.0, 0.01)
    assert np.all(trace.power_w[:200] == 1.0)
    assert np.all(trace.power_w[200:] == 4.0)  # phase b runs to the end


# -- observation ------------------------------------------------------------

def test_observed_equals_truth_when_updates_are_fast():
    model, wl, duration = markov_cpu(duration=20.0)
    trace = ss.gen_trace(model, wl, duration, 0.01)
    spec = ss.PredictorSpec(id="busy", component="cpu", kind="residency",
                            weights={2: 1.0}, update_rate_hz=100.0)
    streams = ss.observe_predictors(trace, [spec], 100.0)
    times, values = streams.read_series("busy")
    truth = trace.cumulative(spec)
    idx = np.round(times / trace.tick_s).astype(int)
    assert np.allclose(values, truth[idx], atol=1e-12)


def test_slow_update_lag_bounded_by_one_quantum():
    # 250 Hz updates read at 100 Hz: the visible register trails the true
    # one by at most one update period of accumulation (4 ms here).
    model, wl, duration = markov_cpu(duration=20.0)
    trace = ss.gen_trace(model, wl, duration, 0.001)
    spec = ss.PredictorSpec(id="busy", component="cpu", kind="residency",
                            weights={2: 1.0}, update_rate_hz=250.0)
    streams = ss.observe_predictors(trace, [spec], 100.0)
    times, observed = streams.read_series("busy")
    truth = trace.cumulative(spec)[np.round(times / trace.tick_s).astype(int)]
    lag = truth - observed
    assert lag.min() >= -1e-12
    assert lag.max() <= 1.0 / 250.0 + 1e-12


def test_square_wave_read_error_bounded_by_update_granularity():
    # 50% duty cycle, 250 Hz updates read at 100 Hz: every read of the
    # cumulative residency register is short by at most one 4 ms update
    # quantum, exhaustively compared against the true values
    model = ss.ComponentStateModel(
        components=(ss.Component("cpu", (1.0, 9.0)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 20.0, {"cpu": ss.DutyCycle(1.0, 0.5, 1, 0)}),),
        seed=0)
    trace = ss.gen_trace(model, wl, 20.0, 0.001)
    spec = ss.PredictorSpec(id="busy", component="cpu", kind="residency",
                            weights={1: 1.0}, update_rate_hz=250.0)
    streams = ss.observe_predictors(trace, [spec], 100.0)
    times, observed = streams.read_series("busy")
    truth = trace.cumulative(spec)[np.round(times / trace.tick_s).astype(int)]
    quantum = 1.0 / 250.0
    gap = truth - observed
    assert gap.min() >= -1e-12 and gap.max() <= quantum + 1e-12
    nonzero = truth > 0
    assert np.max(gap[nonzero] / truth[nonzero]) <= quantum / truth[nonzero].min() + 1e-9


def test_delayed_counter_cross_correlation_peaks_at_delay():
    model = ss.ComponentStateModel(
        components=(ss.Component("disk", (0.0, 1.0)),), base_power_w=1.0)
    chain = ss.MarkovChain(((0.95, 0.05), (0.05, 0.95)), step_s=0.05)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 120.0, {"disk": chain}),), seed=21)
    trace = ss.gen_trace(model, wl, 120.0, 0.01)
    delay = 0.5
    spec = ss.PredictorSpec(id="sectors", component="disk", kind="counter",
                            weights={1: 200.0}, update_rate_hz=100.0,
                            delay_s=delay)
    streams = ss.observe_predictors(trace, [spec], 20.0)
    times, observed_cum = streams.read_series("sectors")
    true_spec = ss.PredictorSpec(id="sectors", component="disk",
                                 kind="counter", weights={1: 200.0},
                                 update_rate_hz=100.0)
    true_deltas = trace.interval_truth(true_spec, 0.05)
    obs_deltas = np.diff(observed_cum)
    n = min(len(true_deltas), len(obs_deltas))
    a = true_deltas[:n] - true_deltas[:n].mean()
    b = obs_deltas[:n] - obs_deltas[:n].mean()
    lags = np.arange(0, 40)
    corr = [np.dot(a[: n - k], b[k:]) for k in lags]
    best_lag_s = lags[int(np.argmax(corr))] * 0.05
    assert best_lag_s == pytest.approx(delay, abs=0.05)


def test_event_driven_level_changes_at_events_only():
    model = ss.ComponentStateModel(
        components=(ss.Component("lcd", (1.0, 2.0)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(phases=(
        ss.Phase("dim", 5.0, {"lcd": ss.FixedState(0)}),
        ss.Phase("bright", 5.0, {"lcd": ss.FixedState(1)}),
    ), seed=0)
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    spec = ss.PredictorSpec(id="bl", component="lcd", kind="level",
                            weights={0: 0.3, 1: 0.9}, policy="event-driven")
    streams = ss.observe_predictors(trace, [spec], 1.0)
    _, values = streams.read_series("bl")
    assert np.all(values[:5] == 0.3)
    assert np.all(values[5:] == 0.9)


def test_export_trace_csv(tmp_path):
    model, wl = duty_cycle_system()
    trace = ss.gen_trace(model, wl, 10.0, 0.01)
    specs = ss.residency_predictors(model)
    path = tmp_path / "trace.csv"
    ss.tracesim.export_trace_csv(trace, specs, str(path), interval_s=1.0)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t_s,power_w," + ",".join(s.id for s in specs)
    assert len(lines) == 11
