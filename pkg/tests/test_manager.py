import numpy as np
import pytest

import sesame as ss
from sesame.collector import DesignMatrix
from sesame.errors import ParseError
from sesame.manager import MonitorRecord, install_model, table_equals


def make_model(seed=0, coef=2.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.5, 0.2, size=(30, 1))
    y = 100.0 + coef * x[:, 0]
    dm = DesignMatrix(interval_s=100.0, columns=("cpu_busy",),
                      kinds=("residency",), x=x,
                      t_start_s=np.arange(30) * 100.0, y=y)
    return ss.build_model(dm, method="OLS", use_pca=False)


def key_of(**settings):
    triples = [("hardware", "machine", "boxy"),
               ("user", "brightness", "2")]
    triples += [("software", k, v) for k, v in settings.items()]
    return ss.ConfigurationKey.canonical(triples)


def test_lookup_insert_and_cold_start():
    table = ss.ModelTable()
    key = key_of(dvs="off")
    assert ss.lookup_or_create(table, key) is None   # cold start
    model = make_model()
    install_model(table, key, model)
    assert ss.lookup_or_create(table, key) is model
    assert table.active_key == key


def test_lookup_miss_after_config_flip():
    table = ss.ModelTable()
    install_model(table, key_of(dvs="off"), make_model())
    assert ss.lookup_or_create(table, key_of(dvs="on")) is None
    assert table.active_key == key_of(dvs="on")


def test_key_canonicalization_ignores_order():
    a = ss.ConfigurationKey.canonical(
        [("software", "dvs", "on"), ("hardware", "machine", "boxy")])
    b = ss.ConfigurationKey.canonical(
        [("hardware", "machine", "boxy"), ("software", "dvs", "on")])
    assert a == b
    table = ss.ModelTable()
    install_model(table, a, make_model())
    assert ss.lookup_or_create(table, b) is not None


def test_monitor_relative_error_arithmetic():
    # constant 1 W system, noiseless 1 Hz interface: each 100 s window holds
    # 100 J; a model biased to 110 J per window must monitor as 0.10
    sys_model = ss.ComponentStateModel(
        components=(ss.Component("box", (1.0,)),), base_power_w=0.0)
    wl = ss.WorkloadSpec(
        phases=(ss.Phase("p", 500.0, {"box": ss.FixedState(0)}),), seed=0)
    trace = ss.gen_trace(sys_model, wl, 500.0, 0.01)
    battery = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=1.0,
                                       supply_voltage_v=5.0)
    readings = ss.sample_instant(trace, battery)
    biased = ss.EnergyModel(
        beta=np.array([110.0, 0.0]), columns=("dummy",), kinds=("residency",),
        training_interval_s=100.0, fit_method="OLS", training_error=0.0,
        kept=("dummy",))
    table = ss.ModelTable(window_s=100.0)
    key = key_of(dvs="off")
    install_model(table, key, biased)
    ss.lookup_or_create(table, key)
    dm = DesignMatrix(interval_s=100.0, columns=("dummy",),
                      kinds=("residency",), x=np.full((5, 1), 0.5),
                      t_start_s=np.arange(5) * 100.0)
    errors = ss.monitor(table, dm, readings)
    assert np.allclose(errors, 0.10)


def test_monitor_against_interface_stream():
    model_sys = ss.ComponentStateModel(
        components=(ss.Component("cpu", (1.0, 9.0)),), base_power_w=3.0)
    wl = ss.WorkloadSpec(phases=(ss.Phase("p", 1500.0, {
        "cpu": ss.MarkovChain(((0.95, 0.05), (0.05, 0.95)), step_s=0.1)}),),
        seed=9)
    trace = ss.gen_trace(model_sys, wl, 1500.0, 0.01)
    specs = ss.residency_predictors(model_sys, update_rate_hz=100.0)
    streams = ss.observe_predictors(trace, specs, 100.0)
    battery = ss.BatteryInterfaceModel(kind="instant", reading_rate_hz=1.0,
                                       supply_voltage_v=10.0)
    readings = ss.sample_instant(trace, battery)
    low = ss.stretch(ss.collect(streams, specs, 1.0, 1500.0), readings, 100.0)
    fitted = ss.build_model(low)

    table = ss.ModelTable(window_s=100.0)
    key = key_of(dvs="off")
    install_model(table, key, fitted)
    ss.lookup_or_create(table, key)
    dm = ss.collect(streams, specs, 0.01, 1500.0)
    errors = ss.monitor(table, dm, readings)
    assert len(errors) == 15
    assert errors.max() < 1e-6      # noiseless interface, exact linear system
    assert len(table.history) == 15


def test_maybe_rebuild_threshold_logic():
    table = ss.ModelTable(threshold=0.10)
    key = key_of(dvs="off")
    install_model(table, key, make_model(coef=2.0))
    ss.lookup_or_create(table, key)
    calls = []

    def builder():
        calls.append(1)
        return make_model(seed=1, coef=3.0)

    assert not ss.maybe_rebuild(table, 100.0, 0.09, builder, 1200.0)
    assert not calls
    # strict inequality: equal to the threshold does not trigger
    assert not ss.maybe_rebuild(table, 200.0, 0.10, builder, 1200.0)
    assert not calls
    assert ss.maybe_rebuild(table, 300.0, 0.17, builder, 1200.0)
    assert calls == [1]
    # cool-down: a second over-threshold window cannot re-trigger yet
    assert not ss.maybe_rebuild(table, 400.0, 0.20, builder, 1200.0)
    assert calls == [1]
    assert ss.maybe_rebuild(table, 1600.0, 0.20, builder, 1200.0)
    assert calls == [1, 1]


def test_rebuild_installs_below_target_flagged():
    table = ss.ModelTable(threshold=0.10)
    key = key_of(dvs="off")
    install_model(table, key, make_model())
    ss.lookup_or_create(table, key)
    weak = make_model(seed=2)
    weak.below_target = True
    ss.maybe_rebuild(table, 100.0, 0.5, lambda: weak, 1000.0)
    assert table.models[key] is weak
    assert any("install-below-target" in line for line in table.decision_log)


def test_rebuild_never_touches_other_keys():
    table = ss.ModelTable(threshold=0.10)
    other_key = key_of(dvs="on")
    other_model = make_model(seed=3)
    install_model(table, other_key, other_model)
    key = key_of(dvs="off")
    install_model(table, key, make_model())
    ss.lookup_or_create(table, key)
    ss.maybe_rebuild(table, 100.0, 0.5, lambda: make_model(seed=4), 1000.0)
    assert table.models[other_key] is other_model


def test_persist_round_trip_empty(tmp_path):
    table = ss.ModelTable()
    path = tmp_path / "table.json"
    ss.persist(table, str(path))
    assert table_equals(ss.load(str(path)), table)


def test_persist_round_trip_three_models(tmp_path):
    table = ss.ModelTable(threshold=0.08, window_s=50.0)
    for i, dvs in enumerate(("off", "on", "auto")):
        install_model(table, key_of(dvs=dvs), make_model(seed=i, coef=1.0 + i))
    ss.lookup_or_create(table, key_of(dvs="on"))
    table.history.append(MonitorRecord(100.0, 0.05))
    table.cooldown_until_s = 1234.0
    path = tmp_path / "table.json"
    ss.persist(table, str(path))
    assert table_equals(ss.load(str(path)), table)


def test_persist_truncated_file_raises(tmp_path):
    table = ss.ModelTable()
    install_model(table, key_of(dvs="off"), make_model())
    path = tmp_path / "table.json"
    ss.persist(table, str(path))
    content = path.read_text()
    path.write_text(content[: len(content) // 2])
    with pytest.raises(ParseError):
        ss.load(str(path))
