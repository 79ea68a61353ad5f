"""Scenario configuration: file format and calibrated built-ins.

A scenario bundles the simulated system, workload, predictors, battery
interface, and pipeline settings for one experiment. Built-ins are tuned
so their raw-interface error curves land on the anchor points the
acceptance suite checks; their seeds are part of the calibration.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .battery import BatteryInterfaceModel
from .errors import ConfigurationError, ParseError
from .tracesim import (
    Component,
    ComponentStateModel,
    DutyCycle,
    FixedState,
    MarkovChain,
    Phase,
    PredictorSpec,
    Schedule,
    WorkloadSpec,
)

ERROR_VS_RATE = "error-vs-rate"
MOLDING = "molding"
ADAPTATION = "adaptation"
REGRESSOGRAM = "regressogram-compare"

EXPERIMENTS = (ERROR_VS_RATE, MOLDING, ADAPTATION, REGRESSOGRAM)

DEFAULT_RATE_GRID = (0.01, 0.1, 0.5, 1.0, 4.0, 10.0, 100.0)


@dataclass
class ScenarioConfig:
    name: str
    experiment: str
    seed: int
    duration_s: float
    system: ComponentStateModel
    workload: WorkloadSpec
    predictors: tuple[PredictorSpec, ...]
    battery: BatteryInterfaceModel
    tick_s: float = 0.001
    base_rate_hz: float = 100.0
    t_low_s: float = 100.0
    pca_l: int = 2
    fit_method: str = "TLS"
    regressogram_k: int = 10
    threshold: float = 0.10
    window_s: float = 100.0
    train_windows: int = 12
    # keep the selected l rich enough that steady monitored error sits well
    # below the rebuild threshold
    accuracy_target: float = 0.95
    rate_grid: tuple[float, ...] = DEFAULT_RATE_GRID
    # constant additive draw standing in for the energy cost of predictor
    # and response collection; folded into the simulated power when set
    collection_overhead_w: float = 0.0
    config_triples: tuple[tuple[str, str, str], ...] = (
        ("hardware", "machine", "sim"),)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if self.seed is None:
            raise ConfigurationError("scenario needs a seed")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(
            self, seed=seed,
            workload=dataclasses.replace(self.workload, seed=seed))

    def battery_seed(self) -> int:
        return self.seed + 7919


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

def _process_to_dict(proc) -> dict:
    if isinstance(proc, FixedState):
        return {"type": "fixed", "state": proc.state}
    if isinstance(proc, Schedule):
        return {"type": "schedule", "steps": [[d, s] for d, s in proc.steps]}
    if isinstance(proc, DutyCycle):
        return {"type": "duty", "period_s": proc.period_s,
                "fraction_hi": proc.fraction_hi,
                "state_hi": proc.state_hi, "state_lo": proc.state_lo}
    if isinstance(proc, MarkovChain):
        return {"type": "markov",
                "transition": [list(row) for row in proc.transition],
                "step_s": proc.step_s, "initial_state": proc.initial_state}
    raise ConfigurationError(f"unknown occupancy process {proc!r}")


def _process_from_dict(doc: dict):
    kind = doc.get("type")
    if kind == "fixed":
        return FixedState(state=int(doc["state"]))
    if kind == "schedule":
        return Schedule(steps=tuple((float(d), int(s)) for d, s in doc["steps"]))
    if kind == "duty":
        return DutyCycle(period_s=float(doc["period_s"]),
                         fraction_hi=float(doc["fraction_hi"]),
                         state_hi=int(doc["state_hi"]),
                         state_lo=int(doc["state_lo"]))
    if kind == "markov":
        return MarkovChain(
            transition=tuple(tuple(float(p) for p in row)
                             for row in doc["transition"]),
            step_s=float(doc["step_s"]),
            initial_state=int(doc["initial_state"]))
    raise ParseError(f"unknown occupancy process type {kind!r}")


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    return {
        "name": sc.name,
        "experiment": sc.experiment,
        "seed": sc.seed,
        "duration_s": sc.duration_s,
        "tick_s": sc.tick_s,
        "system": {
            "base_power_w": sc.system.base_power_w,
            "components": [
                {"name": c.name, "state_powers": list(c.state_powers),
                 "state_names": list(c.state_names)}
                for c in sc.system.components
            ],
        },
        "workload": {
            "phases": [
                {"name": p.name, "duration_s": p.duration_s,
                 "occupancy": {k: _process_to_dict(v)
                               for k, v in p.occupancy.items()}}
                for p in sc.workload.phases
            ],
        },
        "predictors": [
            {"id": s.id, "component": s.component, "kind": s.kind,
             "weights": {str(k): v for k, v in s.weights.items()},
             "update_rate_hz": s.update_rate_hz, "delay_s": s.delay_s,
             "policy": s.policy, "name": s.name}
            for s in sc.predictors
        ],
        "battery": {
            "kind": sc.battery.kind,
            "reading_rate_hz": sc.battery.reading_rate_hz,
            "supply_voltage_v": sc.battery.supply_voltage_v,
            "noise_sigma": sc.battery.noise_sigma,
            "counter_sigma_c": sc.battery.counter_sigma_c,
            "filter_window_s": sc.battery.filter_window_s,
            "filter_taps": sc.battery.filter_taps,
            "quantization": sc.battery.quantization,
            "internal_rate_hz": sc.battery.internal_rate_hz,
            "initial_capacity_c": sc.battery.initial_capacity_c,
        },
        "pipeline": {
            "base_rate_hz": sc.base_rate_hz,
            "t_low_s": sc.t_low_s,
            "pca_l": sc.pca_l,
            "fit_method": sc.fit_method,
            "regressogram_k": sc.regressogram_k,
            "threshold": sc.threshold,
            "window_s": sc.window_s,
            "train_windows": sc.train_windows,
            "accuracy_target": sc.accuracy_target,
            "rate_grid": list(sc.rate_grid),
            "collection_overhead_w": sc.collection_overhead_w,
        },
        "config_triples": [list(t) for t in sc.config_triples],
    }


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    try:
        system = ComponentStateModel(
            components=tuple(
                Component(name=c["name"],
                          state_powers=tuple(float(p) for p in c["state_powers"]),
                          state_names=tuple(c.get("state_names", ())))
                for c in doc["system"]["components"]
            ),
            base_power_w=float(doc["system"]["base_power_w"]),
        )
        workload = WorkloadSpec(
            phases=tuple(
                Phase(name=p["name"], duration_s=float(p["duration_s"]),
                      occupancy={k: _process_from_dict(v)
                                 for k, v in p["occupancy"].items()})
                for p in doc["workload"]["phases"]
            ),
            seed=int(doc["seed"]),
        )
        predictors = tuple(
            PredictorSpec(
                id=s["id"], component=s["component"], kind=s["kind"],
                weights={int(k): float(v) for k, v in s["weights"].items()},
                update_rate_hz=float(s.get("update_rate_hz", 1000.0)),
                delay_s=float(s.get("delay_s", 0.0)),
                policy=s.get("policy", "polled-fast"),
                name=s.get("name", ""))
            for s in doc["predictors"]
        )
        b = doc["battery"]
        battery = BatteryInterfaceModel(
            kind=b["kind"],
            reading_rate_hz=float(b["reading_rate_hz"]),
            supply_voltage_v=float(b.get("supply_voltage_v", 12.0)),
            noise_sigma=float(b.get("noise_sigma", 0.0)),
            counter_sigma_c=float(b.get("counter_sigma_c", 0.0)),
            filter_window_s=float(b.get("filter_window_s", 0.0)),
            filter_taps=int(b.get("filter_taps", 0)),
            quantization=float(b.get("quantization", 0.0)),
            internal_rate_hz=float(b.get("internal_rate_hz", 0.0)),
            initial_capacity_c=float(b.get("initial_capacity_c", 20000.0)),
        )
        pipe = doc.get("pipeline", {})
        return ScenarioConfig(
            name=str(doc["name"]),
            experiment=str(doc["experiment"]),
            seed=int(doc["seed"]),
            duration_s=float(doc["duration_s"]),
            tick_s=float(doc.get("tick_s", 0.001)),
            system=system,
            workload=workload,
            predictors=predictors,
            battery=battery,
            base_rate_hz=float(pipe.get("base_rate_hz", 100.0)),
            t_low_s=float(pipe.get("t_low_s", 100.0)),
            pca_l=int(pipe.get("pca_l", 2)),
            fit_method=str(pipe.get("fit_method", "TLS")),
            regressogram_k=int(pipe.get("regressogram_k", 10)),
            threshold=float(pipe.get("threshold", 0.10)),
            window_s=float(pipe.get("window_s", 100.0)),
            train_windows=int(pipe.get("train_windows", 12)),
            accuracy_target=float(pipe.get("accuracy_target", 0.95)),
            rate_grid=tuple(float(r) for r in pipe.get("rate_grid",
                                                       DEFAULT_RATE_GRID)),
            collection_overhead_w=float(pipe.get("collection_overhead_w", 0.0)),
            config_triples=tuple(tuple(t) for t in doc.get(
                "config_triples", [["hardware", "machine", "sim"]])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scenario document: {exc}") from exc


def save_scenario(sc: ScenarioConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=1)


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file: {exc}") from exc
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------
# The Markov rows below encode mean dwell times: a per-step leave
# probability p gives dwell step_s / p.

def _chain(rows, step_s=0.05, initial=0):
    return MarkovChain(transition=tuple(tuple(r) for r in rows),
                       step_s=step_s, initial_state=initial)


# Joint activity component: cpu and io burst together (interactive use),
# which is what lets two transformed predictors carry almost all of the
# activity-driven power. State 0 is idle; states 1..6 are (cpu flavor A/B)
# x (io mode both/disk/wifi). The flavors burn identical power but retire
# instructions at different rates, and the io modes burn near-identical
# power, so the within-block contrasts keep the design matrix full rank
# without holding real power signal.

def _activity_states(idle_w: float, busy_w: float,
                     io_w: tuple[float, float, float]) -> tuple[float, ...]:
    both, disk, wifi = io_w
    return (idle_w,
            busy_w + both, busy_w + disk, busy_w + wifi,
            busy_w + both, busy_w + disk, busy_w + wifi)


def _activity_chain(idle_dwell_s: float = 30.0, active_dwell_s: float = 30.0,
                    flavor_dwell_s: float = 20.0, io_dwell_s: float = 8.0,
                    io_split: tuple[float, float, float] = (0.6, 0.2, 0.2),
                    step_s: float = 0.05) -> MarkovChain:
    p_enter = step_s / idle_dwell_s
    p_leave = step_s / active_dwell_s
    p_flip = step_s / flavor_dwell_s
    p_io = step_s / io_dwell_s
    rows = [[0.0] * 7 for _ in range(7)]
    rows[0][0] = 1.0 - p_enter
    rows[0][1] = rows[0][4] = p_enter / 2.0   # enter on the 'both' io mode
    for f in range(2):
        for m in range(3):
            s = 1 + f * 3 + m
            row = rows[s]
            row[0] = p_leave
            row[1 + (1 - f) * 3 + m] = p_flip
            for m2 in range(3):
                if m2 != m:
                    row[1 + f * 3 + m2] = p_io * io_split[m2]
            row[s] = 1.0 - sum(row)
    return _chain(rows, step_s=step_s)


def _brightness_schedule() -> Schedule:
    # a handful of user brightness changes over a run; deterministic so the
    # second model factor is independent of the activity sampling
    return Schedule(steps=(
        (400.0, 0), (500.0, 2), (350.0, 1), (450.0, 2),
        (400.0, 0), (500.0, 1), (400.0, 2),
    ))


def _laptop_system() -> ComponentStateModel:
    return ComponentStateModel(
        components=(
            Component("act", _activity_states(3.0, 8.0, (4.4, 4.0, 3.8)),
                      ("idle", "a_both", "a_disk", "a_wifi",
                       "b_both", "b_disk", "b_wifi")),
            Component("lcd", (0.8, 3.8, 7.0), ("dim", "mid", "bright")),
            # invisible to every predictor: sets the high-rate error floor
            Component("bridge", (0.3, 1.7), ("lo", "hi")),
        ),
        base_power_w=6.0,
    )


def _laptop_workload(duration_s: float, seed: int) -> WorkloadSpec:
    bridge = _chain([[0.667, 0.333], [0.333, 0.667]], step_s=0.02)
    return WorkloadSpec(phases=(
        Phase("steady", duration_s, {
            "act": _activity_chain(),
            "lcd": _brightness_schedule(),
            "bridge": bridge,
        }),
    ), seed=seed)


def _laptop_predictors() -> tuple[PredictorSpec, ...]:
    a_states = (1, 2, 3)
    b_states = (4, 5, 6)
    return (
        PredictorSpec(id="cpu_busy", component="act", kind="residency",
                      weights={s: 1.0 for s in (*a_states, *b_states)},
                      update_rate_hz=250.0),
        PredictorSpec(id="instr_retired", component="act", kind="counter",
                      weights={**{s: 900.0 for s in a_states},
                               **{s: 1300.0 for s in b_states}},
                      update_rate_hz=250.0),
        PredictorSpec(id="disk_sectors", component="act", kind="counter",
                      weights={1: 140.0, 2: 140.0, 4: 140.0, 5: 140.0},
                      update_rate_hz=250.0, delay_s=0.3),
        PredictorSpec(id="wifi_bytes", component="act", kind="counter",
                      weights={1: 90.0, 3: 90.0, 4: 90.0, 6: 90.0},
                      update_rate_hz=250.0, delay_s=0.2),
        PredictorSpec(id="backlight", component="lcd", kind="level",
                      weights={0: 0.1, 1: 0.5, 2: 1.0},
                      policy="event-driven"),
    )


def t61like(seed: int = 61, experiment: str = MOLDING) -> ScenarioConfig:
    """Laptop with a 0.5 Hz filtered interface (10 taps over 16 s)."""
    duration = 3000.0
    return ScenarioConfig(
        name="t61like",
        experiment=experiment,
        seed=seed,
        duration_s=duration,
        system=_laptop_system(),
        workload=_laptop_workload(duration, seed),
        predictors=_laptop_predictors(),
        battery=BatteryInterfaceModel(
            kind="filtered", reading_rate_hz=0.5, supply_voltage_v=12.0,
            filter_window_s=16.0, filter_taps=10, noise_sigma=0.11),
        rate_grid=DEFAULT_RATE_GRID,
        config_triples=(("hardware", "machine", "t61like"),
                        ("software", "dvs", "off")),
    )


def n85like(seed: int = 85, experiment: str = ERROR_VS_RATE) -> ScenarioConfig:
    """Phone with a 4 Hz instant interface dominated by register noise."""
    duration = 3000.0
    system = ComponentStateModel(
        components=(
            Component("soc", (0.8, 1.8, 2.6), ("idle", "active", "peak")),
            Component("radio", (0.1, 0.7), ("idle", "tx")),
        ),
        base_power_w=0.3,
    )
    workload = WorkloadSpec(phases=(
        Phase("steady", duration, {
            "soc": _chain([
                [0.99, 0.008, 0.002],
                [0.006, 0.98, 0.014],
                [0.004, 0.026, 0.97],
            ]),
            "radio": _chain([[0.995, 0.005], [0.02, 0.98]]),
        }),
    ), seed=seed)
    return ScenarioConfig(
        name="n85like",
        experiment=experiment,
        seed=seed,
        duration_s=duration,
        system=system,
        workload=workload,
        predictors=(),
        battery=BatteryInterfaceModel(
            kind="instant", reading_rate_hz=4.0, supply_voltage_v=4.0,
            noise_sigma=0.136, counter_sigma_c=0.0235),
        rate_grid=(0.01, 0.1, 0.5, 1.0, 4.0),
        config_triples=(("hardware", "machine", "n85like"),),
    )


def n900like(seed: int = 900, experiment: str = MOLDING) -> ScenarioConfig:
    """Phone with a 0.1 Hz capacity interface; current is differenced."""
    duration = 3000.0
    system = ComponentStateModel(
        components=(
            Component("act", _activity_states(0.35, 1.55, (1.05, 0.95, 0.9)),
                      ("idle", "a_both", "a_flash", "a_wifi",
                       "b_both", "b_flash", "b_wifi")),
            Component("lcd", (0.15, 0.7, 1.3), ("dim", "mid", "bright")),
            # software-invisible: dominates the high-rate error floor
            Component("gps", (0.05, 0.6), ("off", "fix")),
        ),
        base_power_w=0.25,
    )
    gps = _chain([[0.9, 0.1], [0.1, 0.9]], step_s=0.05)
    workload = WorkloadSpec(phases=(
        Phase("steady", duration, {
            "act": _activity_chain(),
            "lcd": _brightness_schedule(),
            "gps": gps,
        }),
    ), seed=seed)
    predictors = (
        PredictorSpec(id="cpu_util", component="act", kind="residency",
                      weights={s: 1.0 for s in range(1, 7)},
                      update_rate_hz=100.0),
        PredictorSpec(id="instr_retired", component="act", kind="counter",
                      weights={1: 500.0, 2: 500.0, 3: 500.0,
                               4: 800.0, 5: 800.0, 6: 800.0},
                      update_rate_hz=100.0),
        PredictorSpec(id="flash_io", component="act", kind="counter",
                      weights={1: 80.0, 2: 80.0, 4: 80.0, 5: 80.0},
                      update_rate_hz=20.0, delay_s=0.3, policy="polled-slow"),
        PredictorSpec(id="wifi_bytes", component="act", kind="counter",
                      weights={1: 60.0, 3: 60.0, 4: 60.0, 6: 60.0},
                      update_rate_hz=20.0, delay_s=0.2, policy="polled-slow"),
        PredictorSpec(id="backlight", component="lcd", kind="level",
                      weights={0: 0.1, 1: 0.5, 2: 1.0},
                      policy="event-driven"),
    )
    return ScenarioConfig(
        name="n900like",
        experiment=experiment,
        seed=seed,
        duration_s=duration,
        system=system,
        workload=workload,
        predictors=predictors,
        battery=BatteryInterfaceModel(
            kind="capacity", reading_rate_hz=0.1, supply_voltage_v=3.8,
            noise_sigma=9.2e-5, initial_capacity_c=20000.0),
        rate_grid=(0.01, 0.1, 1.0, 10.0, 100.0),
        config_triples=(("hardware", "machine", "n900like"),),
    )


def noiseless_linear(seed: int = 1, experiment: str = MOLDING) -> ScenarioConfig:
    """Exactly linear system, perfect predictors, noiseless instant interface."""
    duration = 2000.0
    system = ComponentStateModel(
        components=(
            Component("cpu", (1.0, 9.0), ("idle", "busy")),
            Component("disk", (0.5, 2.5), ("idle", "active")),
        ),
        base_power_w=3.0,
    )
    workload = WorkloadSpec(phases=(
        Phase("steady", duration, {
            "cpu": _chain([[0.97, 0.03], [0.02, 0.98]], step_s=0.1),
            "disk": _chain([[0.99, 0.01], [0.03, 0.97]], step_s=0.1),
        }),
    ), seed=seed)
    predictors = (
        PredictorSpec(id="cpu:busy", component="cpu", kind="residency",
                      weights={1: 1.0}, update_rate_hz=1000.0),
        PredictorSpec(id="disk:active", component="disk", kind="residency",
                      weights={1: 1.0}, update_rate_hz=1000.0),
    )
    return ScenarioConfig(
        name="noiseless_linear",
        experiment=experiment,
        seed=seed,
        duration_s=duration,
        system=system,
        workload=workload,
        predictors=predictors,
        battery=BatteryInterfaceModel(
            kind="instant", reading_rate_hz=1.0, supply_voltage_v=10.0),
        rate_grid=(0.01, 0.1, 1.0, 10.0, 100.0),
    )


def dvs_flip(seed: int = 44) -> ScenarioConfig:
    """Adaptation: enabling frequency scaling mid-run changes the power map.

    Before the flip the low-frequency busy state is never entered, so its
    residency predictor is constant zero and the first model drops it.
    """
    system = ComponentStateModel(
        components=(
            Component("cpu", (3.0, 14.0, 7.2), ("idle", "busy2g", "busy800")),
            Component("disk", (0.2, 2.7), ("idle", "active")),
            Component("bridge", (0.2, 1.0), ("lo", "hi")),
        ),
        base_power_w=2.5,
    )
    leave = 0.05 / 30.0
    flip = 0.05 / 20.0
    cpu_off = _chain([
        [1 - leave, leave, 0.0],
        [leave, 1 - leave, 0.0],
        [0.0, 0.0, 1.0],          # unreachable while DVS is off
    ])
    cpu_on = _chain([
        [1 - leave, leave / 2, leave / 2],
        [leave, 1 - leave - flip, flip],
        [leave, flip, 1 - leave - flip],
    ])
    disk = _chain([[1 - 0.05 / 20.0, 0.05 / 20.0],
                   [0.05 / 10.0, 1 - 0.05 / 10.0]])
    bridge = _chain([[0.75, 0.25], [0.25, 0.75]], step_s=0.02)
    workload = WorkloadSpec(phases=(
        Phase("dvs_off", 1800.0, {
            "cpu": cpu_off, "disk": disk, "bridge": bridge}),
        Phase("dvs_on", 2700.0, {
            "cpu": cpu_on, "disk": disk, "bridge": bridge}),
    ), seed=seed)
    predictors = (
        PredictorSpec(id="cpu_busy", component="cpu", kind="residency",
                      weights={1: 1.0, 2: 1.0}, update_rate_hz=250.0),
        PredictorSpec(id="p800_res", component="cpu", kind="residency",
                      weights={2: 1.0}, update_rate_hz=250.0),
        PredictorSpec(id="disk_sectors", component="disk", kind="counter",
                      weights={1: 130.0}, update_rate_hz=250.0, delay_s=0.3),
    )
    return ScenarioConfig(
        name="dvs_flip",
        experiment=ADAPTATION,
        seed=seed,
        duration_s=4500.0,
        system=system,
        workload=workload,
        predictors=predictors,
        # 1 Hz instant interface (Latitude-class): no filter lag, so the
        # monitored windows isolate the model-vs-configuration mismatch
        battery=BatteryInterfaceModel(
            kind="instant", reading_rate_hz=1.0, supply_voltage_v=12.0,
            noise_sigma=0.10),
        config_triples=(("hardware", "machine", "d630like"),
                        ("software", "dvs", "off")),
    )


def workload_switch(seed: int = 45) -> ScenarioConfig:
    """Adaptation: usage change decouples a hidden draw from the busy state.

    In the first phase every busy period also powers the hidden draw, so
    the model folds it into the busy coefficient; the later usage stops
    doing that and the model overpredicts until rebuilt.
    """
    system = ComponentStateModel(
        components=(
            Component("cpu", (3.0, 17.0, 14.3), ("idle", "busy_heavy", "busy_light")),
            Component("disk", (0.2, 2.7), ("idle", "active")),
        ),
        base_power_w=2.5,
    )
    leave = 0.05 / 30.0
    flip = 0.05 / 20.0
    cpu_a = _chain([
        [1 - leave, leave, 0.0],
        [leave, 1 - leave, 0.0],
        [0.0, 0.0, 1.0],
    ])
    cpu_mid = _chain([
        [1 - leave, leave / 2, leave / 2],
        [leave, 1 - leave - flip, flip],
        [leave, flip, 1 - leave - flip],
    ])
    cpu_b = _chain([
        [1 - leave, 0.0, leave],
        [0.0, 1.0, 0.0],
        [leave, 0.0, 1 - leave],
    ], initial=0)
    disk = _chain([[1 - 0.05 / 20.0, 0.05 / 20.0],
                   [0.05 / 10.0, 1 - 0.05 / 10.0]])
    workload = WorkloadSpec(phases=(
        Phase("editor", 1800.0, {"cpu": cpu_a, "disk": disk}),
        Phase("mixed", 300.0, {"cpu": cpu_mid, "disk": disk}),
        Phase("office", 2700.0, {"cpu": cpu_b, "disk": disk}),
    ), seed=seed)
    predictors = (
        PredictorSpec(id="cpu_busy", component="cpu", kind="residency",
                      weights={1: 1.0, 2: 1.0}, update_rate_hz=250.0),
        PredictorSpec(id="disk_sectors", component="disk", kind="counter",
                      weights={1: 130.0}, update_rate_hz=250.0, delay_s=0.3),
    )
    return ScenarioConfig(
        name="workload_switch",
        experiment=ADAPTATION,
        seed=seed,
        duration_s=4800.0,
        system=system,
        workload=workload,
        predictors=predictors,
        battery=BatteryInterfaceModel(
            kind="instant", reading_rate_hz=1.0, supply_voltage_v=12.0,
            noise_sigma=0.10),
        config_triples=(("hardware", "machine", "d630like"),),
    )


def adaptation_control(seed: int = 46) -> ScenarioConfig:
    """Adaptation control run: no change, so no rebuild may fire."""
    sc = dvs_flip(seed=seed)
    workload = WorkloadSpec(phases=(sc.workload.phases[0],), seed=seed)
    return dataclasses.replace(
        sc, name="adaptation_control", duration_s=3600.0, workload=workload)


def quadratic_cpu(seed: int = 47) -> ScenarioConfig:
    """Convex power-vs-utilization system for the regressogram comparison.

    Component power follows 2 + u + 9 u^2 over six utilization levels, so a
    single linear predictor carries a systematic bias that per-bin means
    do not.
    """
    levels = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    powers = tuple(2.0 + u + 9.0 * u * u for u in levels)
    system = ComponentStateModel(
        components=(
            Component("cpu", powers,
                      tuple(f"u{int(u * 100):03d}" for u in levels)),
            Component("bridge", (0.1, 0.4), ("lo", "hi")),
        ),
        base_power_w=1.0,
    )
    # random walk over utilization levels. Dwells are long enough that
    # 10 ms intervals sit inside one level (the per-bin means are exact)
    # while 100 s training windows still mix several levels.
    k = len(levels)
    p_move = 0.05 / 25.0
    rows = []
    for i in range(k):
        row = [0.0] * k
        if i == 0:
            row[1] = p_move
        elif i == k - 1:
            row[k - 2] = p_move
        else:
            row[i - 1] = row[i + 1] = p_move / 2.0
        row[i] = 1.0 - sum(row)
        rows.append(row)
    workload = WorkloadSpec(phases=(
        Phase("sweep", 3000.0, {
            "cpu": MarkovChain(tuple(tuple(r) for r in rows), step_s=0.05),
            "bridge": _chain([[0.6, 0.4], [0.4, 0.6]], step_s=0.02),
        }),
    ), seed=seed)
    predictors = (
        PredictorSpec(id="util_level", component="cpu", kind="level",
                      weights={i: u for i, u in enumerate(levels)},
                      update_rate_hz=250.0),
    )
    return ScenarioConfig(
        name="quadratic_cpu",
        experiment=REGRESSOGRAM,
        seed=seed,
        duration_s=3000.0,
        system=system,
        workload=workload,
        predictors=predictors,
        battery=BatteryInterfaceModel(
            kind="instant", reading_rate_hz=1.0, supply_voltage_v=12.0,
            noise_sigma=0.05),
        rate_grid=(0.01, 0.1, 1.0, 10.0, 100.0),
    )


BUILTIN_SCENARIOS = {
    "t61like": t61like,
    "n85like": n85like,
    "n900like": n900like,
    "noiseless_linear": noiseless_linear,
    "dvs_flip": dvs_flip,
    "workload_switch": workload_switch,
    "adaptation_control": adaptation_control,
    "quadratic_cpu": quadratic_cpu,
}


def builtin(name: str) -> ScenarioConfig:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigurationError(
            f"unknown scenario {name!r}; built-ins: {sorted(BUILTIN_SCENARIOS)}")
    return BUILTIN_SCENARIOS[name]()
