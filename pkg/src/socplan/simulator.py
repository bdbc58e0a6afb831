"""Reference integration of SOC dynamics and model-vs-model comparison.

The Ohmic and RC models are integrated with classical fixed-step RK4 on
dS/dt = -P / (V(S, P) * C_m). The nominal and linear models are applied as
one update per leg. Measured logs can be cut into constant-power pulses and
ground-truthed by coulomb counting.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from socplan.battery import BatteryParams, OcvCurve, SocState, ocv_at
from socplan.errors import (
    ComparisonError,
    ConfigError,
    InfeasibleLoadError,
    NoPulsesFound,
    SocRangeError,
    TrajectoryError,
)
from socplan.models import (
    LinearFit,
    PowerDraw,
    linear_delta,
    loaded_voltage,
    nominal_delta,
    rc_step,
)

INTEGRATED_MODELS = ("ohmic", "rc")
SINGLE_STEP_MODELS = ("nominal", "linear")


@dataclass(frozen=True)
class PulseProfile:
    legs: tuple[PowerDraw, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        if not self.legs:
            raise ConfigError("profile needs at least one leg", "legs")
        for leg in self.legs:
            if not isinstance(leg, PowerDraw):
                raise ConfigError(f"expected PowerDraw, got {type(leg).__name__}", "legs")

    @property
    def total_duration(self) -> float:
        return sum(leg.duration for leg in self.legs)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "legs": [{"power_w": leg.power, "duration_s": leg.duration} for leg in self.legs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PulseProfile:
        if not isinstance(doc, dict) or "legs" not in doc:
            raise ConfigError("missing required field", "legs")
        legs = []
        for i, leg in enumerate(doc["legs"]):
            try:
                legs.append(PowerDraw(float(leg["power_w"]), float(leg["duration_s"])))
            except KeyError as exc:
                raise ConfigError("missing required field", f"legs[{i}].{exc.args[0]}") from None
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise ConfigError(str(exc), f"legs[{i}]") from None
                raise ConfigError(f"malformed leg: {exc}", f"legs[{i}]") from None
        return cls(tuple(legs), str(doc.get("label", "")))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> PulseProfile:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from None


@dataclass(frozen=True)
class Trajectory:
    """Time series of (t, soc, voltage) produced by one model."""

    samples: tuple[tuple[float, float, float], ...]
    model_name: str = ""

    def __post_init__(self):
        samples = tuple((float(t), float(s), float(v)) for t, s, v in self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ConfigError("trajectory needs at least one sample", "samples")
        for (t0, _, _), (t1, _, _) in zip(samples, samples[1:]):
            if not t1 > t0:
                raise ConfigError("sample times must be strictly increasing", "samples")

    @property
    def times(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def socs(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def voltages(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])

    @property
    def final_soc(self) -> float:
        return self.samples[-1][1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# model={self.model_name}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_s", "soc", "voltage_v"])
        for t, s, v in self.samples:
            writer.writerow([repr(t), repr(s), repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Trajectory:
        name = ""
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "model":
                    name = value.strip()
            elif line.strip():
                lines.append(line)
        reader = csv.DictReader(lines)
        try:
            samples = [(float(r["t_s"]), float(r["soc"]), float(r["voltage_v"])) for r in reader]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed trajectory CSV: {exc}") from None
        return cls(tuple(samples), name)


@dataclass(frozen=True)
class MeasuredLog:
    """Bench log rows ``(t_s, power_w, voltage_v, current_a)``."""

    t: np.ndarray
    power: np.ndarray
    voltage: np.ndarray
    current: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("t", "power", "voltage", "current"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        n = arrays["t"].size
        if n == 0:
            raise ConfigError("log has no rows", "t")
        if any(a.size != n for a in arrays.values()):
            raise ConfigError("columns have different lengths")
        if not all(np.all(np.isfinite(a)) for a in arrays.values()):
            raise ConfigError("log contains non-finite values")
        if np.any(np.diff(arrays["t"]) <= 0):
            raise ConfigError("times must be strictly increasing", "t_s")

    def __len__(self) -> int:
        return self.t.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_s", "power_w", "voltage_v", "current_a"])
        for row in zip(self.t, self.power, self.voltage, self.current):
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> MeasuredLog:
        reader = csv.DictReader(line for line in text.splitlines() if line and not line.startswith("#"))
        missing = {"t_s", "power_w", "voltage_v", "current_a"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"missing columns {sorted(missing)}", "header")
        cols = {"t_s": [], "power_w": [], "voltage_v": [], "current_a": []}
        for lineno, row in enumerate(reader, start=2):
            try:
                for key in cols:
                    cols[key].append(float(row[key]))
            except (TypeError, ValueError):
                raise ConfigError(f"non-numeric value on line {lineno}") from None
        return cls(cols["t_s"], cols["power_w"], cols["voltage_v"], cols["current_a"])


def _terminal_voltage(model, soc, power, u, curve, params):
    emf = ocv_at(curve, soc)
    if model == "rc":
        emf -= u
    return loaded_voltage(emf, power, params.r0)


def integrate(
    model: str,
    soc0: float,
    profile: PulseProfile,
    steps_per_leg: int,
    curve: OcvCurve,
    params: BatteryParams,
    method: str = "rk4",
) -> Trajectory:
    """Integrate SOC through ``profile`` with the Ohmic or RC model.

    ``steps_per_leg`` uniform steps are taken per leg and a sample is emitted
    after each one (plus the initial sample at t=0). For ``rc`` the branch
    voltage is frozen within a step and advanced by the exponential update
    at each step boundary. ``method="euler"`` replaces RK4 with forward Euler
    and exists for tests.

    Raises
    ------
    TrajectoryError
        on an infeasible load or SOC leaving the OCV table; the samples up to
        the failure are attached.
    """
    if model not in INTEGRATED_MODELS:
        raise ConfigError(f"expected one of {INTEGRATED_MODELS}, got {model!r}", "model")
    if method not in ("rk4", "euler"):
        raise ConfigError(f"unknown method {method!r}", "method")
    if steps_per_leg < 1:
        raise ConfigError("must be >= 1", "steps_per_leg")
    cap = params.capacity_coulombs
    u = 0.0
    soc = soc0
    t = 0.0
    samples = []

    def fail(exc):
        partial = Trajectory(tuple(samples), model) if samples else None
        raise TrajectoryError(
            f"{model} integration stopped at t={t:.6g} s, soc={soc:.6g}: {exc}",
            trajectory=partial,
            state=SocState(min(max(soc, 0.0), 1.0), u),
        ) from exc

    try:
        samples.append((0.0, soc, _terminal_voltage(model, soc, profile.legs[0].power, u, curve, params)))
    except (InfeasibleLoadError, SocRangeError) as exc:
        fail(exc)

    for leg in profile.legs:
        p = leg.power
        h = leg.duration / steps_per_leg
        t_start = t

        def rate(s):
            return -p / (_terminal_voltage(model, s, p, u, curve, params) * cap)

        for k in range(steps_per_leg):
            try:
                v_k = _terminal_voltage(model, soc, p, u, curve, params)
                if method == "euler":
                    current = p / v_k
                    soc_next = soc - current * h / cap
                else:
                    k1 = -p / (v_k * cap)
                    k2 = rate(soc + 0.5 * h * k1)
                    k3 = rate(soc + 0.5 * h * k2)
                    k4 = rate(soc + h * k3)
                    soc_next = soc + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
                if model == "rc":
                    decay = math.exp(-h / params.tau)
                    u = decay * u + params.r1 * (1.0 - decay) * (p / v_k)
                soc = soc_next
                t = t_start + (k + 1) * h
                samples.append((t, soc, _terminal_voltage(model, soc, p, u, curve, params)))
            except (InfeasibleLoadError, SocRangeError) as exc:
                fail(exc)
        t = t_start + leg.duration
    return Trajectory(tuple(samples), model)


def predict_single_step(
    model: str,
    soc0: float,
    profile: PulseProfile,
    fit: LinearFit | None,
    params: BatteryParams,
) -> Trajectory:
    """Chain one nominal or linear update per leg; one sample per leg boundary.

    The voltage column holds the voltage each model assumes for the leg
    (V_nom, or the fitted voltage at the leg's start).
    """
    if model not in SINGLE_STEP_MODELS:
        raise ConfigError(f"expected one of {SINGLE_STEP_MODELS}, got {model!r}", "model")
    if model == "linear" and fit is None:
        raise ConfigError("the linear model needs a fit", "fit")

    def assumed_voltage(s, p):
        return params.v_nom if model == "nominal" else fit.voltage(s, p)

    soc, t = soc0, 0.0
    samples = [(0.0, soc, assumed_voltage(soc, profile.legs[0].power))]
    for i, leg in enumerate(profile.legs):
        if model == "nominal":
            soc = nominal_delta(soc, leg, params)
        else:
            soc = linear_delta(soc, leg, fit, params)
        t += leg.duration
        next_power = profile.legs[min(i + 1, len(profile.legs) - 1)].power
        v = params.v_nom if model == "nominal" else 1.0 / fit.inverse_voltage(soc, next_power)
        samples.append((t, soc, v))
    return Trajectory(tuple(samples), model)


def _runs(flags: list[bool], durations: np.ndarray) -> list[list]:
    """Run-length encode flags into [flag, first, last_exclusive, duration]."""
    runs = []
    for i, f in enumerate(flags):
        if runs and runs[-1][0] == f:
            runs[-1][2] = i + 1
            runs[-1][3] += durations[i]
        else:
            runs.append([f, i, i + 1, durations[i]])
    return runs


def segment_pulses(
    log: MeasuredLog,
    power_threshold: float | None = None,
    min_duration: float = 0.0,
    label: str = "",
) -> PulseProfile:
    """Cut a measured log into constant-power legs.

    Each row's power is held until the next row. Maximal runs above
    ``power_threshold`` (default 5% of the peak logged power) become legs
    with the time-weighted mean power of the run. Runs shorter than
    ``min_duration`` are absorbed into a neighbouring run, shortest first,
    so brief dips inside a pulse or blips during a rest don't split or
    create legs.

    Raises :class:`NoPulsesFound` if nothing is left above threshold.
    """
    if len(log) < 2:
        raise NoPulsesFound("log needs at least two rows to define an interval")
    if power_threshold is None:
        power_threshold = 0.05 * float(np.max(log.power))
    dt = np.diff(log.t)
    flags = [bool(p > power_threshold) for p in log.power[:-1]]
    runs = _runs(flags, dt)
    while len(runs) > 1:
        short = [i for i, r in enumerate(runs) if r[3] < min_duration]
        if not short:
            break
        i = min(short, key=lambda j: (runs[j][3], j))
        neighbour = runs[i - 1] if i > 0 else runs[i + 1]
        for k in range(runs[i][1], runs[i][2]):
            flags[k] = neighbour[0]
        runs = _runs(flags, dt)

    legs = []
    energy = log.power[:-1] * dt
    for flag, lo, hi, duration in runs:
        if flag:
            legs.append(PowerDraw(float(energy[lo:hi].sum() / duration), float(duration)))
    if not legs:
        raise NoPulsesFound(f"no interval above {power_threshold:.6g} W")
    return PulseProfile(tuple(legs), label)


def coulomb_count(log: MeasuredLog, capacity: float, soc0: float = 1.0) -> Trajectory:
    """Ground-truth SOC by trapezoidal integration of the measured current."""
    if capacity <= 0:
        raise ConfigError("must be positive", "capacity")
    charge = np.concatenate(
        [[0.0], np.cumsum(0.5 * (log.current[1:] + log.current[:-1]) * np.diff(log.t))]
    )
    socs = soc0 - charge / capacity
    t = log.t - log.t[0]
    return Trajectory(tuple(zip(t, socs, log.voltage)), "coulomb_count")


@dataclass(frozen=True)
class ModelComparison:
    """Differences between a candidate and the reference, in percentage points."""

    model_name: str
    final_diff_pp: float
    max_diff_pp: float
    mean_diff_pp: float
    rms_diff_pp: float
    n_points: int = field(default=0)


def compare_models(reference: Trajectory, candidates) -> list[ModelComparison]:
    """Compare SOC trajectories over their common time range.

    Both trajectories are linearly interpolated onto the union of their
    sample times inside the overlap, so the metrics are symmetric in
    which one is called the reference. The final difference is taken at the
    end of the overlap.
    """
    report = []
    for cand in candidates:
        lo = max(reference.times[0], cand.times[0])
        hi = min(reference.times[-1], cand.times[-1])
        if hi < lo:
            raise ComparisonError(
                f"{cand.model_name!r} [{cand.times[0]}, {cand.times[-1]}] does not overlap "
                f"reference [{reference.times[0]}, {reference.times[-1]}]"
            )
        grid = np.union1d(reference.times, cand.times)
        grid = grid[(grid >= lo) & (grid <= hi)]
        diff = np.interp(grid, cand.times, cand.socs) - np.interp(grid, reference.times, reference.socs)
        diff_pp = 100.0 * np.abs(diff)
        report.append(
            ModelComparison(
                model_name=cand.model_name,
                final_diff_pp=float(diff_pp[-1]),
                max_diff_pp=float(diff_pp.max()),
                mean_diff_pp=float(diff_pp.mean()),
                rms_diff_pp=float(np.sqrt(np.mean(diff_pp**2))),
                n_points=int(grid.size),
            )
        )
    return report


def synthesize_log(
    profile: PulseProfile,
    soc0: float,
    curve: OcvCurve,
    params: BatteryParams,
    sample_period: float = 1.0,
    power_noise: float = 0.0,
    seed: int | None = None,
) -> MeasuredLog:
    """Simulate a bench log by stepping the RC model once per sample.

    Each sample's power is the leg power scaled by ``1 + U(-power_noise,
    power_noise)`` and held until the next sample. The final row closes the
    last interval.
    """
    rng = np.random.default_rng(seed)
    state = SocState(soc0)
    rows = []
    t = 0.0
    p = 0.0
    for leg in profile.legs:
        n = max(1, round(leg.duration / sample_period))
        dt = leg.duration / n
        for _ in range(n):
            p = leg.power * (1.0 + power_noise * rng.uniform(-1.0, 1.0)) if leg.power else 0.0
            v = loaded_voltage(ocv_at(curve, state.soc) - state.u_hysteresis, p, params.r0)
            rows.append((t, p, v, p / v))
            state = rc_step(state, PowerDraw(p, dt), curve, params)
            t += dt
    v = loaded_voltage(ocv_at(curve, state.soc) - state.u_hysteresis, p, params.r0)
    rows.append((t, p, v, p / v))
    cols = list(zip(*rows))
    return MeasuredLog(*cols)


def default_profile_18650() -> PulseProfile:
    """Synthetic 18-leg profile taking the default 18650 cell from full to ~12%.

    The last leg starts just above 20% SOC so every leg stays inside the
    default linear-fit domain.
    """
    legs = [
        (6.0, 300.0), (9.0, 220.0), (3.0, 350.0), (8.0, 250.0), (5.0, 350.0),
        (10.0, 180.0), (4.0, 400.0), (7.0, 220.0), (6.0, 280.0), (5.0, 300.0),
        (8.0, 250.0), (3.0, 400.0), (9.0, 200.0), (6.0, 280.0), (4.0, 350.0),
        (10.0, 150.0), (7.0, 120.0), (6.0, 420.0),
    ]  # fmt: skip
    return PulseProfile(tuple(PowerDraw(p, d) for p, d in legs), "18650 depleting pulses")


def default_profile_lipo() -> PulseProfile:
    """Synthetic 4S LiPo test: ten constant-power pulses with 30 s rests,
    using about 80% of the pack."""
    pulses = [
        (320.0, 75.0), (450.0, 55.0), (260.0, 80.0), (380.0, 65.0), (300.0, 75.0),
        (420.0, 55.0), (280.0, 80.0), (350.0, 60.0), (400.0, 55.0), (310.0, 60.0),
    ]  # fmt: skip
    legs = []
    for p, d in pulses:
        legs += [PowerDraw(p, d), PowerDraw(0.0, 30.0)]
    return PulseProfile(tuple(legs[:-1]), "4S LiPo pulses")
