"""Battery parameters, the OCV lookup curve and config file handling."""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from importlib import resources

from socplan.errors import ConfigError, SocRangeError

# 1 mAh = 3.6 C
COULOMBS_PER_MAH = 3.6
NOMINAL_CELL_VOLTAGE = 3.7


@dataclass(frozen=True)
class OcvCurve:
    """Monotone SOC -> open-circuit voltage lookup table.

    Knots are ``(soc, volts)`` pairs, strictly increasing in SOC and
    non-decreasing in voltage. Values between knots are linearly interpolated;
    nothing is extrapolated.
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(s), float(v)) for s, v in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise ConfigError("at least 2 knots required", "ocv")
        for s, v in knots:
            if not (math.isfinite(s) and math.isfinite(v)):
                raise ConfigError("knot values must be finite", "ocv")
            if not 0.0 <= s <= 1.0:
                raise ConfigError(f"knot soc {s} outside [0, 1]", "ocv")
            if v <= 0.0:
                raise ConfigError(f"knot voltage {v} must be positive", "ocv")
        for (s0, v0), (s1, v1) in zip(knots, knots[1:]):
            if s1 <= s0:
                raise ConfigError("knot soc values must be strictly increasing", "ocv")
            if v1 < v0:
                raise ConfigError("knot voltages must be non-decreasing in soc", "ocv")

    @property
    def socs(self) -> tuple[float, ...]:
        return tuple(s for s, _ in self.knots)

    @property
    def voltages(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.knots)

    @property
    def soc_min(self) -> float:
        return self.knots[0][0]

    @property
    def soc_max(self) -> float:
        return self.knots[-1][0]

    def __call__(self, soc: float) -> float:
        return ocv_at(self, soc)


def ocv_at(curve: OcvCurve, soc: float) -> float:
    """Open-circuit voltage at ``soc``, piecewise-linear between knots."""
    knots = curve.knots
    if not knots[0][0] <= soc <= knots[-1][0]:
        raise SocRangeError(
            f"soc {soc!r} outside OCV table range [{knots[0][0]}, {knots[-1][0]}]"
        )
    i = bisect_right(curve.socs, soc) - 1
    s0, v0 = knots[i]
    if soc == s0 or i == len(knots) - 1:
        return v0
    s1, v1 = knots[i + 1]
    return v0 + (v1 - v0) * ((soc - s0) / (s1 - s0))


@dataclass(frozen=True)
class BatteryParams:
    """Equivalent-circuit parameters of a cell or pack.

    Attributes
    ----------
    capacity_coulombs : maximum charge C_m (C)
    r0 : series internal resistance (ohm)
    r1 : RC branch resistance (ohm)
    tau : RC branch time constant (s)
    v_nom : nominal voltage used by the constant-voltage model (V)
    soc_max : upper SOC bound used by the planner, fraction of C_m
    cells : number of series cells; only used for the default ``v_nom``
    """

    capacity_coulombs: float
    r0: float
    r1: float
    tau: float
    v_nom: float
    soc_max: float = 1.0
    cells: int = 1

    def __post_init__(self):
        checks = (
            ("capacity_coulombs", self.capacity_coulombs > 0),
            ("r0", self.r0 >= 0),
            ("r1", self.r1 >= 0),
            ("tau", self.tau > 0),
            ("v_nom", self.v_nom > 0),
            ("soc_max", 0 < self.soc_max <= 1),
            ("cells", self.cells >= 1),
        )
        for name, ok in checks:
            value = getattr(self, name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f"must be finite, got {value!r}", name)
            if not ok:
                raise ConfigError(f"invalid value {value!r}", name)

    @property
    def capacity_mah(self) -> float:
        return self.capacity_coulombs / COULOMBS_PER_MAH


@dataclass(frozen=True)
class SocState:
    """SOC plus the RC branch voltage (zero for models without one)."""

    soc: float
    u_hysteresis: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise SocRangeError(f"soc {self.soc!r} outside [0, 1]")
        if not math.isfinite(self.u_hysteresis):
            raise ConfigError("must be finite", "u_hysteresis")


def _number(doc: dict, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError("missing required field", key)
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", key)
    if not math.isfinite(value):
        raise ConfigError("must be finite", key)
    return float(value)


def parse_battery_config(doc: dict) -> tuple[OcvCurve, BatteryParams]:
    """Validate an already-decoded battery config mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("battery config must be a JSON object")
    cells = doc.get("cells", 1)
    if isinstance(cells, bool) or not isinstance(cells, int) or cells < 1:
        raise ConfigError(f"expected a positive integer, got {cells!r}", "cells")
    raw_ocv = doc.get("ocv")
    if raw_ocv is None:
        raise ConfigError("missing required field", "ocv")
    try:
        knots = [(float(s), float(v)) for s, v in raw_ocv]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected [[soc, volts], ...]: {exc}", "ocv") from None
    curve = OcvCurve(tuple(knots))
    params = BatteryParams(
        capacity_coulombs=_number(doc, "capacity_mAh") * COULOMBS_PER_MAH,
        r0=_number(doc, "r0_ohm"),
        r1=_number(doc, "r1_ohm"),
        tau=_number(doc, "tau_s"),
        v_nom=_number(doc, "v_nom", NOMINAL_CELL_VOLTAGE * cells),
        soc_max=_number(doc, "soc_max", 1.0),
        cells=cells,
    )
    return curve, params


def load_battery_config(text: str) -> tuple[OcvCurve, BatteryParams]:
    """Parse a JSON battery config document.

    Raises :class:`ConfigError` naming the bad field on malformed input or
    when an invariant is violated.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from None
    return parse_battery_config(doc)


def battery_config_dict(curve: OcvCurve, params: BatteryParams) -> dict:
    return {
        "capacity_mAh": params.capacity_mah,
        "r0_ohm": params.r0,
        "r1_ohm": params.r1,
        "tau_s": params.tau,
        "v_nom": params.v_nom,
        "cells": params.cells,
        "soc_max": params.soc_max,
        "ocv": [[s, v] for s, v in curve.knots],
    }


def dump_battery_config(curve: OcvCurve, params: BatteryParams) -> str:
    return json.dumps(battery_config_dict(curve, params), indent=2)


def read_battery_config(path) -> tuple[OcvCurve, BatteryParams]:
    with open(path, encoding="utf-8") as fh:
        return load_battery_config(fh.read())


BUILTIN_BATTERIES = {
    "18650": "cell_18650_synthetic.json",
    "lipo4s": "lipo_4s_synthetic.json",
}


def default_battery(name: str = "18650") -> tuple[OcvCurve, BatteryParams]:
    """Load one of the bundled synthetic battery configs (``18650`` or ``lipo4s``).

    The OCV tables are synthetic stand-ins shaped like typical discharge
    curves; they are not measured data.
    """
    try:
        filename = BUILTIN_BATTERIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown builtin battery {name!r}; choose from {sorted(BUILTIN_BATTERIES)}"
        ) from None
    text = resources.files("socplan.data").joinpath(filename).read_text("utf-8")
    return load_battery_config(text)
