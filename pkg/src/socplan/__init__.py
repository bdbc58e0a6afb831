"""Battery state-of-charge tracking for resource-constrained path planning."""

from socplan.battery import (
    BatteryParams,
    OcvCurve,
    SocState,
    default_battery,
    dump_battery_config,
    load_battery_config,
    ocv_at,
)
from socplan.models import (
    FitDomain,
    LinearFit,
    PowerDraw,
    fit_linear,
    linear_delta,
    nominal_delta,
    ohmic_voltage,
    rc_step,
)

__all__ = [
    "BatteryParams",
    "FitDomain",
    "LinearFit",
    "OcvCurve",
    "PowerDraw",
    "SocState",
    "default_battery",
    "dump_battery_config",
    "fit_linear",
    "linear_delta",
    "load_battery_config",
    "nominal_delta",
    "ocv_at",
    "ohmic_voltage",
    "rc_step",
]

__version__ = "0.1.0"
