"""SOC update models: Ohmic drop, 1st-order RC, nominal voltage and linear.

All powers are in watts with positive values draining the battery. The
nominal and linear models are single-step updates: each evaluates to one
affine expression per constant-power leg, which is what lets them sit inside
a mixed-integer linear program.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from socplan.battery import BatteryParams, OcvCurve, SocState, ocv_at
from socplan.errors import (
    ConfigError,
    FitDomainError,
    FitError,
    InfeasibleLoadError,
    SocRangeError,
)


@dataclass(frozen=True)
class PowerDraw:
    """Constant power held for ``duration`` seconds."""

    power: float
    duration: float

    def __post_init__(self):
        if not (math.isfinite(self.power) and math.isfinite(self.duration)):
            raise ConfigError("power and duration must be finite")
        if self.duration <= 0:
            raise ConfigError(f"must be positive, got {self.duration!r}", "duration")
        if self.power < 0:
            raise ConfigError(
                f"must be >= 0 (charging is not modelled), got {self.power!r}", "power"
            )


def loaded_voltage(emf: float, power: float, r0: float) -> float:
    """Terminal voltage delivering ``power`` from source ``emf`` behind ``r0``.

    Solves V * (emf - V) / r0 = P and takes the high-voltage root.
    """
    if emf <= 0:
        raise InfeasibleLoadError(f"non-positive source voltage {emf!r}")
    if power == 0 or r0 == 0:
        return emf
    disc = emf * emf - 4.0 * power * r0
    if disc < 0:
        raise InfeasibleLoadError(
            f"load {power} W exceeds the {emf * emf / (4.0 * r0):.6g} W deliverable "
            f"at {emf:.6g} V behind {r0} ohm"
        )
    return 0.5 * (emf + math.sqrt(disc))


def ohmic_voltage(soc: float, power: float, curve: OcvCurve, params: BatteryParams) -> float:
    """Terminal voltage of the simple Ohmic-drop model under constant power."""
    if power < 0:
        raise ConfigError("must be >= 0", "power")
    return loaded_voltage(ocv_at(curve, soc), power, params.r0)


def soc_drop(power: float, duration: float, inverse_voltage: float, capacity: float) -> float:
    """SOC consumed drawing ``power`` for ``duration`` at a fixed 1/V.

    Shared by the nominal and linear models (and the solvers) so the two
    reduce to bit-identical arithmetic when the fit is (0, 0, 1/V_nom).
    """
    return power * inverse_voltage * duration / capacity


def rc_step(
    state: SocState, draw: PowerDraw, curve: OcvCurve, params: BatteryParams
) -> SocState:
    """Advance the 1st-order RC model by one step of ``draw.duration``.

    The terminal voltage is found from the Ohmic quadratic with the RC branch
    voltage subtracted from the OCV, then the branch voltage relaxes with the
    exact exponential map for piecewise-constant current.
    """
    emf = ocv_at(curve, state.soc) - state.u_hysteresis
    v = loaded_voltage(emf, draw.power, params.r0)
    current = draw.power / v
    decay = math.exp(-draw.duration / params.tau)
    u = decay * state.u_hysteresis + params.r1 * (1.0 - decay) * current
    soc = state.soc - current * draw.duration / params.capacity_coulombs
    if soc < 0:
        raise SocRangeError(f"battery depleted (soc {soc:.6g}) during RC step")
    return SocState(soc, u)


def nominal_delta(soc0: float, draw: PowerDraw, params: BatteryParams) -> float:
    """SOC after one leg assuming the battery sits at its nominal voltage.

    The result may be negative; feasibility is the caller's decision.
    """
    return soc0 - soc_drop(
        draw.power, draw.duration, 1.0 / params.v_nom, params.capacity_coulombs
    )


@dataclass(frozen=True)
class FitDomain:
    soc_min: float
    soc_max: float
    p_min: float
    p_max: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.soc_min, self.soc_max, self.p_min, self.p_max)):
            raise ConfigError("bounds must be finite", "domain")
        if not 0.0 <= self.soc_min <= self.soc_max <= 1.0:
            raise ConfigError("need 0 <= soc_min <= soc_max <= 1", "domain")
        if not 0.0 <= self.p_min <= self.p_max:
            raise ConfigError("need 0 <= p_min <= p_max", "domain")

    def contains(self, soc: float, power: float) -> bool:
        return self.soc_min <= soc <= self.soc_max and self.p_min <= power <= self.p_max

    def corners(self):
        for s in (self.soc_min, self.soc_max):
            for p in (self.p_min, self.p_max):
                yield s, p


@dataclass(frozen=True)
class LinearFit:
    """Plane fit 1/V ~ a*soc + b*power + c over ``domain``.

    Construction checks that the fitted 1/V stays positive across the whole
    domain (it is affine, so the corners suffice). The physical sign
    condition ``a <= 0`` is enforced by :func:`fit_linear` and
    :meth:`from_dict`; a hand-built fit may violate it, which the solvers
    then catch with their dominance-safety check.
    """

    a: float
    b: float
    c: float
    domain: FitDomain
    max_rel_residual: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c", "max_rel_residual"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", name)
        if self.max_rel_residual < 0:
            raise ConfigError("must be >= 0", "max_rel_residual")
        for s, p in self.domain.corners():
            if self.inverse_voltage(s, p) <= 0:
                raise ConfigError(
                    f"fitted 1/V is non-positive at soc={s}, power={p}", "c"
                )

    def inverse_voltage(self, soc: float, power: float) -> float:
        return self.a * soc + self.b * power + self.c

    def voltage(self, soc: float, power: float) -> float:
        return 1.0 / self.inverse_voltage(soc, power)

    def to_dict(self) -> dict:
        d = self.domain
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "domain": {"soc_min": d.soc_min, "soc_max": d.soc_max, "p_min": d.p_min, "p_max": d.p_max},
            "max_rel_residual": self.max_rel_residual,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LinearFit:
        try:
            dom = doc["domain"]
            domain = FitDomain(
                float(dom["soc_min"]), float(dom["soc_max"]), float(dom["p_min"]), float(dom["p_max"])
            )
            fit = cls(
                float(doc["a"]),
                float(doc["b"]),
                float(doc["c"]),
                domain,
                float(doc["max_rel_residual"]),
            )
        except KeyError as exc:
            raise ConfigError("missing required field", str(exc.args[0])) from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed linear fit: {exc}") from None
        if fit.a > 0:
            raise ConfigError("must be <= 0 (1/V cannot rise with soc)", "a")
        return fit

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> LinearFit:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("linear fit must be a JSON object")
        return cls.from_dict(doc)


def nominal_fit(params: BatteryParams, domain: FitDomain) -> LinearFit:
    """The (0, 0, 1/V_nom) fit, under which the linear model is the nominal one."""
    return LinearFit(0.0, 0.0, 1.0 / params.v_nom, domain)


def linear_delta(soc0: float, draw: PowerDraw, fit: LinearFit, params: BatteryParams) -> float:
    """SOC after one leg under the linear model.

    The voltage is frozen at its value at the start of the leg. A zero-power
    leg leaves SOC unchanged whatever the fit domain.
    """
    if draw.power == 0:
        return soc0
    if not fit.domain.contains(soc0, draw.power):
        raise FitDomainError(
            f"(soc={soc0!r}, power={draw.power!r}) outside fit domain {fit.domain}"
        )
    return soc0 - soc_drop(
        draw.power, draw.duration, fit.inverse_voltage(soc0, draw.power), params.capacity_coulombs
    )


def dominance_safe(fit: LinearFit, power: float, duration: float, capacity: float) -> bool:
    """Whether the linear update is strictly increasing in the starting SOC.

    d(soc')/d(soc) = 1 - a * P * t / C_m must stay positive for a label with
    more charge to never end up with less after the same edge.
    """
    return 1.0 - fit.a * power * duration / capacity > 0


def default_soc_grid() -> np.ndarray:
    """0.2 to 1.0 in steps of 0.05; excludes the low-SOC knee."""
    return np.linspace(0.2, 1.0, 17)


def default_power_grid(p_min: float, p_max: float, steps: int = 10) -> np.ndarray:
    return np.linspace(p_min, p_max, steps + 1)


def fit_linear(curve: OcvCurve, params: BatteryParams, soc_grid, power_grid) -> LinearFit:
    """Unweighted least-squares plane fit of 1/V(S, P) from the Ohmic-drop model.

    Parameters
    ----------
    curve, params : battery used to evaluate the Ohmic-drop voltage
    soc_grid : SOC values of the fit grid
    power_grid : power values (W) of the fit grid; the fit uses the full
        Cartesian product of both grids

    Returns
    -------
    LinearFit whose domain is the bounding box of the grid and whose
    ``max_rel_residual`` is max |fit - 1/V| / (1/V) over the grid points.
    """
    socs = np.asarray(soc_grid, dtype=float).ravel()
    powers = np.asarray(power_grid, dtype=float).ravel()
    if socs.size == 0 or powers.size == 0:
        raise FitError("soc and power grids must be non-empty")
    ss, pp = np.meshgrid(socs, powers, indexing="ij")
    ss, pp = ss.ravel(), pp.ravel()
    inv_v = np.empty_like(ss)
    for k, (s, p) in enumerate(zip(ss, pp)):
        try:
            inv_v[k] = 1.0 / ohmic_voltage(float(s), float(p), curve, params)
        except (InfeasibleLoadError, SocRangeError) as exc:
            raise type(exc)(f"fit grid point (soc={s}, power={p}): {exc}") from None

    design = np.column_stack([ss, pp, np.ones_like(ss)])
    coef, _, rank, _ = np.linalg.lstsq(design, inv_v, rcond=None)
    if rank < 3:
        raise FitError(
            f"normal equations are rank deficient (rank {rank}); "
            "the grid needs at least two distinct soc and power values"
        )
    a, b, c = (float(x) for x in coef)
    # lstsq noise on curves that are flat in soc
    if 0 < a <= 1e-9 * abs(c):
        a = 0.0
    if a > 0:
        raise FitError(f"fitted soc coefficient {a} is positive")
    pred = design @ np.array([a, b, c])
    max_rel = float(np.max(np.abs(pred - inv_v) / inv_v))
    domain = FitDomain(float(socs.min()), float(socs.max()), float(powers.min()), float(powers.max()))
    return LinearFit(a, b, c, domain, max_rel)
