"""Random battery-constrained shortest-path instances and their JSON files.

Nodes are scattered uniformly in a square; every node is joined to its four
nearest neighbours by Euclidean distance, and each such edge is also added
in reverse. Edge cost is the distance, traversal time is distance / speed,
and each undirected pair gets one power draw sampled uniformly from the
configured range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from socplan.battery import (
    BatteryParams,
    OcvCurve,
    battery_config_dict,
    default_battery,
    parse_battery_config,
)
from socplan.errors import ConfigError
from socplan.models import LinearFit, default_power_grid, default_soc_grid, fit_linear

FORMAT = "socplan-instance/1"
NEIGHBOURS = 4


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    cost: float
    power: float
    time: float


@dataclass(frozen=True)
class Instance:
    nodes: tuple[tuple[int, float, float], ...]
    edges: tuple[Edge, ...]
    start: int
    goal: int
    battery: BatteryParams
    soc0: float
    fit: LinearFit
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = [n[0] for n in self.nodes]
        id_set = set(ids)
        if len(id_set) != len(ids):
            raise ConfigError("duplicate node id", "nodes")
        seen = set()
        for k, e in enumerate(self.edges):
            where = f"edges[{k}]"
            if e.tail not in id_set or e.head not in id_set:
                raise ConfigError(f"references missing node ({e.tail} -> {e.head})", where)
            if e.tail == e.head:
                raise ConfigError(f"self-loop at node {e.tail}", where)
            if (e.tail, e.head) in seen:
                raise ConfigError(f"duplicate edge {e.tail} -> {e.head}", where)
            seen.add((e.tail, e.head))
            if not (math.isfinite(e.cost) and e.cost > 0):
                raise ConfigError(f"cost must be positive, got {e.cost!r}", where + ".cost")
            if not (math.isfinite(e.power) and e.power >= 0):
                raise ConfigError(f"power must be >= 0, got {e.power!r}", where + ".power")
            if not (math.isfinite(e.time) and e.time > 0):
                raise ConfigError(f"time must be positive, got {e.time!r}", where + ".time")
        if self.start not in id_set:
            raise ConfigError(f"start node {self.start} does not exist", "start")
        if self.goal not in id_set:
            raise ConfigError(f"goal node {self.goal} does not exist", "goal")
        if self.start == self.goal:
            raise ConfigError("start and goal must differ", "goal")
        if not 0.0 <= self.soc0 <= self.battery.soc_max:
            raise ConfigError(f"must lie in [0, {self.battery.soc_max}]", "soc0")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def out_edges(self) -> dict[int, list[Edge]]:
        adj = {n[0]: [] for n in self.nodes}
        for e in self.edges:
            adj[e.tail].append(e)
        return adj

    def with_soc0(self, soc0: float) -> Instance:
        return replace(self, soc0=soc0)

    def with_battery(self, battery: BatteryParams) -> Instance:
        return replace(self, battery=battery)


@dataclass(frozen=True)
class GenConfig:
    """Instance generator settings.

    ``extent`` is the side of the square in metres and ``speed`` the
    cruise speed in m/s. The linear fit attached to each instance is built
    over SOC 0.2-1.0 and ``[p_min, p_max]``.
    """

    extent: float = 10_000.0
    speed: float = 20.0
    p_min: float = 200.0
    p_max: float = 600.0
    soc0: float = 1.0
    battery: tuple[OcvCurve, BatteryParams] = field(default_factory=lambda: default_battery("lipo4s"))

    def __post_init__(self):
        if not self.extent > 0:
            raise ConfigError("must be positive", "extent")
        if not self.speed > 0:
            raise ConfigError("must be positive", "speed")
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError("need 0 <= p_min <= p_max", "p_min")
        if not 0 <= self.soc0 <= 1:
            raise ConfigError("must lie in [0, 1]", "soc0")

    def fit(self) -> LinearFit:
        return _cached_fit(self.battery[0], self.battery[1], self.p_min, self.p_max)

    def to_dict(self) -> dict:
        return {
            "extent": self.extent,
            "speed": self.speed,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "soc0": self.soc0,
            "battery": battery_config_dict(*self.battery),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GenConfig:
        if not isinstance(doc, dict):
            raise ConfigError("generator config must be a JSON object")
        known = {"extent", "speed", "p_min", "p_max", "soc0", "battery"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "gen_config")
        kwargs = {k: float(doc[k]) for k in ("extent", "speed", "p_min", "p_max", "soc0") if k in doc}
        if "battery" in doc:
            kwargs["battery"] = parse_battery_config(doc["battery"])
        return cls(**kwargs)


@lru_cache(maxsize=32)
def _cached_fit(curve, params, p_min, p_max) -> LinearFit:
    return fit_linear(curve, params, default_soc_grid(), default_power_grid(p_min, p_max))


def generate_instance(n: int, seed: int, config: GenConfig | None = None) -> Instance:
    """Build a random instance; identical ``(n, seed, config)`` gives identical output."""
    if n < 2:
        raise ConfigError(f"need at least 2 nodes, got {n}", "n")
    config = config or GenConfig()
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, config.extent, size=(n, 2))
    dist = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    np.fill_diagonal(dist, np.inf)
    k = min(NEIGHBOURS, n - 1)

    pairs = set()
    for i in range(n):
        for j in np.argsort(dist[i], kind="stable")[:k]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    pairs = sorted(pairs)
    powers = rng.uniform(config.p_min, config.p_max, size=len(pairs))

    edges = []
    for (i, j), p in zip(pairs, powers):
        d = float(dist[i, j])
        for tail, head in ((i, j), (j, i)):
            edges.append(Edge(tail, head, d, float(p), d / config.speed))
    edges.sort(key=lambda e: (e.tail, e.head))

    start = int(np.argmin(np.hypot(xy[:, 0], xy[:, 1])))
    to_far = np.hypot(xy[:, 0] - config.extent, xy[:, 1] - config.extent)
    to_far[start] = np.inf
    goal = int(np.argmin(to_far))

    curve, params = config.battery
    return Instance(
        nodes=tuple((i, float(x), float(y)) for i, (x, y) in enumerate(xy)),
        edges=tuple(edges),
        start=start,
        goal=goal,
        battery=params,
        soc0=config.soc0,
        fit=config.fit(),
        provenance={"n": n, "seed": int(seed), "gen_config": config.to_dict()},
    )


def _params_dict(p: BatteryParams) -> dict:
    return {
        "capacity_coulombs": p.capacity_coulombs,
        "r0": p.r0,
        "r1": p.r1,
        "tau": p.tau,
        "v_nom": p.v_nom,
        "soc_max": p.soc_max,
        "cells": p.cells,
    }


def instance_to_dict(inst: Instance) -> dict:
    return {
        "format": FORMAT,
        "provenance": inst.provenance,
        "start": inst.start,
        "goal": inst.goal,
        "soc0": inst.soc0,
        "battery": _params_dict(inst.battery),
        "fit": inst.fit.to_dict(),
        "nodes": [list(n) for n in inst.nodes],
        "edges": [[e.tail, e.head, e.cost, e.power, e.time] for e in inst.edges],
    }


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise ConfigError("instance must be a JSON object")
    if doc.get("format") != FORMAT:
        raise ConfigError(f"expected {FORMAT!r}, got {doc.get('format')!r}", "format")
    for key in ("start", "goal", "soc0", "battery", "fit", "nodes", "edges"):
        if key not in doc:
            raise ConfigError("missing required field", key)
    try:
        nodes = tuple((int(i), float(x), float(y)) for i, x, y in doc["nodes"])
    except (TypeError, ValueError):
        raise ConfigError("expected [[id, x, y], ...]", "nodes") from None
    edges = []
    for k, row in enumerate(doc["edges"]):
        try:
            tail, head, cost, power, time = row
            edges.append(Edge(int(tail), int(head), float(cost), float(power), float(time)))
        except (TypeError, ValueError):
            raise ConfigError("expected [from, to, cost, power, time]", f"edges[{k}]") from None
    b = doc["battery"]
    try:
        battery = BatteryParams(
            capacity_coulombs=float(b["capacity_coulombs"]),
            r0=float(b["r0"]),
            r1=float(b["r1"]),
            tau=float(b["tau"]),
            v_nom=float(b["v_nom"]),
            soc_max=float(b.get("soc_max", 1.0)),
            cells=int(b.get("cells", 1)),
        )
    except KeyError as exc:
        raise ConfigError("missing required field", f"battery.{exc.args[0]}") from None
    return Instance(
        nodes=nodes,
        edges=tuple(edges),
        start=int(doc["start"]),
        goal=int(doc["goal"]),
        battery=battery,
        soc0=float(doc["soc0"]),
        fit=LinearFit.from_dict(doc["fit"]),
        provenance=doc.get("provenance") or {},
    )


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1, sort_keys=True)


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from None
    return instance_from_dict(doc)


def save_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_instance(inst))
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return loads_instance(fh.read())
