"""Shortest paths under a battery SOC window.

A path is feasible when the SOC, propagated edge by edge from the start
value, never drops below zero. Two propagation rules are supported:

* ``nominal``: soc' = soc - P*t / (V_nom * C_m), a constant drop per edge;
* ``linear``:  soc' = soc - P*t*(a*soc + b*P + c) / C_m, using a plane fit
  of 1/V.

Three solvers return the same optimum: label setting with Pareto
dominance on (cost, soc), best-first branch-and-bound over partial paths,
and exhaustive enumeration of simple paths (the test oracle).
"""

from __future__ import annotations

import heapq
import json
import math
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import count

from socplan.errors import ConfigError, DominanceSafetyError, InstanceTooLargeError, SolveTimeout
from socplan.instances import Edge, Instance
from socplan.models import LinearFit, dominance_safe, soc_drop

KINDS = ("linear", "nominal")
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
# slack on the resource lower bound so float reordering never prunes a feasible path
_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class ResourceModel:
    kind: str
    v_nom: float
    fit: LinearFit | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"expected one of {KINDS}, got {self.kind!r}", "kind")
        if self.kind == "linear" and self.fit is None:
            raise ConfigError("the linear model needs a fit", "fit")
        if not self.v_nom > 0:
            raise ConfigError("must be positive", "v_nom")

    @classmethod
    def for_instance(cls, instance: Instance, kind: str) -> ResourceModel:
        return cls(kind, instance.battery.v_nom, instance.fit if kind == "linear" else None)

    def inverse_voltage(self, soc: float, power: float) -> float:
        if self.kind == "nominal":
            return 1.0 / self.v_nom
        return self.fit.inverse_voltage(soc, power)


def extend(
    soc: float, edge: Edge, model: ResourceModel, capacity: float, soc_max: float = 1.0
) -> float | None:
    """SOC on arriving at ``edge.head`` having left ``edge.tail`` with ``soc``.

    The battery constraint is applied with equality; ``None`` means the
    edge would take the SOC below zero. A result above ``soc_max`` is
    clipped to it (the inequality form allows any lower value).
    """
    nxt = soc - soc_drop(edge.power, edge.time, model.inverse_voltage(soc, edge.power), capacity)
    if nxt < 0:
        return None
    return nxt if nxt <= soc_max else soc_max


def dominance_violations(instance: Instance, model: ResourceModel) -> list[str]:
    """Edges on which label dominance would be unsound under ``model``.

    Dominance needs the extension to be increasing in SOC
    (1 - a*P*t/C_m > 0) and to never add charge.
    """
    if model.kind == "nominal":
        return []
    cap = instance.battery.capacity_coulombs
    smax = instance.battery.soc_max
    bad = []
    for e in instance.edges:
        if not dominance_safe(model.fit, e.power, e.time, cap):
            bad.append(f"{e.tail}->{e.head}: 1 - a*P*t/C_m = {1 - model.fit.a * e.power * e.time / cap:.6g} <= 0")
        elif e.power > 0 and min(model.inverse_voltage(0.0, e.power), model.inverse_voltage(smax, e.power)) < 0:
            bad.append(f"{e.tail}->{e.head}: fitted 1/V negative, edge would charge the battery")
    return bad


def check_dominance_safety(instance: Instance, model: ResourceModel) -> None:
    bad = dominance_violations(instance, model)
    if bad:
        shown = "; ".join(bad[:5]) + (f"; ... ({len(bad)} edges)" if len(bad) > 5 else "")
        raise DominanceSafetyError(f"label dominance unsafe for this model: {shown}")


@dataclass(frozen=True)
class PathSolution:
    nodes: tuple[int, ...]
    cost: float | None
    soc_profile: tuple[float, ...]
    status: str
    solver: str = ""
    wall_time: float = 0.0
    expanded: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "solver": self.solver,
            "nodes": list(self.nodes),
            "cost": self.cost,
            "soc_profile": list(self.soc_profile),
            "wall_time_s": self.wall_time,
            "expanded": self.expanded,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> PathSolution:
        return cls(
            nodes=tuple(int(n) for n in doc["nodes"]),
            cost=None if doc.get("cost") is None else float(doc["cost"]),
            soc_profile=tuple(float(s) for s in doc["soc_profile"]),
            status=str(doc["status"]),
            solver=str(doc.get("solver", "")),
            wall_time=float(doc.get("wall_time_s", 0.0)),
            expanded=int(doc.get("expanded", 0)),
        )


def _infeasible(solver, t0, expanded):
    return PathSolution((), None, (), INFEASIBLE, solver, time.perf_counter() - t0, expanded)


class _Deadline:
    __slots__ = ("at", "ticks")

    def __init__(self, time_limit):
        self.at = None if time_limit is None else time.perf_counter() + time_limit
        self.ticks = 0

    def check(self):
        if self.at is None:
            return
        self.ticks += 1
        if self.ticks & 255 == 1 and time.perf_counter() > self.at:
            raise SolveTimeout("time limit reached")


class Label:
    """Search state at a node: accumulated cost and remaining SOC."""

    __slots__ = ("node", "cost", "soc", "pred", "dead")

    def __init__(self, node, cost, soc, pred=None):
        self.node = node
        self.cost = cost
        self.soc = soc
        self.pred = pred
        self.dead = False

    def __repr__(self):
        return f"Label(node={self.node}, cost={self.cost:.6g}, soc={self.soc:.6g})"

    def path(self):
        nodes, socs = [], []
        lab = self
        while lab is not None:
            nodes.append(lab.node)
            socs.append(lab.soc)
            lab = lab.pred
        return tuple(reversed(nodes)), tuple(reversed(socs))


class ParetoFrontier:
    """Non-dominated labels at one node, sorted by cost with SOC strictly rising."""

    __slots__ = ("costs", "labels")

    def __init__(self):
        self.costs: list[float] = []
        self.labels: list[Label] = []

    def __len__(self):
        return len(self.labels)

    def insert(self, label: Label) -> bool:
        """Add ``label`` unless dominated; evict and kill labels it dominates."""
        c, s = label.cost, label.soc
        costs, labels = self.costs, self.labels
        i = bisect_right(costs, c)
        if i and labels[i - 1].soc >= s:
            return False
        lo = bisect_left(costs, c)
        hi = i
        while hi < len(labels) and labels[hi].soc <= s:
            hi += 1
        for dead in labels[lo:hi]:
            dead.dead = True
        costs[lo:hi] = [c]
        labels[lo:hi] = [label]
        return True


def solve_labeling(
    instance: Instance, model: ResourceModel, time_limit: float | None = None
) -> PathSolution:
    """Label-setting search in cost order with (cost, soc) dominance.

    Labels are popped by cost, ties broken by higher SOC and then insertion
    order. The first goal label popped is optimal.

    Raises :class:`DominanceSafetyError` when the model's extension is not
    monotone in SOC on some edge.
    """
    check_dominance_safety(instance, model)
    t0 = time.perf_counter()
    deadline = _Deadline(time_limit)
    cap, smax = instance.battery.capacity_coulombs, instance.battery.soc_max
    adj = instance.out_edges()
    frontiers = {node: ParetoFrontier() for node in adj}
    goal = instance.goal
    seq = count()

    root = Label(instance.start, 0.0, instance.soc0)
    frontiers[instance.start].insert(root)
    heap = [(0.0, -root.soc, next(seq), root)]
    expanded = 0
    while heap:
        _, _, _, lab = heapq.heappop(heap)
        if lab.dead:
            continue
        expanded += 1
        deadline.check()
        if lab.node == goal:
            nodes, socs = lab.path()
            return PathSolution(
                nodes, lab.cost, socs, OPTIMAL, "labeling", time.perf_counter() - t0, expanded
            )
        for e in adj[lab.node]:
            s = extend(lab.soc, e, model, cap, smax)
            if s is None:
                continue
            child = Label(e.head, lab.cost + e.cost, s, lab)
            if frontiers[e.head].insert(child):
                heapq.heappush(heap, (child.cost, -s, next(seq), child))
    return _infeasible("labeling", t0, expanded)


def _reverse_dijkstra(instance: Instance, weight) -> dict[int, float]:
    """Distance from every node to the goal under ``weight(edge)``."""
    radj = {n[0]: [] for n in instance.nodes}
    for e in instance.edges:
        radj[e.head].append(e)
    dist = {node: math.inf for node in radj}
    dist[instance.goal] = 0.0
    heap = [(0.0, instance.goal)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e in radj[v]:
            nd = d + weight(e)
            if nd < dist[e.tail]:
                dist[e.tail] = nd
                heapq.heappush(heap, (nd, e.tail))
    return dist


def _min_drop(model: ResourceModel, edge: Edge, capacity: float, soc_max: float) -> float:
    # drop is affine in soc, so its minimum over [0, soc_max] is at an end
    return max(
        0.0,
        min(
            soc_drop(edge.power, edge.time, model.inverse_voltage(0.0, edge.power), capacity),
            soc_drop(edge.power, edge.time, model.inverse_voltage(soc_max, edge.power), capacity),
        ),
    )


def solve_bnb(
    instance: Instance, model: ResourceModel, time_limit: float | None = None
) -> PathSolution:
    """Best-first branch-and-bound over simple partial paths from the start.

    Each subproblem is a partial path; branching picks the next edge. The
    bound is the partial cost plus the battery-free shortest distance to
    the goal. A partial path is also dropped when its SOC cannot cover the
    smallest possible consumption to the goal.
    """
    t0 = time.perf_counter()
    deadline = _Deadline(time_limit)
    cap, smax = instance.battery.capacity_coulombs, instance.battery.soc_max
    adj = instance.out_edges()
    goal = instance.goal
    to_goal = _reverse_dijkstra(instance, lambda e: e.cost)
    need = _reverse_dijkstra(instance, lambda e: _min_drop(model, e, cap, smax))
    index = {node: k for k, node in enumerate(adj)}

    start = instance.start
    if instance.soc0 < need[start] - _BOUND_SLACK or math.isinf(to_goal[start]):
        return _infeasible("bnb", t0, 0)

    seq = count()
    incumbent = math.inf
    best = None
    # (bound, cost, tiebreak, node, soc, visited bitmask, parent record)
    heap = [(to_goal[start], 0.0, next(seq), start, instance.soc0, 1 << index[start], None)]
    expanded = 0
    while heap:
        bound, cost, _, u, soc, mask, parent = heapq.heappop(heap)
        if bound >= incumbent:
            break
        expanded += 1
        deadline.check()
        record = (u, soc, parent)
        for e in adj[u]:
            v = e.head
            if mask >> index[v] & 1:
                continue
            s = extend(soc, e, model, cap, smax)
            if s is None or s < need[v] - _BOUND_SLACK:
                continue
            c = cost + e.cost
            b = c + to_goal[v]
            if b >= incumbent:
                continue
            if v == goal:
                incumbent, best = c, (v, s, record)
                continue
            heapq.heappush(heap, (b, c, next(seq), v, s, mask | 1 << index[v], record))

    if best is None:
        return _infeasible("bnb", t0, expanded)
    nodes, socs = [], []
    rec = best
    while rec is not None:
        nodes.append(rec[0])
        socs.append(rec[1])
        rec = rec[2]
    return PathSolution(
        tuple(reversed(nodes)), incumbent, tuple(reversed(socs)), OPTIMAL, "bnb",
        time.perf_counter() - t0, expanded,
    )


def solve_bruteforce(
    instance: Instance,
    model: ResourceModel,
    max_nodes: int = 15,
    time_limit: float | None = None,
) -> PathSolution:
    """Enumerate every simple start-to-goal path; keep the cheapest feasible one."""
    if instance.n > max_nodes:
        raise InstanceTooLargeError(
            f"{instance.n} nodes exceeds the brute-force guard of {max_nodes}"
        )
    t0 = time.perf_counter()
    deadline = _Deadline(time_limit)
    cap, smax = instance.battery.capacity_coulombs, instance.battery.soc_max
    adj = instance.out_edges()
    goal = instance.goal
    best_cost = math.inf
    best = None
    visited = 0

    path = [instance.start]
    socs = [instance.soc0]
    on_path = {instance.start}

    def dfs(u, cost):
        nonlocal best_cost, best, visited
        visited += 1
        deadline.check()
        for e in adj[u]:
            v = e.head
            if v in on_path:
                continue
            s = extend(socs[-1], e, model, cap, smax)
            if s is None:
                continue
            c = cost + e.cost
            if v == goal:
                if c < best_cost:
                    best_cost = c
                    best = (tuple(path) + (v,), tuple(socs) + (s,))
                continue
            path.append(v)
            socs.append(s)
            on_path.add(v)
            dfs(v, c)
            on_path.discard(v)
            path.pop()
            socs.pop()

    dfs(instance.start, 0.0)
    if best is None:
        return _infeasible("bruteforce", t0, visited)
    return PathSolution(
        best[0], best_cost, best[1], OPTIMAL, "bruteforce", time.perf_counter() - t0, visited
    )


SOLVERS = {
    "labeling": solve_labeling,
    "bnb": solve_bnb,
    "brute": solve_bruteforce,
}


def check_solution(
    instance: Instance, model: ResourceModel, solution: PathSolution, tol: float = 1e-9
) -> tuple[bool, list[str]]:
    """Re-verify a returned path against every constraint of the problem.

    Returns ``(ok, violations)``. Infeasible answers carry no path and pass
    trivially; confirming infeasibility needs an independent solver.
    """
    problems = []
    if solution.status == INFEASIBLE:
        if solution.nodes:
            problems.append("infeasible solution carries a path")
        return not problems, problems
    if solution.status != OPTIMAL:
        return False, [f"unknown status {solution.status!r}"]

    nodes, socs = solution.nodes, solution.soc_profile
    if len(nodes) < 2:
        return False, ["path has fewer than two nodes"]
    if len(socs) != len(nodes):
        problems.append("soc profile length differs from path length")
    if nodes[0] != instance.start:
        problems.append(f"path starts at {nodes[0]}, not the start node {instance.start}")
    if nodes[-1] != instance.goal:
        problems.append(f"path ends at {nodes[-1]}, not the goal node {instance.goal}")
    if len(set(nodes)) != len(nodes):
        problems.append("path revisits a node")
    if socs and socs[0] != instance.soc0:
        problems.append(f"initial soc {socs[0]} differs from the start value {instance.soc0}")

    smax = instance.battery.soc_max
    for k, s in enumerate(socs):
        if s < 0:
            problems.append(f"soc lower bound violated at position {k} ({s})")
        if s > smax:
            problems.append(f"soc upper bound violated at position {k} ({s} > {smax})")

    edges = {(e.tail, e.head): e for e in instance.edges}
    cap = instance.battery.capacity_coulombs
    total = 0.0
    for k, (u, v) in enumerate(zip(nodes, nodes[1:])):
        e = edges.get((u, v))
        if e is None:
            problems.append(f"non-edge transition {u}->{v}")
            continue
        total += e.cost
        if k + 1 < len(socs):
            drop = soc_drop(e.power, e.time, model.inverse_voltage(socs[k], e.power), cap)
            if socs[k + 1] > min(socs[k] - drop, smax) + tol:
                problems.append(
                    f"battery propagation violated on {u}->{v}: {socs[k + 1]} > {socs[k] - drop}"
                )
    if solution.cost is None or not math.isclose(total, solution.cost, rel_tol=1e-12, abs_tol=1e-9):
        problems.append(f"reported cost {solution.cost} differs from edge-cost sum {total}")
    return not problems, problems
