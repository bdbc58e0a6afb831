"""Time-to-solve sweep: sizes x instances x solvers x battery models."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from socplan.errors import ConfigError, SocplanError, SolveTimeout
from socplan.instances import GenConfig, generate_instance
from socplan.rcspp import ResourceModel, solve_bnb, solve_labeling

BENCH_SOLVERS = {"labeling": solve_labeling, "bnb": solve_bnb}
RECORD_FIELDS = ("size", "seed", "solver", "model", "status", "cost", "wall_time_s", "expanded")


@dataclass(frozen=True)
class BenchPlan:
    sizes: tuple[int, ...] = tuple(range(5, 101, 5))
    instances_per_size: int = 30
    seed: int = 0
    solvers: tuple[str, ...] = ("labeling", "bnb")
    models: tuple[str, ...] = ("linear", "nominal")
    timeout: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        object.__setattr__(self, "models", tuple(self.models))
        if not self.sizes:
            raise ConfigError("must be non-empty", "sizes")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigError("must be strictly increasing", "sizes")
        if self.sizes[0] < 2:
            raise ConfigError("instances need at least 2 nodes", "sizes")
        if self.instances_per_size < 1:
            raise ConfigError("must be >= 1", "instances_per_size")
        if not self.timeout > 0:
            raise ConfigError("must be positive", "timeout")
        if not self.solvers or set(self.solvers) - set(BENCH_SOLVERS):
            raise ConfigError(f"choose from {sorted(BENCH_SOLVERS)}", "solvers")
        if not self.models or set(self.models) - {"linear", "nominal"}:
            raise ConfigError("choose from ['linear', 'nominal']", "models")

    def instance_seed(self, size: int, index: int) -> int:
        return self.seed * 1_000_003 + size * 1_000 + index

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "instances_per_size": self.instances_per_size,
            "seed": self.seed,
            "solvers": list(self.solvers),
            "models": list(self.models),
            "timeout": self.timeout,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> BenchPlan:
        if not isinstance(doc, dict):
            raise ConfigError("bench plan must be a JSON object")
        doc = dict(doc)
        if "seeds" in doc:  # alias for the base seed
            if "seed" in doc:
                raise ConfigError("give either seed or seeds, not both", "seeds")
            doc["seed"] = doc.pop("seeds")
        unknown = set(doc) - {"sizes", "instances_per_size", "seed", "solvers", "models", "timeout"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "plan")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc), "plan") from None

    @classmethod
    def loads(cls, text: str) -> BenchPlan:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from None


@dataclass(frozen=True)
class BenchRecord:
    size: int
    seed: int
    solver: str
    model: str
    status: str
    cost: float | None
    wall_time: float
    expanded: int
    message: str = field(default="", compare=False)

    def row(self) -> dict:
        return {
            "size": self.size,
            "seed": self.seed,
            "solver": self.solver,
            "model": self.model,
            "status": self.status,
            "cost": "" if self.cost is None else repr(self.cost),
            "wall_time_s": repr(self.wall_time),
            "expanded": self.expanded,
        }


def run_cell(instance, size, seed, solver, model_kind, timeout) -> BenchRecord:
    """Solve one cell; failures become records instead of exceptions."""
    model = ResourceModel.for_instance(instance, model_kind)
    try:
        sol = BENCH_SOLVERS[solver](instance, model, time_limit=timeout)
    except SolveTimeout:
        return BenchRecord(size, seed, solver, model_kind, "timeout", None, timeout, 0)
    except SocplanError as exc:
        return BenchRecord(size, seed, solver, model_kind, "error", None, 0.0, 0, str(exc))
    return BenchRecord(size, seed, solver, model_kind, sol.status, sol.cost, sol.wall_time, sol.expanded)


def run_bench(
    plan: BenchPlan,
    gen_config: GenConfig | None = None,
    jobs: int = 1,
    progress=None,
) -> list[BenchRecord]:
    """Run every (size, instance, solver, model) cell of ``plan``.

    Instance generation is outside the timed region. With ``jobs > 1``
    instances are solved on a thread pool, one instance per task; timings
    then include interference between threads.
    """
    gen_config = gen_config or GenConfig()
    tasks = [
        (size, plan.instance_seed(size, i))
        for size in plan.sizes
        for i in range(plan.instances_per_size)
    ]

    def run_instance(task):
        size, seed = task
        inst = generate_instance(size, seed, gen_config)
        out = [
            run_cell(inst, size, seed, solver, kind, plan.timeout)
            for solver in plan.solvers
            for kind in plan.models
        ]
        if progress is not None:
            progress(size, seed)
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_instance, tasks))
    else:
        chunks = [run_instance(t) for t in tasks]
    return [rec for chunk in chunks for rec in chunk]


@dataclass(frozen=True)
class SummaryRow:
    size: int
    solver: str
    model: str
    cells: int
    completed: int
    mean_time: float | None
    median_time: float | None
    max_time: float | None
    infeasible: int
    timeouts: int
    errors: int


def aggregate(records) -> list[SummaryRow]:
    """Per (size, solver, model) timing statistics over completed cells.

    Completed means optimal or infeasible; timeouts and errors are counted
    but excluded from the time statistics.
    """
    records = list(records)
    if not records:
        raise ConfigError("no records to aggregate")
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.size, r.solver, r.model), []).append(r)
    rows = []
    for key in sorted(groups):
        group = groups[key]
        times = sorted(r.wall_time for r in group if r.status in ("optimal", "infeasible"))
        rows.append(
            SummaryRow(
                *key,
                cells=len(group),
                completed=len(times),
                mean_time=math.fsum(times) / len(times) if times else None,
                median_time=statistics.median(times) if times else None,
                max_time=times[-1] if times else None,
                infeasible=sum(r.status == "infeasible" for r in group),
                timeouts=sum(r.status == "timeout" for r in group),
                errors=sum(r.status == "error" for r in group),
            )
        )
    return rows


def mean_time(records, solver: str, model: str) -> float:
    """Mean wall time over all completed cells of one solver/model pair."""
    times = [
        r.wall_time
        for r in records
        if r.solver == solver and r.model == model and r.status in ("optimal", "infeasible")
    ]
    if not times:
        return math.nan
    return math.fsum(times) / len(times)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.row())
    return buf.getvalue()


def records_from_csv(text: str) -> list[BenchRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            BenchRecord(
                size=int(row["size"]),
                seed=int(row["seed"]),
                solver=row["solver"],
                model=row["model"],
                status=row["status"],
                cost=float(row["cost"]) if row["cost"] else None,
                wall_time=float(row["wall_time_s"]),
                expanded=int(row["expanded"]),
            )
        )
    return out


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.4g}"


def summary_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["size", "solver", "model", "cells", "completed", "mean_time_s", "median_time_s",
         "max_time_s", "infeasible", "timeouts", "errors"]
    )
    for r in rows:
        writer.writerow(
            [r.size, r.solver, r.model, r.cells, r.completed,
             "" if r.mean_time is None else repr(r.mean_time),
             "" if r.median_time is None else repr(r.median_time),
             "" if r.max_time is None else repr(r.max_time),
             r.infeasible, r.timeouts, r.errors]
        )
    return buf.getvalue()


def format_summary(rows) -> str:
    """Console table; times in milliseconds at 4 significant digits."""
    header = f"{'size':>5} {'solver':<9} {'model':<8} {'done':>5} {'mean ms':>9} {'median ms':>10} {'max ms':>9} {'infeas':>6} {'tmo':>4}"
    lines = [header, "-" * len(header)]
    for r in rows:
        ms = lambda x: None if x is None else 1000.0 * x  # noqa: E731
        lines.append(
            f"{r.size:>5} {r.solver:<9} {r.model:<8} {r.completed:>5} {_fmt(ms(r.mean_time)):>9} "
            f"{_fmt(ms(r.median_time)):>10} {_fmt(ms(r.max_time)):>9} {r.infeasible:>6} {r.timeouts:>4}"
        )
    return "\n".join(lines)
