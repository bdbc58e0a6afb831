import random

import pytest

from socplan.bench import (
    BenchPlan,
    BenchRecord,
    aggregate,
    format_summary,
    mean_time,
    records_from_csv,
    records_to_csv,
    run_bench,
    summary_to_csv,
)
from socplan.errors import ConfigError
from socplan.instances import generate_instance
from socplan.rcspp import ResourceModel, check_solution, solve_bnb, solve_labeling

SMALL = BenchPlan(sizes=(5,), instances_per_size=2)


def rec(size=5, seed=0, solver="bnb", model="linear", status="optimal", cost=1.0, t=0.1):
    return BenchRecord(size, seed, solver, model, status, cost if status == "optimal" else None, t, 3)


class TestPlan:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"sizes": ()},
            {"sizes": (10, 5)},
            {"sizes": (5, 5)},
            {"instances_per_size": 0},
            {"timeout": 0.0},
            {"solvers": ("cplex",)},
            {"models": ("cubic",)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            BenchPlan(**kwargs)

    def test_defaults(self):
        plan = BenchPlan()
        assert plan.sizes == tuple(range(5, 101, 5))
        assert plan.instances_per_size == 30
        assert plan.timeout == 60.0

    def test_json(self):
        plan = BenchPlan(sizes=(5, 10), instances_per_size=3, seed=4, solvers=("bnb",))
        import json

        assert BenchPlan.loads(json.dumps(plan.to_dict())) == plan
        assert BenchPlan.loads('{"sizes": [5], "seeds": 7}').seed == 7
        with pytest.raises(ConfigError):
            BenchPlan.loads('{"sizes": [5], "bogus": 1}')


class TestRunBench:
    def test_cell_count(self):
        records = run_bench(SMALL)
        assert len(records) == 8
        assert {(r.solver, r.model) for r in records} == {
            (s, m) for s in ("labeling", "bnb") for m in ("linear", "nominal")
        }

    def test_deterministic(self):
        strip = lambda rs: [(r.size, r.seed, r.solver, r.model, r.status, r.cost, r.expanded) for r in rs]  # noqa: E731
        plan = BenchPlan(sizes=(5, 15), instances_per_size=3, seed=2)
        assert strip(run_bench(plan)) == strip(run_bench(plan))

    def test_threads_match_sequential(self):
        strip = lambda rs: [(r.size, r.seed, r.solver, r.model, r.status, r.cost) for r in rs]  # noqa: E731
        plan = BenchPlan(sizes=(10, 20), instances_per_size=4)
        assert strip(run_bench(plan, jobs=4)) == strip(run_bench(plan))

    def test_invariants(self):
        plan = BenchPlan(sizes=(10, 20), instances_per_size=5)
        records = run_bench(plan)
        by_cell = {}
        for r in records:
            assert r.wall_time >= 0
            assert (r.cost is not None) == (r.status == "optimal")
            by_cell.setdefault((r.size, r.seed, r.model), []).append(r)
        for group in by_cell.values():
            costs = {r.cost for r in group if r.status == "optimal"}
            assert len(costs) <= 1
        # each model's answer passes the checker under its own model
        for size, seed in {(r.size, r.seed) for r in records}:
            inst = generate_instance(size, seed)
            for kind in ("linear", "nominal"):
                model = ResourceModel.for_instance(inst, kind)
                for solve in (solve_labeling, solve_bnb):
                    assert check_solution(inst, model, solve(inst, model))[0]

    def test_timeout_recorded(self):
        plan = BenchPlan(sizes=(100,), instances_per_size=1, solvers=("labeling",), models=("linear",), timeout=1e-9)
        (r,) = run_bench(plan)
        assert r.status == "timeout" and r.cost is None


class TestAggregate:
    def test_single(self):
        (row,) = aggregate([rec(t=0.25)])
        assert row.mean_time == row.median_time == row.max_time == 0.25
        assert row.completed == 1 and row.timeouts == 0

    def test_all_timeouts(self):
        rows = aggregate([rec(status="timeout", seed=i, t=60.0) for i in range(3)])
        (row,) = rows
        assert row.mean_time is None and row.timeouts == 3 and row.completed == 0
        assert "-" in format_summary(rows)

    def test_counts(self):
        records = [rec(seed=0, t=1.0), rec(seed=1, status="infeasible", t=3.0), rec(seed=2, status="timeout", t=60.0)]
        (row,) = aggregate(records)
        assert row.mean_time == 2.0 and row.median_time == 2.0 and row.max_time == 3.0
        assert row.infeasible == 1 and row.timeouts == 1 and row.cells == 3

    def test_one_row_per_group(self):
        records = run_bench(BenchPlan(sizes=(5, 10), instances_per_size=2))
        rows = aggregate(records)
        assert len(rows) == 2 * 2 * 2
        assert len({(r.size, r.solver, r.model) for r in rows}) == len(rows)

    def test_permutation_invariant(self):
        records = run_bench(BenchPlan(sizes=(5, 10), instances_per_size=3))
        shuffled = records[:]
        random.Random(0).shuffle(shuffled)
        assert aggregate(shuffled) == aggregate(records)

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate([])

    def test_mean_time(self):
        records = [rec(t=1.0), rec(seed=1, t=3.0), rec(model="nominal", t=5.0)]
        assert mean_time(records, "bnb", "linear") == 2.0


class TestCsv:
    def test_records_round_trip(self):
        records = run_bench(SMALL) + [rec(status="timeout", t=60.0)]
        text = records_to_csv(records)
        assert text.splitlines()[0] == "size,seed,solver,model,status,cost,wall_time_s,expanded"
        assert records_from_csv(text) == records

    def test_summary_csv(self):
        text = summary_to_csv(aggregate(run_bench(SMALL)))
        assert text.splitlines()[0].startswith("size,solver,model,cells,completed,mean_time_s")
        assert len(text.splitlines()) == 5
