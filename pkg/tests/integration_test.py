import math
import time
import unittest

from svcplan import (
    BnbSettings,
    RunConfig,
    SvcSpec,
    WeightScheme,
    build_micp,
    build_scenarios,
    enumerate_placements,
    evaluate_allocation,
    ieee30_case,
    run,
    solve_misocp,
)
from svcplan.planner import largest_reduction
from svcplan.settings import REFERENCE_BASE_LOAD, TABLE_I_SCENARIOS, WEIGHT_PRESETS

# wall clock for the whole four-scheme sweep
SWEEP_SECONDS = 1800
CELL_SECONDS = 240.0


class TestIeee30Sweep(unittest.TestCase):
    """
    Every weight scheme at N_v = 0..5 over the 15 load scenarios of the bundled
    IEEE 30-bus case, with AC validation and reference grading. Slow.
    """

    BUDGETS = [1, 2, 3, 4, 5]

    @classmethod
    def setUpClass(cls):
        cls.case = ieee30_case()
        config = RunConfig(
            weights=[(name, WeightScheme.preset(name)) for name in WEIGHT_PRESETS],
            nv=cls.BUDGETS,
            bnb=BnbSettings(time_limit=CELL_SECONDS),
            validate=True,
            workers=len(WEIGHT_PRESETS),
        )
        started = time.perf_counter()
        cls.report = run(config)
        cls.elapsed = time.perf_counter() - started

    def cells(self, label: str):
        return [self.report.cell(label, n_v) for n_v in [0] + self.BUDGETS]

    def all_cells(self):
        return [cell for label in WEIGHT_PRESETS for cell in self.cells(label)]

    def test_sweep_finishes_in_time(self):
        self.assertLess(self.elapsed, SWEEP_SECONDS)

    def test_every_cell_solved(self):
        self.assertEqual(self.report.failed, [])
        for cell in self.all_cells():
            with self.subTest(weights=cell.label, n_v=cell.n_v):
                self.assertIn(cell.result.status, ("optimal", "node_limit", "time_limit"))
                self.assertLessEqual(len(cell.result.chosen_buses), cell.n_v)
                self.assertEqual(len(cell.result.scenarios), 15)
                self.assertGreaterEqual(cell.result.gap, 0.0)

    def test_baseline_has_no_svc(self):
        for label in WEIGHT_PRESETS:
            baseline = self.report.cell(label, 0).result
            self.assertEqual(baseline.chosen_buses, ())
            self.assertTrue(all(not o.susceptance for o in baseline.scenarios))

    def test_cones_are_tight(self):
        for cell in self.all_cells():
            with self.subTest(weights=cell.label, n_v=cell.n_v):
                self.assertLessEqual(cell.result.max_cone_mismatch, 1e-4)
                self.assertLessEqual(cell.result.max_cone_violation, 1e-4)

    def test_objective_is_monotone_in_budget(self):
        for label in WEIGHT_PRESETS:
            objectives = [cell.result.objective for cell in self.cells(label)]
            for before, after in zip(objectives, objectives[1:]):
                self.assertLessEqual(after, before + 1e-7, label)

    def test_chosen_buses_are_candidates(self):
        generators = self.case.generator_buses
        for cell in self.all_cells():
            self.assertFalse(set(cell.result.chosen_buses) & generators)

    def test_ac_validation(self):
        for cell in self.all_cells():
            with self.subTest(weights=cell.label, n_v=cell.n_v):
                validation = cell.validation
                self.assertEqual(validation.diverged, [])
                self.assertLessEqual(validation.max_loss_error, 0.05)
                self.assertLessEqual(validation.max_voltage_error, 0.01)
                self.assertLessEqual(validation.max_loop_residual, math.pi / 360 + 1e-6)

    def test_data_dialect_is_recorded(self):
        dialect = self.report.to_dict()["data_dialect"]
        self.assertAlmostEqual(dialect["base_load_mw"], 283.4, places=6)
        self.assertEqual((dialect["reference_base_load_mw"], dialect["reference_base_load_mvar"]), REFERENCE_BASE_LOAD)
        self.assertFalse(dialect["matches_reference"])

    def test_baseline_loss_is_graded(self):
        check = self.report.cell("case1", 0).reference
        self.assertEqual(check["expected_loss_mw"], 2.70)
        self.assertAlmostEqual(check["loss_mw"], self.report.cell("case1", 0).result.loss_mw)
        self.assertEqual(check["loss_ok"], check["loss_error"] <= 0.03)

    def test_single_svc_location(self):
        cell = self.report.cell("case1", 1)
        check = cell.reference
        if check["locations_match"]:
            self.assertEqual(cell.result.chosen_buses, (21,))
        else:
            self.assertTrue(check["chosen_not_worse"])
            self.assertTrue(check["matches_enumeration"])
            self.assertEqual(check["best_placement"], cell.result.chosen_buses[0])

    def test_five_svc_locations(self):
        check = self.report.cell("case2", 5).reference
        self.assertIn("deviation_ok", check)
        if not check["locations_match"]:
            self.assertTrue(check["chosen_not_worse"])

    def test_largest_reduction(self):
        self.assertEqual(largest_reduction(self.report, "case3", 5), 13)
        self.assertTrue(self.report.cell("case3", 5).reference["peak_ok"])
        for label in WEIGHT_PRESETS:
            k = largest_reduction(self.report, label, 1)
            base = self.report.cell(label, 0).result.scenarios[k - 1]
            with_svc = self.report.cell(label, 1).result.scenarios[k - 1]
            self.assertLess(with_svc.loss_mw, base.loss_mw)


class TestIeee30SingleSvc(unittest.TestCase):
    """Branch-and-bound against exhaustive placement of one SVC over the 15 load scenarios."""

    @classmethod
    def setUpClass(cls):
        cls.case = ieee30_case()
        cls.scenarios = build_scenarios(TABLE_I_SCENARIOS)
        cls.settings = BnbSettings(abs_gap=1e-9, rel_gap=1e-9)

    def check_weights(self, name: str):
        svc = SvcSpec(n_v=1)
        program, index = build_micp(self.case, self.scenarios, WeightScheme.preset(name), svc)
        placements = enumerate_placements(program, index)
        best = min(placements.values())
        baseline = evaluate_allocation(program, index, [])
        if baseline is not None:
            best = min(best, baseline.objective)
        self.assertTrue(math.isfinite(best))
        result = solve_misocp(program, index, self.settings)
        self.assertEqual(result.status, "optimal")
        self.assertAlmostEqual(result.objective, best, delta=1e-6 * max(1.0, abs(best)))

    def test_enumeration_oracle(self):
        for name in WEIGHT_PRESETS:
            with self.subTest(weights=name):
                self.check_weights(name)


if __name__ == "__main__":
    unittest.main()
