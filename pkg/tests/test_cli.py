import json
import os
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from tests.helpers import config_from, temp_dir, write_config
from utils.cli import THREADS_ENV, build_parser, distance_target, main, oracle_workers
from utils.grid import build_uniform_grid, gaussian_density, integrate
from utils.store import read_trace_csv
from utils.verify import CheckResult, VerificationSuite

SMALL = {"grid__n": 65, "grid__r_max": 6.0}


class TestCommands(unittest.TestCase):
    def _run(self, tmp, command, **keys):
        cfg = write_config(tmp, **{**SMALL, **keys})
        out = Path(tmp) / "out"
        return main([command, "--config", str(cfg), "--out", str(out)]), out

    def test_simulate_at_time_zero(self):
        with temp_dir() as tmp:
            code, out = self._run(tmp, "simulate", time__t_end=0.0, output__snapshot_times="0.0")
            self.assertEqual(code, 0)
            rows = read_trace_csv(out / "trace.csv")
            report = json.loads((out / "report.json").read_text(encoding="utf-8"))
            self.assertTrue((out / "snapshot_0.json").exists())
            self.assertTrue((out / "config.resolved").exists())
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0]["t"], 0.0)
        self.assertEqual(report["rows"], 1)
        self.assertIsNone(report["error"])

    def test_simulate_blowup_writes_marker(self):
        with temp_dir() as tmp:
            with mock.patch("utils.landau.select_rhs", return_value=lambda y: np.full_like(y, np.nan)):
                code, out = self._run(tmp, "simulate", time__t_end=0.01)
            rows = read_trace_csv(out / "trace.csv")
            report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        self.assertEqual(code, 3)
        self.assertEqual(rows[-1]["mass"], "error")
        self.assertIn("NumericalBlowupError", report["error"])

    def test_distance_mass_mismatch(self):
        with temp_dir() as tmp:
            code, _ = self._run(tmp, "distance", distance__target="gaussian", distance__target_mass=2.0)
        self.assertEqual(code, 2)

    def test_geodesic_without_momentum(self):
        with temp_dir() as tmp:
            code, out = self._run(tmp, "geodesic", geodesic__amplitude=0.0, geodesic__t_end=0.02, geodesic__dt=0.01)
            path = json.loads((out / "geodesic_path.json").read_text(encoding="utf-8"))
            report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        self.assertEqual(code, 0)
        self.assertEqual(len(path), 2)
        assert_array_equal(path[-1]["rho"], path[0]["rho"])
        self.assertEqual(report["hamiltonian_0"], 0.0)
        self.assertEqual(report["path_action"], 0.0)

    def test_verify_reports_failed_checks(self):
        def _run(suite):
            suite.results = [
                CheckResult("mass_drift", 1e-9, 1e-6, True),
                CheckResult("hamiltonian_drift", 3e-6, 1e-6, False),
            ]
            return suite.results

        with temp_dir() as tmp:
            with mock.patch.object(VerificationSuite, "run", autospec=True, side_effect=_run):
                with self.assertLogs("utils.cli", level="WARNING") as logs:
                    code, out = self._run(tmp, "verify")
            payload = json.loads((out / "verify.json").read_text(encoding="utf-8"))
        self.assertEqual(code, 1)
        self.assertFalse(payload["all_passed"])
        self.assertIn("hamiltonian_drift", "\n".join(logs.output))

    def test_unknown_key(self):
        with temp_dir() as tmp:
            cfg = Path(tmp) / "bad.cfg"
            cfg.write_text("grid.nodes = 65\n", encoding="utf-8")
            self.assertEqual(main(["simulate", "--config", str(cfg), "--out", tmp]), 2)

    def test_parser_requires_command(self):
        with self.assertRaises(SystemExit):
            build_parser().parse_args([])


class TestHelpers(unittest.TestCase):
    def test_gaussian_target_mass(self):
        config = config_from(distance__target="gaussian", distance__target_mass=2.0, **SMALL)
        grid = build_uniform_grid(65, 6.0)
        target = distance_target(config, grid, gaussian_density(grid))
        assert_allclose(integrate(grid, target), 2.0, rtol=1e-12)

    def test_oracle_workers(self):
        for raw, expected in (("", 1), ("4", 4), ("0", 1), ("lots", 1)):
            with mock.patch.dict(os.environ, {THREADS_ENV: raw}):
                self.assertEqual(oracle_workers(), expected)
