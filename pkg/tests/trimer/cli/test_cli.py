import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml

from trimer.artifacts import read_table
from trimer.cli import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    HANDLERS,
    build_parser,
    flags_from_args,
    main,
)
from trimer.config import Subcommand, parse_config
from trimer.landscape import PHASE_COLUMNS


class TestParser(unittest.TestCase):
    def test_every_subcommand_registered(self):
        parser = build_parser()
        for command in Subcommand:
            args = parser.parse_args([command.value])
            self.assertEqual(args.subcommand, command.value)

    def test_flags(self):
        args = build_parser().parse_args(
            ["spectra", "--g", "0.4", "--omega-a", "2", "--g-range", "0.1", "0.5", "--seed", "3"]
        )
        cfg = parse_config(flags_from_args(args))
        self.assertEqual(cfg.params.g, 0.4)
        self.assertEqual(cfg.params.omega_a, 2.0)
        self.assertEqual(cfg.options.g_range, (0.1, 0.5))
        self.assertEqual(cfg.rng_seed, 3)
        self.assertFalse(cfg.kappa_given)

    def test_dynamical_flag(self):
        parser = build_parser()
        on = parse_config(flags_from_args(parser.parse_args(["bifurcate", "--dynamical"])))
        off = parse_config(flags_from_args(parser.parse_args(["bifurcate"])))
        self.assertTrue(on.options.dynamical)
        self.assertFalse(off.options.dynamical)


class TestMain(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_phase_diagram_table(self):
        out = self.dir / "diagram.csv"
        argv = ["phase-diagram", "--eta-range", "0", "1", "--points", "5", "--threads", "1"]
        self.assertEqual(main(argv + ["--output", str(out)]), EXIT_OK)
        self.assertTrue(out.read_text().startswith("# config: "))
        frame = read_table(out)
        self.assertEqual(len(frame), 5)
        self.assertEqual(list(frame.columns), PHASE_COLUMNS)
        self.assertTrue(frame["g_first_order"].isna().all())
        first = out.read_bytes()
        self.assertEqual(main(argv + ["--output", str(out)]), EXIT_OK)
        self.assertEqual(out.read_bytes(), first)

    def test_json_format(self):
        out = self.dir / "spectra.json"
        argv = ["spectra", "--g-range", "0.2", "0.4", "--points", "3", "--threads", "1"]
        self.assertEqual(main(argv + ["--format", "json", "--output", str(out)]), EXIT_OK)
        data = json.loads(out.read_text())
        self.assertEqual(data["config"]["subcommand"], "spectra")
        self.assertEqual(len(data["report"]), 3)
        self.assertEqual(data["report"][0]["phase"], "NP")

    def test_open_system_needs_kappa(self):
        self.assertEqual(main(["evolve", "--g", "0.3"]), EXIT_USAGE)
        self.assertEqual(main(["fluctuations", "--g-range", "0.5", "1.2"]), EXIT_USAGE)

    def test_usage_errors(self):
        self.assertEqual(main(["spectra"]), EXIT_USAGE)
        self.assertEqual(main(["spectra", "--eta", "2", "--g-range", "0", "1"]), EXIT_USAGE)
        argv = ["fluctuations", "--kappa", "0.5", "--g-range", "0.5", "1.2", "--branch", "X"]
        self.assertEqual(main(argv), EXIT_USAGE)

    def test_config_file_supplies_kappa(self):
        doc = self.dir / "run.yaml"
        doc.write_text(yaml.safe_dump({"params": {"g": 0.3, "kappa": 0.5}}))
        out = self.dir / "spectrum.csv"
        argv = ["spectrum", "--config", str(doc), "--t-transient", "10", "--t-measure", "20"]
        argv += ["--dt", "0.1", "--output", str(out)]
        self.assertEqual(main(argv), EXIT_OK)
        self.assertEqual(list(read_table(out).columns), ["freq", "power"])
        report = json.loads(out.with_suffix(".json").read_text())["report"]
        self.assertFalse(report["burst"]["is_burst"])
        self.assertEqual(report["synchrony"], "uniform")

    def test_escape_ensemble(self):
        out = self.dir / "escape.csv"
        argv = ["escape", "--kappa", "0.5", "--g", "0.5", "--runs", "2", "--t-end", "20"]
        argv += ["--threads", "1", "--output", str(out)]
        self.assertEqual(main(argv), EXIT_OK)
        frame = read_table(out)
        self.assertEqual(list(frame.columns), ["run", "escape_time", "censored"])
        self.assertEqual(len(frame), 2)
        self.assertEqual(main(["escape", "--g", "0.5"]), EXIT_USAGE)

    def test_metrics_file(self):
        metrics = self.dir / "metrics.prom"
        argv = ["spectra", "--g-range", "0.2", "0.3", "--points", "2", "--threads", "1"]
        argv += ["--output", str(self.dir / "s.csv"), "--metrics-file", str(metrics)]
        self.assertEqual(main(argv), EXIT_OK)
        self.assertIn("trimer_solver_duration_seconds", metrics.read_text())

    def test_numerical_errors_are_failures(self):
        argv = ["spectra", "--g-range", "0.2", "0.3", "--points", "2", "--threads", "1"]
        for error in (ValueError("f(a) and f(b) must have different signs"), ZeroDivisionError()):

            def failing(cfg, error=error):
                raise error

            with patch.dict(HANDLERS, {Subcommand.SPECTRA: failing}):
                self.assertEqual(main(argv), EXIT_FAILURE)
