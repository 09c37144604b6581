import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from trimer.config import (
    CommandOptions,
    RunConfig,
    Subcommand,
    SweepAxis,
    load_params,
    parse_config,
)


class TestSweepAxis(unittest.TestCase):
    def test_linear_values(self):
        axis = SweepAxis(variable="g", min=0.0, max=1.0, points=5)
        np.testing.assert_allclose(axis.values(), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_log_values(self):
        axis = SweepAxis(variable="kappa", min=1e-3, max=1e-1, points=3, log=True)
        np.testing.assert_allclose(axis.values(), [1e-3, 1e-2, 1e-1])

    def test_single_point(self):
        single = SweepAxis(variable="eta", min=0.3, max=0.9, points=1)
        np.testing.assert_array_equal(single.values(), [0.3])

    def test_rejects_unknown_variable(self):
        with self.assertRaises(ValidationError):
            SweepAxis(variable="jbar", min=0.0, max=1.0)

    def test_rejects_non_positive_log_bounds(self):
        with self.assertRaises(ValidationError):
            SweepAxis(variable="g", min=0.0, max=1.0, log=True)

    def test_rejects_zero_points(self):
        with self.assertRaises(ValidationError):
            SweepAxis(variable="g", min=0.0, max=1.0, points=0)


class TestSubcommand(unittest.TestCase):
    def test_open_system_commands(self):
        opened = {c.value for c in Subcommand if c.open_system}
        self.assertEqual(opened, {"evolve", "spectrum", "bifurcate", "fluctuations", "escape"})


class TestParseConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_load_params_yaml_and_json(self):
        (self.dir / "p.yaml").write_text("g: 0.4\neta: 0.5\nphi: 0.1\n")
        (self.dir / "p.json").write_text(json.dumps({"g": 0.4, "eta": 0.5, "phi": 0.1}))
        self.assertEqual(load_params(self.dir / "p.yaml"), load_params(self.dir / "p.json"))

    def test_load_params_rejects_unknown_key(self):
        (self.dir / "p.yaml").write_text("g: 0.4\nfoo: 1\n")
        with self.assertRaises(ValidationError):
            load_params(self.dir / "p.yaml")

    def test_flags_only(self):
        cfg = parse_config({"subcommand": "spectra", "params": {"g": 0.2}})
        self.assertEqual(cfg.subcommand, Subcommand.SPECTRA)
        self.assertEqual(cfg.params.g, 0.2)
        self.assertFalse(cfg.kappa_given)
        self.assertEqual(cfg.options, CommandOptions())

    def test_file_overrides_flags(self):
        path = self.dir / "run.yaml"
        path.write_text("rng_seed: 7\nparams:\n  g: 0.9\n  kappa: 0.3\n")
        cfg = parse_config({"subcommand": "evolve", "params": {"g": 0.2, "eta": 0.5}}, path)
        self.assertEqual(cfg.rng_seed, 7)
        self.assertEqual(cfg.params.g, 0.9)
        self.assertEqual(cfg.params.eta, 0.5)
        self.assertTrue(cfg.kappa_given)

    def test_rejects_unknown_option(self):
        with self.assertRaises(ValidationError):
            parse_config({"subcommand": "spectra", "options": {"nope": 1}})

    def test_threads_at_least_one(self):
        self.assertEqual(RunConfig(subcommand=Subcommand.SPECTRA, threads=0).threads, 1)

    def test_summary_is_plain_json(self):
        cfg = parse_config({"subcommand": "phase-diagram"})
        summary = cfg.summary()
        self.assertEqual(summary["subcommand"], "phase-diagram")
        json.dumps(summary)
