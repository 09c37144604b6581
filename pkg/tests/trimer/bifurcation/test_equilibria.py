import math
import unittest

import numpy as np

from trimer.bifurcation.equilibria import (
    EquilibriumClass,
    classify_state,
    deduplicate,
    find_equilibria,
    make_equilibrium,
    normal_equilibria,
    state_from_fields,
    two_vanishing_roots,
)
from trimer.dynamics.equations import rhs
from trimer.model import ModelParams


class TestClassifyState(unittest.TestCase):
    def setUp(self):
        self.p = ModelParams(g=1.0)

    def classify(self, alpha: list[complex]):
        return classify_state(state_from_fields(self.p, np.array(alpha, dtype=complex), -1.0))

    def test_patterns(self):
        self.assertEqual(self.classify([0, 0, 0]), EquilibriumClass.N)
        self.assertEqual(self.classify([0.3j, 0.3j, 0.3j]), EquilibriumClass.NFS)
        self.assertEqual(self.classify([0, 0.4, -0.4]), EquilibriumClass.MIXED)
        self.assertEqual(self.classify([0.1, 0.4, -0.2]), EquilibriumClass.FS)
        self.assertIsNone(self.classify([0, 0.4, 0.1]))
        self.assertIsNone(self.classify([0, 0, 0.4]))

    def test_branch_labels(self):
        self.assertEqual(EquilibriumClass.MIXED.branch_label, "mix")
        self.assertEqual(EquilibriumClass.FS.branch_label, "fs")


class TestFindEquilibria(unittest.TestCase):
    def test_normal_states(self):
        p = ModelParams(g=0.3, kappa=0.5)
        states = normal_equilibria(p)
        self.assertEqual([s.spin[0, 2] for s in states], [-0.5, 0.5])
        found = find_equilibria(p, [EquilibriumClass.N])
        self.assertEqual(len(found), 2)
        self.assertTrue(found[0].stable)
        self.assertFalse(found[1].stable)

    def test_uniform_branch_above_threshold(self):
        p = ModelParams(g=1.2, phi=math.pi, kappa=0.5)
        found = find_equilibria(p, [EquilibriumClass.NFS])
        self.assertTrue(found)
        for e in found:
            self.assertEqual(e.eq_class, EquilibriumClass.NFS)
            self.assertLess(float(np.max(np.abs(rhs(p, e.state)))), 1e-10)
        self.assertTrue(any(e.stable for e in found))

    def test_no_uniform_branch_below_threshold(self):
        p = ModelParams(g=0.9, phi=math.pi, kappa=0.5)
        self.assertEqual(find_equilibria(p, [EquilibriumClass.NFS]), [])

    def test_orbit_deduplication(self):
        p = ModelParams(g=1.0)
        s = state_from_fields(p, np.array([0.1, 0.4, -0.2], dtype=complex), -1.0)
        self.assertEqual(len(deduplicate(p, [s, s.permuted([1, 2, 0]), s.parity()])), 1)

    def test_rejects_non_stationary(self):
        p = ModelParams(g=1.0, kappa=0.2)
        s = state_from_fields(p, np.array([0.3, 0.3, 0.3], dtype=complex), -1.0)
        self.assertIsNone(make_equilibrium(p, s))

    def test_two_vanishing_cavities(self):
        self.assertEqual(two_vanishing_roots(ModelParams(g=1.5, kappa=0.5)), [])

    def test_single_filled_cavity_without_hopping(self):
        p = ModelParams(g=1.5, kappa=0.5, jbar=0.0)
        roots = two_vanishing_roots(p)
        self.assertTrue(roots)
        for s in roots:
            self.assertGreater(abs(s.alpha[0]), 0.1)
            self.assertEqual(abs(s.alpha[1]) + abs(s.alpha[2]), 0.0)
            self.assertLess(float(np.max(np.abs(rhs(p, s)))), 1e-10)


class TestMixedEquilibria(unittest.TestCase):
    def test_exist_without_flux(self):
        for phi in (0.0, math.pi):
            p = ModelParams(g=1.5, phi=phi, kappa=0.5)
            found = find_equilibria(p, [EquilibriumClass.MIXED])
            self.assertTrue(found, msg=f"phi={phi}")
            for e in found:
                self.assertLess(abs(e.state.alpha[0]), 1e-6)
                self.assertLess(float(np.max(np.abs(rhs(p, e.state)))), 1e-10)

    def test_absent_at_generic_flux(self):
        p = ModelParams(g=1.5, phi=0.1, kappa=0.5)
        self.assertEqual(find_equilibria(p, [EquilibriumClass.MIXED]), [])
