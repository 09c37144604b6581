import math
import unittest

import numpy as np

from trimer.bifurcation.equilibria import EquilibriumClass, find_equilibria
from trimer.bifurcation.jacobian import (
    ChartError,
    jacobian,
    jacobian_eigenvalues,
    sorted_eigenvalues,
    stability_matrix,
)
from trimer.dynamics.equations import full_jacobian, sphere_tangent_basis
from trimer.dynamics.state import SemiclassicalState, preset_state
from trimer.model import ModelParams


def projected(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    y = s.as_vector()
    basis = sphere_tangent_basis(y)
    return basis.T @ full_jacobian(p, y) @ basis


class TestJacobian(unittest.TestCase):
    def assert_same_spectrum(self, a: np.ndarray, b: np.ndarray):
        wa, wb = np.linalg.eigvals(a), np.linalg.eigvals(b)
        for z in wa:
            self.assertLess(float(np.min(np.abs(wb - z))), 1e-6, msg=f"{z} missing from {wb}")

    def test_reduced_chart_matches_projection_at_normal_state(self):
        p = ModelParams(g=0.6, eta=0.4, phi=1.1, kappa=0.3)
        s = preset_state("N", p)
        self.assertEqual(jacobian(p, s).shape, (12, 12))
        self.assert_same_spectrum(jacobian(p, s), projected(p, s))

    def test_reduced_chart_matches_projection_at_superradiant_state(self):
        p = ModelParams(g=1.2, phi=math.pi, kappa=0.5)
        found = find_equilibria(p, [EquilibriumClass.NFS])
        self.assertTrue(found)
        s = found[0].state
        self.assert_same_spectrum(jacobian(p, s), projected(p, s))

    def test_equatorial_spin_falls_back_to_projection(self):
        p = ModelParams(g=0.5, kappa=0.2)
        s = SemiclassicalState(alpha=[0, 0, 0], spin=[[0.5, 0.0, 0.0]] * 3)
        with self.assertRaises(ChartError):
            jacobian(p, s)
        self.assertEqual(stability_matrix(p, s).shape, (12, 12))

    def test_eigenvalue_order(self):
        eigs = sorted_eigenvalues(np.diag([-1.0, 2.0, 0.5]))
        np.testing.assert_allclose(eigs.real, [2.0, 0.5, -1.0])

    def test_normal_state_stable_below_threshold(self):
        p = ModelParams(g=0.3, kappa=0.5)
        self.assertLess(jacobian_eigenvalues(p, preset_state("N", p))[0].real, 0)
