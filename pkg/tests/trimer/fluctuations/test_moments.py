import math
import unittest

import numpy as np

from trimer.bifurcation.equilibria import (
    EquilibriumClass,
    find_equilibria,
    make_equilibrium,
)
from trimer.bifurcation.jacobian import jacobian_eigenvalues
from trimer.dynamics.state import preset_state
from trimer.fluctuations.moments import (
    MOMENT_KEYS,
    N_MOMENTS,
    INDEX_MAP,
    MomentInvariantError,
    SingularSystemError,
    coupling_coefficients,
    drift_matrices,
    lyapunov_covariance,
    moment_system,
    quadrature_covariance,
    quadrature_drift,
    solve,
    steady_moments,
)
from trimer.model import ModelParams, PreconditionError


def normal_equilibrium(p: ModelParams):
    e = make_equilibrium(p, preset_state("N", p))
    assert e is not None
    return e


class TestMomentLayout(unittest.TestCase):
    def test_count(self):
        self.assertEqual(N_MOMENTS, 78)
        self.assertEqual(len(set(MOMENT_KEYS)), 78)
        self.assertEqual(MOMENT_KEYS[0], ("aa", 0, 0))


class TestNormalState(unittest.TestCase):
    def setUp(self):
        self.p = ModelParams(g=0.6, eta=0.7, phi=0.0, kappa=0.5)
        self.eq = normal_equilibrium(self.p)
        self.moments = steady_moments(self.p, self.eq)

    def test_invariants(self):
        m = self.moments
        self.assertLess(m.residual, 1e-10)
        self.assertTrue(m.det_nonzero)
        self.assertLess(m.hermiticity_error(), 1e-10)
        self.assertGreater(m.min_photon_eigenvalue(), -1e-10)
        self.assertEqual(m[("aa", 0, 1)], m[("aa", 1, 0)])

    def test_translation_invariant_photons(self):
        photons = self.moments.photon_numbers()
        self.assertGreater(photons[0], 0)
        np.testing.assert_allclose(photons, photons[0], rtol=1e-8)

    def test_matches_lyapunov(self):
        np.testing.assert_allclose(
            quadrature_covariance(self.moments), lyapunov_covariance(self.p, self.eq), atol=1e-8
        )

    def test_drift_shares_jacobian_spectrum(self):
        m, nn = drift_matrices(self.p, coupling_coefficients(self.p, self.eq.state))
        drift = np.linalg.eigvals(quadrature_drift(m, nn))
        for z in jacobian_eigenvalues(self.p, self.eq.state):
            self.assertLess(float(np.min(np.abs(drift - z))), 1e-6)

    def test_weak_coupling_is_nearly_vacuum(self):
        p = self.p.replace(g=1e-3)
        photons = steady_moments(p, normal_equilibrium(p)).photon_numbers()
        self.assertGreater(float(np.min(photons)), -1e-9)
        self.assertLess(float(np.max(photons)), 1e-5)


class TestSuperradiantState(unittest.TestCase):
    def test_matches_lyapunov(self):
        p = ModelParams(g=1.2, phi=math.pi, kappa=0.5)
        stable = [e for e in find_equilibria(p, [EquilibriumClass.NFS]) if e.stable]
        self.assertTrue(stable)
        moments = steady_moments(p, stable[0])
        self.assertLess(moments.residual, 1e-10)
        np.testing.assert_allclose(
            quadrature_covariance(moments), lyapunov_covariance(p, stable[0]), atol=1e-7
        )


class TestSingularCases(unittest.TestCase):
    def test_closed_system(self):
        p = ModelParams(g=0.4)
        with self.assertRaises(SingularSystemError):
            solve(*moment_system(p, preset_state("N", p)))

    def test_decoupled_spins(self):
        p = ModelParams(g=0.0, kappa=0.5)
        with self.assertRaises(SingularSystemError):
            solve(*moment_system(p, preset_state("N", p)))

    def test_unstable_equilibrium_rejected(self):
        p = ModelParams(g=1.2, phi=math.pi, kappa=0.5)
        with self.assertRaises(PreconditionError):
            steady_moments(p, normal_equilibrium(p))

    def test_equatorial_spin_rejected(self):
        p = ModelParams(g=0.5, kappa=0.5)
        s = preset_state("N", p)
        flat = s.model_copy(update={"spin": np.array([[0.5, 0.0, 0.0]] * 3)})
        with self.assertRaises(PreconditionError):
            coupling_coefficients(p, flat)

    def test_broken_invariants_raise(self):
        m_f = -np.eye(N_MOMENTS, dtype=complex)
        negative = np.zeros(N_MOMENTS, dtype=complex)
        negative[INDEX_MAP[("ada", 0, 0)]] = -1.0
        lopsided = np.zeros(N_MOMENTS, dtype=complex)
        lopsided[INDEX_MAP[("aa", 0, 0)]] = 0.5
        for v_f in (negative, lopsided):
            with self.assertRaises(MomentInvariantError) as caught:
                solve(m_f, v_f)
            self.assertIn("hermiticity", caught.exception.context)
