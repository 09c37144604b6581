import math
import unittest

import numpy as np
from pydantic import ValidationError

from trimer.landscape import (
    PHASE_COLUMNS,
    FieldConfiguration,
    Phase,
    branch_gap,
    critical_coupling,
    energy,
    energy_gradient,
    energy_hessian,
    first_order_boundary,
    first_order_flux,
    fsp_expansion,
    fsp_pattern,
    fsp_seeds,
    imag_from_real,
    minimize_ground_state,
    nfsp_solution,
    np_eigenvalues,
    phase_diagram,
    reduced_fsp_energy,
    rotation_angles,
    tricritical_phi,
)
from trimer.model import DomainError, ModelParams, UnsupportedError


def _random_config(rng: np.random.Generator) -> FieldConfiguration:
    return FieldConfiguration(alpha_bar=rng.normal(size=3) + 1j * rng.normal(size=3))


class TestFieldConfiguration(unittest.TestCase):
    def test_vector_round_trip(self):
        c = FieldConfiguration(alpha_bar=[1 + 2j, -0.5, 3j])
        back = FieldConfiguration.from_vector(c.as_vector())
        np.testing.assert_array_equal(back.alpha_bar, c.alpha_bar)

    def test_rejects_wrong_shape(self):
        with self.assertRaises(ValidationError):
            FieldConfiguration(alpha_bar=[1.0, 2.0])

    def test_rejects_non_finite(self):
        with self.assertRaises(ValidationError):
            FieldConfiguration(alpha_bar=[1.0, math.nan, 0.0])


class TestCriticalCoupling(unittest.TestCase):
    def test_balanced_zero_flux(self):
        cc = critical_coupling(ModelParams(eta=1.0, phi=0.0, jbar=0.3))
        self.assertAlmostEqual(cc.g_f, math.sqrt(0.7), places=12)
        self.assertAlmostEqual(cc.g_nf, math.sqrt(1.6), places=12)
        self.assertAlmostEqual(cc.g_c, math.sqrt(0.7), places=12)

    def test_balanced_pi_flux(self):
        cc = critical_coupling(ModelParams(eta=1.0, phi=math.pi, jbar=0.3))
        self.assertAlmostEqual(cc.g_nf, math.sqrt(0.4), places=12)
        self.assertAlmostEqual(cc.g_f, math.sqrt(1.3), places=12)
        self.assertAlmostEqual(cc.g_c, math.sqrt(0.4), places=12)

    def test_decoupled_cavities_at_zero_eta(self):
        cc = critical_coupling(ModelParams(eta=0.0, jbar=0.0))
        self.assertAlmostEqual(cc.g_nf, 2.0)
        self.assertAlmostEqual(cc.g_f, 2.0)

    def test_invalid_hopping(self):
        with self.assertRaises(DomainError):
            critical_coupling(ModelParams(jbar=0.6, phi=math.pi))

    def test_threshold_matches_hessian_scan(self):
        p = ModelParams(eta=1.0, phi=0.0, jbar=0.3)
        gs = np.linspace(0.8, 0.9, 100001)
        lowest = np.array([np.min(np_eigenvalues(p.replace(g=float(g)))) for g in gs[::1000]])
        coarse = gs[::1000][np.argmax(lowest < 0)]
        fine = gs[(gs > coarse - 1e-3) & (gs <= coarse)]
        lowest_fine = np.array([np.min(np_eigenvalues(p.replace(g=float(g)))) for g in fine])
        g_scan = fine[np.argmax(lowest_fine < 0)]
        self.assertLess(abs(g_scan - critical_coupling(p).g_c), 1e-4)


class TestHessian(unittest.TestCase):
    def test_closed_form_at_zero_field(self):
        rng = np.random.default_rng(1)
        checked = 0
        for g in np.linspace(0.1, 1.5, 10):
            for eta in np.linspace(-1, 1, 10):
                for phi in np.linspace(0, math.pi, 10):
                    jbar = float(rng.uniform(0, 0.3))
                    p = ModelParams(g=float(g), eta=float(eta), phi=float(phi), jbar=jbar)
                    if not p.valid:
                        continue
                    numeric = np.linalg.eigvalsh(energy_hessian(p, FieldConfiguration.zero()))
                    np.testing.assert_allclose(np.sort(np_eigenvalues(p)), numeric, atol=1e-10)
                    checked += 1
        self.assertGreater(checked, 500)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        p = ModelParams(g=1.1, eta=0.4, phi=0.7, jbar=0.2)
        for _ in range(5):
            c = _random_config(rng)
            x = c.as_vector()
            h = 1e-6
            fd = np.array(
                [
                    (
                        energy(p, FieldConfiguration.from_vector(x + h * e))
                        - energy(p, FieldConfiguration.from_vector(x - h * e))
                    )
                    / (2 * h)
                    for e in np.eye(6)
                ]
            )
            np.testing.assert_allclose(energy_gradient(p, c), fd, atol=1e-6)

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        p = ModelParams(g=0.9, eta=-0.3, phi=2.0, jbar=0.25)
        c = _random_config(rng)
        x = c.as_vector()
        h = 1e-6
        fd = np.column_stack(
            [
                (
                    energy_gradient(p, FieldConfiguration.from_vector(x + h * e))
                    - energy_gradient(p, FieldConfiguration.from_vector(x - h * e))
                )
                / (2 * h)
                for e in np.eye(6)
            ]
        )
        np.testing.assert_allclose(energy_hessian(p, c), fd, atol=1e-6)


class TestUniformSolution(unittest.TestCase):
    def test_absent_below_threshold(self):
        self.assertIsNone(nfsp_solution(ModelParams(g=0.5, eta=1.0, phi=0.0)))

    def test_stationary_above_threshold(self):
        for eta in (1.0, 0.5, -0.5, 0.0):
            p = ModelParams(g=2.5, eta=eta, phi=0.3, jbar=0.2)
            c = nfsp_solution(p)
            self.assertIsNotNone(c)
            assert c is not None
            np.testing.assert_allclose(energy_gradient(p, c), 0.0, atol=1e-10)
            if eta < 0:
                self.assertAlmostEqual(float(np.max(np.abs(c.alpha_bar.real))), 0.0)


class TestGroundState(unittest.TestCase):
    def test_normal_phase_below_threshold(self):
        gs = minimize_ground_state(ModelParams(g=0.5, eta=1.0, phi=0.0))
        self.assertEqual(gs.phase, Phase.NP)
        np.testing.assert_array_equal(gs.config.alpha_bar, 0)
        np.testing.assert_allclose(gs.theta, 0.0)
        self.assertAlmostEqual(gs.energy, -1.5)
        self.assertEqual(gs.orbit_size, 1)

    def test_frustrated_phase_above_frustrated_threshold(self):
        gs = minimize_ground_state(ModelParams(g=0.9, eta=1.0, phi=0.0, jbar=0.3))
        self.assertEqual(gs.phase, Phase.FSP)
        self.assertEqual(gs.orbit_size, 6)
        self.assertTrue(np.all(gs.hessian_eigs > -1e-8))

    def test_uniform_phase_at_pi_flux(self):
        p = ModelParams(g=1.0, eta=1.0, phi=math.pi, jbar=0.3)
        gs = minimize_ground_state(p)
        self.assertEqual(gs.phase, Phase.NFSP)
        expected = nfsp_solution(p)
        assert expected is not None
        self.assertAlmostEqual(abs(gs.config.alpha_bar[0]), abs(expected.alpha_bar[0]), places=6)

    def test_zero_eta_gauge_fixed(self):
        gs = minimize_ground_state(ModelParams(g=2.5, eta=0.0, phi=math.pi, jbar=0.3))
        self.assertTrue(gs.u1_orbit)
        first = gs.config.alpha_bar[0]
        self.assertAlmostEqual(first.imag, 0.0, places=8)
        self.assertGreater(first.real, 0.0)

    def test_rotation_angles(self):
        p = ModelParams(g=1.0, eta=1.0, phi=math.pi)
        c = FieldConfiguration(alpha_bar=[0.5, 0.5, 0.5])
        theta, phi = rotation_angles(p, c)
        np.testing.assert_allclose(np.cos(theta), 1 / math.sqrt(1 + 4 * 0.25))
        np.testing.assert_allclose(phi, 0.0)


class TestFrustratedReduction(unittest.TestCase):
    def test_reduced_energy_matches_full_energy(self):
        rng = np.random.default_rng(4)
        p = ModelParams(g=1.2, eta=1.0, phi=math.pi / 4, jbar=0.3)
        for _ in range(5):
            re = rng.normal(size=3)
            alpha = re + 1j * imag_from_real(p, re)
            self.assertAlmostEqual(
                reduced_fsp_energy(p, re), energy(p, FieldConfiguration(alpha_bar=alpha)), places=10
            )

    def test_requires_balanced_coupling(self):
        with self.assertRaises(UnsupportedError):
            reduced_fsp_energy(ModelParams(eta=0.5), np.zeros(3))

    def test_expansion_matches_minimizer(self):
        p = ModelParams(eta=1.0, phi=0.0, jbar=0.3)
        g_f = critical_coupling(p).g_f
        delta = 1e-3
        expansion = fsp_expansion(p, delta)
        self.assertAlmostEqual(expansion.g_c, g_f, places=12)
        gs = minimize_ground_state(p.replace(g=g_f + delta))
        self.assertEqual(gs.phase, Phase.FSP)
        mags = np.sort(np.abs(gs.config.alpha_bar.real))
        self.assertLess(abs(mags[-1] - abs(expansion.re_alpha1)) / mags[-1], 5e-3)
        self.assertLess(abs(mags[0] - abs(expansion.re_alpha2)) / mags[0], 5e-3)

    def test_expansion_error_falls_with_delta(self):
        p = ModelParams(eta=1.0, phi=0.0, jbar=0.3)
        g_f = critical_coupling(p).g_f
        leading: list[float] = []
        full: list[float] = []
        for delta in (2e-3, 1e-3, 5e-4):
            r, s, _ = fsp_pattern(p.replace(g=g_f + delta))
            e = fsp_expansion(p, delta)
            root = math.sqrt(delta)
            leading.append(max(abs(r - e.r0 * root) / abs(r), abs(s - e.s0 * root) / abs(s)))
            full.append(max(abs(r - e.re_alpha1) / abs(r), abs(s - e.re_alpha2) / abs(s)))
        for k in range(2):
            self.assertAlmostEqual(leading[k] / leading[k + 1], 2.0, delta=0.2)
            self.assertGreater(full[k] / full[k + 1], 3.0)
        self.assertLess(full[1], 1e-4)

    def test_expansion_needs_positive_delta(self):
        with self.assertRaises(DomainError):
            fsp_expansion(ModelParams(eta=1.0), -1e-3)


class TestPhaseDiagram(unittest.TestCase):
    def test_tricritical_flux(self):
        p = ModelParams(eta=1.0, jbar=0.3)
        phi = tricritical_phi(p)
        self.assertTrue(0 < phi < math.pi)
        cc = critical_coupling(p.replace(phi=phi))
        self.assertAlmostEqual(cc.g_nf, cc.g_f, places=9)

    def test_table_shape(self):
        etas = np.linspace(-1, 1, 5)
        frame = phase_diagram(ModelParams(jbar=0.3), etas, [0.0, math.pi], threads=1)
        self.assertEqual(list(frame.columns), PHASE_COLUMNS)
        self.assertEqual(len(frame), 10)
        self.assertTrue(np.all(frame["g_c"] <= frame["g_nf"] + 1e-12))

    def test_first_order_flux_at_balanced_coupling(self):
        p = ModelParams(eta=1.0, jbar=0.3, g=1.2)
        phi_star = first_order_flux(p)
        assert phi_star is not None
        self.assertAlmostEqual(phi_star, tricritical_phi(p), delta=1e-5)
        at = p.replace(phi=phi_star)
        gap = branch_gap(at, fsp_seeds(at))
        assert gap is not None
        self.assertLess(abs(gap[0]), 1e-5)

    def test_no_first_order_coupling_at_balanced_coupling(self):
        p = ModelParams(eta=1.0, jbar=0.3)
        below = p.replace(phi=tricritical_phi(p) - 0.05)
        cc = critical_coupling(below)
        self.assertLess(cc.g_f, cc.g_nf)
        self.assertIsNone(first_order_boundary(below, g_max=1.6, points=40))
        upper = below.replace(g=1.4)
        gap = branch_gap(upper, fsp_seeds(upper))
        assert gap is not None
        self.assertLess(gap[0], 0)

    def test_first_order_columns(self):
        p = ModelParams(jbar=0.3)
        frame = phase_diagram(p, [1.0], [0.5], probe_g=1.2, threads=1, g_max=1.6)
        self.assertAlmostEqual(frame["phi_first_order"].iloc[0], tricritical_phi(p), delta=1e-5)
        self.assertTrue(frame["g_first_order"].isna().all())
