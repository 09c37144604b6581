import math
import unittest

import numpy as np

from trimer.dynamics.analysis import (
    AttractorKind,
    ResolutionError,
    Synchrony,
    TransientChaosReport,
    classify_attractor,
    detect_burst,
    detect_transient_chaos,
    equilibrium_growth_rate,
    harmonic_bases,
    poincare_section,
    power_spectrum,
    random_ensemble,
    spectral_peaks,
    synchrony,
)
from trimer.dynamics.integrate import integrate
from trimer.dynamics.state import STATE_SIZE, SemiclassicalState, Trajectory, preset_state
from trimer.model import ModelParams


def synthetic(times: np.ndarray, fields: np.ndarray) -> Trajectory:
    """Trajectory with the given real cavity fields, shape (samples, 3)."""
    states = np.zeros((times.size, STATE_SIZE))
    states[:, :3] = fields
    states[:, 12:] = -0.5
    dt = float(times[1] - times[0])
    return Trajectory(times=times, states=states, params=ModelParams(), dt=dt)


class TestSpectrum(unittest.TestCase):
    def setUp(self):
        self.times = np.arange(0, 4000) * 0.05

    def test_peak_at_drive_frequency(self):
        x = 1 + 0.5 * np.cos(2.0 * self.times)
        traj = synthetic(self.times, np.stack([x, x, x], axis=1))
        spectrum = power_spectrum(traj)
        self.assertEqual(list(spectrum.columns), ["frequency", "power"])
        resolution = float(spectrum["frequency"].iloc[1])
        peaks = spectral_peaks(spectrum)
        self.assertAlmostEqual(peaks[0], 2.0, delta=resolution)

    def test_needs_uniform_samples(self):
        times = np.concatenate([np.arange(20) * 0.1, [5.0]])
        traj = synthetic(times, np.zeros((21, 3)))
        with self.assertRaises(ResolutionError):
            power_spectrum(traj)
        with self.assertRaises(ResolutionError):
            power_spectrum(synthetic(self.times[:5], np.zeros((5, 3))))


class TestHarmonics(unittest.TestCase):
    def test_comb(self):
        self.assertEqual(harmonic_bases([3.0, 1.0, 2.0], 0.01), [1.0])

    def test_two_incommensurate_bases(self):
        root2 = math.sqrt(2)
        self.assertEqual(harmonic_bases([1.0, root2, 1 + root2], 0.01), [1.0, root2])

    def test_empty(self):
        self.assertEqual(harmonic_bases([], 0.01), [])


class TestSynchrony(unittest.TestCase):
    def setUp(self):
        self.times = np.arange(0, 200) * 0.1

    def test_uniform(self):
        x = np.cos(self.times)
        traj = synthetic(self.times, np.stack([x, x, x], 1))
        self.assertEqual(synchrony(traj), Synchrony.UNIFORM)

    def test_two_one(self):
        x, y = np.cos(self.times), np.sin(self.times)
        traj = synthetic(self.times, np.stack([x, x, y], 1))
        self.assertEqual(synchrony(traj), Synchrony.TWO_ONE)

    def test_periodic_section_has_one_return_point(self):
        x = 1 + 0.5 * np.cos(self.times)
        section = poincare_section(synthetic(self.times, np.stack([x, x, x], 1)))
        self.assertEqual(section.distinct_points(), 1)
        self.assertEqual(len(section.times), 3)


class TestAttractor(unittest.TestCase):
    def test_stable_normal_state(self):
        p = ModelParams(g=0.3, kappa=0.5)
        s = preset_state("N", p)
        self.assertLess(equilibrium_growth_rate(p, s), 0)
        report = classify_attractor(p, s, t_transient=10.0, t_measure=20.0, dt=0.1)
        self.assertEqual(report.kind, AttractorKind.EQUILIBRIUM)
        self.assertEqual(report.synchrony, Synchrony.UNIFORM)
        self.assertLess(report.lyapunov_max, 0)

    def test_flat_signal_is_no_burst(self):
        times = np.arange(0, 100) * 0.1
        self.assertFalse(detect_burst(synthetic(times, np.ones((100, 3)))).is_burst)


# photons hopping around an empty ring threaded by a quarter flux quantum
RING = ModelParams(g=0.0, phi=math.pi / 2, kappa=0.0)
RING_PERIOD = 2 * math.pi / (math.sqrt(3) * RING.jbar)


def ring_start() -> SemiclassicalState:
    alpha = np.array([1.0, 0.0, 0.0], dtype=complex)
    return SemiclassicalState(alpha=alpha, spin=np.tile([0.0, 0.0, -0.5], (3, 1)))


class TestTransientChaos(unittest.TestCase):
    def test_report(self):
        report = TransientChaosReport(escape_times=[10.0, None, 40.0], t_max=100.0)
        self.assertEqual(report.censored, [False, True, False])
        self.assertEqual(report.spread, 4.0)

    def test_ensemble_reproducible(self):
        a = random_ensemble(3, rng_seed=11)
        b = random_ensemble(3, rng_seed=11)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.as_vector(), y.as_vector())

    def test_decay_from_near_normal_state(self):
        p = ModelParams(g=0.5, kappa=0.5)
        rng = np.random.default_rng(4)
        starts = []
        for _ in range(3):
            y = preset_state("N", p).as_vector() + 0.01 * rng.normal(size=STATE_SIZE)
            starts.append(SemiclassicalState.from_vector(y).renormalized())
        report = detect_transient_chaos(p, starts, t_max=2000.0)
        self.assertEqual(report.censored, [False, False, False])
        self.assertTrue(all(t is not None and t > 0 for t in report.escape_times))

    def test_lossless_ring_never_escapes(self):
        report = detect_transient_chaos(RING, [ring_start()], t_max=200.0)
        self.assertEqual(report.censored, [True])
        self.assertEqual(report.spread, 1.0)


class TestRingOrbit(unittest.TestCase):
    """|alpha_n(t)| = |1 + 2 cos(sqrt(3) J t + 2 pi n / 3)| / 3 for light started in one cavity."""

    @classmethod
    def setUpClass(cls):
        cls.traj = integrate(RING, ring_start(), 200.0, tol=1e-10, dt=0.05)

    def test_matches_closed_form(self):
        omega = math.sqrt(3) * RING.jbar
        phase = omega * self.traj.times[:, None] + 2 * math.pi * np.arange(3) / 3
        expected = np.abs(1 + 2 * np.cos(phase)) / 3
        np.testing.assert_allclose(self.traj.field_magnitudes(), expected, atol=1e-6)

    def test_sites_lag_by_a_third(self):
        self.assertEqual(synchrony(self.traj, RING_PERIOD), Synchrony.LAGGED)
        self.assertEqual(synchrony(self.traj), Synchrony.NONE)

    def test_lags_and_period(self):
        report = detect_burst(self.traj)
        self.assertFalse(report.is_burst)
        self.assertLess(report.plateau_fraction, 0.1)
        assert report.period is not None
        self.assertAlmostEqual(report.period, RING_PERIOD, delta=0.05)
        self.assertEqual(len(report.lags), 2)
        for lag, expected in zip(sorted(report.lags), (1 / 3, 2 / 3)):
            self.assertAlmostEqual(lag, expected, delta=0.02)

    def test_fundamental_leads_the_spectrum(self):
        spectrum = power_spectrum(self.traj)
        resolution = float(spectrum["frequency"].iloc[1])
        peaks = spectral_peaks(spectrum)
        self.assertAlmostEqual(peaks[0], math.sqrt(3) * RING.jbar, delta=resolution)
        self.assertEqual(harmonic_bases(peaks[:3], resolution), [min(peaks[:3])])
