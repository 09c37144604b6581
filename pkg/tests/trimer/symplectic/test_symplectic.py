import unittest

import numpy as np
from pydantic import ValidationError

from trimer.symplectic import (
    QuadraticHamiltonian,
    SpectralError,
    frequencies,
    symplectic_form,
    williamson,
)


def random_positive(modes: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2 * modes, 2 * modes))
    return a @ a.T + 0.5 * np.eye(2 * modes)


class TestQuadraticHamiltonian(unittest.TestCase):
    def test_rejects_asymmetric(self):
        with self.assertRaises(ValidationError):
            QuadraticHamiltonian(matrix=[[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_odd_size(self):
        with self.assertRaises(ValidationError):
            QuadraticHamiltonian(matrix=np.eye(3))

    def test_modes(self):
        self.assertEqual(QuadraticHamiltonian(matrix=np.eye(6)).modes, 3)


class TestWilliamson(unittest.TestCase):
    def test_single_mode(self):
        spectrum = williamson(QuadraticHamiltonian(matrix=np.diag([4.0, 1.0])))
        np.testing.assert_allclose(spectrum.epsilons, [2.0])
        s = spectrum.transform
        np.testing.assert_allclose(s.T @ np.diag([4.0, 1.0]) @ s, 2.0 * np.eye(2), atol=1e-10)

    def test_random_form(self):
        h = random_positive(3)
        spectrum = williamson(QuadraticHamiltonian(matrix=h))
        s = spectrum.transform
        omega = symplectic_form(3)
        np.testing.assert_allclose(spectrum.epsilons, frequencies(h), rtol=1e-9)
        np.testing.assert_allclose(s.T @ omega @ s, omega, atol=1e-9)
        np.testing.assert_allclose(
            s.T @ h @ s, np.diag(np.repeat(spectrum.epsilons, 2)), atol=1e-9
        )
        self.assertFalse(spectrum.zero_modes.any())

    def test_degenerate_modes(self):
        spectrum = williamson(QuadraticHamiltonian(matrix=np.eye(4)))
        s = spectrum.transform
        np.testing.assert_allclose(spectrum.epsilons, [1.0, 1.0])
        np.testing.assert_allclose(s.T @ symplectic_form(2) @ s, symplectic_form(2), atol=1e-10)
        np.testing.assert_allclose(s.T @ s, np.eye(4), atol=1e-10)

    def test_zero_mode(self):
        spectrum = williamson(QuadraticHamiltonian(matrix=np.diag([2.0, 2.0, 1.0, 0.0])))
        self.assertEqual(list(spectrum.zero_modes), [True, False])
        np.testing.assert_allclose(spectrum.epsilons, [0.0, 2.0])
        s = spectrum.transform
        np.testing.assert_allclose(s.T @ symplectic_form(2) @ s, symplectic_form(2), atol=1e-10)
        cov = spectrum.covariance()
        self.assertAlmostEqual(cov[0, 0], 0.5)
        self.assertAlmostEqual(cov[1, 1], 0.5)
        self.assertTrue(np.isinf(cov[3, 3]))

    def test_vacuum_covariance(self):
        cov = williamson(QuadraticHamiltonian(matrix=3.0 * np.eye(6))).covariance()
        np.testing.assert_allclose(cov, 0.5 * np.eye(6), atol=1e-10)

    def test_indefinite_form(self):
        with self.assertRaises(SpectralError):
            williamson(QuadraticHamiltonian(matrix=np.diag([1.0, 1.0, -1.0, 1.0])))


class TestFrequencies(unittest.TestCase):
    def test_uncoupled_oscillators(self):
        np.testing.assert_allclose(frequencies(np.diag([4.0, 1.0, 9.0, 1.0])), [2.0, 3.0])
