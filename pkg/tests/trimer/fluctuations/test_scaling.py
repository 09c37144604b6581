import math
import unittest

import numpy as np

from trimer.bifurcation.continuation import BifurcationEvent, Branch, EventKind
from trimer.bifurcation.equilibria import EquilibriumClass
from trimer.fitting import InconclusiveError
from trimer.fluctuations.scaling import (
    PhotonScan,
    equivalent_sites,
    photon_scan,
    scaling_fit,
    terminating_event,
)
from trimer.model import ModelParams, PreconditionError


def event(kind: EventKind, g: float) -> BifurcationEvent:
    return BifurcationEvent(
        kind=kind, branch_class="n", g=g, eta=1.0, phi=0.0, kappa=0.5, eigen_signature=""
    )


class TestTerminatingEvent(unittest.TestCase):
    def test_first_continuous_event(self):
        branch = Branch(
            points=[], events=[event(EventKind.STABILITY_FLIP, 0.5), event(EventKind.HOPF, 0.8)]
        )
        self.assertEqual(terminating_event(branch).kind, EventKind.HOPF)

    def test_saddle_node_first(self):
        branch = Branch(
            points=[],
            events=[event(EventKind.SADDLE_NODE, 0.5), event(EventKind.PITCHFORK_SUPER, 0.8)],
        )
        with self.assertRaises(PreconditionError):
            terminating_event(branch)


class TestEquivalentSites(unittest.TestCase):
    def test_groups(self):
        photons = np.array([[1.0, 2.0, 1.0], [3.0, 5.0, 3.0]])
        self.assertEqual(equivalent_sites(photons), [[0, 2], [1]])


class TestScalingFit(unittest.TestCase):
    def scan(self, photons: np.ndarray, deltas: np.ndarray) -> PhotonScan:
        return PhotonScan(
            event=event(EventKind.PITCHFORK_SUPER, 1.0),
            deltas=deltas,
            photons=photons,
            det_nonzero=np.ones(len(deltas), dtype=bool),
            residuals=np.full(len(deltas), 1e-14),
        )

    def test_two_scalings(self):
        d = np.geomspace(1e-4, 1e-2, 10)
        photons = np.stack([0.1 / d**2, 0.3 / d, 0.3 / d], axis=1)
        report = scaling_fit(self.scan(photons, d), EquilibriumClass.FS)
        self.assertEqual(len(report.sites), 2)
        np.testing.assert_allclose(report.exponents, [1.0, 2.0])
        self.assertEqual(report.summary()["exponents"][1]["sites"], [2, 3])

    def test_too_few_points(self):
        d = np.array([1e-3, 1e-2])
        with self.assertRaises(InconclusiveError):
            scaling_fit(self.scan(np.ones((2, 3)), d), EquilibriumClass.N)

    def test_frame_columns(self):
        d = np.geomspace(1e-4, 1e-2, 4)
        frame = self.scan(np.ones((4, 3)), d).to_frame()
        self.assertEqual(list(frame.columns), ["delta_g", "n_ph_1", "n_ph_2", "n_ph_3", "det_flag"])


class TestNormalBranchScaling(unittest.TestCase):
    def test_mean_field_exponent(self):
        p = ModelParams(g=0.8, phi=math.pi, kappa=0.5)
        scan = photon_scan(
            p, EquilibriumClass.N, g_end=1.2, deltas=np.geomspace(1e-4, 1e-2, 12), step=0.02
        )
        self.assertAlmostEqual(scan.event.g, math.sqrt(1.025), places=5)
        self.assertGreaterEqual(len(scan.deltas), 10)
        self.assertTrue(scan.det_nonzero.all())
        self.assertLess(float(np.max(scan.residuals)), 1e-10)
        report = scaling_fit(scan, EquilibriumClass.N)
        self.assertEqual(len(report.sites), 1)
        self.assertAlmostEqual(report.exponents[0], 1.0, delta=0.1)
