import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from symindex.errors import LedgerMismatch, MissingTprime, NoCylinderBlock, NotNonNull, SplitResidualTooLarge
from symindex.maslov import clm_graph_index
from symindex.orbit_model import NullClass, fundamental_solution
from symindex.presets import build_preset, preset_expectations
from symindex.stability import (
    CriterionOutcome,
    StabilityTag,
    clm_parity_instability,
    instability_criterion,
    multiplier_clusters,
    parity_audit,
    splitting_reduce,
    stability_classify,
)
from symindex.symplectic_core import SymplecticPath, standard_j

ALL = [("flat_torus", {}), ("flat_torus", {"frame": "screw"}), ("circle_free_particle", {}),
       ("harmonic_loop", {}), ("kepler_circular", {}), ("negative_P_synthetic", {}),
       ("negative_P_synthetic", {"base": "kepler"})]


class TestClassify:
    def test_shear_is_not_linearly_stable(self):
        verdict = stability_classify(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert verdict.tag is StabilityTag.SPECTRALLY_STABLE_NOT_LINEARLY
        (cluster,) = verdict.multipliers
        assert (cluster.algebraic, cluster.geometric) == (2, 1)

    def test_rotation_is_linearly_stable(self):
        m = expm(0.7 * standard_j(1))
        verdict = stability_classify(m)
        assert verdict.tag is StabilityTag.LINEARLY_STABLE
        assert sorted(np.angle(verdict.eigenvalues)) == pytest.approx([-0.7, 0.7])

    def test_hyperbolic(self):
        assert stability_classify(np.diag([2.0, 0.5])).tag is StabilityTag.UNSTABLE

    def test_identity_semisimple(self):
        (cluster,) = multiplier_clusters(np.eye(4))
        assert cluster.algebraic == cluster.geometric == 4 and cluster.semisimple

    def test_perturbed_jordan_block_still_clusters(self):
        m = np.array([[1.0, 0.0], [1.0, 1.0]])
        m[0, 1] = 1e-16
        clusters = multiplier_clusters(m)
        assert len(clusters) == 1 and clusters[0].algebraic == 2

    def test_random_symplectic_pairs(self, rng):
        for _ in range(20):
            h = rng.standard_normal((4, 4))
            m = expm(standard_j(2) @ (h + h.T))
            eig = multiplier_clusters(m)
            assert sum(c.algebraic for c in eig) == 4


class TestCriterion:
    @pytest.mark.parametrize("cls, orient, flow, n, expected", [
        (NullClass.L_POSITIVE, 1, 0, 2, CriterionOutcome.CERTIFIED_UNSTABLE),
        (NullClass.L_POSITIVE, 1, 1, 2, CriterionOutcome.INCONCLUSIVE),
        (NullClass.L_POSITIVE, -1, 1, 2, CriterionOutcome.CERTIFIED_UNSTABLE),
        (NullClass.L_POSITIVE, -1, 0, 2, CriterionOutcome.INCONCLUSIVE),
        (NullClass.L_NEGATIVE, 1, 1, 2, CriterionOutcome.CERTIFIED_UNSTABLE),
        (NullClass.L_NEGATIVE, 1, 0, 2, CriterionOutcome.INCONCLUSIVE),
        (NullClass.L_NEGATIVE, -1, 0, 2, CriterionOutcome.CERTIFIED_UNSTABLE),
        (NullClass.L_NEGATIVE, -1, 1, 2, CriterionOutcome.INCONCLUSIVE),
    ])
    def test_table(self, cls, orient, flow, n, expected):
        assert instability_criterion(cls, orient, flow, n, 0.1) is expected

    def test_contract_errors(self):
        with pytest.raises(NotNonNull):
            instability_criterion(NullClass.NOT_NON_NULL, 1, 0, 2, 0.0)
        with pytest.raises(MissingTprime):
            instability_criterion(NullClass.L_POSITIVE, 1, 0, 2, None)

    def test_clm_parity_uses_given_index(self):
        path = SymplecticPath(np.array([0.0, 1.0]), np.array([np.eye(2), np.eye(2)]))
        assert clm_parity_instability(path, 3) is CriterionOutcome.CERTIFIED_UNSTABLE
        assert clm_parity_instability(path, 2) is CriterionOutcome.INCONCLUSIVE


@pytest.fixture(scope="module")
def splits():
    out = {}
    for name, opts in ALL:
        orbit = build_preset(name, **opts)
        psi = fundamental_solution(orbit)
        out[(name, tuple(opts.items()))] = (orbit, psi, splitting_reduce(orbit, psi))
    return out


class TestSplitting:
    @pytest.mark.parametrize("name, opts", ALL)
    def test_residual_and_symplectic_block(self, splits, name, opts):
        orbit, _, split = splits[(name, tuple(opts.items()))]
        assert split.residual <= 1e-6
        k = orbit.n - 1
        px = split.px1.entries
        assert px.shape == (2 * k, 2 * k)
        if k:
            j = standard_j(k)
            assert np.allclose(px.T @ j @ px, j, atol=1e-8)

    @pytest.mark.parametrize("name", ["flat_torus", "harmonic_loop", "kepler_circular", "circle_free_particle"])
    def test_gamma2_index(self, splits, name):
        _, _, split = splits[(name, ())]
        if split.px1.entries.size:
            assert clm_graph_index(split.px_path) == preset_expectations()[name]["iclm_gamma2"]

    def test_kepler_transverse_block_is_identity(self, splits):
        _, _, split = splits[("kepler_circular", ())]
        assert np.allclose(split.px1.entries, np.eye(2), atol=1e-7)

    def test_slope_is_minus_tprime(self, splits):
        for orbit, _, split in splits.values():
            assert split.gamma1_slope == pytest.approx(-orbit.tprime_h, rel=1e-8, abs=1e-10)

    def test_missing_tprime(self):
        orbit = build_preset("kepler_circular")
        with pytest.raises(MissingTprime):
            splitting_reduce(orbit.with_tprime(None), fundamental_solution(orbit))

    def test_tolerance_enforced(self, splits):
        orbit, psi, _ = splits[("kepler_circular", ())]
        with pytest.raises(SplitResidualTooLarge):
            splitting_reduce(orbit, psi, split_tol=1e-30)

    def test_no_cylinder_block(self):
        orbit = build_preset("flat_torus")
        psi = fundamental_solution(orbit)
        kicked = SymplecticPath(psi.times, psi.mats @ np.diag([2.0, 3.0, 0.5, 1 / 3.0]))
        with pytest.raises(NoCylinderBlock):
            splitting_reduce(orbit, kicked)


class TestLedger:
    @pytest.mark.parametrize("name, opts", ALL[:5])
    def test_audit_passes(self, preset_report, name, opts):
        report, _ = preset_report(name, **opts)
        ledger = parity_audit(report)
        assert ledger.ok and sum(ledger.terms) == ledger.lhs
        assert len(ledger.lines()) >= 4

    def test_tampered_report(self, preset_report):
        report, _ = preset_report("kepler_circular")
        with pytest.raises(LedgerMismatch):
            parity_audit(dataclasses.replace(report, iclm_gamma2=report.iclm_gamma2 + 1))
        assert not parity_audit(dataclasses.replace(report, igeo=report.igeo + 1), strict=False).ok

    @pytest.mark.parametrize("name, opts", ALL)
    def test_soundness(self, preset_report, name, opts):
        report, _ = preset_report(name, **opts)
        if report.criterion["theorem"] == "CertifiedUnstable":
            assert report.stability["verdict"] != "LinearlyStable"
        assert report.criterion["soundness_ok"]
