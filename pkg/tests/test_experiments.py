import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spintorus import experiments as ex
from spintorus.conformal import ConformalFactor, flat_spectrum
from spintorus.errors import SplitSearchError
from spintorus.perturbation import extract_cluster, perturbation_matrix
from spintorus.torus_dirac import build_mode_set, closed_form_spectrum


@pytest.fixture(scope="module")
def trivial_cluster():
    ms = build_mode_set(3, (0, 0, 0))
    res = flat_spectrum(ms)
    return extract_cluster(res, ms, lam=1.0)


class TestRandomFactor:
    def test_zero_amplitude(self):
        assert ex.random_factor(3, 2, 0.0).is_zero

    def test_deterministic(self):
        f1 = ex.random_factor(42, 2, 0.3)
        f2 = ex.random_factor(42, 2, 0.3)
        assert f1 == f2
        assert ex.random_factor(43, 2, 0.3) != f1

    def test_sup_norm_scaling(self):
        f = ex.random_factor(5, 2, 0.37)
        assert abs(f.sup_abs() - 0.37) < 1e-10

    def test_reality(self):
        f = ex.random_factor(6, 2, 0.5)
        flipped = np.conj(f.values[::-1, ::-1, ::-1])
        assert_allclose(f.values, flipped, atol=0)

    def test_zero_mode_statistics(self):
        # the mean coefficient is symmetric around zero: its empirical mean
        # over many seeds stays within 3 standard errors
        samples = np.array(
            [ex.random_factor(seed, 2, 1.0).mean() for seed in range(1000)]
        )
        stderr = samples.std() / np.sqrt(len(samples))
        assert abs(samples.mean()) < 3.0 * stderr

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            ex.random_factor(1, 0, 0.5)
        with pytest.raises(ValueError):
            ex.random_factor(1, 2, -0.1)


class TestCandidateOrdering:
    def test_single_frequencies_sorted_by_length(self):
        cands = list(ex.candidate_factors(1, n_random=0))
        # 13 half-space representatives with |m|_inf <= 1, cos and sin each
        assert len(cands) == 26
        first = cands[0]
        assert first.coeff((0, 0, 1)) == 0.5  # shortest representative first
        lengths = []
        for c in cands[::2]:
            support = np.argwhere(np.abs(c.values) > 0) - c.degree
            lengths.append(np.sum(support[0] ** 2))
        assert lengths == sorted(lengths)


class TestSplitSearch:
    def test_skips_zero_matrix_candidates(self, trivial_cluster):
        # cos(x1) produces P = 0 by convolution support: no in-shell mode
        # pairs differ by e_1
        rep = perturbation_matrix(trivial_cluster, ConformalFactor.cosine((1, 0, 0)))
        assert np.max(np.abs(rep.P)) < 1e-14
        # cos(2x1) couples only antipodal pairs, whose helicity spinors are
        # orthogonal: P = 0 as well
        rep2 = perturbation_matrix(trivial_cluster, ConformalFactor.cosine((2, 0, 0)))
        assert np.max(np.abs(rep2.P)) < 1e-14

    def test_certificate_for_trivial_cluster(self, trivial_cluster):
        cert = ex.split_search(trivial_cluster, 2)
        assert cert.rate_gap > 0
        assert cert.max_p_h_after < cert.p_h_before
        assert cert.p_h_before == 3
        assert sum(c[1] for c in cert.post_clusters) == 6
        assert cert.max_position_error <= 5.0 * cert.t_verify**2
        # the winning candidate is a single mixed frequency, found before any
        # random combination
        assert cert.factor_label.startswith("cos:")

    def test_precondition_simple_cluster(self):
        ms = build_mode_set(2, (1, 0, 0))
        res = flat_spectrum(ms)
        simple = extract_cluster(res, ms, lam=0.5)
        with pytest.raises(ValueError, match="simple"):
            ex.split_search(simple, 2)

    def test_exhaustion_reports_rate_table(self, trivial_cluster):
        with pytest.raises(SplitSearchError) as err:
            ex.split_search(
                trivial_cluster, 1, n_random=0, gap_threshold=1e6
            )
        assert len(err.value.rate_table) == 26

    def test_certificate_round_trip(self, trivial_cluster):
        cert = ex.split_search(trivial_cluster, 2)
        doc = cert.to_json_dict()
        back = ex.SplitCertificate.from_json_dict(json.loads(json.dumps(doc)))
        assert back.to_json_dict() == doc


class TestGenericityScan:
    def test_t_zero_reproduces_flat_multiplicities(self):
        rep = ex.genericity_scan((0, 0, 0), 4, 0.0, 2, 2, 0.3, seed=1, m_clusters=3)
        lines = [l for l in closed_form_spectrum((0, 0, 0), 2.0) if l.lam > 0][:3]
        expected = [l.mult_h for l in lines]
        for row in rep.trial_rows:
            assert row.mult_h == expected
        assert rep.fraction_all_simple == 0.0

    def test_trials_zero_empty_report(self):
        rep = ex.genericity_scan((1, 0, 0), 0, 0.05, 2, 2, 0.3, seed=1)
        assert rep.trial_rows == []
        assert rep.fraction_all_simple is None
        assert rep.pattern_counts == {}

    def test_consistency_with_split_certificate(self, trivial_cluster):
        # one trial driven by a known splitting factor actually splits
        cert = ex.split_search(trivial_cluster, 2)
        factor = ConformalFactor.from_json_dict(cert.factor)
        from spintorus.conformal import deformed_spectrum
        from spintorus.perturbation import flat_cluster_window

        ms = trivial_cluster.mode_set
        res = deformed_spectrum(factor, cert.t_verify, ms, keep_vectors=False)
        lo, hi = flat_cluster_window(ms, 1.0)
        sub = [c for c in res.clusters if lo < c.lam < hi]
        assert max(c.mult_h for c in sub) < trivial_cluster.p_h

    def test_deterministic_bytes(self):
        r1 = ex.genericity_scan((1, 0, 0), 3, 0.05, 2, 2, 0.3, seed=9)
        r2 = ex.genericity_scan((1, 0, 0), 3, 0.05, 2, 2, 0.3, seed=9, workers=2)
        b1 = json.dumps(r1.to_json_dict(), sort_keys=True).encode()
        b2 = json.dumps(r2.to_json_dict(), sort_keys=True).encode()
        assert b1 == b2

    def test_report_round_trip(self):
        rep = ex.genericity_scan((1, 0, 0), 2, 0.05, 2, 2, 0.3, seed=5)
        doc = rep.to_json_dict()
        back = ex.GenericityReport.from_json_dict(json.loads(json.dumps(doc)))
        assert back.to_json_dict() == doc

    def test_csv_rows(self):
        rep = ex.genericity_scan((1, 0, 0), 2, 0.05, 2, 2, 0.3, seed=5)
        rows = rep.csv_rows()
        assert rows[0][0] == "trial"
        assert len(rows) == 3


class TestSimplicityCertificate:
    def test_flat_shifted_passes_k1_fails_k2(self):
        f = ConformalFactor.zero()
        rep1 = ex.simplicity_certificate((1, 0, 0), f, 0.0, 1, 3)
        assert rep1.passed
        rep2 = ex.simplicity_certificate((1, 0, 0), f, 0.0, 2, 3)
        assert not rep2.passed
        assert rep2.reason == "pair"
        assert abs(rep2.offending[0] - np.sqrt(5) / 2) < 1e-9

    def test_trivial_structure_fails_kernel(self):
        f = ex.random_factor(3, 2, 0.3)
        rep = ex.simplicity_certificate((0, 0, 0), f, 0.05, 1, 2)
        assert not rep.passed
        assert rep.reason == "kernel"
        assert rep.kernel_dim == 2

    def test_generic_deformation_passes(self):
        f = ex.random_factor(12, 2, 0.3)
        rep = ex.simplicity_certificate((1, 0, 0), f, 0.05, 3, 3)
        assert rep.passed

    def test_monotone_consistency(self):
        f = ex.random_factor(12, 2, 0.3)
        passed = [
            ex.simplicity_certificate((1, 0, 0), f, 0.05, k, 3).passed
            for k in (1, 2, 3, 4)
        ]
        # once failing, stays failing as k grows
        for a, b in zip(passed, passed[1:]):
            assert a or not b

    def test_k_beyond_trust_raises(self):
        f = ConformalFactor.zero()
        with pytest.raises(ValueError, match="trust"):
            ex.simplicity_certificate((1, 0, 0), f, 0.0, 40, 2)

    def test_report_round_trip(self):
        f = ex.random_factor(12, 2, 0.3)
        rep = ex.simplicity_certificate((1, 0, 0), f, 0.05, 2, 3)
        doc = rep.to_json_dict()
        back = ex.SimplicityReport.from_json_dict(json.loads(json.dumps(doc)))
        assert back.to_json_dict() == doc


class TestScalingCovariance:
    def test_constant_shift_moves_rates_keeps_gaps(self, trivial_cluster):
        base = ex.random_factor(77, 2, 0.4)
        c = 0.25
        shifted_vals = base.values.copy()
        shifted_vals[base.degree, base.degree, base.degree] += c
        shifted = ConformalFactor(base.degree, shifted_vals)
        rep0 = perturbation_matrix(trivial_cluster, base)
        rep1 = perturbation_matrix(trivial_cluster, shifted)
        lam = trivial_cluster.lam
        assert_allclose(rep1.rates, rep0.rates - lam * c, atol=1e-12)
        assert abs(rep1.min_gap - rep0.min_gap) < 1e-12

    def test_certificate_unchanged_by_shift(self):
        f = ex.random_factor(12, 2, 0.3)
        shifted_vals = f.values.copy()
        shifted_vals[f.degree, f.degree, f.degree] += 0.2
        gshift = ConformalFactor(f.degree, shifted_vals)
        rep_a = ex.simplicity_certificate((1, 0, 0), f, 0.05, 3, 3)
        rep_b = ex.simplicity_certificate((1, 0, 0), gshift, 0.05, 3, 3)
        assert rep_a.passed == rep_b.passed
