import math

import numpy as np
import pytest

from fgwild import Dataset, breslow, cif, fit_mple, information, risk_sums, score
from fgwild.errors import EmptyRiskSet, NotConverged, NoType1Events, SingularInformation
from fgwild.estimation import log_partial_likelihood

import oracles
from conftest import random_dataset


def all_at_risk(z):
    n = len(z)
    return Dataset([10.0] * n, [0] * n, [[v] for v in z], censoring=[10.0] * n)


def symmetric_dataset():
    return Dataset([1.0, 2.0, 3.0, 3.0], [1, 1, 0, 2], [[0.5], [0.5], [0.0], [1.0]],
                   censoring=[4.0, 4.0, 3.0, 4.0])


class TestRiskSums:
    def test_two_subjects_beta_zero(self):
        r = risk_sums(all_at_risk([0.0, 1.0]), 1.0, [0.0])
        assert r.s0 == 1.0
        assert r.s1.tolist() == [0.5]
        assert r.s2.tolist() == [[0.5]]
        assert r.r.tolist() == [[0.25]]

    def test_beta_ln2(self):
        r = risk_sums(all_at_risk([1.0, 2.0, 0.0]), 1.0, [math.log(2)])
        assert r.s0 == pytest.approx(7 / 3, abs=1e-15)

    def test_fraction_at_risk(self, rng):
        ds = random_dataset(rng, 12, 2)
        for t in (0.0, 0.5, 1.0, 2.0):
            assert risk_sums(ds, t, [0, 0]).s0 == pytest.approx(ds.at_risk_count(t) / ds.n)

    def test_equal_covariates(self):
        z = np.array([0.3, -1.2])
        ds = Dataset([5.0] * 3, [0] * 3, [z] * 3, censoring=[5.0] * 3)
        r = risk_sums(ds, 1.0, [0.4, 0.1])
        np.testing.assert_allclose(r.s1, r.s0 * z)
        np.testing.assert_allclose(r.s2, r.s0 * np.outer(z, z))

    def test_empty(self):
        ds = all_at_risk([0.0])
        with pytest.raises(EmptyRiskSet):
            _ = risk_sums(ds, 11.0, [0.0]).e

    def test_matches_oracle(self, rng):
        for _ in range(5):
            ds = random_dataset(rng, 10, 2)
            beta = rng.normal(size=2)
            for t in np.linspace(0, ds.tau, 7):
                r = risk_sums(ds, t, beta)
                o = oracles.sums(ds, t, beta)
                np.testing.assert_allclose([r.s0, *r.s1, *r.s2.ravel()],
                                           [o[0], *o[1], *o[2].ravel()], rtol=1e-12, atol=1e-15)


class TestScoreInformation:
    def test_single_subject(self):
        ds = Dataset([1.0], [1], [[0.7]], censoring=[2.0])
        for b in (-1.0, 0.0, 2.0):
            assert score(ds, [b])[0] == 0.0
            assert information(ds, [b])[0, 0] == 0.0

    def test_symmetric_groups(self):
        # groups z=0 and z=1 are exchangeable around the failing z=0.5 subjects
        ds = symmetric_dataset()
        assert score(ds, [0.0])[0] == 0.0

    def test_bernoulli_half(self):
        ds = Dataset([1.0, 5.0], [1, 0], [[0.0], [1.0]], censoring=[5.0, 5.0])
        assert information(ds, [0.0])[0, 0] == 0.25

    def test_against_oracle_and_finite_differences(self, rng):
        h = 1e-6
        for _ in range(10):
            ds = random_dataset(rng, 5, 2)
            beta = rng.normal(scale=0.5, size=2)
            u = score(ds, beta)
            np.testing.assert_allclose(u, oracles.score(ds, beta), atol=1e-12)
            np.testing.assert_allclose(information(ds, beta), oracles.information(ds, beta), atol=1e-12)
            grad = [(log_partial_likelihood(ds, beta + h * e) - log_partial_likelihood(ds, beta - h * e))
                    / (2 * h) for e in np.eye(2)]
            np.testing.assert_allclose(u, grad, atol=1e-6)
            jac = np.array([(score(ds, beta + h * e) - score(ds, beta - h * e)) / (2 * h)
                            for e in np.eye(2)]).T
            np.testing.assert_allclose(information(ds, beta), -jac, atol=1e-6)

    def test_oracle_likelihoods_agree(self, rng):
        ds = random_dataset(rng, 9, 2)
        f = oracles.log_lik_function(ds)
        for beta in rng.normal(size=(5, 2)):
            assert f(beta) == pytest.approx(oracles.log_lik(ds, beta), rel=1e-13)
            assert log_partial_likelihood(ds, beta) == pytest.approx(f(beta), rel=1e-12)

    def test_partial_time(self, toy):
        # only the type-1 event at t=1 lies in [0, 2.5]
        s0, s1, _ = oracles.sums(toy, 1.0, [0.2])
        assert score(toy, [0.2], t=2.5)[0] == pytest.approx(0.0 - s1[0] / s0, abs=1e-14)
        assert score(toy, [0.2], t=0.5)[0] == 0.0

    def test_information_is_psd(self, rng):
        ds = random_dataset(rng, 12, 2)
        eig = np.linalg.eigvalsh(information(ds, [0.3, -0.2]))
        assert eig.min() >= -1e-12


class TestFit:
    def test_constant_covariate(self):
        ds = Dataset([1, 2, 3, 4], [1, 1, 0, 1], [[1.0]] * 4, censoring=[5, 5, 3, 5])
        with pytest.raises(SingularInformation):
            fit_mple(ds)

    def test_pinv_option(self):
        ds = Dataset([1, 2, 3, 4], [1, 1, 0, 1], [[1.0]] * 4, censoring=[5, 5, 3, 5])
        fit = fit_mple(ds, pinv=True)
        assert fit.beta_hat.tolist() == [0.0]

    def test_no_events(self):
        with pytest.raises(NoType1Events):
            fit_mple(Dataset([1, 2], [0, 2], [[0.0], [1.0]], censoring=[1, 3]))

    def test_exchangeable_groups(self):
        ds = Dataset([1, 1.5, 2, 2.5, 3, 3.5], [1, 1, 2, 2, 1, 1], [[0], [1], [1], [0], [0], [1]],
                     censoring=[4] * 6)
        fit = fit_mple(ds)
        assert fit.converged
        assert np.max(np.abs(fit.score)) < 1e-8

    def test_exact_symmetry(self):
        fit = fit_mple(symmetric_dataset())
        assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-8)

    def test_golden_section_oracle(self):
        ds = Dataset([0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4], [1, 2, 1, 1, 0, 1, 2, 1],
                     [[0.2], [1.0], [-0.4], [0.9], [1.5], [0.0], [-1.0], [0.3]],
                     censoring=[5, 4.5, 5, 6, 2.5, 6, 7, 8])
        fit = fit_mple(ds)
        best = oracles.golden_max(lambda b: oracles.log_lik(ds, [b]), -10, 10, 1e-11)
        assert fit.beta_hat[0] == pytest.approx(best, abs=1e-8)
        assert np.max(np.abs(fit.score)) < 1e-8

    def test_not_converged_returns_diagnostics(self, rng):
        ds = random_dataset(rng, 30, 1)
        fit = fit_mple(ds, max_iter=1, tol=1e-14)
        assert not fit.converged
        assert fit.iterations == 1
        with pytest.raises(NotConverged):
            cif(fit, [0.0])

    def test_reparameterization_invariance(self, rng):
        ds = random_dataset(rng, 20, 2)
        phi = lambda t: np.exp(t) + t**3  # noqa: E731  strictly increasing
        warped = Dataset(phi(ds.time), ds.event, ds.covariates, censoring=phi(ds.censoring))
        a, b = fit_mple(ds), fit_mple(warped)
        np.testing.assert_allclose(a.beta_hat, b.beta_hat, atol=1e-12)
        np.testing.assert_allclose(a.breslow.jumps, b.breslow.jumps, atol=1e-14)
        np.testing.assert_allclose(b.breslow.times, phi(a.breslow.times))

    def test_cox_reduction(self, rng):
        # K = 1: no competing events, so the risk set is {T_i >= t}
        for _ in range(3):
            n = 10
            time = rng.exponential(size=n)
            event = (rng.random(n) < 0.7).astype(int)
            z = rng.normal(size=(n, 1))
            ds = Dataset(time, event, z, censoring=np.where(event == 0, time, time + 5))

            def cox_loglik(b):
                total = 0.0
                for i in np.flatnonzero(event):
                    risk = time >= time[i]
                    total += z[i, 0] * b - math.log(np.sum(np.exp(z[risk, 0] * b)))
                return total

            best = oracles.golden_max(cox_loglik, -10, 10, 1e-11)
            if abs(best) > 9:
                continue
            assert fit_mple(ds).beta_hat[0] == pytest.approx(best, abs=1e-7)

    def test_to_dict(self, toy):
        d = fit_mple(toy).to_dict()
        assert set(d) >= {"beta_hat", "standard_errors", "breslow", "log_partial_likelihood"}
        assert len(d["breslow"]["times"]) == toy.n_events


class TestBreslow:
    def test_nelson_aalen(self):
        time = [0.5, 1.0, 1.7, 2.2, 3.0]
        ds = Dataset(time, [1] * 5, [[0.1], [0.4], [-1], [2], [0]], censoring=[4] * 5)
        a = breslow(ds, [0.0])
        assert a.values.tolist() == np.cumsum([1 / 5, 1 / 4, 1 / 3, 1 / 2, 1 / 1]).tolist()

    def test_zero_before_first_event(self, toy):
        assert breslow(toy, [0.3])(0.5) == 0.0

    def test_hand_example(self):
        ds = Dataset([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 2], [[5.0], [0.0], [0.0], [1.0]],
                     censoring=[1.0, 6.0, 3.0, 6.0])
        a = breslow(ds, [math.log(2)])
        assert a.jumps.tolist() == [pytest.approx(0.25, abs=1e-15)]

    def test_matches_oracle(self, rng):
        for _ in range(5):
            ds = random_dataset(rng, 10, 2)
            beta = rng.normal(size=2)
            np.testing.assert_allclose(breslow(ds, beta).jumps, oracles.breslow_jumps(ds, beta),
                                       rtol=1e-12)


class TestCif:
    def test_closed_forms(self):
        ds = Dataset([1.0, 2.0], [1, 1], [[0.0], [1.0]], censoring=[3, 3])
        fit = fit_mple(ds, pinv=True)
        f = cif(fit, [0.0])
        assert f(0.5) == 0.0
        assert f(1.0) == pytest.approx(1 - math.exp(-fit.breslow(1.0)))

    def test_half(self):
        from fgwild.estimation import gamma
        assert gamma(np.array([0.3]), math.log(2), np.array([0.0])) == pytest.approx(0.5)

    def test_monotone_in_unit_interval(self, rng):
        ds = random_dataset(rng, 40, 2)
        f = cif(fit_mple(ds), [0.5, -0.3])
        assert np.all(np.diff(f.values) >= 0)
        assert np.all((f.values >= 0) & (f.values < 1))
