import math

import numpy as np
import pytest
from scipy import optimize, stats

from infoputs.contagion import certify_full_implementation
from infoputs.errors import ParameterError, PreconditionError, SimulationError
from infoputs.game import evaluate_functional, upper_play_path
from infoputs.policy import PolicyParams, PutsPolicy, make_policy, tol
from infoputs.simulate import (AgentProfile, History, adversarial_until, adversarial_value, band_region,
                               certified_region, compliant, concentration_experiment, estimate_multiplicity_gap,
                               make_rng, replay_events, run_trials, sample_histories, scripted,
                               sequential_optimality_audit, simulate_continuum, simulate_finite, trial_rngs,
                               upper_region, worker_count)


@pytest.fixture(scope="module")
def cert(g1, params, th):
    return certify_full_implementation(g1, params, th)


def _square(x):
    return x * x


class TestProfiles:
    def test_validation(self):
        with pytest.raises(ParameterError):
            AgentProfile("lazy")
        with pytest.raises(ParameterError):
            AgentProfile("adversarial_until")
        with pytest.raises(ParameterError):
            scripted([(1.0, 0.5)])

    def test_scripted_windows(self):
        p = scripted([(1.0, 2.0)])
        assert list(p.deviating(np.array([0.5, 1.5, 2.0]), 0.5, np.zeros(3))) == [False, True, False]

    def test_regions(self, th):
        up = upper_region(th)
        assert up(0.51, 0.0) and not up(0.5, 0.0)
        cr = certified_region(th, 1e-3)
        assert cr(1 / 3 + 2e-3, 0.0) and not cr(1 / 3 + 5e-4, 0.0)
        assert band_region(th, 100)(1 / 3 + 0.11, 0.0) and not band_region(th, 100)(1 / 3 + 0.09, 0.0)


class TestRng:
    def test_streams_reproducible(self):
        a = [r.random() for r in trial_rngs(7, 3)]
        b = [r.random() for r in trial_rngs(7, 3)]
        assert a == b and len(set(a)) == 3
        assert make_rng(1).random() == make_rng(1).random()

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv("PUTS_WORKERS", "1")
        assert worker_count() == 1
        monkeypatch.setenv("PUTS_WORKERS", "many")
        with pytest.raises(ParameterError):
            worker_count()

    def test_run_trials_serial(self):
        assert run_trials(_square, [(2,), (3,)], workers=1) == [4, 9]


class TestContinuum:
    def test_compliant_certified_start(self, g1, policy, phi):
        tr = simulate_continuum(g1, policy, 0.5, 0.0, compliant(), 10.0, seed=0)
        assert tr.count("injection") == 0 and tr.count("jump") == 0
        s = np.linspace(0, 10, 37)
        assert np.allclose(tr.A_at(s), upper_play_path(0.0, 1.0, s), atol=1e-14)
        assert evaluate_functional(phi, tr) == pytest.approx(0.5, abs=1e-9)

    def test_first_injection_time(self, g1, exact_policy):
        tr = simulate_continuum(g1, exact_policy, 0.5, 0.0, adversarial_until(upper_region(exact_policy.thresholds)),
                                10.0, seed=3)
        i = tr.kind.index("injection")
        # independent oracle: A stays at 0 under dA = -lam A, Z_t = 1 - e^{-t}, TOL(1/6) = 1/60
        t_star = optimize.brentq(lambda t: (1 - math.exp(-t)) - 0.0 - 1 / 60, 0.0, 1.0, xtol=1e-15)
        assert tr.t[i] == pytest.approx(t_star, abs=1e-9)
        assert tr.mu[i] == pytest.approx(0.5111111, abs=1e-7) or tr.mu[i] == pytest.approx(0.4166667, abs=1e-7)
        assert replay_events(tr, exact_policy) >= 1

    def test_time_zero_jump_and_absorption(self, g1, policy):
        tr = simulate_continuum(g1, policy, 0.1, 0.3, compliant(), 3.0, seed=2)
        assert tr.kind[1] == "jump" and tr.t[1] == 0.0
        post = tr.mu[1]
        if post == 0.0:
            s = np.linspace(0, 3, 11)
            assert np.allclose(tr.A_at(s), 0.3 * np.exp(-s), atol=1e-14)
        else:
            assert not policy.thresholds.in_ld(post, 0.3)

    def test_jump_frequency(self, g1, policy):
        n = 5000
        ups = sum(simulate_continuum(g1, policy, 0.1, 0.0, compliant(), 1e-3, rng=r).mu[1] > 0.3
                  for r in trial_rngs(11, n))
        se = math.sqrt(0.29 * 0.71 / n)
        assert abs(ups / n - 0.29) <= 3 * se

    @pytest.mark.slow
    def test_jump_frequency_1e5(self, g1, policy):
        n = 100_000
        ups = sum(simulate_continuum(g1, policy, 0.1, 0.0, compliant(), 1e-3, rng=r).mu[1] > 0.3
                  for r in trial_rngs(12, n))
        assert abs(ups / n - 0.29) <= 3 * math.sqrt(0.29 * 0.71 / n)

    def test_determinism_and_replay(self, g1, policy):
        prof = adversarial_until(certified_region(policy.thresholds, 1e-3))
        for seed in range(6):
            a = simulate_continuum(g1, policy, 0.45, 0.1, prof, 6.0, seed=seed)
            b = simulate_continuum(g1, policy, 0.45, 0.1, prof, 6.0, seed=seed)
            assert a.t == b.t and a.mu == b.mu and a.A == b.A
            replay_events(a, policy)

    def test_replay_detects_tampering(self, g1, exact_policy):
        tr = simulate_continuum(g1, exact_policy, 0.5, 0.0, adversarial_until(upper_region(exact_policy.thresholds)),
                                2.0, seed=3)
        i = tr.kind.index("injection")
        tr.mu[i] = 0.47
        with pytest.raises(SimulationError):
            replay_events(tr, exact_policy)

    def test_flow_ode_step_halving(self, g1, policy):
        tr = simulate_continuum(g1, policy, 0.45, 0.2, scripted([(0.3, 1.2)]), 3.0, seed=1)
        t_ev = np.asarray(tr.t)
        s = 0.8 if not np.any(np.abs(t_ev - 0.8) < 0.05) else 0.75
        i = int(np.searchsorted(t_ev, s, side="right") - 1)
        flow = tr.flow[i]
        a = lambda x: float(tr.A_at(x)[0])
        rhs = (1.0 - a(s)) if flow == "up" else (-a(s) if flow == "down" else 0.0)
        # one Euler step from s has local error O(h^2)
        errs = [abs(a(s + h) - (a(s) + h * rhs)) for h in (0.02, 0.01)]
        assert errs[1] < errs[0] / 3.5

    def test_bad_inputs(self, g1, policy):
        with pytest.raises(ParameterError):
            simulate_continuum(g1, policy, 0.5, 0.0, compliant(), math.inf)
        with pytest.raises(ParameterError):
            simulate_continuum(g1, policy, 0.5, 1.5, compliant(), 1.0)

    def test_no_information_never_signals(self, g1, alt):
        tr = simulate_continuum(g1, alt("no_information"), 0.1, 0.0, compliant(), 5.0, seed=0)
        assert tr.count("jump") == 0 and tr.count("injection") == 0

    def test_delayed_jump_waits(self, g1, alt):
        tr = simulate_continuum(g1, alt("delayed_jump", t_delay=1.0), 0.1, 0.0, compliant(), 5.0, seed=0)
        j = tr.kind.index("jump")
        assert tr.t[j] == pytest.approx(1.0)


class TestFinite:
    def test_compliant_concentrates(self, g1, policy):
        ok = 0
        for r in trial_rngs(5, 1000):
            tr = simulate_finite(g1, policy, 1000, 0.5, 0.0, compliant(), 10.0, rng=r, record_ticks=False)
            ok += abs(tr.A[-1] - upper_play_path(0.0, 1.0, 10.0)) <= 0.05
        assert ok >= 990

    def test_single_agent_one_step(self, g1, alt):
        pol = alt("no_information")
        times = []
        for r in trial_rngs(6, 400):
            tr = simulate_finite(g1, pol, 1, 0.5, 0.0, compliant(), 50.0, rng=r)
            steps = [i for i in range(1, len(tr)) if tr.A[i] != tr.A[i - 1]]
            assert len(steps) == 1 and tr.A[steps[0]] == 1.0
            times.append(tr.t[steps[0]])
        assert stats.kstest(times, "expon").pvalue > 1e-3

    def test_increments_are_one_over_N(self, g1, policy):
        N = 50
        tr = simulate_finite(g1, policy, N, 0.45, 0.2, adversarial_until(band_region(policy.thresholds, N)), 4.0,
                             seed=9)
        A = np.asarray(tr.A)
        steps = np.abs(np.diff(A))
        steps = steps[steps > 0]
        assert np.allclose(steps * N, 1.0, atol=1e-9)
        assert np.allclose(A * N, np.round(A * N), atol=1e-9)
        replay_events(tr, policy)

    def test_injection_frequency_falls_with_N(self, g1, policy):
        means = []
        for N, trials in ((100, 60), (1000, 60), (10000, 20)):
            n = [simulate_finite(g1, policy, N, 0.5, 0.0, compliant(), 10.0, rng=r, record_ticks=False)
                 .count("injection") for r in trial_rngs(N, trials)]
            means.append(np.mean(n))
        assert means[0] > 0
        assert means[0] > means[1] >= means[2]

    def test_initial_actions(self, g1, policy):
        with pytest.raises(ParameterError):
            simulate_finite(g1, policy, 3, 0.5, 0.5, compliant(), 1.0, seed=0)
        tr = simulate_finite(g1, policy, 4, 0.5, 0.0, compliant(), 1.0, seed=0, initial_actions=[1, 0, 1, 0])
        assert tr.A[0] == 0.5
        with pytest.raises(ParameterError):
            simulate_finite(g1, policy, 0, 0.5, 0.0, compliant(), 1.0, seed=0)


class TestConcentration:
    def test_small(self):
        out = concentration_experiment(1.0, 0.0, 1000, 0.1, 200, 0)
        assert out["bound"] == 1.0
        assert 0.0 <= out["empirical"] <= 1.0
        assert 0 < out["median_sup"] < 0.1

    def test_needs_trials(self):
        with pytest.raises(ParameterError):
            concentration_experiment(1.0, 0.0, 100, 0.5, 10, 0)


class TestAdversarialValue:
    def test_analytic(self, g1, policy, phi, cert):
        assert adversarial_value(g1, policy, 0.5, 0.0, phi, certificate=cert) == pytest.approx(0.5, abs=1e-12)
        assert adversarial_value(g1, policy, 0.1, 0.0, phi, certificate=cert) == pytest.approx(0.145, abs=1e-12)
        assert adversarial_value(g1, policy, 0.0, 0.6, phi, certificate=cert) == pytest.approx(0.3, abs=1e-12)

    def test_eta_limit(self, g1, th, consts, phi, cert):
        vals = [adversarial_value(g1, PutsPolicy(PolicyParams(consts, eta=e), th), 0.1, 0.0, phi, certificate=cert)
                for e in (1e-2, 1e-3, 1e-4)]
        assert vals == pytest.approx([0.145, 0.1495, 0.14995], abs=1e-12)
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_refusals(self, g1, policy, alt, phi, cert):
        with pytest.raises(PreconditionError):
            adversarial_value(g1, policy, 0.5, 0.0, phi)
        with pytest.raises(PreconditionError):
            adversarial_value(g1, alt("no_information"), 0.5, 0.0, phi, certificate=cert)
        with pytest.raises(PreconditionError):
            adversarial_value(g1, policy, 1 / 3 + 5e-4, 0.0, phi, certificate=cert)
        with pytest.raises(ParameterError):
            adversarial_value(g1, policy, 0.5, 0.0, phi, mode="oracle", certificate=cert)

    def test_monte_carlo_small(self, g1, policy, phi):
        out = adversarial_value(g1, policy, 0.1, 0.0, phi, mode="monte_carlo", trials=3000, seed=1)
        assert abs(out["mean"] - 0.145) <= 3 * out["se"]


class TestAudit:
    def test_post_injection_gap_zero(self, g1, exact_policy, phi):
        h = History(0.1, 0.4166667, 0.0, 0.0, 0.4166667, "post-injection")
        rep = sequential_optimality_audit(g1, exact_policy, [h], phi)
        assert rep.max_gap == pytest.approx(0.0, abs=1e-6) and rep.passed

    def test_inside_gap_bounded(self, g1, policy, phi):
        h = History(0.0, 0.1, 0.0, 0.0, 0.1, "on-path")
        rep = sequential_optimality_audit(g1, policy, [h], phi)
        assert rep.max_gap_inside == pytest.approx(0.01 * 0.5, abs=1e-12)
        assert rep.passed

    def test_conclusive_bad_news_fails(self, g1, alt, phi):
        cbn = alt("conclusive_bad_news")
        hist = sample_histories(g1, cbn, 300, seed=4)
        rep = sequential_optimality_audit(g1, cbn, hist, phi)
        assert not rep.passed
        absorbed = [g for h, g in zip(rep.histories, rep.gaps) if h.mu_post == 0.0 and h.source == "injection"]
        assert absorbed and max(absorbed) >= 0.4

    def test_puts_passes_on_samples(self, g1, policy, phi):
        hist = sample_histories(g1, policy, 300, seed=2)
        rep = sequential_optimality_audit(g1, policy, hist, phi)
        assert rep.passed, rep.summary()
        assert rep.max_gap_outside <= 1e-6
        assert rep.min_gap >= -1e-8


class TestMultiplicityGap:
    def test_certified_start_has_no_gap(self, g1, policy, phi):
        out = estimate_multiplicity_gap(g1, policy, 1000, 0.5, 0.0, phi, 40, 3)
        assert abs(out["gap"]) <= 3 * out["gap_se"] + 1e-12
