import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoputs.errors import DomainError, ParameterError
from infoputs.policy import (PolicyParams, PolicyState, PutsPolicy, down, make_alternative_policy,
                             policy_step, target_drift, tol)
from infoputs.signals import PolicyDecision, SignalSplit


class TestSchedules:
    def test_tol_examples(self, exact_params):
        assert tol(exact_params, 1 / 6) == pytest.approx(1 / 60, abs=1e-12)
        assert tol(exact_params, 0.0) == 0.0
        assert tol(exact_params, 1.0) == pytest.approx(0.3, abs=1e-12)

    def test_tol_closed_form(self, exact_params):
        D = np.linspace(0.0, 1.0, 101)
        assert np.allclose(tol(exact_params, D), 3 * D * D / (6 * D + 4), atol=1e-14)

    def test_down_examples(self, params):
        assert down(params, 1 / 6) == pytest.approx(1 / 12)
        assert down(params, 0.0) == 0.0
        assert down(params, 0.4) == pytest.approx(0.2)

    def test_tol_increasing_and_bounded(self, params):
        D = np.linspace(0.0, 1.0, 2001)
        t = tol(params, D)
        assert np.all(np.diff(t) > 0)
        assert np.all(params.M * t <= D + 1e-15)

    def test_tol_domain(self, params):
        with pytest.raises(DomainError):
            tol(params, 1.5)

    def test_quadratic_rule_matches_exact(self, consts):
        exact = PolicyParams(consts)
        quad = PolicyParams(consts, tol_rule="quadratic_maintext")
        D = np.linspace(0.0, 1.0, 501)
        assert np.max(np.abs(tol(exact, D) - tol(quad, D))) <= 1e-12

    def test_quadratic_rule_with_fixed_m(self, consts):
        p = PolicyParams(consts, tol_rule="quadratic_maintext", m=0.01)
        assert tol(p, 0.5) == pytest.approx(0.0025)

    def test_schedule_violation_rejected(self, consts):
        with pytest.raises(ParameterError):
            PolicyParams(consts, tol_rule="quadratic_maintext", m=5.0)

    def test_param_validation(self, consts):
        with pytest.raises(ParameterError):
            PolicyParams(consts, eta=0.0)
        with pytest.raises(ParameterError):
            PolicyParams(consts, tol_rule="cubic")
        with pytest.raises(ParameterError):
            PolicyParams(consts, finite_delta_bar=2.0)

    def test_target_drift_examples(self):
        assert target_drift(0.0, 1.0, math.log(2)) == pytest.approx(0.5)
        assert target_drift(1.0, 3.0, 0.7) == 1.0
        assert target_drift(0.5, 1.0, 0.0) == 0.5
        with pytest.raises(DomainError):
            target_drift(0.5, 1.0, -1.0)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    def test_target_semigroup(self, z, s, t):
        assert target_drift(z, 1.0, s + t) == pytest.approx(target_drift(target_drift(z, 1.0, s), 1.0, t), abs=1e-12)


class TestBranches:
    def test_silence_on_target(self, exact_params, th):
        dec = policy_step(exact_params, th, PolicyState(0.0, 0.5, 0.0, 0.0))
        assert dec.split.label == "silence" and dec.z_update == "drift"
        assert dec.split.posteriors == (0.5,)

    def test_injection_example(self, exact_params, th):
        dec = policy_step(exact_params, th, PolicyState(0.0, 0.5, 1 / 60, 0.0))
        s = dec.split
        assert s.label == "injection" and dec.z_update == "reset_to_A"
        assert s.posteriors[0] == pytest.approx(0.5111111, abs=1e-7)
        assert s.posteriors[1] == pytest.approx(0.4166667, abs=1e-7)
        assert s.probs[0] == pytest.approx(15 / 17, abs=1e-12)
        assert s.probs[1] == pytest.approx(2 / 17, abs=1e-12)
        assert s.residual <= 1e-12

    def test_jump_example(self, params, th):
        dec = policy_step(params, th, PolicyState(0.0, 0.1, 0.7, 0.0))
        assert dec.split.label == "jump"
        assert dec.split.posteriors[0] == pytest.approx(0.3448276, abs=1e-7)
        assert dec.split.probs[0] == pytest.approx(0.29, abs=1e-12)

    def test_overshoot_also_triggers(self, exact_params, th):
        # finite play can overshoot the target; the trigger uses |A - Z|
        dec = policy_step(exact_params, th, PolicyState(0.0, 0.6, 0.0, 0.05))
        assert dec.split.label == "injection"

    def test_absorbed_and_certain_beliefs_are_silent(self, policy):
        for mu in (0.0, 1.0):
            assert policy.decide(PolicyState(0.0, mu, 0.9, 0.0)).split.label == "silence"

    def test_silent_when_escape_below_eta(self, params, th):
        p = PutsPolicy(PolicyParams(params.constants, eta=0.5), th)
        assert p.decide(PolicyState(0.0, 0.1, 0.0, 0.0)).split.label == "silence"

    @settings(max_examples=200)
    @given(mu=st.floats(0.0, 1.0), A=st.floats(0.0, 1.0), Z=st.floats(0.0, 1.0))
    def test_every_split_is_a_martingale(self, policy, mu, A, Z):
        dec = policy.decide(PolicyState(1.0, mu, Z, A))
        s = dec.split
        assert s.residual <= 1e-12
        if s.label == "injection":
            th = policy.thresholds
            up, dn = s.posteriors
            D = th.distance(mu, A)
            T = tol(policy.params, D)
            assert dn == pytest.approx(mu - D / 2, abs=1e-15)
            assert not th.in_ld(dn, A) and not th.in_ld(up, A)
            assert s.probs[0] == pytest.approx((D / 2) / (D / 2 + (up - mu)), rel=1e-12)
            assert up - mu <= policy.params.M * T + 1e-15
            assert dec.z_update == "reset_to_A"

    def test_split_batch_agrees_with_decide(self, policy):
        rng = np.random.default_rng(4)
        mu = rng.uniform(0, 1, 300)
        A = rng.uniform(0, 1, 300)
        post, prob = policy.split_batch(mu, A)
        for i in range(300):
            dec = policy.decide(PolicyState(0.0, float(mu[i]), 0.0 if A[i] > 0.5 else 1.0, float(A[i]),
                                            at_trigger=True))
            if dec.split.label == "silence":
                assert prob[i, 0] == 1.0 and post[i, 0] == mu[i]
            else:
                assert post[i] == pytest.approx(np.asarray(dec.split.posteriors, dtype=float), abs=1e-15)
                assert prob[i] == pytest.approx(np.asarray(dec.split.probs), abs=1e-15)

    def test_tolerance_levels(self, policy):
        assert policy.tolerance(0.1, 0.0) == 0.0
        assert policy.tolerance(0.0, 0.0) == math.inf
        assert policy.tolerance(0.5, 0.0) == pytest.approx(tol(policy.params, 1 / 6))


class TestAlternatives:
    def test_no_information(self, params, th):
        p = make_alternative_policy("no_information", params, th)
        for state in (PolicyState(0.0, 0.1, 0.0, 0.0), PolicyState(0.0, 0.5, 0.5, 0.0)):
            assert p.decide(state).split.label == "silence"

    def test_conclusive_bad_news_example(self, exact_params, th):
        p = make_alternative_policy("conclusive_bad_news", exact_params, th)
        s = p.decide(PolicyState(0.0, 0.5, 1 / 60, 0.0)).split
        assert s.posteriors[0] == pytest.approx(0.5111111, abs=1e-7)
        assert s.posteriors[1] == 0.0
        assert s.probs[0] == pytest.approx(0.9782609, abs=1e-7)
        assert s.residual <= 1e-12

    def test_delayed_jump(self, params, th):
        p = make_alternative_policy("delayed_jump", params, th, t_delay=1.0)
        assert p.decide(PolicyState(0.5, 0.1, 0.0, 0.0)).split.label == "silence"
        assert p.decide(PolicyState(1.0, 0.1, 0.0, 0.0)).split.label == "jump"
        with pytest.raises(ParameterError):
            make_alternative_policy("delayed_jump", params, th)

    def test_unknown_kind(self, params, th):
        with pytest.raises(ParameterError):
            make_alternative_policy("loud", params, th)


class TestSignals:
    def test_rejects_non_martingale(self):
        with pytest.raises(ParameterError):
            SignalSplit((0.6, 0.2), (0.5, 0.5), "injection", prior=0.5)

    def test_rejects_bad_probs(self):
        with pytest.raises(ParameterError):
            SignalSplit((0.6, 0.4), (0.7, 0.7), "injection")

    def test_decision_invariants(self):
        with pytest.raises(ParameterError):
            PolicyDecision(SignalSplit((0.5,), (1.0,), "silence", prior=0.5), "reset_to_A")

    def test_sample(self):
        s = SignalSplit((0.6, 0.4), (0.5, 0.5), "injection", prior=0.5)
        assert s.sample(0.1) == 0.6 and s.sample(0.9) == 0.4
