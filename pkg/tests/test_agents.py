import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from iesc.agents import (
    Categorical,
    Event,
    ExploreExploitDescriptor,
    PopulationKnowledge,
    UniformInterval,
    UnitPrior,
    conditional_gain,
    conditional_mean,
    event_prob_xi,
    prior_mean,
    respond,
    subtype,
    unit_type,
    verify_bic_mc,
)

POINT_QUARTER = UniformInterval(0.25, 0.25)
UNIT = UniformInterval(0.0, 1.0)
B1_PRIOR = UnitPrior((POINT_QUARTER, UNIT))
TWO_POINT = Categorical((-2.0, -1.0, 0.0, 1.0, 2.0), (0.25, 0.0, 0.0, 0.0, 0.75))


def _b1_benefit(L, C=0.125, mu0=0.25):
    """Closed form of E[(y0 - y1) 1{rec = 0}] for control fixed at mu0, y1 ~ U[0, 1]."""
    t = mu0 - C
    exploit = mu0 * t - t**2 / 2
    return (1 / L) * (mu0 - 0.5) + (1 - 1 / L) * exploit


class TestMarginals:
    @pytest.mark.parametrize("marg, expected", [
        (UniformInterval(0.0, 0.5), 0.25),
        (Categorical((-2.0, 2.0), (0.25, 0.75)), 1.0),
        (UniformInterval(0.3, 0.3), 0.3),
        (Categorical((0.7,), (1.0,)), 0.7),
    ])
    def test_mean(self, marg, expected):
        assert marg.mean == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("lo, hi", [(1.0, 0.0), (0.0, math.inf), (math.nan, 1.0)])
    def test_uniform_rejects_bad_bounds(self, lo, hi):
        with pytest.raises(ValueError):
            UniformInterval(lo, hi)

    @pytest.mark.parametrize("values, probs", [
        ((0.0, 1.0), (0.5, 0.6)),
        ((0.0, 1.0), (-0.1, 1.1)),
        ((0.0,), (0.5, 0.5)),
        ((), ()),
    ])
    def test_categorical_rejects_bad_probs(self, values, probs):
        with pytest.raises(ValueError):
            Categorical(values, probs)

    @given(lo=st.floats(-5, 5), width=st.floats(0.01, 5), x=st.floats(-10, 10))
    def test_uniform_cdf_matches_scipy(self, lo, width, x):
        assert UniformInterval(lo, lo + width).cdf(x) == pytest.approx(
            stats.uniform(lo, width).cdf(x), abs=1e-12)

    def test_point_mass_cdf(self):
        assert POINT_QUARTER.cdf(0.25) == 1.0
        assert POINT_QUARTER.cdf(0.2) == 0.0

    def test_truncated_means(self):
        assert UNIT.truncated_mean(upper=0.5) == pytest.approx(0.25)
        assert TWO_POINT.truncated_mean(upper=-1.0) == pytest.approx(-2.0)

    def test_truncated_mean_zero_mass(self):
        with pytest.raises(ValueError):
            UNIT.truncated_mean(lower=2.0)
        with pytest.raises(ValueError):
            TWO_POINT.truncated_mean(lower=-0.5, upper=0.5)

    def test_sampling_matches_moments(self):
        rng = np.random.default_rng(0)
        draws = TWO_POINT.sample(rng, 100_000)
        assert set(np.unique(draws)) == {-2.0, 2.0}
        assert draws.mean() == pytest.approx(1.0, abs=0.03)


class TestUnitPrior:
    def test_needs_two_arms(self):
        with pytest.raises(ValueError):
            UnitPrior((UNIT,))

    def test_rejects_unknown_family(self):
        with pytest.raises(TypeError):
            UnitPrior((UNIT, stats.norm()))

    def test_sample_shape(self):
        out = B1_PRIOR.sample(np.random.default_rng(1), 7)
        assert out.shape == (7, 2)
        assert np.all(out[:, 0] == 0.25)

    def test_joint_sampler_shape_checked(self):
        bad = UnitPrior((UNIT, UNIT), joint_sampler=lambda rng, n: np.zeros((n, 3)))
        with pytest.raises(ValueError):
            bad.sample(np.random.default_rng(0), 4)

    def test_knowledge_validation(self):
        with pytest.raises(ValueError):
            PopulationKnowledge(0.6, 0.4, {}, 0.1)
        with pytest.raises(ValueError):
            PopulationKnowledge(0.4, 0.6, {(0, 1): (0.5, 0.1)}, 0.1)
        kn = PopulationKnowledge(0.4, 0.6, {(0, 1): (0.1, 0.5)}, 0.1)
        assert (kn.mu_lower(0, 1), kn.mu_upper(0, 1)) == (0.1, 0.5)


class TestTypes:
    def test_b1_type(self):
        assert unit_type(B1_PRIOR) == 1
        assert prior_mean(B1_PRIOR, 0) == 0.25

    def test_tie_goes_to_zero(self):
        assert unit_type(UnitPrior((UNIT, UNIT))) == 0

    def test_three_arm_subtype(self):
        prior = UnitPrior(tuple(UniformInterval(m, m) for m in (0.1, 0.9, 0.5)))
        assert subtype(prior) == (1, 2, 0)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=6))
    def test_subtype_is_sorted_permutation(self, means):
        prior = UnitPrior(tuple(UniformInterval(m, m) for m in means))
        tau = subtype(prior)
        assert sorted(tau) == list(range(len(means)))
        ordered = [means[d] for d in tau]
        assert ordered == sorted(ordered, reverse=True)


class TestEventProb:
    @pytest.mark.parametrize("C, expected", [(0.1, 0.15), (0.125, 0.125), (0.25, 0.0), (0.5, 0.0)])
    def test_b1_values(self, C, expected):
        assert event_prob_xi(B1_PRIOR, C) == pytest.approx(expected, abs=1e-15)

    def test_categorical_cdf_lookup(self):
        shifted = UnitPrior((UniformInterval(-0.5, -0.5), TWO_POINT))
        assert event_prob_xi(shifted, 0.5) == pytest.approx(0.25)

    def test_slack_loosens(self):
        assert event_prob_xi(B1_PRIOR, 0.1, slack=0.05) == pytest.approx(0.2)

    @pytest.mark.parametrize("C", [0.0, 1.0, -0.1])
    def test_rejects_bad_C(self, C):
        with pytest.raises(ValueError):
            event_prob_xi(B1_PRIOR, C)

    def test_monte_carlo_agrees_with_analytic(self):
        joint = UnitPrior((POINT_QUARTER, UNIT), joint_sampler=lambda rng, n: B1_PRIOR.sample(rng, n))
        p, hw = event_prob_xi(joint, 0.1, rng=np.random.default_rng(3), full_output=True)
        assert hw > 0
        assert abs(p - 0.15) <= 3 * hw

    def test_non_increasing_in_C(self):
        vals = [event_prob_xi(B1_PRIOR, C) for C in np.linspace(0.01, 0.99, 50)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestConditional:
    def test_truncated_categorical(self):
        prior = UnitPrior((POINT_QUARTER, TWO_POINT))
        assert conditional_mean(prior, 1, Event(1, upper=-1.0)) == pytest.approx(-2.0)

    def test_unconditional_gain(self):
        assert conditional_gain(B1_PRIOR, 0, 1, Event(1)) == pytest.approx(0.25)

    def test_uniform_truncation(self):
        assert conditional_mean(B1_PRIOR, 1, Event(1, upper=0.5)) == pytest.approx(0.25)

    def test_independent_arm_unchanged(self):
        prior = UnitPrior((UniformInterval(0.0, 0.4), UNIT))
        assert conditional_mean(prior, 0, Event(1, upper=0.5)) == pytest.approx(0.2)

    def test_zero_probability_event(self):
        with pytest.raises(ValueError):
            conditional_mean(B1_PRIOR, 0, Event(1, lower=3.0))

    def test_joint_sampler_path(self):
        def sampler(rng, n):
            x = rng.uniform(size=n)
            return np.column_stack([x, x])
        prior = UnitPrior((UNIT, UNIT), joint_sampler=sampler)
        val = conditional_mean(prior, 0, Event(1, upper=0.5), rng=np.random.default_rng(0))
        assert val == pytest.approx(0.25, abs=0.01)
        assert conditional_gain(prior, 0, 1, Event(1), rng=np.random.default_rng(0)) == 0.0


class TestVerifyBic:
    @pytest.mark.parametrize("L", [2, 5, 12, 17, 40])
    def test_matches_closed_form(self, L):
        desc = ExploreExploitDescriptor(L, 0.125, 0.25)
        est, hw = verify_bic_mc(desc, B1_PRIOR, 0, 200_000, np.random.default_rng(L))
        assert abs(est - _b1_benefit(L)) <= max(4 * hw, 1e-4)

    def test_sized_L_is_compliant(self):
        desc = ExploreExploitDescriptor(17, 0.125, 0.25)
        est, _ = verify_bic_mc(desc, B1_PRIOR, 0, 100_000, np.random.default_rng(0))
        assert est >= -0.005

    def test_small_L_is_not(self):
        desc = ExploreExploitDescriptor(2, 0.125, 0.25)
        est, _ = verify_bic_mc(desc, B1_PRIOR, 0, 100_000, np.random.default_rng(0))
        assert est <= -0.01

    def test_exploit_only_is_favorable(self):
        desc = ExploreExploitDescriptor(math.inf, 0.125, 0.25)
        est, _ = verify_bic_mc(desc, B1_PRIOR, 0, 100_000, np.random.default_rng(0))
        assert est >= 0

    def test_never_recommended(self):
        desc = ExploreExploitDescriptor(math.inf, 0.9, 0.25)
        with pytest.warns(RuntimeWarning):
            est, hw = verify_bic_mc(desc, B1_PRIOR, 0, 1000, np.random.default_rng(0))
        assert est == 0.0 and math.isnan(hw)

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            verify_bic_mc(ExploreExploitDescriptor(2, 0.1, 0.25), B1_PRIOR, 0, 10,
                          np.random.default_rng(0))

    def test_descriptor_rejects_L_below_one(self):
        with pytest.raises(ValueError):
            ExploreExploitDescriptor(0.5, 0.1, 0.25)


class TestRespond:
    @pytest.mark.parametrize("rec", [0, 1])
    def test_trusting_follows(self, rec):
        assert respond(B1_PRIOR, rec) == rec

    def test_no_recommendation_self_selects(self):
        assert respond(B1_PRIOR, None) == 1

    def test_rational_follows_when_compliant(self):
        desc = ExploreExploitDescriptor(17, 0.125, 0.25)
        assert respond(B1_PRIOR, 0, desc, "rational", rng=np.random.default_rng(0)) == 0

    def test_rational_deviates_when_not(self):
        prior = UnitPrior((UniformInterval(0.0, 0.5), UniformInterval(-0.25, 2.35)))
        desc = ExploreExploitDescriptor(2, 0.125, 0.0)
        assert respond(prior, 0, desc, "rational", rng=np.random.default_rng(0)) == 1

    def test_rational_needs_descriptor(self):
        with pytest.raises(ValueError):
            respond(B1_PRIOR, 0, mode="rational")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            respond(B1_PRIOR, 0, mode="greedy")

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 60))
    def test_rational_agrees_with_closed_form_sign(self, L):
        expected = _b1_benefit(L)
        if abs(expected) < 0.02:
            return
        desc = ExploreExploitDescriptor(L, 0.125, 0.25)
        d = respond(B1_PRIOR, 0, desc, "rational", mc_tolerance=0.0, samples=20_000,
                    rng=np.random.default_rng(L))
        assert d == (0 if expected > 0 else 1)
