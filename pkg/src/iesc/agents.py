"""Unit beliefs, types, event probabilities and Bayesian responses.

A unit's belief is a distribution over its average post outcome under each
intervention.  Marginals are either :class:`Categorical` or
:class:`UniformInterval`; the joint is their independent product unless a
custom sampler is supplied.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._validation import check_probability

__all__ = [
    "Categorical",
    "UniformInterval",
    "UnitPrior",
    "PopulationKnowledge",
    "Event",
    "ExploreExploitDescriptor",
    "prior_mean",
    "unit_type",
    "subtype",
    "event_prob_xi",
    "conditional_mean",
    "conditional_gain",
    "respond",
    "verify_bic_mc",
]

_TOL = 1e-12
Z975 = 1.959963984540054


@dataclass(frozen=True)
class Categorical:
    """Finite distribution on ``values`` with probabilities ``probs``."""

    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise ValueError("values and probs must be equal-length 1-d sequences")
        if np.any(p < 0) or abs(p.sum() - 1.0) > _TOL * max(1, v.size):
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "values", tuple(v.tolist()))
        object.__setattr__(self, "probs", tuple(p.tolist()))

    @property
    def mean(self):
        return math.fsum(x * p for x, p in zip(self.values, self.probs))

    def prob(self, lower=-math.inf, upper=math.inf):
        """``Pr[lower <= X <= upper]`` with a small tolerance at the ends."""
        return math.fsum(
            p for x, p in zip(self.values, self.probs)
            if lower - _TOL <= x <= upper + _TOL
        )

    def cdf(self, x):
        return self.prob(upper=x)

    def truncated_mean(self, lower=-math.inf, upper=math.inf):
        mass = self.prob(lower, upper)
        if mass <= 0:
            raise ValueError("conditioning event has probability zero")
        num = math.fsum(
            x * p for x, p in zip(self.values, self.probs)
            if lower - _TOL <= x <= upper + _TOL
        )
        return num / mass

    def sample(self, rng, size):
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))


@dataclass(frozen=True)
class UniformInterval:
    """Uniform distribution on ``[lo, hi]``; ``lo == hi`` is a point mass."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"need finite lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def prob(self, lower=-math.inf, upper=math.inf):
        if self.lo == self.hi:
            return 1.0 if lower - _TOL <= self.lo <= upper + _TOL else 0.0
        a, b = max(lower, self.lo), min(upper, self.hi)
        return max(0.0, (b - a) / (self.hi - self.lo))

    def cdf(self, x):
        return self.prob(upper=x)

    def truncated_mean(self, lower=-math.inf, upper=math.inf):
        if self.prob(lower, upper) <= 0:
            raise ValueError("conditioning event has probability zero")
        if self.lo == self.hi:
            return self.lo
        return 0.5 * (max(lower, self.lo) + min(upper, self.hi))

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size=size)


@dataclass(frozen=True)
class Event:
    """Threshold event ``lower <= ybar^(d) <= upper`` on one marginal."""

    d: int
    lower: float = -math.inf
    upper: float = math.inf


@dataclass(frozen=True)
class UnitPrior:
    """Belief over average post outcomes, one marginal per intervention.

    Parameters
    ----------
    marginals : sequence of Categorical or UniformInterval
    joint_sampler : callable, optional
        ``joint_sampler(rng, size)`` returning an array of shape
        ``(size, k)``. When given, it replaces the independent product for
        every Monte-Carlo computation.
    """

    marginals: Tuple[object, ...]
    joint_sampler: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        marg = tuple(self.marginals)
        if len(marg) < 2:
            raise ValueError("a prior needs at least two interventions")
        for m in marg:
            if not isinstance(m, (Categorical, UniformInterval)):
                raise TypeError(f"unsupported marginal family {type(m).__name__}")
        object.__setattr__(self, "marginals", marg)

    @property
    def k(self):
        return len(self.marginals)

    @property
    def means(self):
        return np.array([m.mean for m in self.marginals])

    def sample(self, rng, size):
        if self.joint_sampler is not None:
            out = np.asarray(self.joint_sampler(rng, size), dtype=float)
            if out.shape != (size, self.k):
                raise ValueError("joint_sampler returned the wrong shape")
            return out
        return np.column_stack([m.sample(rng, size) for m in self.marginals])


@dataclass(frozen=True)
class PopulationKnowledge:
    """Population-level facts the principal is assumed to know.

    Attributes
    ----------
    p_L, p_H : float
        Bounds on the fraction of the needed type among arrivals.
    mu_bounds : mapping
        ``(d, tau) -> (lower, upper)`` bounds on prior means.
    zeta_C : float
        Lower bound on the probability of the exploit event.
    N0_required : int
    C : float
    """

    p_L: float
    p_H: float
    mu_bounds: Mapping[Tuple[int, object], Tuple[float, float]]
    zeta_C: float
    N0_required: int = 1
    C: float = 0.125

    def __post_init__(self):
        if not 0 < self.p_L <= self.p_H < 1:
            raise ValueError("need 0 < p_L <= p_H < 1")
        check_probability(self.zeta_C, "zeta_C", open_high=False)
        for key, (lo, hi) in self.mu_bounds.items():
            if lo > hi:
                raise ValueError(f"mu_bounds[{key}] has lower > upper")

    def mu_lower(self, d, tau):
        return self.mu_bounds[(d, tau)][0]

    def mu_upper(self, d, tau):
        return self.mu_bounds[(d, tau)][1]


def prior_mean(prior, d):
    """Exact prior mean of ``ybar^(d)``."""
    return float(prior.marginals[d].mean)


def subtype(prior):
    """Interventions sorted by descending prior mean, ties to lower index."""
    means = prior.means
    return tuple(sorted(range(prior.k), key=lambda d: (-means[d], d)))


def unit_type(prior):
    """Intervention with the largest prior mean."""
    return subtype(prior)[0]


def _mc_probability(hits):
    n = hits.size
    p = float(hits.mean())
    return p, Z975 * math.sqrt(max(p * (1 - p), 0.0) / n)


def event_prob_xi(prior, C, slack=0.0, control=0, treatment=1, samples=100_000,
                  rng=None, full_output=False):
    """Probability that the exploit branch recommends ``control``.

    Computes ``Pr[ybar^(treatment) <= mu^(control) - C + slack]``.
    Analytic for the supported marginals; Monte Carlo when a joint sampler
    is attached. With ``full_output`` a ``(p, halfwidth)`` pair is returned,
    the half-width being 0 for analytic results.
    """
    if not 0 < C < 1:
        raise ValueError("C must lie in (0, 1)")
    if slack < 0:
        raise ValueError("slack must be non-negative")
    thresh = prior_mean(prior, control) - C + slack
    if prior.joint_sampler is None:
        p, hw = float(prior.marginals[treatment].cdf(thresh)), 0.0
    else:
        rng = np.random.default_rng() if rng is None else rng
        draws = prior.sample(rng, samples)
        p, hw = _mc_probability(draws[:, treatment] <= thresh)
    p = min(1.0, max(0.0, p))
    return (p, hw) if full_output else p


def conditional_mean(prior, d, event, samples=100_000, rng=None):
    """``E[ybar^(d) | event]``."""
    if prior.joint_sampler is None:
        if d == event.d:
            return float(prior.marginals[d].truncated_mean(event.lower, event.upper))
        if prior.marginals[event.d].prob(event.lower, event.upper) <= 0:
            raise ValueError("conditioning event has probability zero")
        return prior_mean(prior, d)
    rng = np.random.default_rng() if rng is None else rng
    draws = prior.sample(rng, samples)
    col = draws[:, event.d]
    mask = (col >= event.lower) & (col <= event.upper)
    if not mask.any():
        raise ValueError("conditioning event has probability zero")
    return float(draws[mask, d].mean())


def conditional_gain(prior, d_from, d_to, event, samples=100_000, rng=None):
    """``E[ybar^(d_to) - ybar^(d_from) | event]``."""
    if prior.joint_sampler is not None:
        rng = np.random.default_rng() if rng is None else rng
        draws = prior.sample(rng, samples)
        col = draws[:, event.d]
        mask = (col >= event.lower) & (col <= event.upper)
        if not mask.any():
            raise ValueError("conditioning event has probability zero")
        return float(np.mean(draws[mask, d_to] - draws[mask, d_from]))
    return conditional_mean(prior, d_to, event) - conditional_mean(prior, d_from, event)


@dataclass(frozen=True)
class ExploreExploitDescriptor:
    """Published randomization of the two-intervention batch policy.

    With probability ``1/L`` a unit is the batch's explore unit and is sent
    to ``explore_arm``. Otherwise the exploit rule recommends ``explore_arm``
    iff ``mu_control_lower - estimate >= C`` where ``estimate`` is the
    unit's true treatment outcome plus optional Gaussian estimation noise.
    ``L = inf`` disables exploration.
    """

    L: float
    C: float
    mu_control_lower: float
    explore_arm: int = 0
    other_arm: int = 1
    estimate_noise: float = 0.0

    def __post_init__(self):
        if not self.L >= 1:
            raise ValueError("L must be at least 1")

    def recommend(self, worlds, rng):
        """Vectorized recommendation for sampled worlds of shape (N, k)."""
        n = worlds.shape[0]
        explore = rng.random(n) < (0.0 if math.isinf(self.L) else 1.0 / self.L)
        est = worlds[:, self.other_arm]
        if self.estimate_noise > 0:
            est = est + rng.normal(0.0, self.estimate_noise, size=n)
        exploit_to_explore_arm = self.mu_control_lower - est >= self.C
        to_explore_arm = explore | exploit_to_explore_arm
        return np.where(to_explore_arm, self.explore_arm, self.other_arm)


def verify_bic_mc(descriptor, prior, d, samples, rng):
    """Monte-Carlo check of incentive compatibility for recommendation ``d``.

    Estimates ``min_{d'} E[(ybar^(d) - ybar^(d')) 1{dhat = d}]`` over worlds
    drawn from the prior and the descriptor's randomization.

    Returns
    -------
    estimate : float
    halfwidth : float
        Normal-approximation 95% half-width; ``nan`` when ``d`` was never
        recommended, in which case the estimate is 0.
    """
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    worlds = prior.sample(rng, samples)
    rec = descriptor.recommend(worlds, rng)
    hit = rec == d
    if not hit.any():
        warnings.warn(f"recommendation {d} never issued in {samples} draws", RuntimeWarning,
                      stacklevel=2)
        return 0.0, math.nan
    best = None
    for alt in range(prior.k):
        if alt == d:
            continue
        vals = np.where(hit, worlds[:, d] - worlds[:, alt], 0.0)
        est = float(vals.mean())
        hw = Z975 * float(vals.std(ddof=1)) / math.sqrt(samples)
        if best is None or est < best[0]:
            best = (est, hw)
    return best


def respond(prior, recommendation, descriptor=None, mode="trusting", mc_tolerance=0.01,
            samples=100_000, rng=None):
    """Intervention a unit takes after seeing ``recommendation``.

    ``None`` as a recommendation means the unit self-selects its type.
    Trusting units follow any recommendation. Rational units follow iff the
    Monte-Carlo incentive estimate is at least ``-mc_tolerance``.
    """
    if mode not in ("trusting", "rational"):
        raise ValueError(f"unknown mode {mode!r}")
    if recommendation is None:
        return unit_type(prior)
    if mode == "trusting":
        return int(recommendation)
    if descriptor is None:
        raise ValueError("rational mode needs a policy descriptor")
    rng = np.random.default_rng() if rng is None else rng
    est, _ = verify_bic_mc(descriptor, prior, recommendation, samples, rng)
    return int(recommendation) if est >= -mc_tolerance else unit_type(prior)
