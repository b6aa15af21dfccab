"""Two-intervention recommendation engines and their sizing rules.

Three engines are provided:

* :class:`TwoArmPolicy` hides one explore recommendation (control) inside
  each batch of ``L`` units and otherwise exploits a PCR estimate of the
  unit's treatment outcome.
* :class:`NoiselessPolicy` works on exact expectations and checks vertical
  span membership directly.
* :class:`RacingPolicy` recommends the empirically leading arm once the
  estimated gap exceeds a threshold and flips a fair coin before then.

Recommendations carry a ``meta`` tag for logging; agents never see it.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ._validation import ceil_int, check_positive_int, check_probability
from .agents import prior_mean
from .pcr import DonorSet, delta_for_epsilon, fit_pcr, lsi_residual, predict_avg_post

__all__ = [
    "InfeasibleError",
    "FirstStageUndersizedError",
    "PolicyConfig",
    "PolicyState",
    "Recommendation",
    "HistoryRecord",
    "SizingResult",
    "required_n0",
    "default_num_batches",
    "default_delta_split",
    "delta_pcr_for_gap",
    "noise_slack",
    "required_batch_L",
    "recommend_next",
    "record_outcome",
    "TwoArmPolicy",
    "NoRecommendationPolicy",
    "NoiselessState",
    "NoiselessPolicy",
    "noiseless_recommend",
    "noiseless_num_batches",
    "noiseless_batch_bound",
    "RacingState",
    "RacingPolicy",
    "racing_recommend",
    "racing_bic_preconditions",
    "write_replay_log",
    "read_replay_log",
]


class InfeasibleError(ValueError):
    """Sizing failed; ``terms`` holds the evaluated ledger."""

    def __init__(self, message, terms=None):
        super().__init__(message)
        self.terms = dict(terms or {})


class FirstStageUndersizedError(RuntimeError):
    """Too few donors on an arm to fit the required rank."""


@dataclass(frozen=True)
class Recommendation:
    """A recommended intervention; ``d is None`` means no recommendation."""

    d: Optional[int]
    meta: str


@dataclass(frozen=True)
class HistoryRecord:
    unit: int
    y_pre: np.ndarray = field(repr=False)
    d_hat: Optional[int]
    meta: str
    d: int
    y_post: np.ndarray = field(repr=False)
    batch: Optional[int] = None
    pos: Optional[int] = None
    estimate: Optional[float] = None

    def log_entry(self, **extra):
        entry = {
            "unit": self.unit,
            "stage": "first" if self.batch is None else "second",
            "batch": self.batch,
            "pos": self.pos,
            "d_hat": self.d_hat,
            "meta": self.meta,
            "d": self.d,
            "y_post_mean": float(np.mean(self.y_post)),
            "estimate": self.estimate,
        }
        entry.update(extra)
        return entry


@dataclass(frozen=True)
class SizingResult:
    """A sized quantity together with every term used to compute it."""

    value: int
    terms: Dict[str, float]


def default_delta_split(delta):
    """Split a total failure budget evenly into ``(delta0, delta_pcr, delta_eps)``."""
    check_probability(delta, "delta")
    return (delta / 3,) * 3


@dataclass(frozen=True)
class PolicyConfig:
    """Inputs of the batch explore/exploit policy.

    Parameters
    ----------
    N0 : int
        Units left to self-select before any recommendation.
    L : int
        Batch size, at least 2.
    B : int or None
        Number of batches; ``None`` keeps issuing batches indefinitely.
    C : float
        Exploit gap in ``(0, 1)``.
    T1 : int
        Post-window length used to turn summed predictions into averages.
    rank : int
    rho : float or None
    delta_split : tuple of float
        ``(delta0, delta_pcr, delta_eps)``.
    outcome_bound : float
    explore_arm, exploit_alt : int
        Arm recommended on explore slots and the alternative arm whose
        outcome is estimated.
    """

    N0: int
    L: int
    B: Optional[int]
    C: float
    T1: int
    rank: int = 1
    rho: Optional[float] = None
    delta_split: Tuple[float, float, float] = (0.1 / 3, 0.1 / 3, 0.1 / 3)
    outcome_bound: float = 1.0
    explore_arm: int = 0
    exploit_alt: int = 1

    def __post_init__(self):
        check_positive_int(self.N0, "N0", minimum=0)
        check_positive_int(self.L, "L", minimum=2)
        if self.B is not None:
            check_positive_int(self.B, "B", minimum=0)
        check_probability(self.C, "C")
        check_positive_int(self.T1, "T1")
        check_positive_int(self.rank, "rank")
        if len(self.delta_split) != 3:
            raise ValueError("delta_split must have three components")
        for i, dv in enumerate(self.delta_split):
            check_probability(dv, f"delta_split[{i}]")

    @property
    def delta(self):
        return float(sum(self.delta_split))


@dataclass
class PolicyState:
    """Mutable state of one sequential run of :class:`TwoArmPolicy`."""

    rng: np.random.Generator
    history: List[HistoryRecord] = field(default_factory=list)
    issued: int = 0
    explore_index: Optional[int] = None
    fitted: Optional[object] = None
    explore_draws: List[int] = field(default_factory=list)
    _slot: Optional[Tuple[Optional[int], Optional[int], Optional[float]]] = None


# ---------------------------------------------------------------- sizing


def required_n0(r_tau, delta, K=1.0, c_ver=1.0, p_min=1.0, method="vershynin"):
    """Number of first-stage units needed to span a type's subspace.

    Parameters
    ----------
    r_tau : int
        Dimension of the type's subspace.
    delta : float
        Failure probability. Values of 2 or more make the bound vacuous
        and return 1.
    K, c_ver : float
        Sub-gaussian norm and absolute constant in the singular value bound.
        Neither is knowable; both default to 1.
    p_min : float
        Lower bound on the fraction of arrivals of the needed type.
    method : {"vershynin", "geometric"}
        ``"geometric"`` is the one-dimensional rule
        ``ceil(log(1/delta) / log(1/(1 - p_min)))``: the number of arrivals
        after which at least one unit of the type has appeared w.p.
        ``1 - delta``.
    """
    check_positive_int(r_tau, "r_tau")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not 0 < p_min <= 1:
        raise ValueError("p_min must lie in (0, 1]")
    if method == "geometric":
        if delta >= 1:
            return 1
        if p_min == 1:
            return 1
        return max(1, ceil_int(math.log(1 / delta) / math.log(1 / (1 - p_min))))
    if method != "vershynin":
        raise ValueError(f"unknown method {method!r}")
    if delta >= 2:
        return 1
    root = c_ver * K**2 * (math.sqrt(r_tau) + math.sqrt(math.log(2 / delta)))
    return max(1, ceil_int(root**2 / p_min))


def default_num_batches(r_tau, delta0, p_L):
    """Heuristic batch count ``ceil((2 / p_L) * (r_tau + log(1 / delta0)))``."""
    check_positive_int(r_tau, "r_tau")
    check_probability(delta0, "delta0")
    check_probability(p_L, "p_L")
    return ceil_int((2 / p_L) * (r_tau + math.log(1 / delta0)))


def delta_pcr_for_gap(params, C):
    """Failure probability at which the PCR error reaches ``C / 2``."""
    check_probability(C, "C")
    return delta_for_epsilon(params, C / 2)


def noise_slack(sigma, T1, delta_eps):
    """Hoeffding width ``sigma * sqrt(2 log(1/delta_eps) / T1)`` of the post-noise mean."""
    if sigma == 0:
        return 0.0
    check_probability(delta_eps, "delta_eps")
    return sigma * math.sqrt(2 * math.log(1 / delta_eps) / T1)


def required_batch_L(knowledge=None, priors=None, C=0.125, alpha=0.0, sigma=0.0, T1=1,
                     delta_total=0.0, M=1.0, delta_eps=None, control=0, treatment=1):
    """Smallest batch size making control recommendations compliant.

    For each prior the bound is
    ``1 + (mu1 - mu0) / (margin * Pr[mu0 - ybar1 >= margin] - 2 M delta)``
    with ``margin = C - alpha - noise_slack``. The maximum over ``priors``
    is taken; with only ``knowledge`` the numerator uses the upper bound of
    the treatment mean and lower bound of the control mean and the
    probability uses ``zeta_C``.

    Returns
    -------
    SizingResult
        ``value`` is at least 2.

    Raises
    ------
    InfeasibleError
        If the margin or denominator is not positive.
    """
    check_probability(C, "C")
    if delta_total < 0 or alpha < 0 or sigma < 0:
        raise ValueError("alpha, sigma and delta_total must be non-negative")
    if delta_eps is None:
        delta_eps = delta_total / 3
    slack = noise_slack(sigma, T1, delta_eps)
    margin = C - alpha - slack
    terms = {
        "C": C, "alpha": alpha, "sigma": sigma, "T1": T1, "delta_total": delta_total,
        "delta_eps": delta_eps, "M": M, "noise_slack": slack, "margin": margin,
    }
    if margin <= 0:
        raise InfeasibleError("C too small for achievable accuracy (margin <= 0)", terms)

    cases = []
    if priors:
        for pr in priors:
            mu0, mu1 = prior_mean(pr, control), prior_mean(pr, treatment)
            prob = pr.marginals[treatment].cdf(mu0 - margin)
            cases.append((mu1 - mu0, prob))
    elif knowledge is not None:
        num = knowledge.mu_upper(treatment, 1) - knowledge.mu_lower(control, 1)
        cases.append((num, knowledge.zeta_C))
    else:
        raise ValueError("need priors or knowledge")

    worst = None
    for num, prob in cases:
        den = margin * prob - 2 * M * delta_total
        if num <= 0:
            bound = 2.0
        elif den <= 0:
            terms.update(numerator=num, probability=prob, denominator=den)
            raise InfeasibleError("C too small for achievable accuracy (denominator <= 0)", terms)
        else:
            bound = 1 + num / den
        if worst is None or bound > worst[0]:
            worst = (bound, num, prob, den)
    bound, num, prob, den = worst
    terms.update(numerator=num, probability=prob, denominator=den, bound=bound)
    return SizingResult(max(2, ceil_int(bound)), terms)


# ---------------------------------------------------------- batch engine


def _fit_arm(history, arm, rank, rho, T1):
    rows = [h for h in history if h.d == arm]
    if len(rows) < rank:
        return None
    pre = np.vstack([h.y_pre for h in rows])
    post = np.array([float(np.sum(h.y_post)) for h in rows])
    if min(pre.shape) < rank:
        return None
    return fit_pcr(DonorSet(pre, post, arm), rank, rho)


def recommend_next(state, cfg, y_pre, knowledge):
    """Recommendation for the next arriving unit.

    The first ``N0`` units get none. Afterwards units are grouped in
    batches of ``L``; at each batch start a hidden explore slot is drawn
    uniformly and the treatment-arm PCR model is refit on all history.
    """
    if state._slot is not None:
        raise RuntimeError("record_outcome must be called before the next recommendation")
    s = state.issued - cfg.N0
    if s < 0:
        state._slot = (None, None, None)
        return Recommendation(None, "first_stage")
    b, j = divmod(s, cfg.L)
    if cfg.B is not None and b >= cfg.B:
        state._slot = (None, None, None)
        return Recommendation(None, "finished")
    if j == 0:
        state.explore_index = int(state.rng.integers(cfg.L))
        state.explore_draws.append(state.explore_index)
        model = _fit_arm(state.history, cfg.exploit_alt, cfg.rank, cfg.rho, cfg.T1)
        if model is None:
            raise FirstStageUndersizedError(
                f"first stage under-sized: fewer than {cfg.rank} donors on arm {cfg.exploit_alt}"
            )
        state.fitted = model
    if j == state.explore_index:
        state._slot = (b, j, None)
        return Recommendation(cfg.explore_arm, "explore")
    est = predict_avg_post(state.fitted, y_pre, cfg.T1)
    mu_l = knowledge.mu_lower(cfg.explore_arm, 1)
    d = cfg.explore_arm if mu_l - est >= cfg.C else cfg.exploit_alt
    state._slot = (b, j, est)
    return Recommendation(d, "exploit")


def record_outcome(state, y_pre, rec, d, y_post):
    """Append the realized interaction to the history."""
    b, j, est = state._slot if state._slot is not None else (None, None, None)
    state.history.append(HistoryRecord(
        unit=state.issued, y_pre=np.asarray(y_pre, float), d_hat=rec.d, meta=rec.meta,
        d=int(d), y_post=np.asarray(y_post, float), batch=b, pos=j, estimate=est,
    ))
    state.issued += 1
    state._slot = None


class _SequentialPolicy:
    def log(self):
        return [h.log_entry() for h in self.state.history]


class TwoArmPolicy(_SequentialPolicy):
    """Batch explore/exploit engine wrapping :func:`recommend_next`."""

    def __init__(self, cfg, knowledge, rng):
        self.cfg = cfg
        self.knowledge = knowledge
        self.state = PolicyState(rng=rng)

    def recommend(self, y_pre, prior=None):
        return recommend_next(self.state, self.cfg, y_pre, self.knowledge)

    def record(self, y_pre, rec, d, y_post):
        record_outcome(self.state, y_pre, rec, d, y_post)


class NoRecommendationPolicy(_SequentialPolicy):
    """Baseline in which every unit self-selects."""

    def __init__(self, rng=None):
        self.state = PolicyState(rng=rng if rng is not None else np.random.default_rng(0))

    def recommend(self, y_pre, prior=None):
        self.state._slot = (None, None, None)
        return Recommendation(None, "none")

    def record(self, y_pre, rec, d, y_post):
        record_outcome(self.state, y_pre, rec, d, y_post)


# ---------------------------------------------------------- noiseless engine


def noiseless_num_batches(k, delta):
    """Batch count ``ceil(2k + 2 sqrt(k log(1/delta)))`` for random types."""
    check_positive_int(k, "k")
    check_probability(delta, "delta")
    return ceil_int(2 * k + 2 * math.sqrt(k * math.log(1 / delta)))


@dataclass
class NoiselessState:
    """History of exact pre-period expectations and average post rewards."""

    rng: np.random.Generator
    N0: int
    L: int
    num_batches: Optional[int] = 1
    k: int = 2
    tol: float = 1e-9
    pre_rows: Dict[int, List[np.ndarray]] = field(default_factory=dict)
    rewards: Dict[int, List[float]] = field(default_factory=dict)
    issued: int = 0
    explore_index: Optional[int] = None


def _lsi_estimate(state, d, x):
    rows = state.pre_rows.get(d, [])
    if not rows:
        return False, math.nan
    X = np.vstack(rows)
    if lsi_residual(X, x) > state.tol * max(1.0, float(np.linalg.norm(x))):
        return False, math.nan
    w, *_ = np.linalg.lstsq(X.T, x, rcond=None)
    return True, float(w @ np.asarray(state.rewards[d]))


def noiseless_recommend(state, expected_pre_row, prior):
    """Recommendation under exact observation of expectations.

    Explore slots receive the intervention whose span membership fails;
    when membership holds for both or neither, and on exploit slots, the
    argmax of exact (when available) or prior-mean rewards is returned.
    """
    x = np.asarray(expected_pre_row, dtype=float)
    s = state.issued - state.N0
    state.issued += 1
    if s < 0:
        return Recommendation(None, "first_stage")
    b, j = divmod(s, state.L)
    in_batches = state.num_batches is None or b < state.num_batches
    if in_batches and j == 0:
        state.explore_index = int(state.rng.integers(state.L))
    holds, est = [], []
    for d in range(state.k):
        ok, val = _lsi_estimate(state, d, x)
        holds.append(ok)
        est.append(val if ok else prior_mean(prior, d))
    best = int(np.argmax(est))
    if in_batches and j == state.explore_index:
        failing = [d for d in range(state.k) if not holds[d]]
        if len(failing) == 1:
            return Recommendation(failing[0], "explore")
        return Recommendation(best, "explore")
    return Recommendation(best, "exploit")


class NoiselessPolicy:
    """Span-check policy for noise-free panels.

    Parameters
    ----------
    N0, L : int
    mode : {"single", "random_types"}
        ``"single"`` runs one batch; ``"random_types"`` runs
        :func:`noiseless_num_batches` batches.
    k_explore : int
        Explore units wanted per type in ``"random_types"`` mode.
    delta : float
    rng : numpy.random.Generator
    sigma : float
        Must be 0.
    """

    def __init__(self, N0, L, rng, mode="single", k_explore=1, delta=0.1, sigma=0.0, k=2):
        if sigma != 0:
            raise ValueError("noiseless policy requires zero noise")
        if mode == "single":
            nb = 1
        elif mode == "random_types":
            nb = noiseless_num_batches(k_explore, delta)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        self.state = NoiselessState(rng=rng, N0=N0, L=L, num_batches=nb, k=k)

    def recommend(self, expected_pre_row, prior):
        return noiseless_recommend(self.state, expected_pre_row, prior)

    def record(self, expected_pre_row, d, reward):
        self.state.pre_rows.setdefault(d, []).append(np.asarray(expected_pre_row, float))
        self.state.rewards.setdefault(d, []).append(float(reward))


def _psi(prior, pref, other):
    mu_p, mu_o = prior_mean(prior, pref), prior_mean(prior, other)
    num = mu_p - mu_o
    if num <= 0:
        return 0.0
    marg = prior.marginals[pref]
    prob = marg.cdf(mu_o)
    if prob <= 0:
        raise InfeasibleError("conditioning event has probability zero",
                              {"numerator": num, "probability": prob})
    den = (mu_o - marg.truncated_mean(upper=mu_o)) * prob
    if den <= 0:
        raise InfeasibleError("non-positive denominator", {"numerator": num, "denominator": den})
    return num / den


def noiseless_batch_bound(type0_prior=None, type1_prior=None):
    """Batch size making the noiseless policy compliant for both types.

    ``psi = (mu_pref - mu_other) / ((mu_other - E[r_pref | r_pref <= mu_other])
    * Pr[r_pref <= mu_other])`` with ``pref = 0`` for type-0 units and
    ``pref = 1`` for type-1 units.

    Returns
    -------
    psi0, psi1 : float
    L : int
        ``max(2, ceil(1 + max(psi0, psi1)))``.
    """
    psi0 = _psi(type0_prior, 0, 1) if type0_prior is not None else 0.0
    psi1 = _psi(type1_prior, 1, 0) if type1_prior is not None else 0.0
    return psi0, psi1, max(2, ceil_int(1 + max(psi0, psi1)))


# ---------------------------------------------------------- racing engine


@dataclass
class RacingState:
    rng: np.random.Generator
    T1: int
    models: Dict[int, object] = field(default_factory=dict)
    winner: Optional[int] = None
    winner_unit: Optional[int] = None
    issued: int = 0


def racing_recommend(state, epsilon, y_pre=None, estimates=None):
    """Active-arm-elimination step.

    Either ``estimates`` ``(est0, est1)`` or ``y_pre`` (used with the models
    in ``state``) supplies the two average-outcome estimates.
    """
    unit = state.issued
    state.issued += 1
    if state.winner is not None:
        return Recommendation(state.winner, "racing_winner")
    if estimates is None:
        if any(d not in state.models or state.models[d] is None for d in (0, 1)):
            raise FirstStageUndersizedError("both arms need a fitted model")
        estimates = tuple(predict_avg_post(state.models[d], y_pre, state.T1) for d in (0, 1))
    est0, est1 = estimates
    if est0 - est1 >= epsilon:
        state.winner, state.winner_unit = 0, unit
        return Recommendation(0, "racing_winner")
    if est1 - est0 >= epsilon:
        state.winner, state.winner_unit = 1, unit
        return Recommendation(1, "racing_winner")
    return Recommendation(int(state.rng.random() < 0.5), "racing_coin")


class RacingPolicy(_SequentialPolicy):
    """Racing engine that refits both arms on all history before each unit."""

    def __init__(self, epsilon, T1, rank, rng, rho=None):
        self.epsilon = epsilon
        self.rank = rank
        self.rho = rho
        self.state = RacingState(rng=rng, T1=T1)
        self.history: List[HistoryRecord] = []

    def recommend(self, y_pre, prior=None):
        if self.state.winner is None:
            for d in (0, 1):
                self.state.models[d] = _fit_arm(self.history, d, self.rank, self.rho, self.state.T1)
        return racing_recommend(self.state, self.epsilon, y_pre=y_pre)

    def record(self, y_pre, rec, d, y_post):
        self.history.append(HistoryRecord(
            unit=len(self.history), y_pre=np.asarray(y_pre, float), d_hat=rec.d,
            meta=rec.meta, d=int(d), y_post=np.asarray(y_post, float),
        ))

    def log(self):
        return [h.log_entry() for h in self.history]


def racing_bic_preconditions(tau, P, delta_pcr, delta_n):
    """Check ``delta_pcr <= tau P / (2P + 4)`` and ``delta_n <= tau P / 4``."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if not 0 <= P <= 1:
        raise ValueError("P must lie in [0, 1]")
    return bool(delta_pcr <= tau * P / (2 * P + 4) and delta_n <= tau * P / 4)


# ---------------------------------------------------------- replay logs


def write_replay_log(path, entries):
    """Write log entries as JSON lines."""
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_replay_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
