"""Incentivized exploration over ``k`` interventions for one sub-type.

A sub-type is a preference ordering ``tau`` over interventions.  The
policy loops over explore targets ``ell = tau[k], ..., tau[2]`` (1-indexed
positions), running ``B`` batches of ``L`` units for each.  Exploit slots
only ever choose between ``tau[1]`` and the current target ``ell``.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from ._validation import ceil_int, check_positive_int, check_probability
from .pcr import predict_avg_post
from .policy_two import (
    FirstStageUndersizedError,
    HistoryRecord,
    InfeasibleError,
    Recommendation,
    SizingResult,
    _fit_arm,
    noise_slack,
)

__all__ = [
    "KPolicyConfig",
    "KPolicyState",
    "exploit_event",
    "explore_schedule",
    "recommend_next_k",
    "record_outcome_k",
    "required_batch_L_k",
    "KArmPolicy",
]


def _check_subtype(tau):
    tau = tuple(int(t) for t in tau)
    if sorted(tau) != list(range(len(tau))) or len(tau) < 2:
        raise ValueError(f"subtype must be a permutation of 0..k-1, got {tau}")
    return tau


def explore_schedule(tau):
    """Explore targets in loop order: last preferred first, ``tau[1]`` excluded."""
    tau = _check_subtype(tau)
    return tau[:0:-1]


@dataclass(frozen=True)
class KPolicyConfig:
    """Inputs of the ``k``-intervention policy.

    Parameters
    ----------
    subtype : tuple of int
        Preference ordering ``tau``.
    N0, L, B : int
    C : float
    T1 : int
    mu_lower : mapping of int -> float
        Lower bound on each target's prior mean for this sub-type.
    rank : int
    rho : float or None
    literal : bool, default=False
        Use the strict two-sided window over already explored arms instead
        of the proof's event.
    """

    subtype: Tuple[int, ...]
    N0: int
    L: int
    B: int
    C: float
    T1: int
    mu_lower: Mapping[int, float]
    rank: int = 1
    rho: Optional[float] = None
    literal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "subtype", _check_subtype(self.subtype))
        check_positive_int(self.N0, "N0", minimum=0)
        check_positive_int(self.L, "L", minimum=2)
        check_positive_int(self.B, "B")
        check_probability(self.C, "C")
        check_positive_int(self.T1, "T1")
        missing = set(explore_schedule(self.subtype)) - set(self.mu_lower)
        if missing:
            raise ValueError(f"mu_lower missing targets {sorted(missing)}")

    @property
    def k(self):
        return len(self.subtype)


def exploit_event(estimates, prior_lower, C, ell, subtype, literal=False):
    """Whether an exploit slot should recommend the current target ``ell``.

    With ``p`` the 1-indexed position of ``ell`` in ``subtype``, the event
    requires

    * ``y[tau[1]] <= min_{1 < j < p} y[tau[j]] - C`` (vacuous if no such j),
    * ``max_{1 <= j < p} y[tau[j]] <= prior_lower - C``.

    With ``literal=True`` every arm at positions ``p+1..k`` must instead
    satisfy ``y[tau[1]] + C < y[d] < prior_lower - C``.

    A ``nan`` estimate makes the event false. A missing estimate raises
    ``KeyError``.
    """
    tau = _check_subtype(subtype)
    p = tau.index(ell) + 1
    if literal:
        needed = [tau[0]] + list(tau[p:])
    else:
        needed = list(tau[: p - 1])
    for d in needed:
        if d not in estimates:
            raise KeyError(f"missing estimate for intervention {d}")
    vals = {d: float(estimates[d]) for d in needed}
    if any(math.isnan(v) for v in vals.values()):
        return False
    y1 = vals[tau[0]]
    if literal:
        return all(y1 + C < vals[d] < prior_lower - C for d in tau[p:])
    middle = [vals[tau[j]] for j in range(1, p - 1)]
    if middle and not y1 <= min(middle) - C:
        return False
    return max(vals[tau[j]] for j in range(p - 1)) <= prior_lower - C


@dataclass
class KPolicyState:
    rng: np.random.Generator
    history: List[HistoryRecord] = field(default_factory=list)
    issued: int = 0
    explore_index: Optional[int] = None
    models: Dict[int, object] = field(default_factory=dict)
    explore_draws: List[int] = field(default_factory=list)
    ells: List[Optional[int]] = field(default_factory=list)
    _slot: Optional[tuple] = None


def _estimates(state, cfg, y_pre):
    out = {}
    for d in cfg.subtype:
        model = state.models.get(d)
        out[d] = math.nan if model is None else predict_avg_post(model, y_pre, cfg.T1)
    return out


def recommend_next_k(state, cfg, y_pre):
    """Recommendation for the next unit of the sub-type."""
    if state._slot is not None:
        raise RuntimeError("record_outcome_k must be called before the next recommendation")
    s = state.issued - cfg.N0
    if s < 0:
        state._slot = (None, None, None, None)
        return Recommendation(None, "first_stage")
    schedule = explore_schedule(cfg.subtype)
    b_all, j = divmod(s, cfg.L)
    loop, b = divmod(b_all, cfg.B)
    if loop >= len(schedule):
        state._slot = (None, None, None, None)
        return Recommendation(None, "finished")
    ell = schedule[loop]
    if j == 0:
        state.explore_index = int(state.rng.integers(cfg.L))
        state.explore_draws.append(state.explore_index)
        for d in cfg.subtype:
            state.models[d] = _fit_arm(state.history, d, cfg.rank, cfg.rho, cfg.T1)
        if state.models.get(cfg.subtype[0]) is None:
            raise FirstStageUndersizedError(
                f"first stage under-sized: fewer than {cfg.rank} donors on arm {cfg.subtype[0]}"
            )
    if j == state.explore_index:
        state._slot = (b_all, j, ell, None)
        return Recommendation(ell, "explore")
    est = _estimates(state, cfg, y_pre)
    fire = exploit_event(est, cfg.mu_lower[ell], cfg.C, ell, cfg.subtype, cfg.literal)
    state._slot = (b_all, j, ell, est)
    return Recommendation(ell if fire else cfg.subtype[0], "exploit")


def record_outcome_k(state, y_pre, rec, d, y_post):
    b, j, ell, _ = state._slot if state._slot is not None else (None, None, None, None)
    state.history.append(HistoryRecord(
        unit=state.issued, y_pre=np.asarray(y_pre, float), d_hat=rec.d, meta=rec.meta,
        d=int(d), y_post=np.asarray(y_post, float), batch=b, pos=j,
    ))
    state.ells.append(ell)
    state.issued += 1
    state._slot = None


class KArmPolicy:
    """Sequential wrapper around :func:`recommend_next_k`."""

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.state = KPolicyState(rng=rng)

    def recommend(self, y_pre, prior=None):
        return recommend_next_k(self.state, self.cfg, y_pre)

    def record(self, y_pre, rec, d, y_post):
        record_outcome_k(self.state, y_pre, rec, d, y_post)

    def log(self):
        return [
            h.log_entry(ell=ell, tau1=self.cfg.subtype[0])
            for h, ell in zip(self.state.history, self.state.ells)
        ]


def required_batch_L_k(knowledge=None, C=0.125, alpha=0.0, sigma=0.0, T1=1, delta=0.0, M=1.0,
                       gap=None, prob_E=None, subtype=None, tau_label=None, delta_eps=None):
    """Batch size for the ``k``-intervention policy.

    ``1 + gap / ((C - 2 alpha - 2 noise_slack) (1 - delta) Pr[E] - 2 M delta)``,
    where ``gap`` is the largest prior-mean difference between the first
    and last preferred arms. ``gap`` and ``prob_E`` may be passed directly
    or read from ``knowledge`` (with ``subtype`` and ``tau_label``).
    """
    check_probability(C, "C")
    if gap is None or prob_E is None:
        if knowledge is None or subtype is None:
            raise ValueError("need gap and prob_E, or knowledge with a subtype")
        tau = _check_subtype(subtype)
        key = tau if tau_label is None else tau_label
        if gap is None:
            gap = knowledge.mu_upper(tau[0], key) - knowledge.mu_lower(tau[-1], key)
        if prob_E is None:
            prob_E = knowledge.zeta_C
    if delta_eps is None:
        delta_eps = delta / 3
    slack = noise_slack(sigma, T1, delta_eps)
    margin = C - 2 * alpha - 2 * slack
    den = margin * (1 - delta) * prob_E - 2 * M * delta
    terms = {
        "C": C, "alpha": alpha, "sigma": sigma, "T1": T1, "delta": delta, "delta_eps": delta_eps,
        "M": M, "noise_slack": slack, "margin": margin, "gap": gap, "probability": prob_E,
        "denominator": den,
    }
    if margin <= 0 or den <= 0:
        raise InfeasibleError("C too small for achievable accuracy (denominator <= 0)", terms)
    if gap <= 0:
        terms["bound"] = 2.0
        return SizingResult(2, terms)
    bound = 1 + gap / den
    terms["bound"] = bound
    return SizingResult(max(2, ceil_int(bound)), terms)
