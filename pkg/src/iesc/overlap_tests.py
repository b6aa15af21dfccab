"""Hypothesis tests for whether a test unit overlaps a donor pool.

Both tests split the pre-period in half, learn a mapping from the first
half to the second half on the donors, and compare its prediction for the
test unit against the unit's observed second-half average.  A large
discrepancy is evidence that the test unit is *not* in the donors' span.

``decision == "accept"`` means the overlap-violation hypothesis is accepted.
"""

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ._validation import as_matrix, as_vector, check_probability, check_rank
from .pcr import (
    DonorSet,
    InsufficientSignalError,
    alpha_bound,
    confidence_params,
    fit_pcr,
    predict_avg_post,
    snr_hat,
)

__all__ = [
    "Z_CRIT",
    "OverlapTestResult",
    "nonasymptotic_overlap_test",
    "si_weights",
    "asymptotic_overlap_test",
]

Z_CRIT = 1.959964


@dataclass(frozen=True)
class OverlapTestResult:
    statistic: float
    threshold: float
    decision: str
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def overlap_violated(self):
        return self.decision == "accept"

    def line(self):
        """One-line machine-readable summary."""
        return (f"statistic={self.statistic:.6g} threshold={self.threshold:.6g} "
                f"decision={self.decision}")


def _decide(statistic, threshold):
    return "accept" if statistic > threshold else "reject"


def _split(donor_pre, test_pre):
    X = as_matrix(donor_pre, "donor_pre")
    x = as_vector(test_pre, "test_pre", length=X.shape[1])
    return X, x


def nonasymptotic_overlap_test(donor_pre, test_pre, delta, sigma, rank, gamma=None, rho=None,
                               strict=False):
    """Finite-sample test based on the PCR confidence bound.

    Parameters
    ----------
    donor_pre : array-like of shape (m, T0)
        Pre-period outcomes of donors under control. ``T0`` must be even.
    test_pre : array-like of shape (T0,)
    delta : float in (0, 1)
    sigma : float
        Noise scale.
    rank : int
    gamma : float, optional
        Bound on the slope norm; defaults to the fitted slope's norm.
    rho : float, optional
        PCR ridge penalty.
    strict : bool, default=False
        Raise when the estimated SNR is below 2 instead of using an
        infinite bound, which makes the test reject.

    Returns
    -------
    OverlapTestResult
    """
    X, x = _split(donor_pre, test_pre)
    check_probability(delta, "delta")
    m, T0 = X.shape
    if T0 % 2:
        raise ValueError(f"T0 must be even, got {T0}")
    if m < rank:
        raise ValueError(f"donor count {m} is below rank {rank}")
    h = T0 // 2
    check_rank(rank, m, h)
    model = fit_pcr(DonorSet(X[:, :h], X[:, h:].sum(axis=1)), rank, rho)
    pred = predict_avg_post(model, x[:h], h)
    obs = float(np.mean(x[h:]))
    statistic = abs(pred - obs)
    g = float(np.linalg.norm(model.theta_hat)) if gamma is None else float(gamma)
    diag = {"snr": snr_hat(model.spectrum, m, h, rank, delta) if m >= 2 else 0.0,
            "gamma": g, "prediction": pred, "observed": obs}
    try:
        params = confidence_params(model, T0=h, T1=h, gamma=max(g, 1e-12), sigma=sigma, k=1)
        alpha = alpha_bound(params, delta, strict=True)
        diag["insufficient_signal"] = 0.0
    except InsufficientSignalError:
        if strict:
            raise
        alpha = math.inf
        diag["insufficient_signal"] = 1.0
    noise = 2 * sigma * math.sqrt(math.log(1 / delta) / T0)
    threshold = alpha + noise
    diag.update(alpha=alpha, noise_term=noise)
    return OverlapTestResult(statistic, threshold, _decide(statistic, threshold), diag)


def si_weights(donor_pre, test_pre, rank, fit_window=None):
    """Vertical-regression weights and a residual noise estimate.

    Parameters
    ----------
    donor_pre : array-like of shape (m, T0)
    test_pre : array-like of shape (T0,)
    rank : int
    fit_window : int, optional
        Number of leading pre-period columns used to fit the weights.
        Defaults to all of them.

    Returns
    -------
    omega_hat : ndarray of shape (m,)
        Rank-truncated pseudo-inverse of the donors' window matrix
        (transposed) applied to the test unit's window.
    sigma_hat : float
        Root mean squared residual of the rank-``rank`` approximation over
        every donor pre-period entry.
    """
    X, x = _split(donor_pre, test_pre)
    m, T0 = X.shape
    w = T0 if fit_window is None else int(fit_window)
    if not 1 <= w <= T0:
        raise ValueError("fit_window out of range")
    if rank > m:
        raise ValueError(f"rank {rank} exceeds donor count {m}")
    check_rank(rank, m, w)
    U, s, Vt = np.linalg.svd(X[:, :w].T, full_matrices=False)
    keep = s[:rank] > max(X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    Ur, sr, Vr = U[:, :rank][:, keep], s[:rank][keep], Vt[:rank][keep]
    omega = Vr.T @ ((Ur.T @ x[:w]) / sr)
    Uf, sf, Vf = np.linalg.svd(X, full_matrices=False)
    approx = (Uf[:, :rank] * sf[:rank]) @ Vf[:rank]
    sigma_hat = math.sqrt(float(np.mean((X - approx) ** 2)))
    return omega, sigma_hat


def asymptotic_overlap_test(donor_pre, test_pre, rank, critical=Z_CRIT):
    """Normal-approximation test using vertical-regression weights.

    The statistic is ``sqrt(T2) / (sigma_hat ||omega_hat||) * |pred - obs|``,
    where ``T2`` is the second-half length, ``pred`` applies the weights to
    the donors' second-half averages and ``obs`` is the test unit's
    second-half average.
    """
    X, x = _split(donor_pre, test_pre)
    m, T0 = X.shape
    if T0 < 4:
        raise ValueError("need T0 >= 4 so that each half has at least 2 steps")
    h = T0 // 2
    T2 = T0 - h
    omega, sigma_hat = si_weights(X, x, rank, fit_window=h)
    norm = float(np.linalg.norm(omega))
    if norm == 0:
        raise ValueError("degenerate weights: ||omega_hat|| = 0")
    pred = float(omega @ X[:, h:].mean(axis=1))
    obs = float(np.mean(x[h:]))
    gap = abs(pred - obs)
    scale = sigma_hat * norm
    # residuals at rounding level mean the donors are exactly low rank
    if sigma_hat > max(X.shape) * np.finfo(float).eps * float(np.abs(X).max()):
        statistic = math.sqrt(T2) * gap / scale
    else:
        statistic = 0.0 if gap <= 1e-9 * max(1.0, abs(obs), abs(pred)) else math.inf
    diag = {"sigma_hat": sigma_hat, "omega_norm": norm, "prediction": pred, "observed": obs,
            "T2": float(T2)}
    return OverlapTestResult(statistic, critical, _decide(statistic, critical), diag)
