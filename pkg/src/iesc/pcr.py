"""Regularized principal component regression and its confidence bounds.

The regression is horizontal: each donor's summed post outcomes are
regressed on its pre-period outcomes, so a fitted slope ``theta_hat``
maps any pre-period vector to a summed post outcome.  Dividing by the
post length gives the average post outcome estimate.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import as_matrix, as_vector, check_probability, check_rank

__all__ = [
    "DonorSet",
    "PCRModel",
    "ConfidenceParams",
    "InsufficientSignalError",
    "DegradedFitWarning",
    "truncated_svd",
    "fit_pcr",
    "predict_avg_post",
    "snr_hat",
    "confidence_params",
    "alpha_bound",
    "delta_for_epsilon",
    "lsi_residual",
    "select_rank_gap",
    "StreamingPCR",
    "PCRRegressor",
]

SQRT74 = math.sqrt(74.0)
SQRT6 = math.sqrt(6.0)


class InsufficientSignalError(ValueError):
    """Raised when the estimated signal-to-noise ratio is below 2."""


class DegradedFitWarning(RuntimeWarning):
    """The normal system was singular and a pseudo-inverse was used."""


@dataclass(frozen=True)
class DonorSet:
    """Donor outcomes for one intervention.

    Attributes
    ----------
    pre : ndarray of shape (m, T0)
    post_sum : ndarray of shape (m,)
        Each donor's post outcomes summed over the post window.
    d : int
    """

    pre: np.ndarray
    post_sum: np.ndarray
    d: int = 0

    def __post_init__(self):
        pre = as_matrix(self.pre, "pre")
        post = as_vector(self.post_sum, "post_sum", length=pre.shape[0])
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post_sum", post)

    @property
    def m(self):
        return self.pre.shape[0]

    @property
    def T0(self):
        return self.pre.shape[1]


@dataclass(frozen=True)
class PCRModel:
    """Fitted slope together with the spectral summary of the donor matrix."""

    theta_hat: np.ndarray
    rank: int
    rho: float
    spectrum: np.ndarray
    projector: np.ndarray
    degraded: bool = False
    m: int = 0


@dataclass(frozen=True)
class ConfidenceParams:
    """Quantities entering the confidence bound and its inverse."""

    A: float
    F: float
    D: float
    E: float
    kappa: float
    sigma_r: float
    alpha_comp: float
    m: int
    T0: int
    T1: int
    gamma: float
    sigma: float
    k: int
    err: float

    def __post_init__(self):
        for name in ("A", "F", "D", "E", "kappa", "sigma_r", "alpha_comp", "gamma", "sigma", "err"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")


def truncated_svd(matrix, rank):
    """Best rank-``rank`` approximation of ``matrix``.

    Parameters
    ----------
    matrix : array-like of shape (m, T0)
    rank : int

    Returns
    -------
    denoised : ndarray of shape (m, T0)
    spectrum : ndarray
        All singular values, descending.
    projector : ndarray of shape (T0, T0)
        Orthogonal projector onto the top ``rank`` right singular vectors.
    """
    X = as_matrix(matrix, "matrix")
    rank = check_rank(rank, *X.shape)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    Ur, sr, Vr = U[:, :rank], s[:rank], Vt[:rank]
    denoised = (Ur * sr) @ Vr
    projector = Vr.T @ Vr
    return denoised, s, projector


def _numerical_zero(s, shape):
    if s.size == 0 or s[0] == 0:
        return np.ones_like(s, dtype=bool)
    return s <= max(shape) * np.finfo(float).eps * s[0]


def fit_pcr(donors, rank, rho=None):
    """Fit regularized PCR on a donor set.

    Parameters
    ----------
    donors : DonorSet
    rank : int
        Truncation rank, at most ``min(m, T0)``.
    rho : float or None
        Ridge penalty on the retained subspace. ``None`` uses
        ``1e-8 * s_1**2``. With ``rho=0`` any retained singular value that
        is numerically zero is dropped and the fit is flagged as degraded.

    Returns
    -------
    PCRModel
    """
    X, y = donors.pre, donors.post_sum
    rank = check_rank(rank, *X.shape)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if rho is None:
        rho = 1e-8 * float(s[0]) ** 2
    if not (np.isfinite(rho) and rho >= 0):
        raise ValueError(f"rho must be finite and non-negative, got {rho}")
    keep = np.arange(rank)
    degraded = False
    if rho == 0:
        zero = _numerical_zero(s[:rank], X.shape)
        if zero.any():
            degraded = True
            keep = keep[~zero]
            warnings.warn(
                f"singular normal system: effective rank {keep.size} < {rank}; "
                "using pseudo-inverse on the non-zero part",
                DegradedFitWarning,
                stacklevel=2,
            )
    sk = s[keep]
    if sk.size:
        gain = np.where(sk > 0, sk / (sk**2 + rho), 0.0) if rho > 0 else 1.0 / sk
        theta = Vt[keep].T @ (gain * (U[:, keep].T @ y))
    else:
        theta = np.zeros(X.shape[1])
    Vr = Vt[:rank]
    return PCRModel(
        theta_hat=theta,
        rank=rank,
        rho=float(rho),
        spectrum=s,
        projector=Vr.T @ Vr,
        degraded=degraded,
        m=X.shape[0],
    )


def predict_avg_post(model, y_pre, T1):
    """Estimated average post outcome, ``<theta_hat, y_pre> / T1``."""
    y_pre = as_vector(y_pre, "y_pre", length=model.theta_hat.shape[0])
    if T1 <= 0:
        raise ValueError("T1 must be positive")
    return float(model.theta_hat @ y_pre) / T1


def snr_hat(spectrum, m, T0, rank, delta, return_flag=False):
    """Estimated signal-to-noise ratio of a donor matrix.

    ``sigma_r / (sqrt(m) + sqrt(T0) + sqrt(log(log(m) / delta)))`` with the
    inner ``log(m)`` clamped below at 1, which only binds for ``m < 3``.
    """
    if m < 2:
        raise ValueError("snr_hat requires m >= 2")
    check_probability(delta, "delta")
    spectrum = np.asarray(spectrum, dtype=float)
    sigma_r = float(spectrum[rank - 1]) if rank <= spectrum.size else 0.0
    inner = math.log(m)
    clamped = inner < 1.0
    inner = max(inner, 1.0)
    denom = math.sqrt(m) + math.sqrt(T0) + math.sqrt(max(math.log(inner / delta), 0.0))
    value = sigma_r / denom
    return (value, clamped) if return_flag else value


def confidence_params(model, T0, T1, gamma, sigma, k=2, err=None):
    """Assemble the bound's ingredients from a fitted model.

    Parameters
    ----------
    model : PCRModel
    T0, T1 : int
    gamma : float
        Bound on the true slope norm.
    sigma : float
        Noise scale.
    k : int
        Number of interventions.
    err : float, optional
        Residual-energy term. Defaults to the energy beyond the truncation
        rank divided by ``m * T0``.
    """
    s = model.spectrum
    r = model.rank
    m = model.m
    sigma_r = float(s[r - 1])
    if not sigma_r > 0 or _numerical_zero(s, (m, T0))[r - 1]:
        raise InsufficientSignalError(f"singular value {r} is numerically zero")
    kappa = float(s[0] / sigma_r)
    if err is None:
        err = float(np.sum(s[r:] ** 2) / (m * T0))
    L, sT0, sT1 = gamma, math.sqrt(T0), math.sqrt(T1)
    A = 3 * sT0 * (L * (SQRT74 + 12 * SQRT6 * kappa) / T1 + 1 / sT1)
    F = 2 * L * math.sqrt(24 * T0) / T1 + 12 * L * kappa * math.sqrt(3 * T0) / T1 + 2 / sT1
    D = L * sigma * SQRT74 / sT1 + 12 * sigma * kappa * SQRT6 / sT1 + sigma * math.sqrt(2)
    E = L * sigma / sT1
    alpha_comp = A + F + D * (math.sqrt(m) + sT0) + sigma_r * E
    return ConfidenceParams(
        A=A, F=F, D=D, E=E, kappa=kappa, sigma_r=sigma_r, alpha_comp=alpha_comp,
        m=m, T0=T0, T1=T1, gamma=gamma, sigma=sigma, k=k, err=err,
    )


def alpha_bound(params, delta, strict=True, terms=False):
    """High-probability error bound on the average post outcome estimate.

    Parameters
    ----------
    params : ConfidenceParams
    delta : float in (0, 1)
    strict : bool, default=True
        Raise :class:`InsufficientSignalError` when the estimated SNR is
        below 2. With ``strict=False`` the bound is returned as ``inf``.
    terms : bool, default=False
        Also return the eight summands.
    """
    check_probability(delta, "delta")
    p = params
    snr = snr_hat([p.sigma_r], p.m, p.T0, 1, delta)
    if snr < 2:
        if strict:
            raise InsufficientSignalError(f"estimated snr {snr:.4g} < 2")
        return (math.inf, ()) if terms else math.inf
    L, T0, T1, sig = p.gamma, p.T0, p.T1, p.sigma
    sT1 = math.sqrt(T1)
    lg = math.log(p.k / delta)
    sqrt_err = math.sqrt(p.err)
    parts = (
        3 * math.sqrt(T0) / snr
        * (L * (SQRT74 + 12 * SQRT6 * p.kappa) / (T1 * snr) + sqrt_err / (sT1 * p.sigma_r)),
        2 * L * math.sqrt(24 * T0) / (T1 * snr),
        12 * L * p.kappa * math.sqrt(3 * T0) / (T1 * snr),
        2 * sqrt_err / (sT1 * p.sigma_r),
        L * sig * math.sqrt(max(lg, 0.0)) / sT1,
        L * sig * math.sqrt(max(74 * lg, 0.0)) / (snr * sT1),
        12 * sig * p.kappa * math.sqrt(max(6 * lg, 0.0)) / (snr * sT1),
        sig * math.sqrt(max(2 * p.err * lg, 0.0)) / p.sigma_r,
    )
    total = math.fsum(parts)
    return (total, parts) if terms else total


def delta_for_epsilon(params, epsilon):
    """Failure probability at which the error bound reaches ``epsilon``.

    Returns 1 when the gap is too small for any non-trivial guarantee.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    p = params
    X = p.sigma_r * epsilon - (p.A + p.F) * (math.sqrt(p.m) + math.sqrt(p.T0))
    if X <= 0:
        return 1.0
    a = p.alpha_comp
    denom = math.sqrt(X * p.D + a * a / 4) + a / 2
    q = X / denom if denom > 0 else math.inf
    lead = max(math.log(p.m), p.k)
    with np.errstate(over="ignore"):
        value = lead * math.exp(-min(q * q, 745.0))
    return float(min(1.0, max(value, np.finfo(float).tiny)))


def lsi_residual(donor_expected_pre, target_expected_pre):
    """Distance from ``target`` to the row space of the donor matrix."""
    X = as_matrix(donor_expected_pre, "donor_expected_pre")
    t = as_vector(target_expected_pre, "target_expected_pre", length=X.shape[1])
    coef, *_ = np.linalg.lstsq(X.T, t, rcond=None)
    return float(np.linalg.norm(t - X.T @ coef))


def select_rank_gap(spectrum):
    """Rank at the largest ratio gap between consecutive singular values."""
    s = np.asarray(spectrum, dtype=float)
    s = s[~_numerical_zero(s, (s.size,))] if s.size else s
    if s.size <= 1:
        return max(int(s.size), 1)
    ratios = s[:-1] / np.maximum(s[1:], np.finfo(float).tiny)
    return int(np.argmax(ratios)) + 1


class StreamingPCR:
    """PCR maintained through sufficient statistics ``X^T X`` and ``X^T y``.

    Donors are added one at a time; the slope is recomputed from an
    eigendecomposition of the ``T0 x T0`` Gram matrix, which avoids an SVD of
    the growing donor matrix. Agrees with :func:`fit_pcr` up to rounding.
    """

    def __init__(self, T0):
        self.T0 = int(T0)
        self.gram = np.zeros((self.T0, self.T0))
        self.xty = np.zeros(self.T0)
        self.m = 0
        self._theta = {}

    def add(self, x, y_sum):
        x = as_vector(x, "x", length=self.T0)
        self.gram += np.outer(x, x)
        self.xty += float(y_sum) * x
        self.m += 1
        self._theta.clear()

    def theta(self, rank, rho=None):
        """Slope at truncation ``min(rank, m, T0)``; zeros when empty."""
        r = min(int(rank), self.m, self.T0)
        key = (r, rho)
        if key not in self._theta:
            if r == 0:
                self._theta[key] = np.zeros(self.T0)
            else:
                lam, V = np.linalg.eigh(self.gram)
                lam, V = lam[::-1][:r], V[:, ::-1][:, :r]
                pen = 1e-8 * max(lam[0], 0.0) if rho is None else rho
                tiny = self.T0 * np.finfo(float).eps * max(lam[0], 0.0)
                gain = np.where(lam > tiny, 1.0 / (np.maximum(lam, tiny) + pen), 0.0)
                self._theta[key] = V @ (gain * (V.T @ self.xty))
        return self._theta[key]

    def predict_avg(self, y_pre, T1, rank, rho=None):
        return float(self.theta(rank, rho) @ np.asarray(y_pre, float)) / T1


class PCRRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn wrapper around :func:`fit_pcr`.

    Parameters
    ----------
    rank : int, default=1
    rho : float or None, default=None
    post_length : int, default=1
        Divisor applied in :meth:`predict`, so that a slope fitted on
        summed post outcomes predicts averages.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    spectrum_ : ndarray
    projector_ : ndarray
    degraded_ : bool
    """

    def __init__(self, rank=1, rho=None, post_length=1):
        self.rank = rank
        self.rho = rho
        self.post_length = post_length

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        # a rank-truncated fit need not explain most of the variance
        tags.regressor_tags.poor_score = True
        return tags

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        model = fit_pcr(DonorSet(X, y), self.rank, self.rho)
        self.model_ = model
        self.coef_ = model.theta_hat
        self.spectrum_ = model.spectrum
        self.projector_ = model.projector
        self.degraded_ = model.degraded
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ / self.post_length
