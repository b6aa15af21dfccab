"""Latent factor panel model, outcome realization and synthetic instances.

Expected outcomes follow ``E[y_it^(d)] = <u_t^(d), v_i>``.  Units and time
steps are 0-indexed internally; the CSV header uses 1-indexed labels
``t1..tT0``.  Time-step parity in the simulation design refers to the
1-indexed convention, so an "even" step ``t`` sits at array column ``t - 1``.
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._validation import as_matrix, check_positive_int

__all__ = [
    "ModelConfig",
    "LatentFactorModel",
    "PanelRealization",
    "PotentialOutcomes",
    "SimDgpConfig",
    "gaussian_noise",
    "expected_outcome",
    "draw_potential_outcomes",
    "realize_panel",
    "generate_sim_instance",
    "generate_impossibility_instance",
    "avg_post_expected",
    "true_slope",
    "write_panel_csv",
    "read_panel_csv",
    "write_config",
    "read_config",
]


NoiseSampler = Callable[[np.random.Generator, Tuple[int, ...], float], np.ndarray]


def gaussian_noise(rng, shape, sigma):
    """Default noise family, ``N(0, sigma^2)``."""
    return rng.normal(0.0, sigma, size=shape) if sigma > 0 else np.zeros(shape)


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and bounds of a panel instance.

    Parameters
    ----------
    n : int
        Number of units.
    T : int
        Total number of time steps.
    T0 : int
        Pre-intervention length; the post window has ``T1 = T - T0`` steps.
    r : int
        Latent dimension.
    sigma : float
        Noise standard deviation.
    gamma : float
        Upper bound on the slope norm ``||theta^(d)||``.
    k : int, default=2
        Number of interventions.
    outcome_bound : float, default=1.0
        Bound ``M`` on ``|E[y]|``.
    """

    n: int
    T: int
    T0: int
    r: int
    sigma: float
    gamma: float
    k: int = 2
    outcome_bound: float = 1.0

    def __post_init__(self):
        check_positive_int(self.n, "n")
        check_positive_int(self.r, "r")
        check_positive_int(self.k, "k", minimum=2)
        if not (0 < self.T0 < self.T):
            raise ValueError(f"need 0 < T0 < T, got T0={self.T0}, T={self.T}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.outcome_bound > 0:
            raise ValueError("outcome_bound must be positive")

    @property
    def T1(self):
        return self.T - self.T0


@dataclass(frozen=True)
class LatentFactorModel:
    """Ground-truth factors.

    Attributes
    ----------
    unit_factors : ndarray of shape (n, r)
    time_factors : dict of int -> ndarray of shape (T, r)
        Per-intervention time factors. Rows before ``T0`` must agree
        across interventions.
    T0 : int
    type_labels : ndarray of shape (n,)
    """

    unit_factors: np.ndarray
    time_factors: Mapping[int, np.ndarray]
    T0: int
    type_labels: np.ndarray = None

    def __post_init__(self):
        V = as_matrix(self.unit_factors, "unit_factors")
        tf = {int(d): as_matrix(U, f"time_factors[{d}]") for d, U in self.time_factors.items()}
        if sorted(tf) != list(range(len(tf))) or len(tf) < 2:
            raise ValueError("time_factors must be keyed 0..k-1 with k >= 2")
        shapes = {U.shape for U in tf.values()}
        if len(shapes) != 1:
            raise ValueError("all time factor matrices must share a shape")
        T, r = shapes.pop()
        if r != V.shape[1]:
            raise ValueError("time and unit factors disagree on r")
        if not 0 < self.T0 < T:
            raise ValueError("need 0 < T0 < T")
        for d in range(1, len(tf)):
            if not np.array_equal(tf[d][: self.T0], tf[0][: self.T0]):
                raise ValueError("pre-period factors must match across interventions")
        labels = (
            np.zeros(V.shape[0], dtype=int)
            if self.type_labels is None
            else np.asarray(self.type_labels)
        )
        if labels.shape != (V.shape[0],):
            raise ValueError("type_labels must have one entry per unit")
        V.setflags(write=False)
        for U in tf.values():
            U.setflags(write=False)
        object.__setattr__(self, "unit_factors", V)
        object.__setattr__(self, "time_factors", tf)
        object.__setattr__(self, "type_labels", labels)

    @property
    def n(self):
        return self.unit_factors.shape[0]

    @property
    def r(self):
        return self.unit_factors.shape[1]

    @property
    def T(self):
        return self.time_factors[0].shape[0]

    @property
    def T1(self):
        return self.T - self.T0

    @property
    def k(self):
        return len(self.time_factors)

    def expected(self, d):
        """Noiseless ``n x T`` outcome matrix under intervention ``d``."""
        return self.unit_factors @ self.time_factors[d].T

    def expected_pre(self):
        return self.unit_factors @ self.time_factors[0][: self.T0].T


@dataclass(frozen=True)
class PotentialOutcomes:
    """Noisy pre-period outcomes and post outcomes under every intervention."""

    pre: np.ndarray
    post: Dict[int, np.ndarray]


@dataclass(frozen=True)
class PanelRealization:
    """Observed panel plus oracle-only expectations.

    Attributes
    ----------
    pre : ndarray of shape (n, T0)
    chosen : ndarray of shape (n,)
    post : ndarray of shape (n, T1)
        Realized post outcomes under each unit's chosen intervention.
    hidden_expectations : dict of int -> ndarray of shape (n, T)
        Noiseless outcomes; for oracle checks only.
    """

    pre: np.ndarray
    chosen: np.ndarray
    post: np.ndarray
    hidden_expectations: Dict[int, np.ndarray] = field(repr=False)


@dataclass(frozen=True)
class SimDgpConfig:
    """Parameters of the two-type simulation design.

    Type-1 units load on the last ``r/2`` coordinates and type-0 units on
    the first ``r/2``. Pre-period factors alternate between the two halves
    by parity of the (1-indexed) time step.
    """

    r: int = 4
    unit_value_range: Tuple[float, float] = (0.0, 1.0)
    pre_factor_range: Tuple[float, float] = (0.25, 0.75)
    control_post_range: Tuple[float, float] = (0.0, 1.0)
    treat_post_range: Tuple[float, float] = (-1.0, 0.0)
    noise_var: float = 0.01
    T0: int = 100
    T1: int = 100
    normalize: bool = False
    first_type: int = 0

    def __post_init__(self):
        check_positive_int(self.r, "r", minimum=2)
        if self.r % 2:
            raise ValueError(f"r must be even, got {self.r}")
        check_positive_int(self.T0, "T0")
        check_positive_int(self.T1, "T1")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        for name in ("unit_value_range", "pre_factor_range", "control_post_range", "treat_post_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must satisfy lo <= hi")
        if self.first_type not in (0, 1):
            raise ValueError("first_type must be 0 or 1")

    @property
    def sigma(self):
        return float(np.sqrt(self.noise_var))


def _check_unit_time(model, i, t):
    if not 0 <= i < model.n:
        raise IndexError(f"unit index {i} out of range [0, {model.n})")
    if not 0 <= t < model.T:
        raise IndexError(f"time index {t} out of range [0, {model.T})")


def expected_outcome(model, i, t, d):
    """Return ``<u_t^(d), v_i>`` for 0-indexed unit ``i`` and time ``t``."""
    _check_unit_time(model, i, t)
    if d not in model.time_factors:
        raise IndexError(f"intervention {d} out of range")
    return float(model.time_factors[d][t] @ model.unit_factors[i])


def avg_post_expected(model, i, d):
    """Average expected post-window outcome of unit ``i`` under ``d``."""
    _check_unit_time(model, i, 0)
    if d not in model.time_factors:
        raise IndexError(f"intervention {d} out of range")
    post = model.time_factors[d][model.T0 :]
    return float(np.mean(post @ model.unit_factors[i]))


def true_slope(model, d):
    """Minimum-norm horizontal regression slope for intervention ``d``.

    Solves ``U_pre^T theta = sum_{t > T0} u_t^(d)`` so that
    ``<theta, E[y_pre]>`` equals the summed expected post outcome of every
    unit whose post factors lie in the span of the pre factors.
    """
    U_pre = model.time_factors[0][: model.T0]
    target = model.time_factors[d][model.T0 :].sum(axis=0)
    return np.linalg.pinv(U_pre.T) @ target


def draw_potential_outcomes(config, model, rng, noise=gaussian_noise):
    """Draw noisy outcomes for all units under every intervention.

    Noise is drawn in a fixed order (pre block, then post blocks by
    intervention), so the result is a pure function of the generator state.
    """
    n, T0, T1 = model.n, model.T0, model.T1
    pre = model.expected_pre() + noise(rng, (n, T0), config.sigma)
    post = {}
    for d in range(model.k):
        post[d] = model.expected(d)[:, T0:] + noise(rng, (n, T1), config.sigma)
    return PotentialOutcomes(pre=pre, post=post)


def realize_panel(config, model, assignments, rng, noise=gaussian_noise):
    """Realize observed outcomes for the given per-unit interventions.

    Parameters
    ----------
    config : ModelConfig
    model : LatentFactorModel
    assignments : array-like of int, shape (n,)
    rng : numpy.random.Generator
    noise : callable, default=gaussian_noise
        ``noise(rng, shape, sigma)`` returning zero-mean draws.

    Returns
    -------
    PanelRealization
    """
    chosen = np.asarray(assignments, dtype=int)
    if chosen.shape != (model.n,):
        raise ValueError(f"assignments must have shape ({model.n},)")
    if np.any((chosen < 0) | (chosen >= model.k)):
        raise ValueError("assignments contain an unknown intervention")
    pot = draw_potential_outcomes(config, model, rng, noise)
    post = np.empty((model.n, model.T1))
    for d in range(model.k):
        mask = chosen == d
        post[mask] = pot.post[d][mask]
    hidden = {d: model.expected(d) for d in range(model.k)}
    return PanelRealization(pre=pot.pre, chosen=chosen, post=post, hidden_expectations=hidden)


def _sim_unit_factors(dgp, types, rng):
    h = dgp.r // 2
    lo, hi = dgp.unit_value_range
    V = np.zeros((len(types), dgp.r))
    vals = rng.uniform(lo, hi, size=(len(types), h))
    for i, tp in enumerate(types):
        if tp == 1:
            V[i, h:] = vals[i]
        else:
            V[i, :h] = vals[i]
    if dgp.normalize:
        V *= 2.0 / dgp.r
    return V


def sim_unit_factor(dgp, unit_type, rng):
    """Draw one fresh unit factor of the given type."""
    return _sim_unit_factors(dgp, [unit_type], rng)[0]


def generate_sim_instance(dgp, n, rng):
    """Generate the alternating two-type simulation instance.

    Parameters
    ----------
    dgp : SimDgpConfig
    n : int
        Number of units, at least 2. Types alternate starting from
        ``dgp.first_type``.
    rng : numpy.random.Generator

    Returns
    -------
    config : ModelConfig
    model : LatentFactorModel
    """
    check_positive_int(n, "n", minimum=2)
    r, h = dgp.r, dgp.r // 2
    T0, T1 = dgp.T0, dgp.T1
    types = (np.arange(n) + dgp.first_type) % 2
    V = _sim_unit_factors(dgp, types, rng)

    lo, hi = dgp.pre_factor_range
    U_pre = np.zeros((T0, r))
    vals = rng.uniform(lo, hi, size=(T0, h))
    even = (np.arange(T0) + 1) % 2 == 0
    U_pre[even, h:] = vals[even]
    U_pre[~even, :h] = vals[~even]

    U0 = np.vstack([U_pre, rng.uniform(*dgp.control_post_range, size=(T1, r))])
    U1 = np.vstack([U_pre, rng.uniform(*dgp.treat_post_range, size=(T1, r))])
    model = LatentFactorModel(V, {0: U0, 1: U1}, T0, types)
    gamma = max(float(np.linalg.norm(true_slope(model, d))) for d in (0, 1))
    bound = max(float(np.max(np.abs(model.expected(d)))) for d in (0, 1))
    config = ModelConfig(
        n=n,
        T=T0 + T1,
        T0=T0,
        r=r,
        sigma=dgp.sigma,
        gamma=max(gamma, 1e-12),
        k=2,
        outcome_bound=1.0 if dgp.normalize else max(1.0, bound),
    )
    return config, model


def generate_impossibility_instance(c, H, T0=4, T1=2, n=2):
    """Build the two-dimensional instance on which overlap fails.

    Type-0 units carry ``[0, 1]`` and type-1 units ``[1, 0]``; pre factors
    alternate ``[1, 0]`` (even 1-indexed steps) and ``[0, 1]`` (odd steps);
    every post control factor is ``[H, 1]``. Treatment post factors are set
    to zero. Units alternate types starting with type 0. Noise is zero.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if abs(H) > c:
        raise ValueError(f"|H| must not exceed c, got H={H}, c={c}")
    check_positive_int(n, "n", minimum=2)
    types = np.arange(n) % 2
    V = np.where(types[:, None] == 0, [0.0, 1.0], [1.0, 0.0])
    U_pre = np.where(((np.arange(T0) + 1) % 2 == 0)[:, None], [1.0, 0.0], [0.0, 1.0])
    U0 = np.vstack([U_pre, np.tile([float(H), 1.0], (T1, 1))])
    U1 = np.vstack([U_pre, np.zeros((T1, 2))])
    model = LatentFactorModel(V, {0: U0, 1: U1}, T0, types)
    gamma = max(float(np.linalg.norm(true_slope(model, 0))), 1e-12)
    config = ModelConfig(n=n, T=T0 + T1, T0=T0, r=2, sigma=0.0, gamma=gamma, k=2,
                         outcome_bound=max(1.0, abs(float(H))))
    return config, model


def write_panel_csv(path, pre):
    """Write a units-by-time matrix with header ``t1..tT0``."""
    pre = as_matrix(pre, "pre")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"t{j + 1}" for j in range(pre.shape[1])])
        for row in pre:
            w.writerow([repr(float(x)) for x in row])


def read_panel_csv(path):
    """Read a matrix written by :func:`write_panel_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    if header != [f"t{j + 1}" for j in range(len(header))]:
        raise ValueError(f"{path}: header must be t1..tT0")
    data = [[float(x) for x in row] for row in rows[1:] if row]
    return as_matrix(np.array(data), "pre")


def write_config(path, payload):
    """Write instance metadata as JSON."""
    def _default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def read_config(path):
    with open(path) as fh:
        return json.load(fh)
