"""Experiment orchestration: the two-type simulation study and the
impossibility demonstration.

Each repetition draws its own generator from ``SeedSequence([seed, run])``,
so results do not depend on the number of worker processes.  The worker
count comes from the ``IESC_WORKERS`` environment variable (default 1).
"""

import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .agents import (
    ExploreExploitDescriptor,
    PopulationKnowledge,
    UniformInterval,
    UnitPrior,
    event_prob_xi,
    respond,
)
from .panel_model import (
    SimDgpConfig,
    draw_potential_outcomes,
    generate_impossibility_instance,
    generate_sim_instance,
    sim_unit_factor,
    write_config,
)
from .pcr import DonorSet, StreamingPCR, alpha_bound, confidence_params, fit_pcr, predict_avg_post
from .policy_k import KArmPolicy, KPolicyConfig, required_batch_L_k
from .policy_two import (
    HistoryRecord,
    InfeasibleError,
    NoiselessPolicy,
    NoRecommendationPolicy,
    PolicyConfig,
    RacingPolicy,
    Recommendation,
    SizingResult,
    TwoArmPolicy,
    default_delta_split,
    noiseless_batch_bound,
    required_batch_L,
    required_n0,
    write_replay_log,
)

__all__ = [
    "WORKERS_ENV",
    "POLICIES",
    "RESULT_HEADER",
    "ExperimentConfig",
    "RunOutput",
    "ExperimentResult",
    "ImpossibilityTable",
    "gap_priors",
    "size_policy",
    "run_single",
    "run_experiment",
    "run_sweep",
    "write_outputs",
    "impossibility_demo",
    "expected_abs_error",
    "sim_overlap_fixture",
    "cli",
]

WORKERS_ENV = "IESC_WORKERS"
POLICIES = ("alg1", "alg2", "noiseless", "racing", "none")
METHODS = ("ie", "baseline")
RESULT_HEADER = ("run", "unit", "method", "error")
SUMMARY_HEADER = ("method", "unit", "mean", "std")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for the two-type simulation study.

    Parameters
    ----------
    r : int
        Latent dimension (even).
    gap : float
        Prior mean gap ``mu1 - mu0`` believed by type-1 units.
    n_units : int
    T0, T1 : int
    noise_var : float
    unit_value_range : tuple of float
    normalize : bool
    C : float
        Exploit gap; also the racing threshold.
    delta : float
        Total failure budget, split evenly in three.
    sizing : {"idealized", "theory"}
        ``"idealized"`` sizes ``L`` with ``alpha = sigma = delta = 0``;
        ``"theory"`` plugs in the PCR bound fitted on first-stage
        treatment donors.
    agent_mode : {"trusting", "rational"}
        Rational units are only supported with ``policy="alg1"``.
    policy : {"alg1", "alg2", "noiseless", "racing", "none"}
        Engine of the incentivized arm. The baseline arm never recommends.
    runs : int
    seed : int
    N0 : int or None
        First-stage length; ``None`` sizes it from the type-1 subspace.
    B : int or None
        Batch count; ``None`` keeps batching until the stream ends.
    rank : int or None
        PCR truncation rank; ``None`` uses ``r``.
    r_values, gap_values : tuple
        Sweep axes used by :func:`run_sweep`; empty means the single value.
    out : str or None
        Output directory.
    """

    r: int = 4
    gap: float = 0.4
    n_units: int = 500
    T0: int = 100
    T1: int = 100
    noise_var: float = 0.01
    unit_value_range: Tuple[float, float] = (0.0, 1.0)
    normalize: bool = False
    C: float = 0.125
    delta: float = 0.1
    sizing: str = "idealized"
    agent_mode: str = "trusting"
    policy: str = "alg1"
    runs: int = 10
    seed: int = 0
    N0: Optional[int] = None
    B: Optional[int] = None
    rank: Optional[int] = None
    r_values: Tuple[int, ...] = ()
    gap_values: Tuple[float, ...] = ()
    out: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.n_units < 2:
            raise ValueError("n_units must be at least 2")
        for name in ("unit_value_range", "r_values", "gap_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(v <= 0 for v in (self.gap,) + self.gap_values + self.r_values):
            raise ValueError("gap and sweep values must be positive")
        if self.sizing not in ("idealized", "theory"):
            raise ValueError(f"unknown sizing {self.sizing!r}")
        if self.agent_mode not in ("trusting", "rational"):
            raise ValueError(f"unknown agent_mode {self.agent_mode!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.agent_mode == "rational" and self.policy != "alg1":
            raise ValueError("rational agents are only supported with policy 'alg1'")
        if not 0 < self.delta < 1 or not 0 < self.C < 1:
            raise ValueError("delta and C must lie in (0, 1)")
        self.dgp  # validates r, T0, T1, noise_var

    @classmethod
    def from_dict(cls, payload):
        """Build from a JSON-style mapping; unknown keys raise ``ValueError``."""
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def to_dict(self):
        return asdict(self)

    @property
    def dgp(self):
        return SimDgpConfig(r=self.r, unit_value_range=self.unit_value_range,
                            noise_var=self.noise_var, T0=self.T0, T1=self.T1,
                            normalize=self.normalize)

    @property
    def pcr_rank(self):
        return self.r if self.rank is None else self.rank


def gap_priors(gap):
    """Beliefs of both types for a given type-1 prior gap.

    Type-1 units believe control ``~ U[0, 0.5]`` and treatment
    ``~ U[-0.25, 0.75 + 2 gap]`` (mean ``0.25 + gap``). Type-0 units believe
    control ``~ U[0, 1]`` and treatment ``~ U[-0.5, 0.5]``.
    """
    type1 = UnitPrior((UniformInterval(0.0, 0.5), UniformInterval(-0.25, 0.75 + 2 * gap)))
    type0 = UnitPrior((UniformInterval(0.0, 1.0), UniformInterval(-0.5, 0.5)))
    return {0: type0, 1: type1}


def _knowledge(priors, C):
    mu0, mu1 = priors[1].means
    return PopulationKnowledge(
        p_L=0.5, p_H=0.5,
        mu_bounds={(0, 1): (mu0, mu0), (1, 1): (mu1, mu1)},
        zeta_C=max(event_prob_xi(priors[1], C), 1e-12), C=C,
    )


def _first_stage_n0(cfg):
    if cfg.N0 is not None:
        return int(cfg.N0)
    d0 = default_delta_split(cfg.delta)[0]
    return required_n0(max(cfg.r // 2, 1), d0, p_min=0.5)


def size_policy(cfg, first_stage=None):
    """Size the batch length of the incentivized arm.

    Parameters
    ----------
    cfg : ExperimentConfig
    first_stage : tuple of ndarray, optional
        ``(pre, post_sum)`` of first-stage treatment donors; required by
        ``sizing="theory"``.

    Returns
    -------
    SizingResult
        ``value`` is 0 for the baseline policy.

    Raises
    ------
    InfeasibleError
    """
    priors = gap_priors(cfg.gap)
    if cfg.policy in ("none", "racing"):
        return SizingResult(0, {})
    if cfg.policy == "noiseless":
        # only type-1 units are asked to leave their preferred arm
        psi0, psi1, L = noiseless_batch_bound(None, priors[1])
        return SizingResult(L, {"psi0": psi0, "psi1": psi1, "bound": 1 + max(psi0, psi1)})
    alpha, sigma, dtot, deps = 0.0, 0.0, 0.0, None
    if cfg.sizing == "theory":
        if first_stage is None:
            raise ValueError("theory sizing needs the first-stage treatment donors")
        _, dpcr, deps = default_delta_split(cfg.delta)
        pre, post_sum = first_stage
        rank = min(cfg.pcr_rank, *pre.shape)
        model = fit_pcr(DonorSet(pre, post_sum, 1), rank)
        gamma = max(float(np.linalg.norm(model.theta_hat)), 1e-12)
        sigma = math.sqrt(cfg.noise_var)
        params = confidence_params(model, cfg.T0, cfg.T1, gamma, sigma)
        try:
            alpha = alpha_bound(params, dpcr, strict=True)
        except ValueError as exc:
            raise InfeasibleError(f"PCR bound unavailable: {exc}", {"sigma_r": params.sigma_r}) from exc
        dtot = cfg.delta
    if cfg.policy == "alg2":
        mu0, mu1 = priors[1].means
        return required_batch_L_k(C=cfg.C, alpha=alpha, sigma=sigma, T1=cfg.T1, delta=dtot,
                                  gap=mu1 - mu0, prob_E=event_prob_xi(priors[1], cfg.C),
                                  delta_eps=deps)
    return required_batch_L(priors=[priors[1]], C=cfg.C, alpha=alpha, sigma=sigma, T1=cfg.T1,
                            delta_total=dtot, delta_eps=deps)


# ------------------------------------------------------------ policy adapters


class _StagedPolicy:
    """Common first stage, then a batch engine created once sizing is known."""

    def __init__(self, cfg, N0, sizing, rng):
        self.cfg = cfg
        self.N0 = N0
        self.sizing = sizing
        self.rng = rng
        self.first: List[HistoryRecord] = []
        self.engine = None

    def _start(self):
        raise NotImplementedError

    def recommend(self, i, y_pre, exp_pre, prior):
        if self.engine is None and i >= self.N0:
            if self.sizing is None:
                rows = [h for h in self.first if h.d == 1]
                if not rows:
                    raise InfeasibleError("no treatment donors in the first stage", {"N0": self.N0})
                pre = np.vstack([h.y_pre for h in rows])
                post = np.array([float(np.sum(h.y_post)) for h in rows])
                self.sizing = size_policy(self.cfg, (pre, post))
            self._start()
        if self.engine is None:
            return Recommendation(None, "first_stage")
        return self._engine_recommend(y_pre, exp_pre, prior)

    def record(self, i, y_pre, exp_pre, rec, d, y_post):
        if self.engine is None:
            self.first.append(HistoryRecord(unit=i, y_pre=np.asarray(y_pre, float), d_hat=None,
                                            meta=rec.meta, d=int(d),
                                            y_post=np.asarray(y_post, float)))
        else:
            self._engine_record(y_pre, exp_pre, rec, d, y_post)

    def _engine_recommend(self, y_pre, exp_pre, prior):
        return self.engine.recommend(y_pre)

    def _engine_record(self, y_pre, exp_pre, rec, d, y_post):
        self.engine.record(y_pre, rec, d, y_post)

    def _seed_history(self, state):
        state.history.extend(self.first)
        state.issued = len(self.first)

    def log(self):
        if self.engine is None:
            return [h.log_entry() for h in self.first]
        return self.engine.log()


class _Alg1(_StagedPolicy):
    def _start(self):
        cfg = self.cfg
        pcfg = PolicyConfig(N0=self.N0, L=self.sizing.value, B=cfg.B, C=cfg.C, T1=cfg.T1,
                            rank=cfg.pcr_rank, delta_split=default_delta_split(cfg.delta))
        self.engine = TwoArmPolicy(pcfg, _knowledge(gap_priors(cfg.gap), cfg.C), self.rng)
        self._seed_history(self.engine.state)


class _Alg2(_StagedPolicy):
    def _start(self):
        cfg = self.cfg
        mu0 = gap_priors(cfg.gap)[1].means[0]
        B = cfg.B if cfg.B is not None else max(1, cfg.n_units)
        kcfg = KPolicyConfig(subtype=(1, 0), N0=self.N0, L=self.sizing.value, B=B, C=cfg.C,
                             T1=cfg.T1, mu_lower={0: mu0}, rank=cfg.pcr_rank)
        self.engine = KArmPolicy(kcfg, self.rng)
        self._seed_history(self.engine.state)
        self.engine.state.ells.extend([None] * len(self.first))


class _Racing(_StagedPolicy):
    def _start(self):
        self.engine = RacingPolicy(self.cfg.C, self.cfg.T1, self.cfg.pcr_rank, self.rng)
        self.engine.history.extend(self.first)
        self.engine.state.issued = len(self.first)


class _Noiseless(_StagedPolicy):
    """Span-check policy fed the hidden pre-period expectations."""

    def _start(self):
        self.engine = NoiselessPolicy(self.N0, self.sizing.value, self.rng, mode="random_types",
                                      delta=self.cfg.delta)
        self.engine.state.issued = len(self.first)
        self.records = list(self.first)
        for h, x in zip(self.first, self._first_exp):
            self.engine.record(x, h.d, float(np.mean(h.y_post)))

    def recommend(self, i, y_pre, exp_pre, prior):
        if self.engine is None:
            self._first_exp = getattr(self, "_first_exp", [])
        return super().recommend(i, y_pre, exp_pre, prior)

    def record(self, i, y_pre, exp_pre, rec, d, y_post):
        if self.engine is None:
            self._first_exp.append(np.asarray(exp_pre, float))
            return super().record(i, y_pre, exp_pre, rec, d, y_post)
        self.records.append(HistoryRecord(unit=i, y_pre=np.asarray(y_pre, float), d_hat=rec.d,
                                          meta=rec.meta, d=int(d),
                                          y_post=np.asarray(y_post, float)))
        self.engine.record(exp_pre, d, float(np.mean(y_post)))

    def _engine_recommend(self, y_pre, exp_pre, prior):
        return self.engine.recommend(exp_pre, prior)

    def log(self):
        return [h.log_entry() for h in (self.records if self.engine is not None else self.first)]


class _Baseline:
    def __init__(self, rng):
        self.engine = NoRecommendationPolicy(rng)

    def recommend(self, i, y_pre, exp_pre, prior):
        return self.engine.recommend(y_pre)

    def record(self, i, y_pre, exp_pre, rec, d, y_post):
        self.engine.record(y_pre, rec, d, y_post)

    def log(self):
        return self.engine.log()


_ADAPTERS = {"alg1": _Alg1, "alg2": _Alg2, "racing": _Racing, "noiseless": _Noiseless}


# ------------------------------------------------------------ simulation


@dataclass
class RunOutput:
    """Per-repetition output.

    Attributes
    ----------
    errors : ndarray of shape (2, n_units)
        Probe errors for the incentivized (row 0) and baseline (row 1) arms.
    logs : dict
        Replay-log entries per method.
    sizing : SizingResult or None
    N0 : int
    elapsed : float
        Wall-clock seconds.
    """

    errors: np.ndarray
    logs: Dict[str, list]
    sizing: Optional[SizingResult]
    N0: int
    elapsed: float


def run_single(cfg, run):
    """Simulate one repetition of both arms on shared potential outcomes."""
    t_start = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, run]))
    dgp = cfg.dgp
    config, model = generate_sim_instance(dgp, cfg.n_units, rng)
    pot = draw_potential_outcomes(config, model, rng)
    exp_pre = model.expected_pre()
    probe_v = sim_unit_factor(dgp, 1, rng)
    U0 = model.time_factors[0]
    probe_pre = U0[: cfg.T0] @ probe_v + rng.normal(0.0, config.sigma, cfg.T0)
    probe_truth = float(np.mean(U0[cfg.T0:] @ probe_v))
    policy_seed, agent_seed = (int(s) for s in rng.integers(2**63, size=2))

    priors = gap_priors(cfg.gap)
    types = model.type_labels
    rank = cfg.pcr_rank
    N0 = _first_stage_n0(cfg)
    sizing = size_policy(cfg) if cfg.sizing == "idealized" else None
    if cfg.policy in ("none", "racing", "noiseless"):
        sizing = size_policy(cfg)

    errors = np.empty((len(METHODS), cfg.n_units))
    logs = {}
    for a, method in enumerate(METHODS):
        prng = np.random.default_rng(policy_seed)
        arng = np.random.default_rng(agent_seed)
        if method == "baseline" or cfg.policy == "none":
            policy = _Baseline(prng)
        else:
            policy = _ADAPTERS[cfg.policy](cfg, N0, sizing, prng)
        stream = StreamingPCR(cfg.T0)
        cache = {}
        for i in range(cfg.n_units):
            y_pre = pot.pre[i]
            prior = priors[int(types[i])]
            rec = policy.recommend(i, y_pre, exp_pre[i], prior)
            if cfg.agent_mode == "rational" and rec.d is not None:
                key = (int(types[i]), rec.d)
                if key not in cache:
                    desc = ExploreExploitDescriptor(policy.sizing.value, cfg.C, priors[1].means[0])
                    cache[key] = respond(prior, rec.d, desc, "rational", rng=arng)
                d = cache[key]
            else:
                d = respond(prior, rec.d)
            y_post = pot.post[d][i]
            policy.record(i, y_pre, exp_pre[i], rec, d, y_post)
            if d == 0:
                stream.add(y_pre, float(np.sum(y_post)))
            errors[a, i] = abs(stream.predict_avg(probe_pre, cfg.T1, rank) - probe_truth)
        logs[method] = policy.log()
        if method == "ie" and not isinstance(policy, _Baseline):
            sizing = policy.sizing
    return RunOutput(errors, logs, sizing, N0, time.perf_counter() - t_start)


@dataclass
class ExperimentResult:
    """Aggregated output of :func:`run_experiment`.

    Attributes
    ----------
    config : ExperimentConfig
    errors : ndarray of shape (runs, 2, n_units)
    runs : list of RunOutput
    """

    config: ExperimentConfig
    errors: np.ndarray
    runs: List[RunOutput] = field(repr=False)

    def mean_curve(self, method):
        return self.errors[:, METHODS.index(method)].mean(axis=0)

    def tail_mean(self, method, window=100):
        """Mean probe error over the final ``window`` units, across runs."""
        return float(self.errors[:, METHODS.index(method), -window:].mean())

    def tail_ratio(self, window=100):
        base = self.tail_mean("baseline", window)
        return self.tail_mean("ie", window) / base if base > 0 else math.inf


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be at least 1")
    return n


def run_experiment(cfg, out=None):
    """Run ``cfg.runs`` repetitions and optionally write outputs.

    Parameters
    ----------
    cfg : ExperimentConfig
    out : path-like, optional
        Output directory; defaults to ``cfg.out``. Nothing is written
        when both are ``None``.

    Returns
    -------
    ExperimentResult

    Raises
    ------
    InfeasibleError
        When the batch size cannot be sized; carries the term ledger.
    """
    workers = _workers()
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.runs)) as pool:
            outputs = list(pool.map(run_single, [cfg] * cfg.runs, range(cfg.runs)))
    else:
        outputs = [run_single(cfg, run) for run in range(cfg.runs)]
    result = ExperimentResult(cfg, np.stack([o.errors for o in outputs]), outputs)
    out = cfg.out if out is None else out
    if out is not None:
        write_outputs(result, out)
    return result


def run_sweep(cfg, out=None):
    """Run every ``(r, gap)`` combination of the sweep axes.

    Outputs of each combination go to ``<out>/r<r>_gap<gap>``.

    Returns
    -------
    dict
        ``(r, gap) -> ExperimentResult``.
    """
    out = cfg.out if out is None else out
    results = {}
    for r, gap in itertools.product(cfg.r_values or (cfg.r,), cfg.gap_values or (cfg.gap,)):
        sub = replace(cfg, r=r, gap=gap, r_values=(), gap_values=(), out=None)
        target = None if out is None else Path(out) / f"r{r}_gap{gap:g}"
        results[(r, gap)] = run_experiment(sub, target)
    return results


def _fmt(x):
    return repr(float(x))


def write_outputs(result, out):
    """Write ``results.csv``, ``summary.csv``, ``timing.csv``, ``sizing.txt``,
    ``config.json``, replay logs and a plotting stub into ``out``.

    Everything except ``timing.csv`` is a deterministic function of the
    configuration.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for run, ro in enumerate(result.runs):
            for a, method in enumerate(METHODS):
                for i, e in enumerate(ro.errors[a]):
                    w.writerow((run, i, method, _fmt(e)))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for a, method in enumerate(METHODS):
            block = result.errors[:, a]
            for i, (m, s) in enumerate(zip(block.mean(axis=0), block.std(axis=0))):
                w.writerow((method, i, _fmt(m), _fmt(s)))
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("run", "seconds"))
        for run, ro in enumerate(result.runs):
            w.writerow((run, f"{ro.elapsed:.6f}"))
    with open(out / "sizing.txt", "w") as fh:
        for run, ro in enumerate(result.runs):
            value = ro.sizing.value if ro.sizing is not None else 0
            fh.write(f"run={run} policy={cfg.policy} sizing={cfg.sizing} N0={ro.N0} L={value}\n")
            if ro.sizing is not None:
                for key in sorted(ro.sizing.terms):
                    fh.write(f"  {key} = {ro.sizing.terms[key]!r}\n")
    write_config(out / "config.json", cfg.to_dict())
    logdir = out / "logs"
    logdir.mkdir(exist_ok=True)
    for run, ro in enumerate(result.runs):
        for method, entries in ro.logs.items():
            write_replay_log(logdir / f"run{run}_{method}.jsonl", entries)
    (out / "plot_results.py").write_text(_PLOT_STUB)


_PLOT_STUB = '''"""Plot mean probe error per arrival from summary.csv (needs matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "summary.csv"
curves = {}
with open(path) as fh:
    for row in csv.DictReader(fh):
        c = curves.setdefault(row["method"], ([], [], []))
        c[0].append(int(row["unit"]))
        c[1].append(float(row["mean"]))
        c[2].append(float(row["std"]))
for method, (x, m, s) in curves.items():
    plt.plot(x, m, label=method)
    plt.fill_between(x, [a - b for a, b in zip(m, s)], [a + b for a, b in zip(m, s)], alpha=0.2)
plt.xlabel("units arrived")
plt.ylabel("probe error")
plt.legend()
plt.savefig("probe_error.png", dpi=150)
'''


# ------------------------------------------------------------ impossibility


def expected_abs_error(estimate, c):
    """``E|H - estimate|`` for ``H ~ U[-c, c]``.

    Equals ``(c^2 + e^2) / (2c)`` for ``|e| <= c`` and ``|e|`` otherwise.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    e = abs(float(estimate))
    return (c * c + e * e) / (2 * c) if e <= c else e


@dataclass
class ImpossibilityTable:
    """Expected error of constant estimators of an unidentifiable outcome.

    Attributes
    ----------
    c : float
    estimates, analytic, monte_carlo : ndarray
    draws : int
    pcr_estimate : float
        PCR prediction for the type-1 unit from type-0 donors; the same for
        every value of ``H``.
    pcr_error : float
        Analytic expected error of ``pcr_estimate``.
    """

    c: float
    estimates: np.ndarray
    analytic: np.ndarray
    monte_carlo: np.ndarray
    draws: int
    pcr_estimate: float
    pcr_error: float

    @property
    def argmin(self):
        return int(np.argmin(self.analytic))

    @property
    def min_analytic(self):
        return float(self.analytic[self.argmin])

    @property
    def min_monte_carlo(self):
        return float(np.min(self.monte_carlo))

    def lines(self):
        out = ["estimate,analytic,monte_carlo"]
        out += [f"{e:.6f},{a:.6f},{m:.6f}"
                for e, a, m in zip(self.estimates, self.analytic, self.monte_carlo)]
        out.append(f"min_analytic={self.min_analytic:.4f} min_monte_carlo={self.min_monte_carlo:.4f} "
                   f"at_estimate={self.estimates[self.argmin]:.4f}")
        out.append(f"pcr_estimate={self.pcr_estimate:.4f} pcr_error={self.pcr_error:.4f}")
        return out


def impossibility_demo(c=1.0, grid=21, draws=100_000, seed=0):
    """Expected error of every estimator value on a grid over ``[-c, c]``.

    The post-period control outcome ``H`` of a type-1 unit is uniform on
    ``[-c, c]`` and invisible to type-0 donors, so any estimate ``e`` incurs
    ``E|H - e| >= c / 2``.

    Parameters
    ----------
    c : float
    grid : int
        Number of grid points, at least 3; 0 is always included.
    draws : int
        Monte Carlo draws of ``H`` shared by every grid point.
    seed : int

    Returns
    -------
    ImpossibilityTable
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if int(grid) < 3:
        raise ValueError("grid must have at least 3 points")
    if int(draws) < 1:
        raise ValueError("draws must be positive")
    est = np.union1d(np.linspace(-c, c, int(grid)), [0.0])
    analytic = np.array([expected_abs_error(e, c) for e in est])
    H = np.random.default_rng(seed).uniform(-c, c, int(draws))
    mc = np.abs(H[None, :] - est[:, None]).mean(axis=1)

    config, model = generate_impossibility_instance(c, 0.0, n=4)
    donors = np.flatnonzero(model.type_labels == 0)
    target = int(np.flatnonzero(model.type_labels == 1)[0])
    E0 = model.expected(0)
    T0 = model.T0
    pcr = fit_pcr(DonorSet(E0[donors, :T0], E0[donors, T0:].sum(axis=1)), 1)
    pcr_est = predict_avg_post(pcr, E0[target, :T0], model.T1)
    return ImpossibilityTable(c, est, analytic, mc, int(draws), pcr_est, expected_abs_error(pcr_est, c))


def cli(argv=None):
    """Command-line entry point; see :mod:`iesc.cli`."""
    from .cli import main

    return main(argv)


def sim_overlap_fixture(seed=0, n_units=500, r=4):
    """Type-0 donors and a fresh type-1 test unit from the simulation design.

    All units are observed under control over the pre-period, with noise.

    Returns
    -------
    donor_pre : ndarray of shape (m, T0)
    test_pre : ndarray of shape (T0,)
    """
    rng = np.random.default_rng(seed)
    dgp = SimDgpConfig(r=r, first_type=(1 - n_units) % 2)
    config, model = generate_sim_instance(dgp, n_units + 1, rng)
    pre = draw_potential_outcomes(config, model, rng).pre
    types = model.type_labels
    return pre[:n_units][types[:n_units] == 0], pre[n_units]
