"""Masked-load recovery, statistics-matching calibration and prediction.

The masked load (consumer demand hidden behind PV injection) is
estimated as net load plus predicted PV, summarized by a short
statistic vector, and matched against simulated jump-diffusion paths
under common random numbers.  Forward prediction produces a Monte
Carlo mean path with a +/- 2 sigma envelope.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.signal

from .errors import InvalidArgumentError
from .oujump import OuParams, increment_streams, jump_contributions
from .timeseries import UniformSeries, check_aligned

DEFAULT_LAG_COUNT = 60
DEFAULT_STAT_WEIGHT = 1.0
DEFAULT_REG_WEIGHT = 1e-3
_NORM_EPS = 1e-9


@dataclass(frozen=True)
class StatVector:
    """Summary statistics matched during calibration."""

    mean: float
    std: float
    ac_norm: float
    t1: int

    def __post_init__(self):
        for name in ("mean", "std", "ac_norm"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "t1", int(self.t1))
        if self.t1 < 1:
            raise InvalidArgumentError("t1 must be at least 1 lag")
        if self.std < 0 or self.ac_norm < 0:
            raise InvalidArgumentError("std and ac_norm must be non-negative")
        if not all(np.isfinite(v) for v in (self.mean, self.std, self.ac_norm)):
            raise InvalidArgumentError("statistics must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, self.std, self.ac_norm])


@dataclass(frozen=True)
class CalibrationProblem:
    """Frozen inputs of one calibration run.

    ``window_steps`` is the number of simulated transitions per
    realization (paths carry one extra sample for the start value);
    ``seed`` freezes the noise across objective evaluations so the
    Monte Carlo objective is a deterministic function of the
    parameters.
    """

    observed_stats: StatVector
    theta_prior: OuParams
    n_realizations: int
    window_steps: int
    dt: float
    seed: int
    stat_weight: float = DEFAULT_STAT_WEIGHT
    reg_weight: float = DEFAULT_REG_WEIGHT

    def __post_init__(self):
        if self.n_realizations < 1:
            raise InvalidArgumentError("need at least 1 realization")
        if self.window_steps < self.observed_stats.t1:
            raise InvalidArgumentError(
                "window_steps must cover at least t1 autocorrelation lags"
            )
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgumentError("dt must be positive")
        if self.stat_weight < 0 or self.reg_weight < 0:
            raise InvalidArgumentError("weights must be non-negative")
        if not isinstance(self.seed, (int, np.integer)):
            raise InvalidArgumentError("seed must be an int")


@dataclass(frozen=True)
class PredictionEnvelope:
    """Pointwise Monte Carlo mean with a symmetric deviation band."""

    mean_path: UniformSeries
    lower: UniformSeries
    upper: UniformSeries
    n_realizations: int

    def __post_init__(self):
        check_aligned(self.mean_path, self.lower, "envelope")
        check_aligned(self.mean_path, self.upper, "envelope")
        if self.n_realizations < 1:
            raise InvalidArgumentError("n_realizations must be positive")
        m = self.mean_path.values
        if np.any(self.lower.values > m) or np.any(m > self.upper.values):
            raise InvalidArgumentError("envelope must satisfy lower <= mean <= upper")


@dataclass(frozen=True)
class CalibrationResult:
    """Best parameters found, with the accepted-objective trace."""

    params: OuParams
    trace: tuple
    final_objective: float
    n_evals: int
    budget_exhausted: bool


def masked_from_net(net: UniformSeries, pv_pred: UniformSeries) -> UniformSeries:
    """Masked-load estimate: net load plus (predicted) PV generation."""
    check_aligned(net, pv_pred, "net/pv")
    return net.with_values(net.values + pv_pred.values)


def _autocorr_norm(values_2d: np.ndarray, t1: int) -> np.ndarray:
    """Row-wise (1/t1) * l2-norm of autocorrelations at lags 1..t1."""
    xc = values_2d - values_2d.mean(axis=1, keepdims=True)
    denom = np.sum(xc * xc, axis=1)
    if np.any(denom == 0.0):
        raise InvalidArgumentError("zero-variance series has no autocorrelation")
    acc = np.zeros(values_2d.shape[0])
    for tau in range(1, t1 + 1):
        r = np.sum(xc[:, :-tau] * xc[:, tau:], axis=1) / denom
        acc += r * r
    return np.sqrt(acc) / t1


def stat_vector(series: UniformSeries, t1: int = DEFAULT_LAG_COUNT) -> StatVector:
    """Mean, sample std and weighted autocorrelation norm of one series.

    Autocorrelations use the biased estimator (fixed denominator
    sum of squared deviations), which keeps every lag in [-1, 1].
    """
    if t1 < 1:
        raise InvalidArgumentError("t1 must be at least 1")
    if len(series) <= t1:
        raise InvalidArgumentError(
            f"series length {len(series)} must exceed t1={t1}"
        )
    v = series.values[None, :]
    ac = float(_autocorr_norm(v, t1)[0])
    return StatVector(float(series.values.mean()),
                      float(series.values.std(ddof=1)), ac, t1)


@functools.lru_cache(maxsize=4)
def _stream_matrices(seed: int, n_realizations: int, n: int):
    """Per-realization noise streams stacked into (n_realizations, n) arrays.

    Realization r uses the r-th spawned child of SeedSequence(seed), the
    same mapping simulate_em sees when handed that child directly.
    Cached so repeated objective evaluations reuse the frozen noise.
    """
    children = np.random.SeedSequence(seed).spawn(n_realizations)
    z = np.empty((n_realizations, n))
    u_occ = np.empty((n_realizations, n))
    u_mag = np.empty((n_realizations, n))
    u_sign = np.empty((n_realizations, n))
    for r, child in enumerate(children):
        z[r], u_occ[r], u_mag[r], u_sign[r] = increment_streams(child, n)
    for arr in (z, u_occ, u_mag, u_sign):
        arr.setflags(write=False)
    return z, u_occ, u_mag, u_sign


def simulate_paths(theta: OuParams, x0: float, n: int, dt: float,
                   n_realizations: int, seed: int) -> np.ndarray:
    """Batch of Euler-Maruyama paths, one per row, (n_realizations, n+1).

    Row r is bit-identical to simulate_em run on the r-th spawned child
    seed, so single-path and batch results are interchangeable.
    """
    if n_realizations < 1:
        raise InvalidArgumentError("need at least 1 realization")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"need n >= 1 steps, got {n!r}")
    if not np.isfinite(dt) or dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if not np.isfinite(x0):
        raise InvalidArgumentError("x0 must be finite")
    if theta.jump_rate * dt > 1.0:
        raise InvalidArgumentError(
            "jump_rate * dt exceeds 1; the Bernoulli jump approximation "
            "breaks down at this step size"
        )
    z, u_occ, u_mag, u_sign = _stream_matrices(int(seed), int(n_realizations),
                                               int(n))
    c = theta.noise_drift * dt + theta.noise_scale * math.sqrt(dt) * z
    if theta.jump_rate > 0.0:
        for r in range(n_realizations):
            add, _ = jump_contributions(theta, dt, u_occ[r], u_mag[r],
                                        u_sign[r])
            c[r] += add
    u = np.concatenate(
        [np.full((n_realizations, 1), x0 - theta.mean), c], axis=1
    )
    y = scipy.signal.lfilter([1.0], [1.0, -(1.0 - theta.mean_reversion * dt)],
                             u, axis=1)
    return theta.mean + y


def _simulated_stat_mean(theta: OuParams, problem: CalibrationProblem) -> np.ndarray:
    paths = simulate_paths(theta, theta.mean, problem.window_steps,
                           problem.dt, problem.n_realizations, problem.seed)
    means = paths.mean(axis=1)
    stds = paths.std(axis=1, ddof=1)
    if np.any(stds == 0.0):
        raise InvalidArgumentError("simulated path has zero variance")
    ac = _autocorr_norm(paths, problem.observed_stats.t1)
    return np.array([means.mean(), stds.mean(), ac.mean()])


def objective(theta: OuParams, problem: CalibrationProblem) -> float:
    """Statistics mismatch plus prior regularization, both normalized.

    Each statistic component is scaled by the observed magnitude and
    each parameter component by the prior magnitude (plus a small
    epsilon), so watts-scale means do not dominate dimensionless
    autocorrelations.
    """
    s_obs = problem.observed_stats.as_array()
    s_sim = _simulated_stat_mean(theta, problem)
    stat_term = float(np.linalg.norm(
        (s_obs - s_sim) / (np.abs(s_obs) + _NORM_EPS)
    ))
    prior = problem.theta_prior.as_array()
    reg_term = float(np.linalg.norm(
        (prior - theta.as_array()) / (np.abs(prior) + _NORM_EPS)
    ))
    return problem.stat_weight * stat_term + problem.reg_weight * reg_term


def _theta_to_vec(theta: OuParams, scales, with_jumps: bool) -> np.ndarray:
    mean_scale, drift_scale = scales
    head = [
        math.log(theta.mean_reversion),
        theta.mean / mean_scale,
        theta.noise_drift / drift_scale,
        math.log(theta.noise_scale),
    ]
    if with_jumps:
        head += [math.log(theta.jump_shape), math.log(theta.jump_scale),
                 math.log(theta.jump_rate)]
    return np.array(head)


def _vec_to_theta(vec: np.ndarray, scales, with_jumps: bool,
                  frozen: OuParams) -> OuParams:
    mean_scale, drift_scale = scales
    if with_jumps:
        shape, scale, rate = np.exp(vec[4:7])
    else:
        shape, scale, rate = frozen.jump_shape, frozen.jump_scale, 0.0
    return OuParams(
        mean_reversion=math.exp(vec[0]),
        mean=vec[1] * mean_scale,
        noise_drift=vec[2] * drift_scale,
        noise_scale=math.exp(vec[3]),
        jump_shape=shape,
        jump_scale=scale,
        jump_rate=rate,
    )


def calibrate(problem: CalibrationProblem, init: OuParams,
              maxiter: int = 4000) -> CalibrationResult:
    """Derivative-free minimization of :func:`objective` from one start.

    Positive components are searched in log space; the mean and drift
    are rescaled to order one.  Jump components are frozen at zero rate
    when the starting point carries no jumps (a rough estimate that saw
    none).  The trace records every accepted improvement and is
    strictly decreasing; if the evaluation budget runs out the best
    point so far is returned with ``budget_exhausted`` set.
    """
    with_jumps = init.jump_rate > 0.0
    scales = (max(1.0, abs(init.mean)), max(1.0, abs(init.noise_drift)))

    evals = 0
    best = [math.inf, init]
    trace = []

    def safe_objective(vec: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        try:
            theta = _vec_to_theta(vec, scales, with_jumps, init)
            value = objective(theta, problem)
        except (InvalidArgumentError, OverflowError):
            return math.inf
        if not np.isfinite(value):
            return math.inf
        if value < best[0]:
            best[0] = value
            best[1] = theta
            trace.append(value)
        return value

    x0 = _theta_to_vec(init, scales, with_jumps)
    f0 = safe_objective(x0)
    if not np.isfinite(f0):
        raise InvalidArgumentError("objective is not finite at the init point")
    res = scipy.optimize.minimize(
        safe_objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-10,
                 "maxiter": maxiter, "maxfev": maxiter},
    )
    return CalibrationResult(
        params=best[1],
        trace=tuple(trace),
        final_objective=best[0],
        n_evals=evals,
        budget_exhausted=not res.success,
    )


def random_restarts(problem: CalibrationProblem, center: OuParams,
                    n_restarts: int, spread: float = 0.6,
                    seed: int = 0, maxiter: int = 4000) -> CalibrationResult:
    """Best of several calibrations started uniformly within a +/- band.

    Start k perturbs every component of ``center`` by an independent
    uniform factor in [1-spread, 1+spread] (sign preserved; zero stays
    zero, so a jump-free center keeps its frozen jump components).
    """
    if n_restarts < 1:
        raise InvalidArgumentError("need at least 1 restart")
    if not (0.0 <= spread < 1.0):
        raise InvalidArgumentError("spread must lie in [0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    best = None
    for k in range(n_restarts):
        if k == 0:
            start = center
        else:
            factors = rng.uniform(1.0 - spread, 1.0 + spread, size=7)
            start = OuParams.from_array(center.as_array() * factors)
        result = calibrate(problem, start, maxiter=maxiter)
        if best is None or result.final_objective < best.final_objective:
            best = result
    return best


def predict_masked(theta: OuParams, x0: float, horizon: int, dt: float,
                   n_realizations: int, seed: int,
                   sigma_multiplier: float = 2.0,
                   start_time: float = 0.0) -> PredictionEnvelope:
    """Monte Carlo envelope over the next ``horizon`` steps after x0.

    The band is the pointwise realization mean plus/minus
    ``sigma_multiplier`` sample standard deviations; the known start
    value itself is not part of the envelope.
    """
    if n_realizations < 2:
        raise InvalidArgumentError("need at least 2 realizations for a band")
    if sigma_multiplier < 0:
        raise InvalidArgumentError("sigma multiplier must be non-negative")
    paths = simulate_paths(theta, x0, horizon, dt, n_realizations, seed)
    future = paths[:, 1:]
    mean = future.mean(axis=0)
    sd = future.std(axis=0, ddof=1)
    base = UniformSeries(start_time + dt, dt, mean)
    return PredictionEnvelope(
        mean_path=base,
        lower=base.with_values(mean - sigma_multiplier * sd),
        upper=base.with_values(mean + sigma_multiplier * sd),
        n_realizations=n_realizations,
    )


def coverage(envelope: PredictionEnvelope, truth: UniformSeries) -> float:
    """Fraction of timesteps where the truth lies inside the band."""
    if len(truth) != len(envelope.mean_path):
        raise InvalidArgumentError(
            f"truth length {len(truth)} does not match envelope length "
            f"{len(envelope.mean_path)}"
        )
    inside = (envelope.lower.values <= truth.values) \
        & (truth.values <= envelope.upper.values)
    return float(inside.mean())
