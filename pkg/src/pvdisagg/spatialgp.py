"""Anisotropic spatial Gaussian process over the clear-sky index.

Covers kernel evaluation, least-squares kernel calibration against an
empirical covariance, conditional (kriging) prediction at unobserved
sites, and sampling from the conditional distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import InvalidArgumentError, NumericFailureError
from .timeseries import KappaPanel

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GpKernelParams:
    """Parameters of the anisotropic squared-exponential kernel.

    ``alpha`` is the variance scale, ``beta`` the nugget variance, and
    ``theta_x``/``theta_y`` inverse length scales (1/km) along the two
    tangent-plane axes.
    """

    alpha: float
    beta: float
    theta_x: float
    theta_y: float

    def __post_init__(self):
        for name in ("alpha", "beta", "theta_x", "theta_y"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.alpha, self.beta, self.theta_x, self.theta_y)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidArgumentError("kernel parameters must be finite")
        if self.alpha <= 0 or self.theta_x <= 0 or self.theta_y <= 0:
            raise InvalidArgumentError(
                "alpha, theta_x and theta_y must be strictly positive"
            )
        if self.beta < 0:
            raise InvalidArgumentError("beta (nugget) must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.theta_x, self.theta_y])


@dataclass(frozen=True)
class SiteLayout:
    """Ordered site ids with (x, y) coordinates in km on a tangent plane."""

    site_ids: tuple
    coords: np.ndarray  # (n_sites, 2)

    def __post_init__(self):
        ids = tuple(str(s) for s in self.site_ids)
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("site ids must be unique")
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape != (len(ids), 2):
            raise InvalidArgumentError("coords must be an (n_sites, 2) array")
        if not np.all(np.isfinite(coords)):
            raise InvalidArgumentError("coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "site_ids", ids)
        object.__setattr__(self, "coords", coords)

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    def index_of(self, site_id: str) -> int:
        try:
            return self.site_ids.index(str(site_id))
        except ValueError:
            raise InvalidArgumentError(f"unknown site id {site_id!r}") from None


def layout_from_latlon(site_ids, lat_deg, lon_deg) -> SiteLayout:
    """Project lat/lon to km with a local equirectangular projection.

    At neighborhood scale (a few km) pairwise distances are insensitive
    to the projection choice; the reference point is the centroid.
    """
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    lat0 = lat.mean()
    lon0 = lon.mean()
    x = EARTH_RADIUS_KM * math.cos(lat0) * (lon - lon0)
    y = EARTH_RADIUS_KM * (lat - lat0)
    return SiteLayout(tuple(site_ids), np.column_stack([x, y]))


@dataclass(frozen=True)
class CovMatrix:
    """Dense symmetric covariance matrix in a fixed site order."""

    site_ids: tuple
    matrix: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.site_ids)
        m = np.array(self.matrix, dtype=float)
        n = len(ids)
        if len(set(ids)) != n:
            raise InvalidArgumentError("site ids must be unique")
        if m.shape != (n, n):
            raise InvalidArgumentError("matrix shape must match site count")
        if not np.all(np.isfinite(m)):
            raise InvalidArgumentError("covariance entries must be finite")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise InvalidArgumentError("covariance matrix is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise InvalidArgumentError("covariance diagonal must be positive")
        m.setflags(write=False)
        object.__setattr__(self, "site_ids", ids)
        object.__setattr__(self, "matrix", m)

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)


@dataclass(frozen=True)
class ConditionalGaussian:
    """Conditional distribution of the unobserved sites given observations."""

    site_ids: tuple  # unobserved sites, in layout order
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        k = len(self.site_ids)
        if mean.shape != (k,) or cov.shape != (k, k):
            raise InvalidArgumentError("conditional dimensions inconsistent")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "site_ids", tuple(str(s) for s in self.site_ids))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def kernel_eval(
    params: GpKernelParams, dx: float, dy: float, same_site: bool = False
) -> float:
    """Covariance between two sites separated by (dx, dy) km."""
    value = params.alpha * math.exp(
        -(params.theta_x**2 * dx * dx + params.theta_y**2 * dy * dy)
    )
    if same_site:
        value += params.beta
    return value


def build_cov(params: GpKernelParams, layout: SiteLayout) -> CovMatrix:
    """Kernel applied to every pairwise displacement of the layout.

    With a zero nugget, coincident sites make the matrix singular; the
    failure surfaces later as a Cholesky rejection in :func:`condition`.
    """
    if layout.n_sites < 1:
        raise InvalidArgumentError("layout must contain at least one site")
    x = layout.coords[:, 0]
    y = layout.coords[:, 1]
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    m = params.alpha * np.exp(
        -(params.theta_x**2 * dx**2 + params.theta_y**2 * dy**2)
    )
    m[np.diag_indices_from(m)] += params.beta
    return CovMatrix(layout.site_ids, m)


def empirical_cov(panel: KappaPanel) -> CovMatrix:
    """Sample covariance (1/(N-1) normalization) of a debiased panel."""
    if panel.n_times < 2:
        raise InvalidArgumentError("need at least 2 time samples for covariance")
    col_means = panel.kappa.mean(axis=0)
    tol = 1e-9 * max(1.0, float(np.abs(panel.kappa).max()))
    if np.abs(col_means).max() > tol:
        raise InvalidArgumentError("panel is not debiased; run debias() first")
    c = np.cov(panel.kappa, rowvar=False, ddof=1)
    c = np.atleast_2d(c)
    c = 0.5 * (c + c.T)
    return CovMatrix(panel.site_ids, c)


@dataclass(frozen=True)
class KernelFit:
    """Result of a least-squares kernel calibration."""

    params: GpKernelParams
    residual: float
    trace: tuple  # objective value at each accepted optimizer iterate
    n_evals: int


def fit_kernel(
    sigma_obs: CovMatrix,
    layout: SiteLayout,
    init: GpKernelParams,
    maxiter: int = 20000,
) -> KernelFit:
    """Fit kernel parameters by minimizing the Frobenius mismatch.

    Nelder-Mead runs on log-transformed parameters, which enforces
    positivity; a second start from the first optimum tightens
    convergence.  The returned trace holds the objective at each
    accepted iterate and is non-increasing.
    """
    if sigma_obs.n_sites != layout.n_sites:
        raise InvalidArgumentError("observed covariance does not match layout size")
    init_arr = init.as_array()
    if np.any(init_arr <= 0):
        raise InvalidArgumentError(
            "log-space search requires strictly positive initial parameters"
        )
    target = sigma_obs.matrix

    def objective(log_p: np.ndarray) -> float:
        a, b, tx, ty = np.exp(log_p)
        model = build_cov(GpKernelParams(a, b, tx, ty), layout)
        return float(np.linalg.norm(model.matrix - target, "fro"))

    x0 = np.log(init_arr)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise InvalidArgumentError("objective is not finite at the initial guess")

    trace = [f0]
    n_evals = 0

    def callback(xk):
        trace.append(objective(xk))

    x = x0
    for _ in range(2):  # polish restart from the first optimum
        res = scipy.optimize.minimize(
            objective,
            x,
            method="Nelder-Mead",
            callback=callback,
            options={
                "xatol": 1e-10,
                "fatol": 1e-14,
                "maxiter": maxiter,
                "maxfev": maxiter,
            },
        )
        x = res.x
        n_evals += int(res.nfev)

    a, b, tx, ty = np.exp(x)
    fitted = GpKernelParams(a, b, tx, ty)
    return KernelFit(fitted, objective(x), tuple(trace), n_evals)


def condition(
    params: GpKernelParams,
    layout: SiteLayout,
    observed_ids,
    observed_values,
) -> ConditionalGaussian:
    """Closed-form Gaussian conditional at the unobserved sites.

    Means are zero after debiasing, so the conditional mean is
    S12 S22^-1 x_obs and the conditional covariance
    S11 - S12 S22^-1 S21, with the observed block solved via Cholesky.
    """
    obs_ids = [str(s) for s in observed_ids]
    if len(obs_ids) == 0:
        raise InvalidArgumentError("need at least one observed site")
    if len(set(obs_ids)) != len(obs_ids):
        raise InvalidArgumentError("observed site ids must be unique")
    obs_idx = np.array([layout.index_of(s) for s in obs_ids], dtype=int)
    if len(obs_idx) >= layout.n_sites:
        raise InvalidArgumentError("observed sites must be a strict subset")
    x_obs = np.asarray(observed_values, dtype=float)
    if x_obs.shape != (len(obs_idx),):
        raise InvalidArgumentError("observed values must match observed ids")
    if not np.all(np.isfinite(x_obs)):
        raise InvalidArgumentError("observed values must be finite")

    unobs_idx = np.array(
        [i for i in range(layout.n_sites) if i not in set(obs_idx)], dtype=int
    )
    full = build_cov(params, layout).matrix
    s11 = full[np.ix_(unobs_idx, unobs_idx)]
    s12 = full[np.ix_(unobs_idx, obs_idx)]
    s22 = full[np.ix_(obs_idx, obs_idx)]

    try:
        cho = scipy.linalg.cho_factor(s22, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericFailureError(
            f"observed-site covariance block is not positive definite "
            f"(sites {obs_ids}); a zero nugget with coincident sites does this"
        ) from exc

    mean = s12 @ scipy.linalg.cho_solve(cho, x_obs)
    cov = s11 - s12 @ scipy.linalg.cho_solve(cho, s12.T)
    cov = 0.5 * (cov + cov.T)
    unobs_ids = tuple(layout.site_ids[i] for i in unobs_idx)
    return ConditionalGaussian(unobs_ids, mean, cov)


def sample(cond: ConditionalGaussian, n: int, seed) -> np.ndarray:
    """Draw ``n`` joint samples, one per row, deterministically per seed.

    Uses a Cholesky factor when the covariance is positive definite and
    falls back to an eigenvalue factor with eigenvalues below
    1e-12 * trace clipped to zero otherwise.
    """
    if n < 1:
        raise InvalidArgumentError(f"need n >= 1 draws, got {n}")
    cov = cond.cov
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        w = np.where(w > 1e-12 * max(np.trace(cov), 0.0), w, 0.0)
        factor = v * np.sqrt(w)[None, :]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, len(cond.site_ids)))
    return cond.mean[None, :] + z @ factor.T
