"""Synthetic closed-loop scenario: known truth for every pipeline stage.

Generates a clear-sky-index panel from the spatial model (fresh field
draw each second, amplitude-modulated by a shared AR(1) driver so the
panel has realistic temporal persistence without changing its spatial
covariance), pushes it through the PV chain, and adds a jump-diffusion
masked load; net load is their difference.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.signal

from .errors import InvalidArgumentError
from .io import IrradianceTable, parse_timestamp
from .oujump import OuParams, simulate_em
from .pvmodel import PvSite, TranspositionInputs, aggregate_pv
from .spatialgp import ConditionalGaussian, GpKernelParams, SiteLayout, \
    build_cov, sample
from .timeseries import KappaPanel, UniformSeries

# 17 sites over roughly one square km, matching the scale at which the
# default kernel length scales produce strong but not degenerate
# cross-site correlation.
_DEFAULT_COORDS = (
    ("s01", 0.00, 0.00), ("s02", 0.18, 0.07), ("s03", 0.35, 0.02),
    ("s04", 0.52, 0.11), ("s05", 0.70, 0.05), ("s06", 0.88, 0.14),
    ("s07", 1.05, 0.08), ("s08", 0.08, 0.28), ("s09", 0.30, 0.33),
    ("s10", 0.55, 0.30), ("s11", 0.80, 0.35), ("s12", 1.02, 0.30),
    ("s13", 0.15, 0.55), ("s14", 0.42, 0.60), ("s15", 0.68, 0.58),
    ("s16", 0.95, 0.62), ("s17", 0.55, 0.85),
)

DEFAULT_START_TIME = parse_timestamp("2020-06-01T00:00:00Z")


def default_layout() -> SiteLayout:
    ids = tuple(c[0] for c in _DEFAULT_COORDS)
    coords = np.array([[c[1], c[2]] for c in _DEFAULT_COORDS])
    return SiteLayout(ids, coords)


def default_kernel() -> GpKernelParams:
    return GpKernelParams(alpha=0.0108, beta=1e-4, theta_x=0.8, theta_y=1.0)


def default_ou() -> OuParams:
    return OuParams(mean_reversion=0.01, mean=4e5, noise_drift=0.0,
                    noise_scale=200.0, jump_shape=2.0, jump_scale=3000.0,
                    jump_rate=0.0)


def default_plant(layout: SiteLayout) -> tuple:
    """Uniform small rooftop installation at every layout site."""
    return tuple(
        PvSite(site_id=s, tilt_rad=math.radians(20.0), albedo=0.2,
               area_m2=5.0, efficiency=0.18, loss_fraction=0.05,
               p_ac0=950.0, p_dc0=1000.0, p_s0=10.0)
        for s in layout.site_ids
    )


def default_transposition() -> TranspositionInputs:
    return TranspositionInputs(diffuse_fraction=0.3, beam_ratio=1.0,
                               anisotropy_index=0.25)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to generate one synthetic experiment."""

    layout: SiteLayout
    plant: tuple
    transposition: TranspositionInputs
    kernel_true: GpKernelParams
    ou_true: OuParams
    observed_site_ids: tuple
    n_steps: int = 3600
    horizon_steps: int = 300
    dt: float = 1.0
    seed: int = 0
    start_time: float = DEFAULT_START_TIME
    kappa_mean: float = 0.7
    ghi_clear_wm2: float = 800.0
    ar_coeff: float = 0.99
    ar_sigma: float = 0.10

    def __post_init__(self):
        ids = set(self.layout.site_ids)
        observed = tuple(str(s) for s in self.observed_site_ids)
        if not observed:
            raise InvalidArgumentError("need at least one observed site")
        if len(set(observed)) != len(observed):
            raise InvalidArgumentError("observed site ids must be unique")
        if not set(observed) <= ids:
            raise InvalidArgumentError("observed sites must belong to the layout")
        if set(observed) == ids:
            raise InvalidArgumentError(
                "observed sites must be a strict subset of the layout"
            )
        if self.n_steps < 1 or self.horizon_steps < 0:
            raise InvalidArgumentError("step counts must be positive")
        if self.horizon_steps >= self.n_steps:
            raise InvalidArgumentError("horizon must be shorter than the run")
        if self.dt <= 0 or not np.isfinite(self.dt):
            raise InvalidArgumentError("dt must be positive")
        if self.kappa_mean < 0:
            raise InvalidArgumentError("kappa_mean must be non-negative")
        if self.ghi_clear_wm2 <= 0:
            raise InvalidArgumentError("ghi_clear_wm2 must be positive")
        if not (0.0 <= self.ar_coeff < 1.0):
            raise InvalidArgumentError("ar_coeff must lie in [0, 1)")
        if self.ar_sigma < 0:
            raise InvalidArgumentError("ar_sigma must be non-negative")
        object.__setattr__(self, "observed_site_ids", observed)


def default_scenario(**overrides) -> ScenarioConfig:
    layout = overrides.pop("layout", default_layout())
    config = ScenarioConfig(
        layout=layout,
        plant=overrides.pop("plant", default_plant(layout)),
        transposition=overrides.pop("transposition", default_transposition()),
        kernel_true=overrides.pop("kernel_true", default_kernel()),
        ou_true=overrides.pop("ou_true", default_ou()),
        observed_site_ids=overrides.pop("observed_site_ids", ("s01", "s09")),
    )
    return replace(config, **overrides) if overrides else config


@dataclass(frozen=True)
class ScenarioData:
    """Generated truth of one synthetic run."""

    panel: KappaPanel
    irradiance: IrradianceTable
    pv: UniformSeries
    masked: UniformSeries
    net: UniformSeries
    jumps: tuple


def _ar1_amplitude(n: int, coeff: float, sigma: float, seed) -> np.ndarray:
    """Stationary AR(1) path scaled so (1+a)/sqrt(1+sigma^2) has unit
    second moment."""
    w = np.random.default_rng(seed).standard_normal(n)
    if sigma == 0.0:
        return np.ones(n)
    innov = sigma * math.sqrt(1.0 - coeff * coeff) * w[1:]
    u = np.concatenate(([sigma * w[0]], innov))
    a = scipy.signal.lfilter([1.0], [1.0, -coeff], u)
    return (1.0 + a) / math.sqrt(1.0 + sigma * sigma)


def generate(config: ScenarioConfig) -> ScenarioData:
    """Deterministic synthetic run from a config and its seed."""
    field_seed, ar_seed, ou_seed = np.random.SeedSequence(config.seed).spawn(3)
    n = config.n_steps + 1
    layout = config.layout
    cov = build_cov(config.kernel_true, layout)
    free = ConditionalGaussian(layout.site_ids,
                               np.zeros(layout.n_sites), cov.matrix)
    eps = sample(free, n, field_seed)
    amp = _ar1_amplitude(n, config.ar_coeff, config.ar_sigma, ar_seed)
    kappa = np.maximum(config.kappa_mean + amp[:, None] * eps, 0.0)
    panel = KappaPanel(config.start_time, config.dt, layout.site_ids, kappa)

    ghi_clear = np.full(kappa.shape, config.ghi_clear_wm2)
    pv = aggregate_pv(panel, ghi_clear, config.transposition, config.plant)
    irradiance = IrradianceTable(config.start_time, config.dt,
                                 layout.site_ids, kappa * ghi_clear, ghi_clear)

    masked_raw, jumps = simulate_em(config.ou_true, config.ou_true.mean,
                                    config.n_steps, config.dt, ou_seed)
    masked = UniformSeries(config.start_time, config.dt, masked_raw.values)
    net = masked.with_values(masked.values - pv.values)
    return ScenarioData(panel, irradiance, pv, masked, net, jumps)


def _section_float(section, key: str, fallback: float) -> float:
    if key not in section:
        return fallback
    try:
        return float(section[key])
    except ValueError:
        raise InvalidArgumentError(
            f"config key {key!r}: not a number: {section[key]!r}"
        ) from None


def apply_config_file(config: ScenarioConfig, path) -> ScenarioConfig:
    """Override scalar scenario knobs from an INI-style config file.

    Sections: [scenario] run shape and field statistics, [kernel] true
    kernel, [ou] true load parameters, [transposition] shared chain
    factors.  Omitted keys keep their defaults; layout and plant come
    from separate files.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None

    if parser.has_section("scenario"):
        section = parser["scenario"]
        updates = {}
        for key, cast in (("n_steps", int), ("horizon_steps", int),
                          ("seed", int)):
            if key in section:
                try:
                    updates[key] = cast(section[key])
                except ValueError:
                    raise InvalidArgumentError(
                        f"{path}: bad integer for {key!r}: {section[key]!r}"
                    ) from None
        for key in ("dt", "kappa_mean", "ghi_clear_wm2", "ar_coeff",
                    "ar_sigma"):
            if key in section:
                updates[key] = _section_float(section, key, 0.0)
        if "start_time" in section:
            updates["start_time"] = parse_timestamp(section["start_time"])
        if "observed_sites" in section:
            updates["observed_site_ids"] = tuple(
                s.strip() for s in section["observed_sites"].split(",")
                if s.strip()
            )
        config = replace(config, **updates)

    if parser.has_section("kernel"):
        section = parser["kernel"]
        k = config.kernel_true
        config = replace(config, kernel_true=GpKernelParams(
            alpha=_section_float(section, "alpha", k.alpha),
            beta=_section_float(section, "beta", k.beta),
            theta_x=_section_float(section, "theta_x", k.theta_x),
            theta_y=_section_float(section, "theta_y", k.theta_y),
        ))

    if parser.has_section("ou"):
        section = parser["ou"]
        fields = {
            name: _section_float(section, name, getattr(config.ou_true, name))
            for name in OuParams.field_names()
        }
        config = replace(config, ou_true=OuParams(**fields))

    if parser.has_section("transposition"):
        section = parser["transposition"]
        t = config.transposition
        config = replace(config, transposition=TranspositionInputs(
            diffuse_fraction=_section_float(section, "diffuse_fraction",
                                            float(t.diffuse_fraction[0])),
            beam_ratio=_section_float(section, "beam_ratio",
                                      float(t.beam_ratio[0])),
            anisotropy_index=_section_float(section, "anisotropy_index",
                                            float(t.anisotropy_index[0])),
        ))
    return config
