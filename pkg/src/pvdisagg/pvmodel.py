"""Deterministic PV plant chain from clear-sky index to aggregate AC power.

The chain per site and timestep is

    kappa -> G -> (G_diffuse, G_beam) -> G_tilted -> P_dc -> P_ac

with an isotropic-plus-circumsolar transposition onto the tilted plane
and a linear inverter curve clipped to its rating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .timeseries import KappaPanel, UniformSeries


@dataclass(frozen=True)
class PvSite:
    """Geometry, module and inverter parameters of one installation."""

    site_id: str
    tilt_rad: float          # panel tilt from horizontal
    albedo: float            # ground reflectance
    area_m2: float
    efficiency: float        # module conversion efficiency
    loss_fraction: float     # aggregate system losses (soiling, wiring, ...)
    p_ac0: float             # rated max AC power, W
    p_dc0: float             # DC power at which the inverter reaches rating, W
    p_s0: float              # inverter threshold (self-consumption) power, W

    def __post_init__(self):
        for name in ("tilt_rad", "albedo", "area_m2", "efficiency",
                     "loss_fraction", "p_ac0", "p_dc0", "p_s0"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0.0 <= self.tilt_rad <= math.pi / 2):
            raise InvalidArgumentError("tilt must lie in [0, pi/2] radians")
        if not (0.0 <= self.albedo <= 1.0):
            raise InvalidArgumentError("albedo must lie in [0, 1]")
        if self.area_m2 <= 0:
            raise InvalidArgumentError("panel area must be positive")
        if not (0.0 < self.efficiency <= 1.0):
            raise InvalidArgumentError("efficiency must lie in (0, 1]")
        if not (0.0 <= self.loss_fraction < 1.0):
            raise InvalidArgumentError("loss fraction must lie in [0, 1)")
        if self.p_ac0 <= 0:
            raise InvalidArgumentError("p_ac0 must be positive")
        if not (self.p_dc0 > self.p_s0 >= 0):
            raise InvalidArgumentError("need p_dc0 > p_s0 >= 0")


@dataclass(frozen=True)
class TranspositionInputs:
    """Per-timestep decomposition and geometry factors, or constants.

    ``diffuse_fraction`` splits global into diffuse and beam,
    ``beam_ratio`` maps horizontal beam onto the tilted plane, and
    ``anisotropy_index`` weights the circumsolar share of the diffuse.
    All three broadcast against the timestep axis.
    """

    diffuse_fraction: np.ndarray
    beam_ratio: np.ndarray
    anisotropy_index: np.ndarray

    def __post_init__(self):
        kd = np.atleast_1d(np.asarray(self.diffuse_fraction, dtype=float))
        rb = np.atleast_1d(np.asarray(self.beam_ratio, dtype=float))
        ai = np.atleast_1d(np.asarray(self.anisotropy_index, dtype=float))
        for name, arr in (("diffuse_fraction", kd), ("beam_ratio", rb),
                          ("anisotropy_index", ai)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} must be finite")
        if np.any(kd < 0) or np.any(kd > 1):
            raise InvalidArgumentError("diffuse_fraction must lie in [0, 1]")
        if np.any(rb < 0):
            raise InvalidArgumentError("beam_ratio must be non-negative")
        if np.any(ai < 0) or np.any(ai > 1):
            raise InvalidArgumentError("anisotropy_index must lie in [0, 1]")
        for name, arr in (("diffuse_fraction", kd), ("beam_ratio", rb),
                          ("anisotropy_index", ai)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def split_irradiance(ghi, diffuse_fraction):
    """Split global horizontal irradiance into (diffuse, beam) parts.

    Beam is the remainder G - G_d, so the two parts always re-sum to
    the input.
    """
    g = np.asarray(ghi, dtype=float)
    kd = np.asarray(diffuse_fraction, dtype=float)
    if np.any(g < 0):
        raise InvalidArgumentError("irradiance must be non-negative")
    if np.any(kd < 0) or np.any(kd > 1):
        raise InvalidArgumentError("diffuse fraction must lie in [0, 1]")
    diffuse = kd * g
    beam = g - diffuse
    return diffuse, beam


def tilted_irradiance(ghi, beam, diffuse, trans: TranspositionInputs,
                      site: PvSite):
    """Global irradiance on the tilted plane.

    Sky-diffuse is split into an isotropic part weighted by the tilt
    view factor and a circumsolar part following the beam; a ground
    reflection term uses the complementary view factor.  The algebra
    groups the anisotropy as G_d*f + G_d*A_i*(R_b - f) so that a
    horizontal plane with beam_ratio 1 reproduces the input exactly.
    """
    g = np.asarray(ghi, dtype=float)
    gb = np.asarray(beam, dtype=float)
    gd = np.asarray(diffuse, dtype=float)
    if np.any(g < 0) or np.any(gb < 0) or np.any(gd < 0):
        raise InvalidArgumentError("irradiance components must be non-negative")
    cos_tilt = math.cos(site.tilt_rad)
    sky_view = (1.0 + cos_tilt) / 2.0
    ground_view = (1.0 - cos_tilt) / 2.0
    rb = trans.beam_ratio
    ai = trans.anisotropy_index
    poa = (
        gb * rb
        + gd * sky_view
        + gd * ai * (rb - sky_view)
        + g * site.albedo * ground_view
    )
    return np.maximum(poa, 0.0)


def dc_power(poa, site: PvSite):
    """DC power from plane-of-array irradiance: aperture times net efficiency."""
    g_t = np.asarray(poa, dtype=float)
    if np.any(g_t < 0):
        raise InvalidArgumentError("plane-of-array irradiance must be non-negative")
    return g_t * site.area_m2 * site.efficiency * (1.0 - site.loss_fraction)


def ac_power(p_dc, site: PvSite):
    """Linear inverter curve through (p_s0, 0) and (p_dc0, p_ac0), clipped.

    Output is 0 below the threshold and saturates at the AC rating.
    """
    p = np.asarray(p_dc, dtype=float)
    if np.any(p < 0):
        raise InvalidArgumentError("DC power must be non-negative")
    raw = site.p_ac0 * (p - site.p_s0) / (site.p_dc0 - site.p_s0)
    return np.clip(raw, 0.0, site.p_ac0)


def site_chain(kappa, ghi_clear, trans: TranspositionInputs, site: PvSite):
    """Full per-site chain from clear-sky index to AC power."""
    kappa = np.asarray(kappa, dtype=float)
    g = kappa * np.asarray(ghi_clear, dtype=float)
    diffuse, beam = split_irradiance(g, trans.diffuse_fraction)
    poa = tilted_irradiance(g, beam, diffuse, trans, site)
    return ac_power(dc_power(poa, site), site)


def aggregate_pv(panel: KappaPanel, ghi_clear: np.ndarray,
                 trans: TranspositionInputs, sites) -> UniformSeries:
    """Sum the AC chain over all plant sites.

    ``panel`` must hold raw (non-debiased) kappa values; ``ghi_clear``
    is an (n_times, n_sites) array in panel site order.  Summation runs
    in panel site order so results are bit-reproducible.
    """
    if np.any(panel.site_means != 0.0):
        raise InvalidArgumentError(
            "aggregate_pv needs raw kappa; call raw_kappa() on debiased panels"
        )
    gc = np.asarray(ghi_clear, dtype=float)
    if gc.shape != panel.kappa.shape:
        raise InvalidArgumentError("ghi_clear shape must match the kappa panel")
    if np.any(gc < 0) or not np.all(np.isfinite(gc)):
        raise InvalidArgumentError("clear-sky irradiance must be finite and >= 0")
    by_id = {}
    for site in sites:
        if site.site_id in by_id:
            raise InvalidArgumentError(f"duplicate PV site {site.site_id!r}")
        by_id[site.site_id] = site
    if set(by_id) != set(panel.site_ids):
        raise InvalidArgumentError("PV site list does not match panel site ids")
    total = np.zeros(panel.n_times)
    for j, site_id in enumerate(panel.site_ids):
        total += site_chain(panel.kappa[:, j], gc[:, j], trans, by_id[site_id])
    return UniformSeries(panel.start_time, panel.dt, total)
