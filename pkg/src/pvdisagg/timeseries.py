"""Uniformly sampled time series and clear-sky-index panels.

All containers are immutable: operations return new objects and never
mutate their inputs, so values can be shared freely across threads.
Timestamps are UTC epoch seconds; alignment requires exact agreement of
start time and sample period (no interpolation).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_KAPPA_FLOOR_WM2 = 20.0


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UniformSeries:
    """A uniformly sampled series of finite real values.

    Units are carried by context: W for power, W/m2 for irradiance,
    dimensionless for the clear-sky index.
    """

    start_time: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidArgumentError("series must hold at least one value")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("series values must all be finite")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def times(self) -> np.ndarray:
        """Epoch seconds of every sample."""
        return self.start_time + self.dt * np.arange(self.values.size)

    def with_values(self, values) -> "UniformSeries":
        """Same time base, new values."""
        return replace(self, values=np.asarray(values, dtype=float))


def check_aligned(a: UniformSeries, b: UniformSeries, what: str = "series") -> None:
    """Raise unless two series share start time, dt and length exactly."""
    if a.dt != b.dt:
        raise InvalidArgumentError(f"{what}: dt mismatch ({a.dt} vs {b.dt})")
    if a.start_time != b.start_time:
        raise InvalidArgumentError(
            f"{what}: start time mismatch ({a.start_time} vs {b.start_time})"
        )
    if len(a) != len(b):
        raise InvalidArgumentError(f"{what}: length mismatch ({len(a)} vs {len(b)})")


@dataclass(frozen=True)
class KappaPanel:
    """Clear-sky-index values for several sites on a shared time base.

    ``kappa`` is an (n_times, n_sites) matrix.  ``site_means`` holds the
    per-site means removed by :func:`debias`; a raw (never debiased)
    panel carries zeros there and must be non-negative.  Adding
    ``site_means`` back onto ``kappa`` always reconstructs the values the
    panel was built from.
    """

    start_time: float
    dt: float
    site_ids: tuple
    kappa: np.ndarray
    site_means: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        kappa = _frozen_array(self.kappa)
        if kappa.ndim != 2 or kappa.shape[0] < 1 or kappa.shape[1] < 1:
            raise InvalidArgumentError("kappa must be a non-empty 2-D matrix")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(kappa)):
            raise InvalidArgumentError("kappa entries must all be finite")
        ids = tuple(str(s) for s in self.site_ids)
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("site ids must be unique")
        if len(ids) != kappa.shape[1]:
            raise InvalidArgumentError("site id count must match kappa columns")
        means = self.site_means
        if means is None:
            means = np.zeros(kappa.shape[1])
        means = _frozen_array(means)
        if means.shape != (kappa.shape[1],):
            raise InvalidArgumentError("site_means length must match site count")
        if not np.all(np.isfinite(means)):
            raise InvalidArgumentError("site_means must be finite")
        # kappa >= 0 is a physical invariant of raw panels only; debiased
        # panels are zero-mean by construction and go negative.
        if np.all(means == 0.0) and np.any(kappa < 0):
            raise InvalidArgumentError("raw kappa entries must be non-negative")
        object.__setattr__(self, "site_ids", ids)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "site_means", means)

    @property
    def n_times(self) -> int:
        return self.kappa.shape[0]

    @property
    def n_sites(self) -> int:
        return self.kappa.shape[1]

    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(self.n_times)

    def raw_kappa(self) -> np.ndarray:
        """Kappa with the removed site means added back."""
        return self.kappa + self.site_means[None, :]


def downsample(series: UniformSeries, factor: int) -> UniformSeries:
    """Reduce the sampling rate by averaging non-overlapping windows.

    Window means (rather than decimation) suppress high-rate sensor noise
    while matching slower sampling rates.  A trailing partial window is
    dropped.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise InvalidArgumentError(f"factor must be a positive integer, got {factor}")
    if factor == 1:
        return series
    n_out = len(series) // factor
    if n_out < 1:
        raise InvalidArgumentError(
            f"series of length {len(series)} too short for factor {factor}"
        )
    trimmed = series.values[: n_out * factor]
    means = trimmed.reshape(n_out, factor).mean(axis=1)
    return UniformSeries(series.start_time, series.dt * factor, means)


def clear_sky_index(
    ghi: UniformSeries,
    ghi_clear: UniformSeries,
    floor: float = DEFAULT_KAPPA_FLOOR_WM2,
) -> UniformSeries:
    """Clear-sky index kappa = G / G_c with a night/twilight guard.

    The ratio is singular as clear-sky irradiance approaches zero, so
    samples with G_c below ``floor`` (W/m2) map to kappa = 0.
    """
    check_aligned(ghi, ghi_clear, "clear_sky_index")
    if not floor > 0:
        raise InvalidArgumentError(f"floor must be positive, got {floor}")
    if np.any(ghi.values < 0):
        raise InvalidArgumentError("negative irradiance values")
    gc = ghi_clear.values
    kappa = np.zeros(len(ghi))
    ok = gc >= floor
    kappa[ok] = ghi.values[ok] / gc[ok]
    return ghi.with_values(kappa)


def debias(panel: KappaPanel) -> KappaPanel:
    """Remove the per-site empirical mean from every column.

    The removed means accumulate into ``site_means`` so that adding them
    back always reconstructs the input panel exactly.
    """
    col_means = panel.kappa.mean(axis=0)
    return KappaPanel(
        start_time=panel.start_time,
        dt=panel.dt,
        site_ids=panel.site_ids,
        kappa=panel.kappa - col_means[None, :],
        site_means=panel.site_means + col_means,
    )
