"""File formats: CSV time series, key=value parameter files, plant config.

All CSVs carry a header row and ISO-8601 UTC timestamps.  Malformed
rows raise invalid-argument errors naming the file and line.  Writers
emit canonical shortest-round-trip float text, so write -> read ->
write is byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .disagg import PredictionEnvelope
from .errors import InvalidArgumentError
from .oujump import JumpRecord, OuParams
from .pvmodel import PvSite, TranspositionInputs
from .spatialgp import GpKernelParams, SiteLayout, layout_from_latlon
from .timeseries import UniformSeries

_TIME_TOL_S = 1e-6


def parse_timestamp(text: str) -> float:
    """ISO-8601 text to epoch seconds; naive times are taken as UTC."""
    try:
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise InvalidArgumentError(f"bad timestamp {text!r}: {exc}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def format_timestamp(epoch_s: float) -> str:
    """Epoch seconds to ISO-8601 UTC with a Z suffix."""
    text = datetime.fromtimestamp(epoch_s, tz=timezone.utc).isoformat()
    if text.endswith("+00:00"):
        text = text[:-6] + "Z"
    return text


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InvalidArgumentError(f"{where}: not a number: {text!r}") from None


def _open_rows(path, expected_header):
    """Yield (line_number, row) after validating the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file") from None
        if header != list(expected_header):
            raise InvalidArgumentError(
                f"{path}:1: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise InvalidArgumentError(
                    f"{path}:{lineno}: expected {len(expected_header)} "
                    f"fields, got {len(row)}"
                )
            yield lineno, row


def _uniform_base(path, times):
    if len(times) < 2:
        raise InvalidArgumentError(
            f"{path}: need at least 2 rows to infer the sampling interval"
        )
    t = np.asarray(times)
    dt = t[1] - t[0]
    if dt <= 0:
        raise InvalidArgumentError(f"{path}: timestamps must strictly increase")
    drift = np.abs(t - (t[0] + dt * np.arange(len(t))))
    if drift.max() > _TIME_TOL_S:
        bad = int(np.argmax(drift))
        raise InvalidArgumentError(
            f"{path}: non-uniform sampling at row {bad + 2} "
            f"(expected spacing {dt} s)"
        )
    return float(t[0]), float(dt)


def read_power_csv(path, value_column: str = "power_w") -> UniformSeries:
    """Read a `timestamp,<value_column>` series with uniform spacing."""
    times = []
    values = []
    for lineno, row in _open_rows(path, ("timestamp", value_column)):
        where = f"{path}:{lineno}"
        try:
            times.append(parse_timestamp(row[0]))
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"{where}: {exc}") from None
        values.append(_parse_float(row[1], where))
    start, dt = _uniform_base(path, times)
    return UniformSeries(start, dt, np.array(values))


def write_power_csv(path, series: UniformSeries,
                    value_column: str = "power_w") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", value_column])
        for t, v in zip(series.times(), series.values):
            writer.writerow([format_timestamp(t), repr(float(v))])


@dataclass(frozen=True)
class IrradianceTable:
    """Measured and clear-sky irradiance for several sites on one time base."""

    start_time: float
    dt: float
    site_ids: tuple
    ghi: np.ndarray        # (n_times, n_sites), W/m2
    ghi_clear: np.ndarray  # same shape

    def __post_init__(self):
        ids = tuple(str(s) for s in self.site_ids)
        g = np.array(self.ghi, dtype=float)
        gc = np.array(self.ghi_clear, dtype=float)
        if len(set(ids)) != len(ids) or not ids:
            raise InvalidArgumentError("site ids must be unique and non-empty")
        if g.ndim != 2 or g.shape[1] != len(ids) or g.shape[0] < 1:
            raise InvalidArgumentError("ghi must be (n_times, n_sites)")
        if gc.shape != g.shape:
            raise InvalidArgumentError("ghi_clear shape must match ghi")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(gc))):
            raise InvalidArgumentError("irradiance entries must be finite")
        if np.any(g < 0) or np.any(gc < 0):
            raise InvalidArgumentError("irradiance entries must be non-negative")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgumentError("dt must be positive")
        g.setflags(write=False)
        gc.setflags(write=False)
        object.__setattr__(self, "site_ids", ids)
        object.__setattr__(self, "ghi", g)
        object.__setattr__(self, "ghi_clear", gc)

    @property
    def n_times(self) -> int:
        return self.ghi.shape[0]

    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(self.n_times)

    def column(self, site_id: str):
        """(ghi, ghi_clear) series pair of one site."""
        try:
            j = self.site_ids.index(str(site_id))
        except ValueError:
            raise InvalidArgumentError(f"unknown site id {site_id!r}") from None
        return (UniformSeries(self.start_time, self.dt, self.ghi[:, j]),
                UniformSeries(self.start_time, self.dt, self.ghi_clear[:, j]))


_IRR_HEADER = ("timestamp", "site_id", "ghi_wm2", "ghi_clear_wm2")


def read_irradiance_csv(path) -> IrradianceTable:
    """Read long-format irradiance rows into a site-by-time table.

    Every site must cover exactly the same timestamps; site order is
    the order of first appearance.
    """
    per_site = {}
    for lineno, row in _open_rows(path, _IRR_HEADER):
        where = f"{path}:{lineno}"
        try:
            t = parse_timestamp(row[0])
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"{where}: {exc}") from None
        site = row[1].strip()
        if not site:
            raise InvalidArgumentError(f"{where}: empty site_id")
        g = _parse_float(row[2], where)
        gc = _parse_float(row[3], where)
        per_site.setdefault(site, []).append((t, g, gc, lineno))
    if not per_site:
        raise InvalidArgumentError(f"{path}: no data rows")
    site_ids = tuple(per_site)
    counts = {len(rows) for rows in per_site.values()}
    if len(counts) != 1:
        raise InvalidArgumentError(
            f"{path}: sites cover different numbers of timestamps"
        )
    first = site_ids[0]
    base_times = [r[0] for r in per_site[first]]
    for site in site_ids[1:]:
        for (t, _, _, lineno), t_ref in zip(per_site[site], base_times):
            if abs(t - t_ref) > _TIME_TOL_S:
                raise InvalidArgumentError(
                    f"{path}:{lineno}: site {site!r} timestamps do not match "
                    f"site {first!r}"
                )
    start, dt = _uniform_base(path, base_times)
    ghi = np.column_stack([[r[1] for r in per_site[s]] for s in site_ids])
    ghi_clear = np.column_stack([[r[2] for r in per_site[s]] for s in site_ids])
    return IrradianceTable(start, dt, site_ids, ghi, ghi_clear)


def write_irradiance_csv(path, table: IrradianceTable) -> None:
    """Write grouped by timestamp, sites in table order within each group."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_IRR_HEADER)
        for i, t in enumerate(table.times()):
            stamp = format_timestamp(t)
            for j, site in enumerate(table.site_ids):
                writer.writerow([
                    stamp, site,
                    repr(float(table.ghi[i, j])),
                    repr(float(table.ghi_clear[i, j])),
                ])


_SITES_LATLON = ("site_id", "lat_deg", "lon_deg")
_SITES_XY = ("site_id", "x_km", "y_km")


def read_sites_csv(path) -> SiteLayout:
    """Read a site layout; lat/lon files are projected to km."""
    with open(path, newline="") as fh:
        try:
            header = next(csv.reader(fh))
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file") from None
    if header == list(_SITES_LATLON):
        schema, project = _SITES_LATLON, True
    elif header == list(_SITES_XY):
        schema, project = _SITES_XY, False
    else:
        raise InvalidArgumentError(
            f"{path}:1: expected header {','.join(_SITES_LATLON)} or "
            f"{','.join(_SITES_XY)}, got {','.join(header)}"
        )
    ids = []
    a = []
    b = []
    for lineno, row in _open_rows(path, schema):
        where = f"{path}:{lineno}"
        site = row[0].strip()
        if not site:
            raise InvalidArgumentError(f"{where}: empty site_id")
        ids.append(site)
        a.append(_parse_float(row[1], where))
        b.append(_parse_float(row[2], where))
    if not ids:
        raise InvalidArgumentError(f"{path}: no data rows")
    if project:
        return layout_from_latlon(tuple(ids), a, b)
    return SiteLayout(tuple(ids), np.column_stack([a, b]))


def write_sites_csv(path, layout: SiteLayout) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_SITES_XY)
        for site, (x, y) in zip(layout.site_ids, layout.coords):
            writer.writerow([site, repr(float(x)), repr(float(y))])


def read_site_means_csv(path) -> dict:
    """Per-site clear-sky-index means saved alongside a fitted kernel."""
    means = {}
    for lineno, row in _open_rows(path, ("site_id", "kappa_mean")):
        where = f"{path}:{lineno}"
        site = row[0].strip()
        if site in means:
            raise InvalidArgumentError(f"{where}: duplicate site {site!r}")
        means[site] = _parse_float(row[1], where)
    if not means:
        raise InvalidArgumentError(f"{path}: no data rows")
    return means


def write_site_means_csv(path, site_ids, means) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["site_id", "kappa_mean"])
        for site, m in zip(site_ids, means):
            writer.writerow([site, repr(float(m))])


_ENV_HEADER = ("timestamp", "mean_w", "lower_w", "upper_w")


def write_envelope_csv(path, envelope: PredictionEnvelope) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_ENV_HEADER)
        rows = zip(envelope.mean_path.times(), envelope.mean_path.values,
                   envelope.lower.values, envelope.upper.values)
        for t, m, lo, hi in rows:
            writer.writerow([format_timestamp(t), repr(float(m)),
                             repr(float(lo)), repr(float(hi))])


def read_envelope_csv(path) -> PredictionEnvelope:
    """Read an envelope; the file does not carry the realization count,
    which is reported as 1."""
    times = []
    cols = ([], [], [])
    for lineno, row in _open_rows(path, _ENV_HEADER):
        where = f"{path}:{lineno}"
        try:
            times.append(parse_timestamp(row[0]))
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"{where}: {exc}") from None
        for col, text in zip(cols, row[1:]):
            col.append(_parse_float(text, where))
    start, dt = _uniform_base(path, times)
    mean = UniformSeries(start, dt, np.array(cols[0]))
    return PredictionEnvelope(
        mean_path=mean,
        lower=mean.with_values(np.array(cols[1])),
        upper=mean.with_values(np.array(cols[2])),
        n_realizations=1,
    )


def write_jumps_csv(path, jumps) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "magnitude_w"])
        for j in jumps:
            writer.writerow([j.index, repr(float(j.magnitude))])


def read_jumps_csv(path) -> tuple:
    jumps = []
    for lineno, row in _open_rows(path, ("index", "magnitude_w")):
        where = f"{path}:{lineno}"
        try:
            idx = int(row[0])
        except ValueError:
            raise InvalidArgumentError(
                f"{where}: not an integer index: {row[0]!r}"
            ) from None
        jumps.append(JumpRecord(idx, _parse_float(row[1], where)))
    return tuple(jumps)


def read_kv(path) -> dict:
    """Read a flat key=value text file; '#' starts a comment line."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise InvalidArgumentError(
                    f"{path}:{lineno}: expected key=value, got {text!r}"
                )
            key, _, value = text.partition("=")
            key = key.strip()
            if key in out:
                raise InvalidArgumentError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def write_kv(path, mapping) -> None:
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


def _kv_float(mapping: dict, key: str, path) -> float:
    if key not in mapping:
        raise InvalidArgumentError(f"{path}: missing key {key!r}")
    return _parse_float(mapping[key], f"{path} key {key!r}")


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_, int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_kernel_params(path, params: GpKernelParams, extra=None) -> None:
    out = {
        "alpha": repr(params.alpha),
        "beta": repr(params.beta),
        "theta_x": repr(params.theta_x),
        "theta_y": repr(params.theta_y),
    }
    if extra:
        out.update({k: _format_value(v) for k, v in extra.items()})
    write_kv(path, out)


def read_kernel_params(path) -> GpKernelParams:
    kv = read_kv(path)
    return GpKernelParams(
        alpha=_kv_float(kv, "alpha", path),
        beta=_kv_float(kv, "beta", path),
        theta_x=_kv_float(kv, "theta_x", path),
        theta_y=_kv_float(kv, "theta_y", path),
    )


def write_ou_params(path, params: OuParams, extra=None, prefix: str = "") -> None:
    out = {prefix + name: repr(getattr(params, name))
           for name in OuParams.field_names()}
    if extra:
        out.update({k: _format_value(v) for k, v in extra.items()})
    write_kv(path, out)


def read_ou_params(path, prefix: str = "") -> OuParams:
    kv = read_kv(path)
    return OuParams(**{
        name: _kv_float(kv, prefix + name, path)
        for name in OuParams.field_names()
    })


_TRANS_SECTION = "transposition"


def _config_float(section, key: str, path, section_name: str) -> float:
    if key not in section:
        raise InvalidArgumentError(
            f"{path}: section [{section_name}] missing key {key!r}"
        )
    return _parse_float(section[key], f"{path} [{section_name}] {key!r}")


def read_plant_config(path):
    """Read per-site PV parameters and optional shared transposition factors.

    Returns (sites, transposition); transposition is None when the file
    has no [transposition] section.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
    sites = []
    trans = None
    for name in parser.sections():
        section = parser[name]
        if name == _TRANS_SECTION:
            trans = TranspositionInputs(
                diffuse_fraction=_config_float(section, "diffuse_fraction",
                                               path, name),
                beam_ratio=_config_float(section, "beam_ratio", path, name),
                anisotropy_index=_config_float(section, "anisotropy_index",
                                               path, name),
            )
            continue
        sites.append(PvSite(
            site_id=name,
            tilt_rad=math.radians(_config_float(section, "tilt_deg", path, name)),
            albedo=_config_float(section, "albedo", path, name),
            area_m2=_config_float(section, "area_m2", path, name),
            efficiency=_config_float(section, "efficiency", path, name),
            loss_fraction=_config_float(section, "loss_fraction", path, name),
            p_ac0=_config_float(section, "p_ac0_w", path, name),
            p_dc0=_config_float(section, "p_dc0_w", path, name),
            p_s0=_config_float(section, "p_s0_w", path, name),
        ))
    if not sites:
        raise InvalidArgumentError(f"{path}: no PV site sections")
    return tuple(sites), trans


def write_plant_config(path, sites, transposition=None) -> None:
    parser = configparser.ConfigParser()
    for site in sites:
        parser[site.site_id] = {
            "tilt_deg": repr(math.degrees(site.tilt_rad)),
            "albedo": repr(site.albedo),
            "area_m2": repr(site.area_m2),
            "efficiency": repr(site.efficiency),
            "loss_fraction": repr(site.loss_fraction),
            "p_ac0_w": repr(site.p_ac0),
            "p_dc0_w": repr(site.p_dc0),
            "p_s0_w": repr(site.p_s0),
        }
    if transposition is not None:
        parser[_TRANS_SECTION] = {
            "diffuse_fraction": repr(float(transposition.diffuse_fraction[0])),
            "beam_ratio": repr(float(transposition.beam_ratio[0])),
            "anisotropy_index": repr(float(transposition.anisotropy_index[0])),
        }
    with open(path, "w") as fh:
        parser.write(fh)
