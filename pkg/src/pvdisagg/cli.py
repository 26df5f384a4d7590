"""Command-line frontend.

Subcommands cover the full toolchain: synthetic scenario generation,
kernel fitting, PV prediction at unobserved sites, load-process
estimation, disaggregation with calibrated prediction envelopes,
metric evaluation, and resampling.  Report paths write delimited files
into --out-dir; --plot additionally renders PNG figures next to them.

Exit codes: 0 success, 2 invalid input or I/O failure, 3 numeric or
estimation failure, 4 calibration budget exhausted.
"""

from __future__ import annotations

import argparse
import pathlib
import sys
from dataclasses import replace

import numpy as np

from . import io
from .disagg import (CalibrationProblem, coverage, masked_from_net,
                     predict_masked, random_restarts, stat_vector)
from .errors import (EstimationFailureError, InvalidArgumentError,
                     NumericFailureError)
from .oujump import OuParams, estimate_params
from .pvmodel import aggregate_pv
from .scenario import (apply_config_file, default_plant, default_scenario,
                       default_transposition, generate)
from .spatialgp import (GpKernelParams, SiteLayout, build_cov, condition,
                        empirical_cov, fit_kernel, sample)
from .timeseries import (DEFAULT_KAPPA_FLOOR_WM2, KappaPanel, UniformSeries,
                         clear_sky_index, debias, downsample)

DEFAULT_HORIZON_STEPS = 300
DEFAULT_CAL_REALIZATIONS = 20
DEFAULT_ENV_REALIZATIONS = 10
DEFAULT_RESTARTS = 1
DEFAULT_T1 = 60


def _sublayout(layout: SiteLayout, site_ids) -> SiteLayout:
    """Layout restricted to the given sites, in the given order."""
    idx = [layout.index_of(s) for s in site_ids]
    return SiteLayout(tuple(site_ids), layout.coords[idx])


def _kappa_matrix(table: io.IrradianceTable, floor: float) -> np.ndarray:
    cols = []
    for site in table.site_ids:
        g, gc = table.column(site)
        cols.append(clear_sky_index(g, gc, floor).values)
    return np.column_stack(cols)


def _site_means(table, kappa_obs, means_file, layout):
    """Debias means for every layout site.

    Prefers the means saved by fit-gp; without a file, observed sites
    use their window means and unobserved sites the average of those.
    """
    if means_file:
        saved = io.read_site_means_csv(means_file)
        missing = [s for s in layout.site_ids if s not in saved]
        if missing:
            raise InvalidArgumentError(
                f"{means_file}: missing kappa means for sites {missing}"
            )
        return {s: saved[s] for s in layout.site_ids}
    window_means = kappa_obs.mean(axis=0)
    means = dict(zip(table.site_ids, window_means))
    fallback = float(window_means.mean())
    for s in layout.site_ids:
        means.setdefault(s, fallback)
    return means


def _predict_pv(kernel: GpKernelParams, layout: SiteLayout,
                table: io.IrradianceTable, plant, trans, means_file,
                floor: float, n_draws: int = 0, seed: int = 0):
    """Kriging-based PV prediction across the whole plant.

    Observed sites keep their measured clear-sky index; unobserved
    sites get the conditional mean given the debiased observations,
    with site means re-added and negative values truncated.  Clear-sky
    irradiance at unobserved sites falls back to the per-timestep mean
    of the observed sites.  Returns (pv_series, panel, draw_series).
    """
    obs_ids = table.site_ids
    for s in obs_ids:
        layout.index_of(s)  # unknown ids fail early
    kappa_obs = _kappa_matrix(table, floor)
    means = _site_means(table, kappa_obs, means_file, layout)
    obs_means = np.array([means[s] for s in obs_ids])
    unobs_ids = [s for s in layout.site_ids if s not in set(obs_ids)]
    n = table.n_times

    col_of_obs = {s: j for j, s in enumerate(obs_ids)}
    kappa_full = np.zeros((n, layout.n_sites))
    gc_full = np.zeros((n, layout.n_sites))
    gc_fallback = table.ghi_clear.mean(axis=1)
    draws = [np.zeros((n, layout.n_sites)) for _ in range(n_draws)]

    x_deb = kappa_obs - obs_means[None, :]
    seed_root = np.random.SeedSequence(seed)
    for j, site in enumerate(layout.site_ids):
        if site in col_of_obs:
            kappa_full[:, j] = kappa_obs[:, col_of_obs[site]]
            gc_full[:, j] = table.ghi_clear[:, col_of_obs[site]]
            for d in draws:
                d[:, j] = kappa_full[:, j]
        else:
            gc_full[:, j] = gc_fallback

    if unobs_ids:
        unobs_means = np.array([means[s] for s in unobs_ids])
        unobs_cols = [layout.index_of(s) for s in unobs_ids]
        draw_seeds = seed_root.spawn(n) if n_draws else None
        for t in range(n):
            cond = condition(kernel, layout, obs_ids, x_deb[t])
            kappa_full[t, unobs_cols] = np.maximum(cond.mean + unobs_means,
                                                   0.0)
            if n_draws:
                drawn = sample(cond, n_draws, draw_seeds[t])
                for k, d in enumerate(draws):
                    d[t, unobs_cols] = np.maximum(drawn[k] + unobs_means, 0.0)

    panel = KappaPanel(table.start_time, table.dt, layout.site_ids,
                       kappa_full)
    pv = aggregate_pv(panel, gc_full, trans, plant)
    draw_series = []
    for d in draws:
        draw_panel = KappaPanel(table.start_time, table.dt, layout.site_ids,
                                d)
        draw_series.append(aggregate_pv(draw_panel, gc_full, trans, plant))
    return pv, panel, draw_series


def _load_plant(args, layout):
    if args.plant:
        plant, trans = io.read_plant_config(args.plant)
        if trans is None:
            trans = default_transposition()
    else:
        plant = default_plant(layout)
        trans = default_transposition()
    return plant, trans


def _report_ks(prefix: str, result) -> dict:
    return {
        f"{prefix}_statistic": repr(result.statistic),
        f"{prefix}_threshold": repr(result.threshold),
        f"{prefix}_pass": int(result.passed),
    }


def cmd_simulate(args, out_dir: pathlib.Path) -> int:
    config = default_scenario()
    if args.sites:
        layout = io.read_sites_csv(args.sites)
        observed = layout.site_ids[:2]
        config = default_scenario(layout=layout, observed_site_ids=observed)
    if args.config:
        config = apply_config_file(config, args.config)
    if args.plant:
        plant, trans = io.read_plant_config(args.plant)
        updates = {"plant": plant}
        if trans is not None:
            updates["transposition"] = trans
        config = replace(config, **updates)
    if args.seed is not None:
        config = replace(config, seed=args.seed)

    data = generate(config)
    io.write_sites_csv(out_dir / "sites.csv", config.layout)
    io.write_irradiance_csv(out_dir / "irradiance.csv", data.irradiance)
    io.write_power_csv(out_dir / "pv.csv", data.pv, "p_pv_w")
    io.write_power_csv(out_dir / "masked.csv", data.masked)
    io.write_power_csv(out_dir / "net.csv", data.net)
    io.write_jumps_csv(out_dir / "jumps.csv", data.jumps)
    io.write_kernel_params(out_dir / "kernel_true.txt", config.kernel_true)
    io.write_ou_params(out_dir / "ou_true.txt", config.ou_true)
    io.write_kv(out_dir / "manifest.txt", {
        "n_steps": config.n_steps,
        "horizon_steps": config.horizon_steps,
        "dt": repr(config.dt),
        "seed": config.seed,
        "start_time": io.format_timestamp(config.start_time),
        "kappa_mean": repr(config.kappa_mean),
        "ghi_clear_wm2": repr(config.ghi_clear_wm2),
        "ar_coeff": repr(config.ar_coeff),
        "ar_sigma": repr(config.ar_sigma),
        "observed_sites": ",".join(config.observed_site_ids),
        "n_jumps": len(data.jumps),
    })
    if args.plot:
        from . import plots
        plots.plot_series(out_dir / "loads.png",
                          {"net": data.net, "masked": data.masked,
                           "pv": data.pv},
                          "synthetic loads", "power [W]")
        plots.plot_cov_matrix(out_dir / "cov_true.png",
                              build_cov(config.kernel_true, config.layout),
                              "true kernel covariance")
    print(f"simulate: wrote {config.n_steps + 1} samples for "
          f"{config.layout.n_sites} sites to {out_dir}")
    return 0


def cmd_fit_gp(args, out_dir: pathlib.Path) -> int:
    table = io.read_irradiance_csv(args.irradiance)
    layout = _sublayout(io.read_sites_csv(args.sites), table.site_ids)
    if layout.n_sites < 2:
        raise InvalidArgumentError("kernel fitting needs at least 2 sites")

    daylight = np.all(table.ghi_clear >= args.floor, axis=1)
    if int(daylight.sum()) < 2:
        raise InvalidArgumentError(
            "fewer than 2 daylight timesteps (clear-sky irradiance above "
            f"{args.floor} W/m2 at all sites); cannot estimate a covariance"
        )
    # the covariance estimator treats timesteps as exchangeable
    # snapshots, so dropping night rows does not bias it
    kappa = _kappa_matrix(
        io.IrradianceTable(table.start_time, table.dt, table.site_ids,
                           table.ghi[daylight], table.ghi_clear[daylight]),
        args.floor,
    )
    panel = debias(KappaPanel(table.start_time, table.dt, table.site_ids,
                              kappa))
    sigma_obs = empirical_cov(panel)

    init = io.read_kernel_params(args.init_kernel) if args.init_kernel \
        else GpKernelParams(0.01, 1e-4, 1.0, 1.0)
    fit = fit_kernel(sigma_obs, layout, init)
    io.write_kernel_params(out_dir / "kernel.txt", fit.params,
                           extra={"residual_frobenius": fit.residual,
                                  "n_evals": fit.n_evals})
    io.write_site_means_csv(out_dir / "kappa_means.csv", panel.site_ids,
                            panel.site_means)
    if args.plot:
        from . import plots
        plots.plot_cov_matrix(out_dir / "cov_observed.png", sigma_obs,
                              "observed covariance")
        plots.plot_cov_matrix(out_dir / "cov_fitted.png",
                              build_cov(fit.params, layout),
                              "fitted kernel covariance")
        plots.plot_trace(out_dir / "fit_trace.png", fit.trace,
                         "kernel fit objective")
    print(f"fit-gp: residual_frobenius={fit.residual!r} "
          f"({int(daylight.sum())} daylight rows)")
    return 0


def cmd_predict_pv(args, out_dir: pathlib.Path) -> int:
    kernel = io.read_kernel_params(args.kernel)
    layout = io.read_sites_csv(args.sites)
    table = io.read_irradiance_csv(args.irradiance)
    plant, trans = _load_plant(args, layout)
    pv, _, draw_series = _predict_pv(
        kernel, layout, table, plant, trans, args.means, args.floor,
        n_draws=args.draws, seed=args.seed if args.seed is not None else 0,
    )
    io.write_power_csv(out_dir / "pv_pred.csv", pv, "p_pv_w")
    for k, series in enumerate(draw_series, start=1):
        io.write_power_csv(out_dir / f"pv_draw_{k:02d}.csv", series, "p_pv_w")
    if args.plot:
        from . import plots
        named = {"kriging mean": pv}
        for k, series in enumerate(draw_series, start=1):
            named[f"draw {k}"] = series
        plots.plot_series(out_dir / "pv_pred.png", named,
                          "predicted aggregate PV", "power [W]")
    print(f"predict-pv: wrote {len(pv)} samples "
          f"({len(table.site_ids)} of {layout.n_sites} sites observed)")
    return 0


def cmd_estimate_ou(args, out_dir: pathlib.Path) -> int:
    series = io.read_power_csv(args.load)
    report = estimate_params(series)
    extra = _report_ks("ks_gaussian", report.ks_gaussian)
    if report.ks_gamma is not None:
        extra.update(_report_ks("ks_gamma", report.ks_gamma))
    extra["n_jumps"] = len(report.jumps)
    io.write_ou_params(out_dir / "ou_est.txt", report.params, extra=extra)
    io.write_jumps_csv(out_dir / "jumps_est.csv", report.jumps)
    if args.plot:
        from . import plots
        plots.plot_jumps(out_dir / "load_jumps.png", series, report.jumps,
                         "load with detected jumps")
    print(f"estimate-ou: mean_reversion={report.params.mean_reversion!r} "
          f"mean={report.params.mean!r} "
          f"noise_scale={report.params.noise_scale!r} "
          f"jumps={len(report.jumps)} "
          f"ks_gaussian_pass={int(report.ks_gaussian.passed)}")
    return 0


def cmd_disaggregate(args, out_dir: pathlib.Path) -> int:
    net = io.read_power_csv(args.net)
    if args.pv:
        pv = io.read_power_csv(args.pv, "p_pv_w")
    elif args.kernel and args.irradiance and args.sites:
        kernel = io.read_kernel_params(args.kernel)
        layout = io.read_sites_csv(args.sites)
        table = io.read_irradiance_csv(args.irradiance)
        plant, trans = _load_plant(args, layout)
        pv, _, _ = _predict_pv(kernel, layout, table, plant, trans,
                               args.means, args.floor)
    else:
        raise InvalidArgumentError(
            "need either --pv or the trio --kernel/--irradiance/--sites"
        )
    masked_est = masked_from_net(net, pv)
    io.write_power_csv(out_dir / "masked_est.csv", masked_est)

    horizon = args.horizon
    cal_len = len(masked_est) - horizon
    if cal_len < max(61, args.t1 + 1):
        raise InvalidArgumentError(
            f"calibration window of {cal_len} samples is too short; need "
            f"more data or a shorter --horizon"
        )
    cal = UniformSeries(masked_est.start_time, masked_est.dt,
                        masked_est.values[:cal_len])
    rough = estimate_params(cal)
    io.write_jumps_csv(out_dir / "jumps_rough.csv", rough.jumps)

    seed = args.seed if args.seed is not None else 0
    problem = CalibrationProblem(
        observed_stats=stat_vector(cal, args.t1),
        theta_prior=rough.params,
        n_realizations=args.realizations,
        window_steps=cal_len - 1,
        dt=cal.dt,
        seed=seed,
        stat_weight=args.stat_weight,
        reg_weight=args.reg_weight,
    )
    result = random_restarts(problem, rough.params, args.restarts, seed=seed)

    t_last = cal.times()[-1]
    envelope = predict_masked(result.params, float(cal.values[-1]), horizon,
                              cal.dt, args.envelope_realizations, seed + 1,
                              start_time=t_last)
    io.write_envelope_csv(out_dir / "envelope.csv", envelope)

    report = {}
    for name in OuParams.field_names():
        report[f"rough_{name}"] = repr(getattr(rough.params, name))
    for name in OuParams.field_names():
        report[f"fitted_{name}"] = repr(getattr(result.params, name))
    report.update({
        "trace_len": len(result.trace),
        "final_objective": repr(result.final_objective),
        "n_evals": result.n_evals,
        "budget_exhausted": int(result.budget_exhausted),
        "restarts": args.restarts,
    })

    def _tail(series):
        return UniformSeries(t_last + cal.dt, cal.dt,
                             series.values[cal_len:cal_len + horizon])

    held_out = _tail(masked_est)
    report["coverage_self"] = repr(coverage(envelope, held_out))
    truth_tail = None
    if args.truth:
        truth = io.read_power_csv(args.truth)
        if len(truth) != len(masked_est):
            raise InvalidArgumentError(
                "--truth must cover the same window as --net"
            )
        truth_tail = _tail(truth)
        report["coverage"] = repr(coverage(envelope, truth_tail))
    io.write_kv(out_dir / "report.txt", report)

    if args.plot:
        from . import plots
        plots.plot_envelope(out_dir / "envelope.png", envelope,
                            truth=truth_tail if truth_tail is not None
                            else held_out)
        plots.plot_trace(out_dir / "calibration_trace.png", result.trace,
                         "calibration objective")
        plots.plot_series(out_dir / "masked_est.png",
                          {"masked estimate": masked_est},
                          "masked-load estimate", "power [W]")
    print(f"disaggregate: final_objective={result.final_objective!r} "
          f"coverage_self={report['coverage_self']} "
          f"budget_exhausted={int(result.budget_exhausted)}")
    if "coverage" in report:
        print(f"disaggregate: coverage={report['coverage']}")
    return 4 if result.budget_exhausted else 0


def cmd_evaluate(args, out_dir: pathlib.Path) -> int:
    if not args.pred and not args.envelope and not args.params_est:
        raise InvalidArgumentError(
            "nothing to evaluate; pass --pred, --envelope or --params-est"
        )
    metrics = {}
    truth = io.read_power_csv(args.truth, args.column) if args.truth else None
    if args.pred:
        if truth is None:
            raise InvalidArgumentError("--pred needs --truth")
        pred = io.read_power_csv(args.pred, args.column)
        err = pred.values - truth.values if len(pred) == len(truth) else None
        if err is None:
            raise InvalidArgumentError(
                f"prediction length {len(pred)} does not match truth "
                f"{len(truth)}"
            )
        metrics["rmse_w"] = repr(float(np.sqrt(np.mean(err * err))))
        metrics["mae_w"] = repr(float(np.mean(np.abs(err))))
    if args.envelope:
        if truth is None:
            raise InvalidArgumentError("--envelope needs --truth")
        envelope = io.read_envelope_csv(args.envelope)
        metrics["coverage"] = repr(coverage(envelope, truth))
    if args.params_est or args.params_ref:
        if not (args.params_est and args.params_ref):
            raise InvalidArgumentError(
                "--params-est and --params-ref must be given together"
            )
        est = io.read_ou_params(args.params_est)
        ref = io.read_ou_params(args.params_ref)
        names = ("mean", "mean_reversion", "noise_drift", "noise_scale",
                 "jump_shape", "jump_scale", "jump_rate")
        errors = [abs(getattr(ref, n) - getattr(est, n)) for n in names]
        header = " ".join(f"{n:>14s}" for n in names)
        row = " ".join(f"{e:14.4e}" for e in errors)
        print(header)
        print(row)
        for n, e in zip(names, errors):
            metrics[f"abs_error_{n}"] = repr(e)
    io.write_kv(out_dir / "metrics.txt", metrics)
    for key, value in metrics.items():
        print(f"evaluate: {key}={value}")
    return 0


def cmd_downsample(args, out_dir: pathlib.Path) -> int:
    series = io.read_power_csv(args.input, args.column)
    out = downsample(series, args.factor)
    io.write_power_csv(out_dir / "downsampled.csv", out, args.column)
    print(f"downsample: {len(series)} -> {len(out)} samples "
          f"(dt {series.dt} -> {out.dt} s)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="root seed for all randomized steps")
    common.add_argument("--out-dir", default=".",
                        help="directory for output files")
    common.add_argument("--config", default=None,
                        help="INI config overriding scenario defaults")

    parser = argparse.ArgumentParser(
        prog="pvdisagg",
        description="behind-the-meter PV disaggregation toolchain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="generate a synthetic closed-loop scenario")
    p.add_argument("--sites", help="layout CSV (defaults to built-in 17 sites)")
    p.add_argument("--plant", help="plant INI (defaults to uniform rooftops)")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-gp", parents=[common],
                       help="fit the spatial kernel to irradiance data")
    p.add_argument("--irradiance", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--init-kernel", help="starting parameters (key=value file)")
    p.add_argument("--floor", type=float, default=DEFAULT_KAPPA_FLOOR_WM2,
                   help="clear-sky floor in W/m2 below which rows are night")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_fit_gp)

    p = sub.add_parser("predict-pv", parents=[common],
                       help="predict aggregate PV from observed sites")
    p.add_argument("--kernel", required=True)
    p.add_argument("--irradiance", required=True,
                   help="observed-site irradiance CSV")
    p.add_argument("--sites", required=True, help="full layout CSV")
    p.add_argument("--plant")
    p.add_argument("--means", help="kappa_means.csv saved by fit-gp")
    p.add_argument("--floor", type=float, default=DEFAULT_KAPPA_FLOOR_WM2)
    p.add_argument("--draws", type=int, default=0,
                   help="also write this many sampled PV paths")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_predict_pv)

    p = sub.add_parser("estimate-ou", parents=[common],
                       help="estimate load-process parameters from one series")
    p.add_argument("--load", required=True, help="timestamp,power_w CSV")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_estimate_ou)

    p = sub.add_parser("disaggregate", parents=[common],
                       help="recover the masked load and predict forward")
    p.add_argument("--net", required=True, help="net load CSV")
    p.add_argument("--pv", help="predicted PV CSV (timestamp,p_pv_w)")
    p.add_argument("--kernel", help="kernel file (PV route without --pv)")
    p.add_argument("--irradiance", help="observed irradiance CSV")
    p.add_argument("--sites", help="full layout CSV")
    p.add_argument("--plant")
    p.add_argument("--means")
    p.add_argument("--floor", type=float, default=DEFAULT_KAPPA_FLOOR_WM2)
    p.add_argument("--truth", help="true masked load CSV for coverage")
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON_STEPS)
    p.add_argument("--t1", type=int, default=DEFAULT_T1,
                   help="autocorrelation lags in the statistic vector")
    p.add_argument("--realizations", type=int,
                   default=DEFAULT_CAL_REALIZATIONS,
                   help="simulated paths per objective evaluation")
    p.add_argument("--envelope-realizations", type=int,
                   default=DEFAULT_ENV_REALIZATIONS)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--stat-weight", type=float, default=1.0)
    p.add_argument("--reg-weight", type=float, default=1e-3)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_disaggregate)

    p = sub.add_parser("evaluate", parents=[common],
                       help="error metrics, envelope coverage, parameter table")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--envelope")
    p.add_argument("--params-est")
    p.add_argument("--params-ref")
    p.add_argument("--column", default="power_w",
                   help="value column of --pred/--truth")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("downsample", parents=[common],
                       help="window-mean resampling of a series CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--column", default="power_w")
    p.set_defaults(func=cmd_downsample)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out_dir = pathlib.Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, out_dir)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericFailureError, EstimationFailureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
