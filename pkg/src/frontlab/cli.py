"""Command-line entry point and experiment orchestration.

Commands (all take --config PATH and write files under --out DIR, which
the FRONTLAB_OUT environment variable overrides):

  dispersion        speed curve CSV plus {lambda_star, c_star} summary
  simulate          snapshots, front traces, and run diagnostics
  verify-theorem    run, fit speeds, compare with the predicted c(lambda0);
                    exit 0 iff all components spread uniformly at it
  check-assumptions sampled model checks; exit 0 iff all pass
  bounds-check      envelope residual signs and sandwich reports
  sweep             verify-theorem over a grid of smallest decay rates;
                    exit 0 iff the measured speeds decrease strictly

Exit codes: 0 success / verdict true, 1 verdict false, 2 error (with a
machine-readable error.json in the output directory).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .config import ExperimentConfig, ResolvedExperiment, config_echo, parse_config, resolve
from .errors import FrontlabError, InsufficientData, ValidationError
from .fronts import estimate_speed, uniform_speed_verdict
from .reactions import (check_growth_lower_bound, check_linear_dominance,
                        check_structure, default_growth_params)
from .simulate import Compact, ExponentialDecay, HypothesisH, run, smallest_decay_rate
from .spectral import (laplacian_speed_matrix, minimize_speed,
                       perron_eigenpair, reorder_components, wave_speed)

COMMANDS = ("dispersion", "simulate", "verify-theorem", "check-assumptions",
            "bounds-check", "sweep")


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_traces(outdir: Path, sim) -> None:
    rows = []
    for (component, side), trace in sorted(sim.traces.items()):
        for t, pos in trace.points:
            rows.append((t, side, component, pos))
    rows.sort(key=lambda r: (r[0], r[2], r[1]))
    write_csv(outdir / "traces.csv", ["t", "side", "component", "position"], rows)


def _write_snapshots(outdir: Path, sim, grid, fmt: str) -> None:
    if fmt == "binary":
        times = [s.time for s in sim.snapshots]
        stack = np.stack([s.components for s in sim.snapshots])  # (k, m, n)
        (outdir / "snapshots.bin").write_bytes(np.asfortranarray(stack).tobytes(order="F"))
        write_json(outdir / "snapshots.json", {
            "n": grid.n, "dx": grid.dx, "m": int(stack.shape[1]),
            "times": times, "order": "column-major (k, m, n)"})
        return
    snapdir = outdir / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for idx, state in enumerate(sim.snapshots):
        m = state.components.shape[0]
        rows = zip(grid.x, *state.components)
        write_csv(snapdir / f"snapshot_{idx:04d}_t{state.time:.6g}.csv",
                  ["x"] + [f"u_{j + 1}" for j in range(m)], rows)


def _predicted_speed(exp: ResolvedExperiment):
    """Predicted spreading speed for the configured initial data.

    Exponential-type data with smallest rate below the curve minimizer
    select c(lambda0); compact data (or rates at/above the minimizer)
    spread at the curve minimum c*.
    """
    lam0 = smallest_decay_rate(exp.data)
    if exp.config.mode == "laplacian":
        def speed_at(lam):
            return perron_eigenpair(
                laplacian_speed_matrix(exp.model, lam)).gamma / lam

        lambda_star = _golden_local(speed_at)
        c_star = speed_at(lambda_star)
        if lam0 is not None and lam0 < lambda_star:
            return lam0, speed_at(lam0), lambda_star, c_star, False
        return lambda_star, c_star, lambda_star, c_star, True
    lambda_star, c_star, _ = minimize_speed(exp.model, exp.kernels)
    if lam0 is not None and lam0 < lambda_star:
        c, _vec = wave_speed(exp.model, exp.kernels, lam0)
        return lam0, c, lambda_star, c_star, False
    return lambda_star, c_star, lambda_star, c_star, True


def _golden_local(f, lo: float = 1e-3, hi: float = 50.0,
                  tol: float = 1e-8) -> float:
    from .spectral import _golden_section

    return _golden_section(f, lo, hi, tol)


def _estimates(exp: ResolvedExperiment, sim):
    need = [(j, side) for j in range(exp.model.m) for side in ("right", "left")]
    estimates = []
    for key in need:
        trace = sim.traces.get(key)
        if trace is None:
            raise InsufficientData(
                f"no front trace for component {key[0]} side {key[1]}")
        estimates.append(estimate_speed(trace, exp.config.window_fraction))
    return estimates


def _estimate_dict(est) -> dict:
    return {"component": est.component, "side": est.side, "speed": est.speed,
            "intercept": est.intercept, "rms_residual": est.rms_residual,
            "window": list(est.window)}


def cmd_dispersion(exp: ResolvedExperiment, outdir: Path) -> int:
    opts = exp.config.dispersion
    bracket = opts.get("bracket")
    if bracket is not None:
        bracket = (float(bracket[0]), float(bracket[1]))
    lambda_star, c_star, curve = minimize_speed(
        exp.model, exp.kernels, bracket=bracket,
        tol=float(opts.get("tol", 1e-8)), samples=int(opts.get("samples", 200)))
    header = ["lambda", "gamma", "c"] + [f"v_{j + 1}" for j in range(exp.model.m)]
    rows = [(lam, g, c) + tuple(vec) for lam, g, c, vec in
            zip(curve.lambdas, curve.gammas, curve.speeds, curve.vectors)]
    write_csv(outdir / "curve.csv", header, rows)
    write_json(outdir / "dispersion.json", {
        "lambda_star": lambda_star, "c_star": c_star,
        "bracket": list(curve.bracket), "convex_ok": curve.convex_ok,
        "config": config_echo(exp.config)})
    return 0


def cmd_simulate(exp: ResolvedExperiment, outdir: Path) -> int:
    sim = run(exp.setup)
    _write_snapshots(outdir, sim, exp.grid, exp.config.output_format)
    _write_traces(outdir, sim)
    write_json(outdir / "meta.json", {"diagnostics": sim.meta,
                                      "config": config_echo(exp.config)})
    return 0


def cmd_verify_theorem(exp: ResolvedExperiment, outdir: Path) -> int:
    sim = run(exp.setup)
    estimates = _estimates(exp, sim)
    lam0, predicted, lambda_star, c_star, capped = _predicted_speed(exp)
    verdict = uniform_speed_verdict(estimates, predicted,
                                    rtol=exp.config.rtol,
                                    rtol_predicted=exp.config.rtol_predicted)
    _write_traces(outdir, sim)
    write_json(outdir / "meta.json", {"diagnostics": sim.meta,
                                      "config": config_echo(exp.config)})
    write_json(outdir / "verdict.json", {
        "lambda0": lam0, "predicted": predicted,
        "lambda_star": lambda_star, "c_star": c_star,
        "rate_capped_at_minimizer": capped,
        "estimates": [_estimate_dict(e) for e in verdict.per_component],
        "max_pairwise_rel_dev": verdict.max_pairwise_rel_dev,
        "max_rel_dev_from_predicted": verdict.max_rel_dev_from_predicted,
        "rtol": exp.config.rtol, "rtol_predicted": exp.config.rtol_predicted,
        "uniform": verdict.uniform,
        "config": config_echo(exp.config)})
    return 0 if verdict.uniform else 1


def cmd_check_assumptions(exp: ResolvedExperiment, outdir: Path) -> int:
    opts = exp.config.assumptions
    sample_count = int(opts.get("sample_count", 400))
    reports = check_structure(exp.model, sample_count=sample_count,
                              seed=exp.config.seed)
    lambda_star, _c_star, _curve = minimize_speed(exp.model, exp.kernels)
    lam_count = int(opts.get("lambda_count", 5))
    lambda_grid = np.linspace(0.2 * lambda_star, lambda_star, lam_count)
    q_count = int(opts.get("q_count", 7))
    q_grid = np.geomspace(1e-2, 4.0, q_count)
    reports.append(check_linear_dominance(exp.model, exp.kernels,
                                          lambda_grid, q_grid))
    if {"q0", "delta0", "M"} <= set(opts):
        growth = (float(opts["q0"]), float(opts["delta0"]), float(opts["M"]))
    else:
        growth = default_growth_params(exp.model, seed=exp.config.seed)
    reports.append(check_growth_lower_bound(
        exp.model, *growth, sample_count=sample_count, seed=exp.config.seed))
    payload = {"reports": [{
        "assumption": r.assumption, "passed": r.passed,
        "witnesses": [[list(w[0]), w[1]] for w in r.witnesses],
        "params_used": r.params_used, "note": r.note} for r in reports],
        "all_passed": all(r.passed for r in reports),
        "config": config_echo(exp.config)}
    write_json(outdir / "assumptions.json", payload)
    return 0 if payload["all_passed"] else 1


def _decay_rates_for_order(exp: ResolvedExperiment) -> np.ndarray:
    data = exp.data
    if isinstance(data, ExponentialDecay):
        return np.asarray(data.rates, dtype=float)
    if isinstance(data, HypothesisH):
        rates = np.full(exp.model.m, math.inf)
        rates[data.j0] = data.rate
        return rates
    raise ValidationError("bounds-check needs exponential-type initial data")


def cmd_bounds_check(exp: ResolvedExperiment, outdir: Path) -> int:
    opts = exp.config.bounds
    model, kernels, grid = exp.model, exp.kernels, exp.grid
    lam0 = smallest_decay_rate(exp.data)
    if lam0 is None:
        raise ValidationError("bounds-check needs exponential-type initial data")
    lambda_star, _c, _curve = minimize_speed(model, kernels)

    sim = run(exp.setup)
    upper = bounds_mod.build_upper(model, kernels, lam0, exp.data,
                                   lambda_star=lambda_star)

    tau = math.log(2.0)
    fit_time = float(opts.get("fit_time", 1.0 + (model.m - 1) * tau))
    fit_state = next((s for s in sim.snapshots if s.time >= fit_time - 1e-9),
                     sim.snapshots[-1])
    y0 = float(opts.get("y0", 5.0))
    _c_lam0, vec0 = wave_speed(model, kernels, lam0)
    gamma = bounds_mod.fit_lower_envelope(fit_state, grid, vec0, lam0, y0)
    growth = default_growth_params(model, seed=exp.config.seed)
    lower = None
    if gamma > 0.0:
        lower = bounds_mod.build_lower(model, kernels, lam0, gamma, y0, growth,
                                       lambda_star=lambda_star,
                                       start_time=fit_state.time)

    res_times = opts.get("times")
    if res_times is None:
        res_times = [0.25 * exp.setup.t_final, 0.5 * exp.setup.t_final,
                     0.75 * exp.setup.t_final]
    upper_res = bounds_mod.residual(upper, model, exp.setup.dks, grid, res_times)
    lower_res = None
    if lower is not None:
        lower_res = bounds_mod.residual(
            lower, model, exp.setup.dks, grid,
            [lower.start_time + t for t in (0.0, 1.0, 2.0)])

    slack = opts.get("slack")
    sandwich = bounds_mod.sandwich_test(sim, lower, upper, grid, model,
                                        slack=float(slack) if slack else None)

    cascade_report = None
    cascade_ok = True
    if model.m >= 1:
        order = reorder_components(model.jacobian0, _decay_rates_for_order(exp))
        one_state = next((s for s in sim.snapshots if s.time >= 1.0 - 1e-9),
                         sim.snapshots[-1])
        first = order.permutation[0]
        seed_amp = bounds_mod.fit_seed_amplitude(one_state, grid, first, lam0)
        q3 = bounds_mod.fit_cascade_margin(model, seed=exp.config.seed)
        if seed_amp > 0.0:
            cascade = bounds_mod.build_cascade(model, kernels, order, lam0,
                                               seed_amp, q3,
                                               start_time=one_state.time)
            cas_sandwich = bounds_mod.sandwich_test(sim, cascade, None, grid, model)
            target = cascade.value(cascade.big_t, grid.x)
            floor = cascade.m0 * np.exp(-lam0 * np.abs(grid.x))
            floor_ok = bool(np.all(target >= floor[None, :] - 1e-12))
            cascade_ok = cas_sandwich.passed and floor_ok
            cascade_report = {
                "alpha": cascade.alpha, "tau": cascade.tau,
                "T": cascade.big_t, "M0": cascade.m0,
                "amps": list(cascade.amps), "stages": [int(s) for s in cascade.stages],
                "order": list(order.permutation),
                "sandwich_passed": cas_sandwich.passed,
                "floor_ok": floor_ok,
                "max_violation": cas_sandwich.max_violation}

    def res_dict(rep):
        if rep is None:
            return None
        return {"min_residual": rep.min_residual,
                "max_residual": rep.max_residual,
                "eps_disc": rep.eps_disc, "coefficient": rep.coefficient,
                "times": rep.times,
                "excluded_fraction": rep.excluded_fraction}

    upper_ok = upper_res.min_residual >= -upper_res.eps_disc
    lower_ok = lower_res is None or lower_res.max_residual <= lower_res.eps_disc
    payload = {
        "lambda0": lam0, "lambda_star": lambda_star,
        "gamma_fitted": gamma, "y0": y0,
        "growth_params": {"q0": growth[0], "delta0": growth[1], "M": growth[2]},
        "upper_residual": res_dict(upper_res),
        "lower_residual": res_dict(lower_res),
        "upper_residual_ok": upper_ok, "lower_residual_ok": lower_ok,
        "sandwich": {"passed": sandwich.passed,
                     "max_violation": sandwich.max_violation,
                     "checked_points": sandwich.checked_points,
                     "slack_smooth": sandwich.slack_smooth,
                     "slack_kink": sandwich.slack_kink},
        "cascade": cascade_report,
        "config": config_echo(exp.config)}
    write_json(outdir / "bounds.json", payload)
    ok = upper_ok and lower_ok and sandwich.passed and cascade_ok
    return 0 if ok else 1


def _sweep_config(config: ExperimentConfig, lam0: float) -> ExperimentConfig:
    if config.initial_kind == "exponential":
        rates = list(config.initial["rates"])
        rates[int(np.argmin(rates))] = lam0
        initial = dict(config.initial, rates=rates)
    elif config.initial_kind == "hypothesis_h":
        initial = dict(config.initial, rate=lam0)
    else:
        raise ValidationError("sweep needs exponential-type initial data")
    return replace(config, initial=initial, sweep_rates=(), raw={})


def _sweep_point(config: ExperimentConfig) -> dict:
    exp = resolve(config)
    sim = run(exp.setup)
    estimates = _estimates(exp, sim)
    lam0, predicted, lambda_star, c_star, capped = _predicted_speed(exp)
    verdict = uniform_speed_verdict(estimates, predicted, rtol=config.rtol,
                                    rtol_predicted=config.rtol_predicted)
    measured = float(np.mean([abs(e.speed) for e in estimates]))
    return {"lambda0": lam0, "predicted": predicted, "measured": measured,
            "uniform": verdict.uniform,
            "max_pairwise_rel_dev": verdict.max_pairwise_rel_dev,
            "max_rel_dev_from_predicted": verdict.max_rel_dev_from_predicted,
            "estimates": [_estimate_dict(e) for e in verdict.per_component]}


def cmd_sweep(exp: ResolvedExperiment, outdir: Path, jobs: int | None = None) -> int:
    config = exp.config
    if not config.sweep_rates:
        raise ValidationError("[sweep] rates must be a nonempty list")
    jobs = jobs or config.sweep_jobs
    configs = [_sweep_config(config, lam0) for lam0 in config.sweep_rates]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, configs))
    else:
        results = [_sweep_point(c) for c in configs]

    rows = [(r["lambda0"], r["predicted"], r["measured"], str(r["uniform"]).lower())
            for r in results]
    write_csv(outdir / "sweep.csv",
              ["lambda0", "predicted", "measured", "uniform"], rows)
    measured = [r["measured"] for r in results]
    ordered = sorted(results, key=lambda r: r["lambda0"])
    decreasing = all(a["measured"] > b["measured"]
                     for a, b in zip(ordered, ordered[1:]))
    payload = {"points": results, "strictly_decreasing": decreasing,
               "all_uniform": all(r["uniform"] for r in results),
               "config": config_echo(config)}
    write_json(outdir / "sweep.json", payload)
    return 0 if decreasing and payload["all_uniform"] else 1


def _outdir(args) -> Path:
    out = os.environ.get("FRONTLAB_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="frontlab",
        description="Spreading-speed prediction and verification for "
                    "cooperative nonlocal-dispersal reaction systems")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", default="frontlab-out",
                        help="output directory (FRONTLAB_OUT overrides)")
    parser.add_argument("--engine", choices=("direct", "fft"), default=None,
                        help="convolution engine override")
    parser.add_argument("--strict", action="store_true",
                        help="escalate DomainTooSmall warnings to errors")
    parser.add_argument("--jobs", type=int, default=None,
                        help="sweep parallelism")
    args = parser.parse_args(argv)

    outdir = _outdir(args)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
        if args.engine:
            config = replace(config, engine=args.engine)
        if args.strict:
            config = replace(config, strict=True)
        exp = resolve(config)
        if args.command == "dispersion":
            return cmd_dispersion(exp, outdir)
        if args.command == "simulate":
            return cmd_simulate(exp, outdir)
        if args.command == "verify-theorem":
            return cmd_verify_theorem(exp, outdir)
        if args.command == "check-assumptions":
            return cmd_check_assumptions(exp, outdir)
        if args.command == "bounds-check":
            return cmd_bounds_check(exp, outdir)
        return cmd_sweep(exp, outdir, jobs=args.jobs)
    except FrontlabError as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        write_json(outdir / "error.json", payload)
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
