"""Experiment configuration: parsing, validation, and resolution.

Config documents are INI-style sections of key = value lines; values are
parsed as JSON with a bare-word fallback, so numbers, lists, booleans,
strings, and inline objects all work:

    [model]
    name = "coupled_logistic"
    kappa = 0.5

    [kernels]
    family = "gaussian"
    params = [1.0]

    [initial]
    kind = "exponential"
    rates = [0.4, 1.5]
    amplitudes = [1.0, 1.0]

Unknown sections or keys are rejected.  `resolve` turns a validated
config into the concrete model/kernels/grid/initial-data objects and the
RunSetup consumed by the simulator.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ParseError, ValidationError, InvalidParam, InvalidRates
from .kernels import Kernel, discretize, make_kernel
from .reactions import ReactionModel, builtin_model
from .simulate import (Compact, DT_ACCURACY, ExponentialDecay, Grid,
                       HypothesisH, InitialData, RunSetup, dt_bound,
                       make_grid)

_KNOWN_KEYS = {
    "model": None,  # free-form: name plus model parameters
    "kernels": {"family", "params", "specs", "tail_tol"},
    "grid": {"half_extent", "dx"},
    "time": {"dt", "t_final", "snapshot_every", "trace_every"},
    "initial": {"kind", "rates", "amplitudes", "j0", "rate", "amplitude",
                "others", "radius", "heights", "clamp"},
    "fronts": {"theta_fraction", "window_fraction", "rtol", "rtol_predicted"},
    "run": {"seed", "engine", "mode", "strict"},
    "dispersion": {"bracket", "tol", "samples"},
    "sweep": {"rates", "jobs"},
    "assumptions": {"q0", "delta0", "M", "lambda_count", "q_count",
                    "sample_count"},
    "bounds": {"y0", "fit_time", "times", "slack"},
    "output": {"format"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (plain data, picklable)."""

    model_name: str
    model_params: dict
    kernel_specs: tuple[tuple[str, tuple], ...]  # one (family, params) per component or single shared
    kernel_shared: bool
    tail_tol: float
    half_extent: float
    dx: float
    dt: float | None          # None means auto
    t_final: float
    snapshot_every: float
    trace_every: float
    initial_kind: str
    initial: dict
    theta_fraction: float
    window_fraction: float
    rtol: float
    rtol_predicted: float
    seed: int
    engine: str
    mode: str
    strict: bool
    dispersion: dict = field(default_factory=dict)
    sweep_rates: tuple[float, ...] = ()
    sweep_jobs: int = 1
    assumptions: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    output_format: str = "csv"
    raw: dict = field(default_factory=dict)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def _positive(raw: dict, section: str, key: str, value) -> float:
    value = _number(raw, section, key, value)
    if value <= 0.0:
        raise ValidationError(f"[{section}] {key} must be positive, got {value}")
    return value


def _number(raw: dict, section: str, key: str, value) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"[{section}] {key} must be a number, got {value!r}")
    return float(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; unknown keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f" (line {lineno})" if lineno else ""
        raise ParseError(f"invalid config document{where}: {exc.message}") from exc

    raw: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ValidationError(f"unknown section [{section}]")
        allowed = _KNOWN_KEYS[section]
        values = {}
        for key, val in parser.items(section):
            if allowed is not None and key not in allowed:
                raise ValidationError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse_value(val)
        raw[section] = values

    model = dict(raw.get("model", {}))
    name = model.pop("name", None)
    if not isinstance(name, str):
        raise ValidationError("[model] needs a string key 'name'")

    kern = raw.get("kernels", {})
    tail_tol = kern.get("tail_tol", 1e-10)
    tail_tol = _positive(raw, "kernels", "tail_tol", tail_tol)
    if not tail_tol < 1.0:
        raise ValidationError("[kernels] tail_tol must be below 1")
    if "specs" in kern:
        if "family" in kern or "params" in kern:
            raise ValidationError("[kernels] give either specs or family/params")
        specs = []
        for entry in kern["specs"]:
            if not isinstance(entry, dict) or set(entry) - {"family", "params"}:
                raise ValidationError("[kernels] specs entries need family/params")
            specs.append((entry["family"], tuple(entry.get("params", ()))))
        kernel_specs = tuple(specs)
        kernel_shared = False
    else:
        family = kern.get("family", "gaussian")
        params = tuple(kern.get("params", [1.0]))
        kernel_specs = ((family, params),)
        kernel_shared = True

    grid = raw.get("grid", {})
    half_extent = _positive(raw, "grid", "half_extent", grid.get("half_extent", 400.0))
    dx = _positive(raw, "grid", "dx", grid.get("dx", 0.1))

    time_sec = raw.get("time", {})
    dt_val = time_sec.get("dt", "auto")
    if dt_val == "auto":
        dt = None
    else:
        dt = _positive(raw, "time", "dt", dt_val)
    t_final = _positive(raw, "time", "t_final", time_sec.get("t_final", 60.0))
    snapshot_every = _positive(raw, "time", "snapshot_every",
                               time_sec.get("snapshot_every", 5.0))
    trace_every = _positive(raw, "time", "trace_every",
                            time_sec.get("trace_every", 0.5))

    init = dict(raw.get("initial", {}))
    kind = init.pop("kind", "exponential")
    if kind not in ("exponential", "hypothesis_h", "compact"):
        raise ValidationError(f"[initial] unknown kind {kind!r}")

    fronts = raw.get("fronts", {})
    theta_fraction = fronts.get("theta_fraction", 0.5)
    theta_fraction = _number(raw, "fronts", "theta_fraction", theta_fraction)
    if not 0.0 < theta_fraction < 1.0:
        raise ValidationError("[fronts] theta_fraction must lie in (0, 1)")
    window_fraction = fronts.get("window_fraction", 0.5)
    window_fraction = _number(raw, "fronts", "window_fraction", window_fraction)
    if not 0.0 < window_fraction <= 1.0:
        raise ValidationError("[fronts] window_fraction must lie in (0, 1]")
    rtol = _positive(raw, "fronts", "rtol", fronts.get("rtol", 0.02))
    rtol_predicted = _positive(raw, "fronts", "rtol_predicted",
                               fronts.get("rtol_predicted", 0.04))

    run_sec = raw.get("run", {})
    seed = run_sec.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("[run] seed must be an integer")
    engine = run_sec.get("engine", "direct")
    if engine not in ("direct", "fft"):
        raise ValidationError(f"[run] unknown engine {engine!r}")
    mode = run_sec.get("mode", "nonlocal")
    if mode not in ("nonlocal", "laplacian"):
        raise ValidationError(f"[run] unknown mode {mode!r}")
    strict = run_sec.get("strict", False)
    if not isinstance(strict, bool):
        raise ValidationError("[run] strict must be true or false")

    sweep = raw.get("sweep", {})
    sweep_rates = tuple(float(r) for r in sweep.get("rates", ()))
    sweep_jobs = sweep.get("jobs", 1)
    if not isinstance(sweep_jobs, int) or sweep_jobs < 1:
        raise ValidationError("[sweep] jobs must be a positive integer")

    output = raw.get("output", {})
    output_format = output.get("format", "csv")
    if output_format not in ("csv", "binary"):
        raise ValidationError(f"[output] unknown format {output_format!r}")

    config = ExperimentConfig(
        model_name=name, model_params=model,
        kernel_specs=kernel_specs, kernel_shared=kernel_shared,
        tail_tol=tail_tol, half_extent=half_extent, dx=dx, dt=dt,
        t_final=t_final, snapshot_every=snapshot_every,
        trace_every=trace_every, initial_kind=kind, initial=init,
        theta_fraction=theta_fraction, window_fraction=window_fraction,
        rtol=rtol, rtol_predicted=rtol_predicted, seed=seed, engine=engine,
        mode=mode, strict=strict, dispersion=raw.get("dispersion", {}),
        sweep_rates=sweep_rates, sweep_jobs=sweep_jobs,
        assumptions=raw.get("assumptions", {}), bounds=raw.get("bounds", {}),
        output_format=output_format, raw=raw)
    # fail fast on anything resolution would reject
    resolve(config)
    return config


@dataclass
class ResolvedExperiment:
    """Concrete objects backing one experiment."""

    config: ExperimentConfig
    model: ReactionModel
    kernels: list[Kernel]
    grid: Grid
    data: InitialData
    setup: RunSetup
    theta: float


def _build_data(kind: str, init: dict, m: int) -> InitialData:
    init = dict(init)
    clamp = init.pop("clamp", True)
    try:
        if kind == "exponential":
            rates = tuple(float(r) for r in init.pop("rates"))
            amplitudes = tuple(float(a) for a in init.pop("amplitudes", [1.0] * m))
            if len(rates) != m or len(amplitudes) != m:
                raise ValidationError(
                    f"[initial] needs {m} rates and amplitudes, got "
                    f"{len(rates)} and {len(amplitudes)}")
            if min(rates) <= 0.0 or min(amplitudes) <= 0.0:
                raise ValidationError("[initial] rates and amplitudes must be positive")
            data = ExponentialDecay(rates=rates, amplitudes=amplitudes, clamp=clamp)
        elif kind == "hypothesis_h":
            others = init.pop("others", None)
            if others is not None:
                others = tuple(float(a) for a in others)
                if len(others) != m or min(others) < 0.0:
                    raise ValidationError(
                        f"[initial] others needs {m} nonnegative amplitudes")
            j0 = int(init.pop("j0", 0))
            rate = float(init.pop("rate"))
            amplitude = float(init.pop("amplitude", 1.0))
            if not 0 <= j0 < m:
                raise ValidationError(f"[initial] j0 must lie in 0..{m - 1}")
            if rate <= 0.0 or amplitude <= 0.0:
                raise ValidationError("[initial] rate and amplitude must be positive")
            data = HypothesisH(j0=j0, rate=rate, amplitude=amplitude,
                               others=others, clamp=clamp)
        else:
            radius = float(init.pop("radius"))
            heights = tuple(float(h) for h in init.pop("heights"))
            if len(heights) != m:
                raise ValidationError(f"[initial] needs {m} heights")
            if radius <= 0.0 or min(heights) <= 0.0:
                raise ValidationError("[initial] radius and heights must be positive")
            data = Compact(radius=radius, heights=heights, clamp=clamp)
    except KeyError as exc:
        raise ValidationError(f"[initial] missing key {exc.args[0]!r}") from exc
    if init:
        raise ValidationError(
            f"[initial] keys {sorted(init)} do not apply to kind {kind!r}")
    return data


def resolve(config: ExperimentConfig) -> ResolvedExperiment:
    """Instantiate model, kernels, grid, and initial data; pick dt."""
    try:
        model = builtin_model(config.model_name, **config.model_params)
    except TypeError as exc:
        raise ValidationError(f"[model] bad parameters: {exc}") from exc
    except InvalidParam as exc:
        raise ValidationError(f"[model] {exc}") from exc

    specs = config.kernel_specs
    if config.kernel_shared:
        specs = specs * model.m
    if len(specs) != model.m:
        raise ValidationError(
            f"[kernels] needs {model.m} specs, got {len(specs)}")
    cache: dict[tuple, Kernel] = {}
    kernels = []
    for family, params in specs:
        key = (family, tuple(params))
        if key not in cache:
            try:
                cache[key] = make_kernel(family, params)
            except InvalidParam as exc:
                raise ValidationError(f"[kernels] {exc}") from exc
        kernels.append(cache[key])

    try:
        grid = make_grid(config.half_extent, config.dx)
    except InvalidParam as exc:
        raise ValidationError(f"[grid] {exc}") from exc

    try:
        data = _build_data(config.initial_kind, config.initial, model.m)
    except (InvalidRates, InvalidParam) as exc:
        raise ValidationError(f"[initial] {exc}") from exc

    bound = dt_bound(model, mode=config.mode, dx=config.dx)
    if config.dt is None:
        dt = min(bound, DT_ACCURACY)
    else:
        dt = config.dt
        if dt > bound * (1.0 + 1e-12):
            raise ValidationError(
                f"[time] dt = {dt} exceeds the order-preserving bound "
                f"{bound:.6g} = 0.9 / max_j (d_j + Lip_j); the monotone "
                "scheme requires dt at or below it")

    theta = config.theta_fraction * float(np.min(model.equilibrium))
    dks_cache: dict[int, object] = {}
    dks = []
    for kernel in kernels:
        key = id(kernel)
        if key not in dks_cache:
            try:
                dks_cache[key] = discretize(kernel, config.dx, config.tail_tol)
            except InvalidParam as exc:
                raise ValidationError(f"[kernels] at dx={config.dx}: {exc}") from exc
        dks.append(dks_cache[key])
    setup = RunSetup(model=model, kernels=kernels, dks=dks, grid=grid,
                     data=data, dt=dt, t_final=config.t_final,
                     snapshot_every=config.snapshot_every,
                     trace_every=config.trace_every, theta=theta,
                     mode=config.mode, engine=config.engine,
                     strict=config.strict)
    return ResolvedExperiment(config=config, model=model, kernels=kernels,
                              grid=grid, data=data, setup=setup, theta=theta)


def config_echo(config: ExperimentConfig) -> dict:
    """Resolved config as a JSON-ready dict for output provenance."""
    echo = asdict(config)
    echo.pop("raw", None)
    echo["kernel_specs"] = [list((fam,) + tuple(par))
                            for fam, par in config.kernel_specs]
    return echo
