"""Front extraction, speed fitting, and the uniform-speed verdict.

The front proxy is the outermost level crossing of a threshold theta:
at late times the transition zone translates rigidly, so the crossing
position is linear in time and its least-squares slope estimates the
spreading speed.  A run is "uniform" when every component's fitted speed
agrees pairwise and with the predicted dispersion-relation speed within
the configured relative tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import InsufficientData, InvalidParam, NoCrossing

if TYPE_CHECKING:
    from .simulate import Grid


@dataclass(frozen=True)
class FrontTrace:
    """Level-crossing positions of one component on one side over time."""

    component: int
    side: str
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SpeedEstimate:
    """Least-squares line fit to the trailing window of a trace."""

    component: int
    side: str
    speed: float
    intercept: float
    rms_residual: float
    window: tuple[float, float]


@dataclass(frozen=True)
class UniformSpeedVerdict:
    """Agreement of all fitted speeds with each other and the prediction."""

    predicted: float
    per_component: tuple[SpeedEstimate, ...]
    max_pairwise_rel_dev: float
    max_rel_dev_from_predicted: float
    uniform: bool


def front_position(profile: np.ndarray, grid: "Grid", theta: float,
                   side: str = "right") -> float:
    """Outermost crossing of theta on the given side, linearly interpolated.

    Raises NoCrossing when the profile stays on one side of theta out to
    the boundary (front absent or already past the domain edge).
    """
    if theta <= 0.0:
        raise InvalidParam("theta must be positive")
    if side not in ("right", "left"):
        raise InvalidParam(f"unknown side {side!r}")
    profile = np.asarray(profile, dtype=float)
    above = np.nonzero(profile >= theta)[0]
    if above.size == 0:
        raise NoCrossing("profile never reaches theta")
    if side == "right":
        k = int(above[-1])
        if k == profile.shape[0] - 1:
            raise NoCrossing("profile still above theta at the right boundary")
        lo, hi = profile[k], profile[k + 1]
        frac = (lo - theta) / (lo - hi)
        return float(grid.x[k] + frac * grid.dx)
    k = int(above[0])
    if k == 0:
        raise NoCrossing("profile still above theta at the left boundary")
    lo, hi = profile[k], profile[k - 1]
    frac = (lo - theta) / (lo - hi)
    return float(grid.x[k] - frac * grid.dx)


def estimate_speed(trace: FrontTrace,
                   window_fraction: float = 0.5) -> SpeedEstimate:
    """Ordinary least squares over the trailing window of the trace.

    The window is the trailing window_fraction of the trace's time range;
    at least 10 points must fall inside it.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise InvalidParam("window_fraction must lie in (0, 1]")
    pts = np.asarray(trace.points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InsufficientData("trace has fewer than 2 points")
    times, positions = pts[:, 0], pts[:, 1]
    t_hi = times[-1]
    t_lo = t_hi - window_fraction * (t_hi - times[0])
    inside = times >= t_lo - 1e-12
    if int(np.count_nonzero(inside)) < 10:
        raise InsufficientData(
            f"only {int(np.count_nonzero(inside))} points in the window")
    t, x = times[inside], positions[inside]
    slope, intercept = np.polyfit(t, x, 1)
    residuals = x - (slope * t + intercept)
    return SpeedEstimate(component=trace.component, side=trace.side,
                         speed=float(slope), intercept=float(intercept),
                         rms_residual=float(np.sqrt(np.mean(residuals ** 2))),
                         window=(float(t[0]), float(t[-1])))


def uniform_speed_verdict(estimates, predicted: float, rtol: float = 0.02,
                          rtol_predicted: float | None = None) -> UniformSpeedVerdict:
    """Compare fitted speed magnitudes pairwise and against the prediction.

    Pairwise deviation is |s_i - s_j| over the pair mean; deviation from
    the prediction is relative to the prediction.  rtol_predicted
    defaults to rtol.
    """
    estimates = tuple(estimates)
    if not estimates:
        raise InsufficientData("no speed estimates")
    if rtol_predicted is None:
        rtol_predicted = rtol
    speeds = np.array([abs(e.speed) for e in estimates])
    pairwise = 0.0
    for i in range(len(speeds)):
        for j in range(i + 1, len(speeds)):
            mean = 0.5 * (speeds[i] + speeds[j])
            if mean > 0.0:
                pairwise = max(pairwise, abs(speeds[i] - speeds[j]) / mean)
    from_predicted = float(np.max(np.abs(speeds - predicted)) / predicted)
    uniform = pairwise <= rtol and from_predicted <= rtol_predicted
    return UniformSpeedVerdict(predicted=float(predicted),
                               per_component=estimates,
                               max_pairwise_rel_dev=float(pairwise),
                               max_rel_dev_from_predicted=from_predicted,
                               uniform=bool(uniform))
