"""Minimal-time value functions, analytic bounds, and grid evaluation.

``value_simulated`` evaluates the minimal time V_d(x) by integrating the
proven-optimal feedback - the synthesis is exact, so simulation is the
cheapest certified evaluator.  The diffusion extremes have closed forms in
the single-patch drain time T:

* zero diffusion:      V_0(x) = r T(x1) + (1-r) T(x2)
* infinite diffusion:  V_inf(x) = T(r x1 + (1-r) x2)

On the region where both patches start above the threshold and differ,
V_0 <= V_d < V_inf, V_d is increasing in d, and the homogenization time and
homogenized concentration obey the explicit bounds exposed below.  Outside
that region the sandwich can fail: with one patch already clean, strong
diffusion can beat the zero-diffusion time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dynamics import ReducedParams, SimConfig, integrate
from .errors import NumericalFailure
from .growth import DrainTime, best_treatment_rate
from .strategies import OptimalTwoPump

__all__ = [
    "ValueGrid",
    "value_zero_diffusion",
    "value_infinite_diffusion",
    "value_simulated",
    "homogenization_rates",
    "homogenization_time_bound",
    "capture_concentration_bounds",
    "value_grid",
]


def value_zero_diffusion(x, drain: DrainTime, r: float) -> float:
    """Closed-form minimal time without diffusion: r T(x1) + (1-r) T(x2)."""
    return r * drain(float(x[0])) + (1.0 - r) * drain(float(x[1]))


def value_infinite_diffusion(x, drain: DrainTime, r: float) -> float:
    """Limit of the minimal time for large diffusion: T of the blended state."""
    return drain(r * float(x[0]) + (1.0 - r) * float(x[1]))


def value_simulated(x, d: float, params: ReducedParams, model, config: Optional[SimConfig] = None) -> float:
    """Minimal time V_d(x): reach time of the optimal feedback at diffusion d."""
    p = replace(params, d=d)
    traj = integrate("reduced", OptimalTwoPump(), x, p, model, config)
    if traj.t_f is None:
        raise NumericalFailure("optimal feedback hit the horizon", x=tuple(np.asarray(x, float)), d=d)
    return traj.t_f


def homogenization_rates(x, params: ReducedParams, model) -> tuple[float, float]:
    """The treatment-rate extremes (M-, M+) controlling the approach to the diagonal.

    M- = min(rate(x2)/r, rate(x1)/(1-r)) and
    M+ = max(rate(x1)/r, rate(x2)/(1-r)); components at zero concentration
    contribute zero rate.
    """
    x1, x2 = float(x[0]), float(x[1])
    g1 = best_treatment_rate(model, x1) if x1 > 0.0 else 0.0
    g2 = best_treatment_rate(model, x2) if x2 > 0.0 else 0.0
    r = params.r
    m_minus = min(g2 / r, g1 / (1.0 - r))
    m_plus = max(g1 / r, g2 / (1.0 - r))
    return m_minus, m_plus


def homogenization_time_bound(x, params: ReducedParams, model) -> float:
    """Upper bound on the diagonal-capture time of the optimal feedback.

    (r(1-r)/d) * log(1 + d |x1-x2| / (M- r(1-r))).  Undefined at d = 0; +inf
    when one patch starts clean (M- = 0).
    """
    if params.d == 0.0:
        raise ValueError("capture-time bound is undefined for d = 0")
    m_minus, _ = homogenization_rates(x, params, model)
    if m_minus == 0.0:
        return math.inf
    r, d = params.r, params.d
    gap = abs(float(x[0]) - float(x[1]))
    return (r * (1.0 - r) / d) * math.log1p(d * gap / (m_minus * r * (1.0 - r)))


def capture_concentration_bounds(x, t_delta: float, params: ReducedParams, model) -> tuple[float, float]:
    """Bounds on the homogenized concentration reached at capture time t_delta."""
    if t_delta < 0.0:
        raise ValueError(f"capture time must be nonnegative, got {t_delta}")
    m_minus, m_plus = homogenization_rates(x, params, model)
    r = params.r
    blend = r * float(x[0]) + (1.0 - r) * float(x[1])
    lower = blend - max(r, 1.0 - r) * m_plus * t_delta
    upper = blend - min(r, 1.0 - r) * m_minus * t_delta
    return lower, upper


@dataclass
class ValueGrid:
    """Rectangular grid of value samples; values[i, j] is at (s1[i], s2[j])."""

    s1: np.ndarray
    s2: np.ndarray
    values: np.ndarray
    meta: dict

    def to_csv(self, path_or_buf) -> None:
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            buf.write("s1,s2,value\n")
            for i, a in enumerate(self.s1):
                for j, b in enumerate(self.s2):
                    buf.write(f"{float(a)!r},{float(b)!r},{float(self.values[i, j])!r}\n")
        finally:
            if close:
                buf.close()

    def meta_json(self) -> str:
        return json.dumps(self.meta, sort_keys=True, indent=2)


def value_grid(
    which: str,
    domain,
    resolution,
    params: ReducedParams,
    model,
    config: Optional[SimConfig] = None,
    d: Optional[float] = None,
) -> ValueGrid:
    """Evaluate V_0, V_inf, or V_d on a rectangular grid.

    ``domain`` is (lo1, hi1, lo2, hi2) and ``resolution`` (n1, n2) with both
    n >= 2.  Nodes inside the target are exactly zero; diagonal nodes of V_d
    use the drain time directly (the simulation would only add sliding-mode
    noise there).
    """
    lo1, hi1, lo2, hi2 = map(float, domain)
    n1, n2 = int(resolution[0]), int(resolution[1])
    if n1 < 2 or n2 < 2:
        raise ValueError(f"grid resolution must be at least 2x2, got {(n1, n2)}")
    if which not in ("v0", "vinf", "vd"):
        raise ValueError(f"unknown value function {which!r}")
    d_eff = params.d if d is None else float(d)
    s1 = np.linspace(lo1, hi1, n1)
    s2 = np.linspace(lo2, hi2, n2)
    drain = DrainTime(model, params.s_bar)
    vals = np.zeros((n1, n2))
    for i, a in enumerate(s1):
        for j, b in enumerate(s2):
            if max(a, b) <= params.s_bar:
                continue
            try:
                if which == "v0":
                    vals[i, j] = value_zero_diffusion((a, b), drain, params.r)
                elif which == "vinf":
                    vals[i, j] = value_infinite_diffusion((a, b), drain, params.r)
                elif a == b:
                    vals[i, j] = drain(a)
                else:
                    vals[i, j] = value_simulated((a, b), d_eff, params, model, config)
            except NumericalFailure as exc:
                raise NumericalFailure(
                    f"grid node ({a}, {b}) failed: {exc}", node=(float(a), float(b))
                ) from exc
    meta = {
        "which": which,
        "d": d_eff if which == "vd" else None,
        "r": params.r,
        "s_bar": params.s_bar,
        "domain": [lo1, hi1, lo2, hi2],
        "resolution": [n1, n2],
        "units": {"value": "h", "s1": "g/L", "s2": "g/L"},
    }
    return ValueGrid(s1=s1, s2=s2, values=vals, meta=meta)
