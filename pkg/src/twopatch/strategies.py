"""Control strategies for the two-patch treatment problem.

The minimal-time feedback treats the dirtier patch alone at its best
bioreactor setpoint until the two patches homogenize, then splits the flow
as the volume ratio to keep them homogenized (the diagonal is invariant for
that split only).  The other strategies exist for comparison: the optimal
one-pump feedback (a single patch may be treated), the homogenizing feedback
used in the reachability argument, and constant controls parameterized as a
fixed pair (alpha, zeta) with setpoint ``zeta * (alpha*s1 + (1-alpha)*s2)``
- the state-independent parameterization keeps constant controls admissible
along the whole trajectory, which fixed (alpha, setpoint) pairs do not as the
resource cleans.

``best_constant_search`` looks for the fastest constant control.  Constant
here means a fixed flow split and a fixed bioreactor setpoint held for the
whole run, which is the natural constant-flow operation of the plant; such a
pair stays admissible only while the setpoint remains below the blended
inflow concentration, so candidates are monitored and score +inf on a
violation.  Because the blended inflow sits at or below the threshold at the
hitting time, no setpoint above the threshold can stay admissible to the
end; the grid coordinate ``zeta`` is therefore the setpoint as a fraction of
the threshold.  A 41x41 grid is scored with a vectorized embedded
Runge-Kutta integrator, then the best cell is refined by a deterministic
compass pattern search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import Control, ReducedParams, SimConfig, default_horizon
from .errors import InfeasibleSearch, NumericalFailure
from .growth import best_setpoint

__all__ = [
    "OptimalTwoPump",
    "OnePump",
    "Homogenizing",
    "ConstantZeta",
    "ConstantSetpoint",
    "CorruptedTwoPump",
    "optimal_feedback",
    "one_pump_feedback",
    "homogenizing_feedback",
    "constant_zeta_control",
    "parse_strategy",
    "simulate_constant_batch",
    "best_constant_search",
]


def _setpoint(model, sigma: float) -> float:
    return best_setpoint(model, sigma) if sigma > 0.0 else 0.0


def _band(state, diag_tol: Optional[float]) -> float:
    if diag_tol is not None:
        return diag_tol
    return 1e-9 * max(1.0, float(np.max(np.abs(state))))


def optimal_feedback(state, params: ReducedParams, model, diag_tol: Optional[float] = None) -> Control:
    """Minimal-time feedback: treat the dirtier patch, split as r on the diagonal."""
    s1, s2 = float(state[0]), float(state[1])
    tol = _band(state, diag_tol)
    if s1 > s2 + tol:
        return Control(1.0, _setpoint(model, s1))
    if s2 > s1 + tol:
        return Control(0.0, _setpoint(model, s2))
    return Control(params.r, _setpoint(model, s1))


def one_pump_feedback(state, active: int, model) -> Control:
    """Optimal feedback when only one patch can be treated (flow split frozen)."""
    if active not in (1, 2):
        raise ValueError(f"active patch must be 1 or 2, got {active}")
    s_active = float(state[active - 1])
    alpha = 1.0 if active == 1 else 0.0
    return Control(alpha, _setpoint(model, s_active))


def homogenizing_feedback(state, params: ReducedParams) -> Control:
    """Split as r and aim the bioreactor at half the weighted mass.

    Under this law the weighted mass m = r*s1 + (1-r)*s2 obeys
    dm/dt = -mu(m/2) * m/2, which is the finite-time reachability argument.
    """
    m = params.r * float(state[0]) + (1.0 - params.r) * float(state[1])
    return Control(params.r, 0.5 * m)


def constant_zeta_control(state, alpha: float, zeta: float) -> Control:
    """Constant (alpha, zeta) pair realized as setpoint zeta * blended inflow."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= zeta <= 1.0):
        raise ValueError(f"alpha and zeta must lie in [0,1], got {(alpha, zeta)}")
    blend = alpha * float(state[0]) + (1.0 - alpha) * float(state[1])
    return Control(alpha, zeta * max(blend, 0.0))


@dataclass(frozen=True)
class OptimalTwoPump:
    """The proven minimal-time strategy."""

    diag_tol: Optional[float] = None
    captures_diagonal = True

    def control(self, state, params, model) -> Control:
        return optimal_feedback(state, params, model, self.diag_tol)

    def spec(self) -> str:
        return "optimal"


@dataclass(frozen=True)
class CorruptedTwoPump:
    """Deliberately swapped bang branches; a negative control for verification.

    Treats the cleaner patch off the diagonal.  It still reaches the target
    when d > 0 (diffusion drains the untreated patch), but its trajectories
    are not extremals and must fail the branch-consistency checks.
    """

    diag_tol: Optional[float] = None
    captures_diagonal = False

    def control(self, state, params, model) -> Control:
        s1, s2 = float(state[0]), float(state[1])
        tol = _band(state, self.diag_tol)
        if s1 > s2 + tol:
            return Control(0.0, _setpoint(model, s2))
        if s2 > s1 + tol:
            return Control(1.0, _setpoint(model, s1))
        return Control(params.r, _setpoint(model, s1))

    def spec(self) -> str:
        return "corrupted"


@dataclass(frozen=True)
class OnePump:
    """Only one patch is pumped; the setpoint follows that patch optimally."""

    active: int

    def __post_init__(self):
        if self.active not in (1, 2):
            raise ValueError(f"active patch must be 1 or 2, got {self.active}")

    def control(self, state, params, model) -> Control:
        return one_pump_feedback(state, self.active, model)

    def spec(self) -> str:
        return f"onepump:{self.active}"


@dataclass(frozen=True)
class Homogenizing:
    def control(self, state, params, model) -> Control:
        return homogenizing_feedback(state, params)

    def spec(self) -> str:
        return "homog"


@dataclass(frozen=True)
class ConstantZeta:
    """Fixed (alpha, zeta) with setpoint zeta * instantaneous blended inflow.

    Admissible by construction for any zeta in [0,1]; this is the
    state-independent reformulation of the control set.
    """

    alpha: float
    zeta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.zeta <= 1.0):
            raise ValueError(f"alpha and zeta must lie in [0,1], got {self}")

    def control(self, state, params, model) -> Control:
        return constant_zeta_control(state, self.alpha, self.zeta)

    def spec(self) -> str:
        return f"const:{self.alpha}:{self.zeta}"


@dataclass(frozen=True)
class ConstantSetpoint:
    """Fixed flow split and fixed absolute setpoint (constant pump flows).

    Unlike ConstantZeta this can leave the admissible set as the resource
    cleans; integrate() raises ContractViolation in that case.
    """

    alpha: float
    sr_star: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or self.sr_star < 0.0:
            raise ValueError(f"invalid constant setpoint pair {self}")

    def control(self, state, params, model) -> Control:
        return Control(self.alpha, self.sr_star)

    def spec(self) -> str:
        return f"constsr:{self.alpha}:{self.sr_star}"


def parse_strategy(spec: str):
    """Parse a CLI strategy string; see the classes above for semantics.

    Accepted forms: ``optimal``, ``onepump:1``, ``onepump:2``, ``homog``,
    ``const:<alpha>:<zeta>``, and ``constsr:<alpha>:<sr_star>``.
    (``bestconst`` is a search, not a strategy, and is handled by the caller.)
    """
    parts = spec.strip().split(":")
    head = parts[0]
    if head == "optimal" and len(parts) == 1:
        return OptimalTwoPump()
    if head == "onepump" and len(parts) == 2:
        return OnePump(int(parts[1]))
    if head == "homog" and len(parts) == 1:
        return Homogenizing()
    if head == "const" and len(parts) == 3:
        return ConstantZeta(float(parts[1]), float(parts[2]))
    if head == "constsr" and len(parts) == 3:
        return ConstantSetpoint(float(parts[1]), float(parts[2]))
    raise ValueError(f"unknown strategy spec {spec!r}")


# Dormand-Prince 5(4) tableau for the vectorized constant-control integrator.
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _hermite_eval(theta, y0, hf0, y1, hf1):
    th = theta[:, None]
    t2 = th * th
    t3 = t2 * th
    return (
        (2 * t3 - 3 * t2 + 1) * y0
        + (t3 - 2 * t2 + th) * hf0
        + (-2 * t3 + 3 * t2) * y1
        + (t3 - t2) * hf1
    )


def simulate_constant_batch(
    x0,
    alphas,
    setpoints,
    params: ReducedParams,
    model,
    t_max: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    zeta_mode: bool = False,
) -> np.ndarray:
    """Reach times for a batch of constant controls; +inf where infeasible.

    With ``zeta_mode`` False (default) each candidate holds the absolute
    setpoint ``setpoints[i]`` fixed; the run is marked infeasible the moment
    the setpoint exceeds the blended inflow (the control leaves the
    admissible set).  With ``zeta_mode`` True, ``setpoints`` are fractions
    zeta in [0,1] and the realized setpoint is zeta times the instantaneous
    blended inflow, which is admissible by construction.

    Integrates every candidate simultaneously with an embedded RK 5(4) pair,
    per-candidate step control, and cubic-Hermite refinement of the target
    crossing inside the accepting step.  mu must broadcast over arrays.
    """
    x0 = np.asarray(x0, dtype=float)
    al = np.asarray(alphas, dtype=float).ravel()
    sp = np.asarray(setpoints, dtype=float).ravel()
    n = al.size
    r, d, sb = params.r, params.d, params.s_bar
    if max(x0) <= sb:
        return np.zeros(n)

    if zeta_mode:

        def f(y, a, z):
            s1 = y[:, 0]
            s2 = y[:, 1]
            blend = a * s1 + (1.0 - a) * s2
            sr = np.maximum(z * blend, 0.0)
            mu = model.mu(sr)
            f1 = -(a / r) * mu * (s1 - sr) + (d / r) * (s2 - s1)
            f2 = -((1.0 - a) / (1.0 - r)) * mu * (s2 - sr) + (d / (1.0 - r)) * (s1 - s2)
            return np.stack([f1, f2], axis=1)

    else:
        mu_fixed_all = np.asarray(model.mu(np.maximum(sp, 0.0)), dtype=float)

        def f(y, a, sr, mu=None):
            s1 = y[:, 0]
            s2 = y[:, 1]
            f1 = -(a / r) * mu * (s1 - sr) + (d / r) * (s2 - s1)
            f2 = -((1.0 - a) / (1.0 - r)) * mu * (s2 - sr) + (d / (1.0 - r)) * (s1 - s2)
            return np.stack([f1, f2], axis=1)

    def rhs(y, idx_local, a, sr):
        if zeta_mode:
            return f(y, a, sr)
        return f(y, a, sr, mu=mu_fixed_all[idx_local])

    def blend_of(y, a):
        return a * y[..., 0] + (1.0 - a) * y[..., 1]

    y = np.tile(x0, (n, 1))
    t = np.zeros(n)
    h = np.full(n, min(1e-2, t_max))
    hit = np.full(n, np.inf)
    slack = 1e-9 * max(1.0, float(np.max(np.abs(x0))))
    # candidates inadmissible at t=0 never start
    if not zeta_mode:
        bad0 = sp > al * x0[0] + (1.0 - al) * x0[1] + slack
    else:
        bad0 = np.zeros(n, dtype=bool)
    act = np.where(~bad0)[0]
    k1 = np.zeros((n, 2))
    if act.size:
        k1[act] = rhs(y[act], act, al[act], sp[act])

    for _ in range(200_000):
        if act.size == 0:
            return hit
        ya, ta, aa, sa = y[act], t[act], al[act], sp[act]
        ha = np.minimum(h[act], t_max - ta)
        hc = ha[:, None]
        k1a = k1[act]
        k2 = rhs(ya + hc * (_A21 * k1a), act, aa, sa)
        k3 = rhs(ya + hc * (_A31 * k1a + _A32 * k2), act, aa, sa)
        k4 = rhs(ya + hc * (_A41 * k1a + _A42 * k2 + _A43 * k3), act, aa, sa)
        k5 = rhs(ya + hc * (_A51 * k1a + _A52 * k2 + _A53 * k3 + _A54 * k4), act, aa, sa)
        k6 = rhs(ya + hc * (_A61 * k1a + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), act, aa, sa)
        y5 = ya + hc * (_B1 * k1a + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(y5, act, aa, sa)
        err = hc * (_E1 * k1a + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y5))
        enorm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        accept = enorm <= 1.0
        with np.errstate(divide="ignore"):
            factor = np.where(enorm > 0.0, 0.9 * enorm ** -0.2, 5.0)
        h[act] = ha * np.clip(factor, 0.2, 5.0)
        if np.any(h[act][~accept] < 1e-14 * np.maximum(ta[~accept], 1.0)):
            raise NumericalFailure("batch integrator step-size underflow")

        idx = act[accept]
        if idx.size:
            ya_, y5_ = ya[accept], y5[accept]
            ha_, ta_ = ha[accept], ta[accept]
            aa_, sa_ = aa[accept], sa[accept]
            crossed = np.max(y5_, axis=1) <= sb
            if np.any(crossed):
                c = np.where(crossed)[0]
                lo = np.zeros(c.size)
                hi = np.ones(c.size)
                y0c, y1c = ya_[c], y5_[c]
                hf0 = ha_[c, None] * k1a[accept][c]
                hf1 = ha_[c, None] * k7[accept][c]
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    gm = np.max(_hermite_eval(mid, y0c, hf0, y1c, hf1), axis=1) - sb
                    below = gm <= 0.0
                    hi = np.where(below, mid, hi)
                    lo = np.where(below, lo, mid)
                theta = 0.5 * (lo + hi)
                y_cross = _hermite_eval(theta, y0c, hf0, y1c, hf1)
                ok = np.ones(c.size, dtype=bool)
                if not zeta_mode:
                    ok = blend_of(y_cross, aa_[c]) >= sa_[c] - slack
                hit[idx[c[ok]]] = ta_[c[ok]] + theta[ok] * ha_[c[ok]]
            violated = np.zeros(idx.size, dtype=bool)
            if not zeta_mode:
                violated = (~crossed) & (blend_of(y5_, aa_) < sa_ - slack)
            t[idx] = ta_ + ha_
            y[idx] = y5_
            k1[idx] = k7[accept]
            done = crossed | violated | (t[idx] >= t_max * (1.0 - 1e-14))
            keep = np.ones(act.size, dtype=bool)
            keep[np.where(accept)[0][done]] = False
            act = act[keep]
        # rejected rows stay active with the reduced step
    raise NumericalFailure("batch integrator exceeded its iteration budget")


def best_constant_search(
    x0,
    params: ReducedParams,
    model,
    config: Optional[SimConfig] = None,
    n_grid: int = 41,
    step_tol: float = 1e-3,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> tuple[float, float, float]:
    """Best constant control by grid scoring plus pattern search.

    Candidates are constant (alpha, setpoint) pairs with the setpoint
    parameterized as zeta times the target threshold, (alpha, zeta) ranging
    over [0,1]^2.  The restriction to setpoints at or below the threshold
    loses nothing: the blended inflow equals at most the threshold at the
    hitting time, so any larger constant setpoint is inadmissible by then.
    Scores the full n_grid x n_grid lattice, then refines around the winner
    with a compass pattern search, halving the step until it drops below
    step_tol.  Candidates that never reach the target, or whose setpoint
    stops being admissible before they do, score +inf.  The reduction is
    deterministic: ties break toward the lowest alpha, then the lowest zeta.

    Returns (alpha, zeta, t); the winning absolute setpoint is
    zeta * s_bar.
    """
    x0 = np.asarray(x0, dtype=float)
    if max(x0) <= params.s_bar:
        raise ValueError(f"initial state {x0} is already inside the target")
    config = config or SimConfig()
    t_max = config.t_max if config.t_max is not None else default_horizon(x0, params, model)

    def score_batch(pairs):
        fa = np.array([a for a, _ in pairs])
        fz = np.array([z for _, z in pairs])
        srs = fz * params.s_bar
        return simulate_constant_batch(x0, fa, srs, params, model, t_max, rtol, atol)

    grid = np.linspace(0.0, 1.0, n_grid)
    alphas = np.repeat(grid, n_grid)
    zetas = np.tile(grid, n_grid)
    times = score_batch(list(zip(alphas, zetas)))
    if not np.any(np.isfinite(times)):
        raise InfeasibleSearch(
            f"no constant control reaches the target from {tuple(x0)} before t_max={t_max}"
        )

    def key(a, z):
        return (round(a, 12), round(z, 12))

    cache = {key(a, z): tm for a, z, tm in zip(alphas, zetas, times)}
    i_best = int(np.argmin(times))  # first minimum: lowest alpha, then zeta
    best = (float(times[i_best]), float(alphas[i_best]), float(zetas[i_best]))

    step = 1.0 / (n_grid - 1)
    while step >= step_tol:
        _, a0, z0 = best
        moves = [(a0 + step, z0), (a0 - step, z0), (a0, z0 + step), (a0, z0 - step)]
        moves = [(min(max(a, 0.0), 1.0), min(max(z, 0.0), 1.0)) for a, z in moves]
        fresh = [(a, z) for a, z in moves if key(a, z) not in cache]
        if fresh:
            for (a, z), tm in zip(fresh, score_batch(fresh)):
                cache[key(a, z)] = float(tm)
        candidates = [best] + [(cache[key(a, z)], a, z) for a, z in moves]
        new_best = min(candidates)
        if new_best == best:
            step *= 0.5
        else:
            best = new_best
    t_best, a_best, z_best = best
    if not np.isfinite(t_best):
        raise InfeasibleSearch("pattern search converged to an infeasible candidate")
    return a_best, z_best, t_best
