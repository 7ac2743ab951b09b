"""Two-patch treatment dynamics and event-driven integration.

Reduced model: the state is ``s = (s1, s2)``, the pollutant concentrations of
the two patches (g/L).  A control is an admissible pair
``(alpha, sr_star)`` with ``alpha`` the flow split sent to patch 1 and
``sr_star`` the bioreactor quasi-steady-state setpoint,
``0 <= sr_star <= alpha*s1 + (1-alpha)*s2``.  The velocity is
``F(s, u) + d*G(s)`` where ``F`` removes pollutant through the bioreactor and
``G`` is the diffusion exchange between the patches.

Full model: the state is ``(s_r, x_r, s1, s2)`` with the bioreactor substrate
and biomass resolved explicitly; the patch equations carry the volume ratio
``epsilon``, which makes the bioreactor fast and the patches slow.  The
integrator works in the slow time scale (patch time), so reach times are
directly comparable between the two models.

The target is the square ``max(s1, s2) <= s_bar``.  ``integrate`` locates the
first target hit and, for the optimal strategy, the diagonal-capture time
``t_delta`` after which the two patches stay homogenized; from capture on,
the reduced model follows the scalar dynamics ``ds/dt = -rate(s)`` and the
remaining time comes from the drain-time quadrature rather than from the ODE
solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ContractViolation, NumericalFailure
from .growth import DrainTime, best_setpoint

__all__ = [
    "ReducedParams",
    "FullParams",
    "PhysicalParams",
    "Control",
    "SimConfig",
    "Trajectory",
    "to_reduced",
    "reduced_rhs",
    "full_rhs",
    "integrate",
    "default_horizon",
]


@dataclass(frozen=True)
class ReducedParams:
    """Reduced-model parameters.

    r: patch-1 volume fraction v1/(v1+v2), in (0, 1).
    d: normalized diffusion D/v_r (1/h), >= 0.
    s_bar: target threshold (g/L), > 0.
    """

    r: float
    d: float
    s_bar: float

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"volume ratio r must lie in (0,1), got {self.r}")
        if self.d < 0.0:
            raise ValueError(f"diffusion d must be nonnegative, got {self.d}")
        if self.s_bar <= 0.0:
            raise ValueError(f"threshold s_bar must be positive, got {self.s_bar}")


@dataclass(frozen=True)
class FullParams(ReducedParams):
    """Reduced parameters plus the bioreactor/resource volume ratio epsilon > 0."""

    epsilon: float = 0.01

    def __post_init__(self):
        super().__post_init__()
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def reduced(self) -> ReducedParams:
        return ReducedParams(self.r, self.d, self.s_bar)


@dataclass(frozen=True)
class PhysicalParams:
    """Physical volumes (L) and diffusion flow (L/h) of the installation."""

    v1: float
    v2: float
    v_r: float
    D: float

    def __post_init__(self):
        if min(self.v1, self.v2, self.v_r) <= 0.0:
            raise ValueError(f"volumes must be positive, got {self}")
        if self.D < 0.0:
            raise ValueError(f"diffusion flow D must be nonnegative, got {self.D}")


def to_reduced(phys: PhysicalParams, s_bar: float) -> tuple[ReducedParams, FullParams]:
    """Map physical volumes to the normalized parameter sets."""
    total = phys.v1 + phys.v2
    r = phys.v1 / total
    d = phys.D / phys.v_r
    eps = phys.v_r / total
    return ReducedParams(r, d, s_bar), FullParams(r, d, s_bar, eps)


@dataclass(frozen=True)
class Control:
    """Admissible control pair: flow split alpha and bioreactor setpoint (g/L)."""

    alpha: float
    sr_star: float


@dataclass(frozen=True)
class SimConfig:
    """Integrator configuration.

    diag_tol is the half-width of the diagonal capture band on |s1 - s2|;
    None selects 1e-9 * max(1, |x0|_inf) at integration time.  t_max of None
    selects ten times a crude upper estimate of the treatment duration, which
    lets provably infeasible runs (one pump, no diffusion) terminate cleanly
    with reason "horizon".  event_tol is the accepted uncertainty on event
    times; the solver locates events by root-finding on its local interpolant
    to near machine precision, which satisfies any sane value.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    t_max: Optional[float] = None
    diag_tol: Optional[float] = None
    event_tol: float = 1e-10
    dense_output: bool = False
    method: str = "DOP853"
    diag_samples: int = 65

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.event_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.diag_tol is not None and self.diag_tol <= 0:
            raise ValueError("diag_tol must be positive")
        if self.diag_samples < 2:
            raise ValueError("diag_samples must be at least 2")


def reduced_rhs(state, control: Control, params: ReducedParams, model) -> np.ndarray:
    """Velocity F(s, u) + d*G(s) of the reduced dynamics (g/L/h)."""
    s1, s2 = state
    a, sr = control.alpha, control.sr_star
    mu_sr = model.mu(sr)
    r, d = params.r, params.d
    f1 = -(a / r) * mu_sr * (s1 - sr) + (d / r) * (s2 - s1)
    f2 = -((1.0 - a) / (1.0 - r)) * mu_sr * (s2 - sr) + (d / (1.0 - r)) * (s1 - s2)
    return np.array([f1, f2])


def full_rhs(fullstate, alpha: float, q_over_vr: float, params: FullParams, model) -> np.ndarray:
    """Velocity of the four-state bioreactor/patches model in fast time.

    State order (s_r, x_r, s1, s2); q_over_vr is the dilution rate q/v_r.
    """
    s_r, x_r, s1, s2 = fullstate
    r, d, eps = params.r, params.d, params.epsilon
    mu_r = model.mu(s_r)
    blend = alpha * s1 + (1.0 - alpha) * s2
    ds_r = -mu_r * x_r + q_over_vr * (blend - s_r)
    dx_r = mu_r * x_r - q_over_vr * x_r
    ds1 = eps * ((alpha / r) * q_over_vr * (s_r - s1) + (d / r) * (s2 - s1))
    ds2 = eps * (((1.0 - alpha) / (1.0 - r)) * q_over_vr * (s_r - s2) + (d / (1.0 - r)) * (s1 - s2))
    return np.array([ds_r, dx_r, ds1, ds2])


def default_horizon(x0_patches, params: ReducedParams, model) -> float:
    """Ten times a rough upper estimate of any reasonable treatment duration."""
    drain = DrainTime(model, params.s_bar)
    x1, x2 = float(x0_patches[0]), float(x0_patches[1])
    v0 = params.r * drain(x1) + (1.0 - params.r) * drain(x2)
    vinf = drain(params.r * x1 + (1.0 - params.r) * x2)
    return 10.0 * (v0 + vinf + 1.0)


def _setpoint_or_zero(model, sigma: float) -> float:
    return best_setpoint(model, sigma) if sigma > 0.0 else 0.0


def _check_admissible(alpha: float, sr: float, s1: float, s2: float, t: float) -> None:
    blend = alpha * s1 + (1.0 - alpha) * s2
    slack = 1e-9 * max(1.0, abs(blend)) + 1e-12
    if not (-1e-12 <= alpha <= 1.0 + 1e-12) or sr < -slack or sr > blend + slack:
        raise ContractViolation(
            f"inadmissible control (alpha={alpha}, sr_star={sr}) at state "
            f"({s1}, {s2}), t={t}"
        )


@dataclass
class Trajectory:
    """Event-annotated integration output.

    ``states`` has two columns (s1, s2) for the reduced model and four
    (s_r, x_r, s1, s2) for the full one.  ``phase`` marks samples before
    ("offdiag") and after ("diagonal") diagonal capture.  ``t_f`` is the
    first target-hit time (None if the horizon was reached first), ``t_delta``
    the first diagonal-capture time (None if the diagonal was never reached
    while outside the target).
    """

    kind: str
    t: np.ndarray
    states: np.ndarray
    alpha: np.ndarray
    sr_star: np.ndarray
    phase: np.ndarray
    t_delta: Optional[float]
    t_f: Optional[float]
    reason: str
    params: ReducedParams
    q_over_vr: Optional[np.ndarray] = None
    _model: object = None
    _strategy: object = None
    _branch1: Optional[int] = None  # 1: alpha=1, 2: alpha=0, 0: diagonal from start
    _dense1: object = None
    _dense2: object = None

    @property
    def patches(self) -> np.ndarray:
        """(n, 2) view of the patch concentrations."""
        return self.states[:, -2:]

    def events_dict(self) -> dict:
        return {"t_delta": self.t_delta, "t_f": self.t_f, "reason": self.reason}

    def state_at(self, t: float) -> np.ndarray:
        """Dense state evaluation; requires dense_output in the SimConfig."""
        if self.t_delta is not None and t >= self.t_delta and self._dense2 is not None:
            if self.kind == "full":
                return np.asarray(self._dense2(min(t, self.t[-1])))
            s = float(self._dense2(min(t, self.t[-1]))[0])
            return np.array([s, s])
        if self._dense1 is None:
            if len(self.t) == 1:
                return self.states[0].copy()
            raise ValueError("trajectory was integrated without dense output")
        return np.asarray(self._dense1(t))

    def branch_at(self, t: float) -> Optional[str]:
        """Control branch at time t for strategies with diagonal capture."""
        if self._branch1 is None:
            return None
        if self._branch1 == 0 or (self.t_delta is not None and t >= self.t_delta):
            return "diag"
        return "bang1" if self._branch1 == 1 else "bang2"

    def control_at(self, t: float) -> Control:
        s = self.state_at(t)
        s1, s2 = s[-2], s[-1]
        branch = self.branch_at(t)
        if branch == "bang1":
            return Control(1.0, _setpoint_or_zero(self._model, s1))
        if branch == "bang2":
            return Control(0.0, _setpoint_or_zero(self._model, s2))
        if branch == "diag":
            blend = self.params.r * s1 + (1.0 - self.params.r) * s2
            return Control(self.params.r, _setpoint_or_zero(self._model, blend))
        return self._strategy.control(np.array([s1, s2]), self.params, self._model)

    def to_csv(self, path_or_buf) -> None:
        """Write the sample table; schema documented in the package README."""
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, "w")
            close = True
        else:
            buf = path_or_buf
        try:
            cols = ["t", "s1", "s2", "alpha", "sr_star", "phase"]
            if self.kind == "full":
                cols += ["s_r", "x_r", "q_over_vr"]
            buf.write(",".join(cols) + "\n")
            for i in range(len(self.t)):
                row = [
                    repr(float(self.t[i])),
                    repr(float(self.states[i, -2])),
                    repr(float(self.states[i, -1])),
                    repr(float(self.alpha[i])),
                    repr(float(self.sr_star[i])),
                    str(self.phase[i]),
                ]
                if self.kind == "full":
                    row += [
                        repr(float(self.states[i, 0])),
                        repr(float(self.states[i, 1])),
                        repr(float(self.q_over_vr[i])),
                    ]
                buf.write(",".join(row) + "\n")
        finally:
            if close:
                buf.close()


def _trivial_trajectory(kind, x0, params, strategy, model) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    try:
        u = strategy.control(x0[-2:], params, model)
        alpha, sr = u.alpha, u.sr_star
    except Exception:
        alpha, sr = np.nan, np.nan
    q = None
    if kind == "full":
        q = np.array([model.mu(sr) if np.isfinite(sr) else np.nan])
    return Trajectory(
        kind=kind,
        t=np.array([0.0]),
        states=x0[None, :].copy(),
        alpha=np.array([alpha]),
        sr_star=np.array([sr]),
        phase=np.array(["offdiag"]),
        t_delta=None,
        t_f=0.0,
        reason="target",
        params=params,
        q_over_vr=q,
        _model=model,
        _strategy=strategy,
    )


def _solve(rhs, t_span, y0, config: SimConfig, events) -> object:
    sol = solve_ivp(
        rhs,
        t_span,
        y0,
        method=config.method,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        dense_output=config.dense_output,
        events=events,
    )
    if sol.status == -1:
        raise NumericalFailure(f"integration failed: {sol.message}", t=float(sol.t[-1]))
    return sol


def _integrate_reduced(strategy, x0, params: ReducedParams, model, config: SimConfig) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,) or np.any(x0 < 0.0):
        raise ValueError(f"initial state must be two nonnegative concentrations, got {x0}")
    if max(x0) <= params.s_bar:
        return _trivial_trajectory("reduced", x0, params, strategy, model)

    drain = DrainTime(model, params.s_bar)
    diag_tol = config.diag_tol if config.diag_tol is not None else 1e-9 * max(1.0, float(np.max(np.abs(x0))))
    t_max = config.t_max if config.t_max is not None else default_horizon(x0, params, model)
    captures = getattr(strategy, "captures_diagonal", False)
    r = params.r

    def target_event(t, y):
        return max(y[0], y[1]) - params.s_bar

    target_event.terminal = True
    target_event.direction = -1.0

    # Diagonal entry for the optimal strategy: scalar homogenized mode.
    if captures and abs(x0[0] - x0[1]) <= diag_tol:
        m0 = r * x0[0] + (1.0 - r) * x0[1]
        return _diagonal_tail(
            "reduced", strategy, params, model, config, drain,
            t0=0.0, m0=m0, t_max=t_max,
            head=None,
        )

    if captures:
        sign0 = 1.0 if x0[0] > x0[1] else -1.0
        branch1 = 1 if sign0 > 0 else 2
        alpha1 = 1.0 if branch1 == 1 else 0.0
        active = 0 if branch1 == 1 else 1

        def control_fn(y):
            return alpha1, _setpoint_or_zero(model, y[active])

        def capture_event(t, y):
            return sign0 * (y[0] - y[1]) - diag_tol

        capture_event.terminal = True
        capture_event.direction = -1.0
        events = [target_event, capture_event]
    else:
        branch1 = None

        def control_fn(y):
            u = strategy.control(y, params, model)
            return u.alpha, u.sr_star

        a0, sr0 = control_fn(x0)
        _check_admissible(a0, sr0, x0[0], x0[1], 0.0)

        def crossing_event(t, y):
            return y[0] - y[1]

        crossing_event.terminal = False
        events = [target_event, crossing_event]

    def rhs(t, y):
        a, sr = control_fn(y)
        mu_sr = model.mu(sr)
        d = params.d
        return (
            -(a / r) * mu_sr * (y[0] - sr) + (d / r) * (y[1] - y[0]),
            -((1.0 - a) / (1.0 - r)) * mu_sr * (y[1] - sr) + (d / (1.0 - r)) * (y[0] - y[1]),
        )

    sol = _solve(rhs, (0.0, t_max), x0, config, events)

    times = sol.t
    states = sol.y.T
    alphas = np.empty(len(times))
    srs = np.empty(len(times))
    for i, (ti, yi) in enumerate(zip(times, states)):
        a, sr = control_fn(yi)
        _check_admissible(a, sr, yi[0], yi[1], ti)
        alphas[i] = a
        srs[i] = sr
    phases = np.array(["offdiag"] * len(times))

    head = dict(
        t=times, states=states, alpha=alphas, sr_star=srs, phase=phases,
        dense1=sol.sol if config.dense_output else None, branch1=branch1,
    )

    if captures and len(sol.t_events[1]) > 0:
        t_cap = float(sol.t_events[1][0])
        y_cap = sol.y_events[1][0]
        m_cap = r * y_cap[0] + (1.0 - r) * y_cap[1]
        return _diagonal_tail(
            "reduced", strategy, params, model, config, drain,
            t0=t_cap, m0=m_cap, t_max=t_max, head=head,
        )

    t_delta = None
    if not captures and len(sol.t_events) > 1 and len(sol.t_events[1]) > 0:
        for tc in sol.t_events[1]:
            yc = sol.sol(tc) if config.dense_output else None
            if yc is None:
                k = int(np.searchsorted(times, tc))
                yc = states[min(k, len(states) - 1)]
            if min(yc[0], yc[1]) > params.s_bar:
                t_delta = float(tc)
                break
    if len(sol.t_events[0]) > 0:
        t_f, reason = float(sol.t_events[0][0]), "target"
    else:
        t_f, reason = None, "horizon"

    return Trajectory(
        kind="reduced", t=times, states=states, alpha=alphas, sr_star=srs,
        phase=phases, t_delta=t_delta, t_f=t_f, reason=reason, params=params,
        _model=model, _strategy=strategy, _branch1=branch1,
        _dense1=head["dense1"],
    )


def _diagonal_tail(kind, strategy, params, model, config, drain, t0, m0, t_max, head) -> Trajectory:
    """Finish a reduced run on the diagonal: scalar dynamics plus quadrature.

    The remaining time is the drain time of the homogenized concentration;
    the scalar ODE solve only reconstructs the samples in between.
    """
    r = params.r
    if m0 <= params.s_bar:
        t_end = t0
        diag_t = np.array([t0])
        diag_s = np.array([m0])
        dense2 = None
        reason = "target"
        t_f = t0
    else:
        t_end = t0 + drain(m0)
        if t_end > t_max:
            reason, t_f = "horizon", None
            t_stop = t_max
        else:
            reason, t_f = "target", t_end
            t_stop = t_end
        def scalar_rhs(t, y):
            sp = _setpoint_or_zero(model, y[0])
            return (-model.mu(sp) * (y[0] - sp),)

        scalar = solve_ivp(
            scalar_rhs,
            (t0, t_stop),
            [m0],
            method=config.method,
            rtol=config.rel_tol,
            atol=config.abs_tol,
            dense_output=True,
        )
        if scalar.status == -1:
            raise NumericalFailure(f"diagonal integration failed: {scalar.message}", t=t0)
        dense2 = scalar.sol
        diag_t = np.linspace(t0, t_stop, config.diag_samples)
        diag_s = scalar.sol(diag_t)[0]

    alphas = np.full(len(diag_t), r)
    srs = np.array([_setpoint_or_zero(model, s) for s in diag_s])
    states2 = np.column_stack([diag_s, diag_s])
    phases2 = np.array(["diagonal"] * len(diag_t))

    if head is None:
        t_all, states, alphas_all, srs_all, phases = diag_t, states2, alphas, srs, phases2
        dense1, branch1 = None, 0
    else:
        t_all = np.concatenate([head["t"], diag_t[1:]])
        states = np.vstack([head["states"], states2[1:]])
        alphas_all = np.concatenate([head["alpha"], alphas[1:]])
        srs_all = np.concatenate([head["sr_star"], srs[1:]])
        phases = np.concatenate([head["phase"], phases2[1:]])
        dense1, branch1 = head["dense1"], head["branch1"]

    return Trajectory(
        kind=kind, t=t_all, states=states, alpha=alphas_all, sr_star=srs_all,
        phase=phases, t_delta=t0, t_f=t_f, reason=reason, params=params,
        _model=model, _strategy=strategy, _branch1=branch1,
        _dense1=dense1, _dense2=dense2,
    )


def _integrate_full(strategy, x0, params: FullParams, model, config: SimConfig) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,) or np.any(x0 < 0.0):
        raise ValueError(f"full initial state must be four nonnegative values, got {x0}")
    if x0[1] <= 0.0:
        raise ValueError("full model requires initial biomass x_r(0) > 0")
    if max(x0[2], x0[3]) <= params.s_bar:
        return _trivial_trajectory("full", x0, params, strategy, model)

    patches0 = x0[2:]
    diag_tol = config.diag_tol if config.diag_tol is not None else 1e-9 * max(1.0, float(np.max(np.abs(x0))))
    t_max = config.t_max if config.t_max is not None else default_horizon(patches0, params, model)
    captures = getattr(strategy, "captures_diagonal", False)
    r, eps = params.r, params.epsilon

    def control_of(y):
        u = strategy.control(y[2:], params, model)
        return u.alpha, u.sr_star

    def diag_control(y):
        blend = r * y[2] + (1.0 - r) * y[3]
        return r, _setpoint_or_zero(model, blend)

    def make_rhs(ctrl):
        def rhs(t, y):
            a, sr = ctrl(y)
            return full_rhs(y, a, model.mu(sr), params, model) / eps

        return rhs

    def target_event(t, y):
        return max(y[2], y[3]) - params.s_bar

    target_event.terminal = True
    target_event.direction = -1.0

    segments = []
    t_delta = None

    on_diag = abs(patches0[0] - patches0[1]) <= diag_tol
    if captures and not on_diag:
        sign0 = 1.0 if patches0[0] > patches0[1] else -1.0
        branch1 = 1 if sign0 > 0 else 2
        active = 2 if branch1 == 1 else 3
        alpha1 = 1.0 if branch1 == 1 else 0.0

        def locked(y):
            return alpha1, _setpoint_or_zero(model, y[active])

        def capture_event(t, y):
            return sign0 * (y[2] - y[3]) - diag_tol

        capture_event.terminal = True
        capture_event.direction = -1.0
        sol1 = _solve(make_rhs(locked), (0.0, t_max), x0, config, [target_event, capture_event])
        segments.append((sol1, locked, "offdiag"))
        if len(sol1.t_events[1]) > 0:
            t_delta = float(sol1.t_events[1][0])
            y_cap = sol1.y_events[1][0]
            sol2 = _solve(make_rhs(diag_control), (t_delta, t_max), y_cap, config, [target_event])
            segments.append((sol2, diag_control, "diagonal"))
    elif captures and on_diag:
        branch1 = 0
        t_delta = 0.0
        sol1 = _solve(make_rhs(diag_control), (0.0, t_max), x0, config, [target_event])
        segments.append((sol1, diag_control, "diagonal"))
    else:
        branch1 = None
        a0, sr0 = control_of(x0)
        _check_admissible(a0, sr0, x0[2], x0[3], 0.0)
        sol1 = _solve(make_rhs(control_of), (0.0, t_max), x0, config, [target_event])
        segments.append((sol1, control_of, "offdiag"))

    times, states, alphas, srs, qs, phases = [], [], [], [], [], []
    t_f, reason = None, "horizon"
    for k, (sol, ctrl, phase_name) in enumerate(segments):
        tt = sol.t if k == 0 else sol.t[1:]
        yy = sol.y.T if k == 0 else sol.y.T[1:]
        for ti, yi in zip(tt, yy):
            a, sr = ctrl(yi)
            _check_admissible(a, sr, yi[2], yi[3], ti)
            times.append(ti)
            states.append(yi)
            alphas.append(a)
            srs.append(sr)
            qs.append(model.mu(sr))
            phases.append(phase_name)
        if len(sol.t_events[0]) > 0:
            t_f, reason = float(sol.t_events[0][0]), "target"

    dense1 = segments[0][0].sol if config.dense_output else None
    dense2 = segments[1][0].sol if len(segments) > 1 and config.dense_output else None

    return Trajectory(
        kind="full", t=np.array(times), states=np.array(states),
        alpha=np.array(alphas), sr_star=np.array(srs),
        phase=np.array(phases), t_delta=t_delta, t_f=t_f, reason=reason,
        params=params, q_over_vr=np.array(qs),
        _model=model, _strategy=strategy, _branch1=branch1,
        _dense1=dense1, _dense2=dense2,
    )


def integrate(kind: str, strategy, x0, params, model, config: Optional[SimConfig] = None) -> Trajectory:
    """Integrate a strategy on the reduced or full model with event detection.

    Events: target hit (max(s1, s2) crossing s_bar downward) and diagonal
    capture (|s1 - s2| entering the diag_tol band while both patches are above
    the threshold).  For strategies that capture the diagonal (the optimal
    two-pump feedback), the reduced model switches to the scalar homogenized
    dynamics at capture and the final time is
    ``t_delta + drain_time(homogenized concentration)``.
    """
    config = config or SimConfig()
    if kind == "reduced":
        return _integrate_reduced(strategy, x0, params, model, config)
    if kind == "full":
        if not isinstance(params, FullParams):
            raise TypeError("full model integration requires FullParams")
        return _integrate_full(strategy, x0, params, model, config)
    raise ValueError(f"unknown model kind {kind!r}")
