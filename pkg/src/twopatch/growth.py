"""Growth-rate machinery for the side-bioreactor treatment model.

A growth model supplies the specific growth rate ``mu(s)`` of the biomass and
its derivative ``mu_prime(s)`` for substrate concentrations ``s >= 0``.  The
model must be increasing and concave with ``mu(0) = 0`` (no inhibition); this
is what makes every quantity below well defined.

Derived quantities:

* ``treatment_rate(model, sigma, setpoint)``: pollutant removal rate of a
  patch at concentration ``sigma`` when the bioreactor is held at the
  quasi-steady state ``setpoint``, i.e. ``mu(setpoint) * (sigma - setpoint)``.
* ``best_setpoint(model, sigma)``: the unique setpoint in ``(0, sigma)``
  maximizing the treatment rate.  It solves
  ``mu(s) = mu_prime(s) * (sigma - s)``.
* ``best_treatment_rate(model, sigma)``: the maximal removal rate, attained
  at ``best_setpoint``.  Increasing in ``sigma`` with derivative
  ``mu(best_setpoint(sigma))``.
* ``DrainTime``: the time for one homogeneous patch, treated at its best
  setpoint, to drain from concentration ``sigma`` down to a threshold
  ``s_bar``.  Zero at or below the threshold, strictly increasing and
  strictly concave above it.

All functions are pure; growth models are immutable, so everything here is
safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .errors import NumericalFailure

__all__ = [
    "Monod",
    "CustomGrowth",
    "validate_growth_model",
    "treatment_rate",
    "best_setpoint",
    "best_setpoint_grid",
    "best_treatment_rate",
    "best_treatment_rate_grid",
    "best_treatment_rate_prime",
    "DrainTime",
]


@dataclass(frozen=True)
class Monod:
    """Monod (Michaelis-Menten) kinetics: mu(s) = mu_max * s / (ks + s).

    Parameters: ``mu_max`` in 1/h, ``ks`` in g/L, both positive.
    """

    mu_max: float = 1.0
    ks: float = 1.0

    def __post_init__(self):
        if self.mu_max <= 0 or self.ks <= 0:
            raise ValueError(f"Monod parameters must be positive, got {self}")

    def mu(self, s):
        return self.mu_max * s / (self.ks + s)

    def mu_prime(self, s):
        return self.mu_max * self.ks / (self.ks + s) ** 2


@dataclass(frozen=True)
class CustomGrowth:
    """User-supplied kinetics as an explicit (mu, mu_prime) pair.

    ``mu_prime`` must be the exact derivative of ``mu``; no automatic
    differentiation is attempted, because the setpoint optimality condition
    couples the two and a mismatch silently corrupts every derived quantity.
    Both callables should accept numpy arrays as well as floats.
    """

    mu_fn: Callable[[float], float]
    mu_prime_fn: Callable[[float], float]

    def mu(self, s):
        return self.mu_fn(s)

    def mu_prime(self, s):
        return self.mu_prime_fn(s)


def validate_growth_model(model, s_max: float = 10.0, n: int = 256) -> None:
    """Check mu(0)=0, mu' > 0 and concavity of mu on a probe grid.

    Raises ValueError on the first violated assumption.  The concavity probe
    checks that chord slopes of mu over consecutive grid intervals are
    nonincreasing (up to roundoff slack).
    """
    if model.mu(0.0) != 0.0:
        raise ValueError(f"growth model must satisfy mu(0) = 0, got {model.mu(0.0)!r}")
    s = np.linspace(0.0, s_max, n)
    dmu = np.asarray(model.mu_prime(s), dtype=float)
    if not np.all(dmu > 0.0):
        k = int(np.argmin(dmu))
        raise ValueError(f"mu_prime must be positive; mu_prime({s[k]}) = {dmu[k]}")
    vals = np.asarray(model.mu(s), dtype=float)
    slopes = np.diff(vals) / np.diff(s)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(slopes))))
    if not np.all(np.diff(slopes) <= slack):
        k = int(np.argmax(np.diff(slopes)))
        raise ValueError(f"mu must be concave; chord slope increases near s = {s[k + 1]}")


def treatment_rate(model, sigma, setpoint):
    """Removal rate mu(setpoint) * (sigma - setpoint) for a patch at sigma."""
    return model.mu(setpoint) * (sigma - setpoint)


def _setpoint_residual(model, sigma: float, s: float) -> float:
    # Strictly increasing in s for increasing concave mu, negative at 0+,
    # positive at sigma; its root is the maximizer of the treatment rate.
    return model.mu(s) - model.mu_prime(s) * (sigma - s)


def best_setpoint(model, sigma: float) -> float:
    """The unique bioreactor setpoint in (0, sigma) maximizing removal.

    Bracketed root-finding (Brent) on the monotone stationarity residual.
    The result satisfies |mu(s) - mu_prime(s)(sigma - s)| <= 1e-10 * mu(sigma).
    """
    if sigma <= 0.0:
        raise ValueError(f"best_setpoint requires sigma > 0, got {sigma}")
    eps = 1e-12
    lo = eps * sigma
    hi = sigma * (1.0 - eps)
    if not lo < hi:
        raise NumericalFailure("degenerate setpoint bracket", sigma=sigma)
    f_lo = _setpoint_residual(model, sigma, lo)
    f_hi = _setpoint_residual(model, sigma, hi)
    if f_lo >= 0.0 or f_hi <= 0.0:
        raise NumericalFailure(
            "setpoint residual does not bracket a root; growth model violates "
            "the increasing-concave assumptions",
            sigma=sigma,
        )
    try:
        s = brentq(
            lambda v: _setpoint_residual(model, sigma, v),
            lo,
            hi,
            xtol=1e-15 * max(sigma, 1e-3),
            rtol=8.9e-16,
            maxiter=200,
        )
    except RuntimeError as exc:
        raise NumericalFailure(f"setpoint root-finding failed: {exc}", sigma=sigma) from exc
    if abs(_setpoint_residual(model, sigma, s)) > 1e-10 * model.mu(sigma):
        raise NumericalFailure("setpoint residual above tolerance", sigma=sigma, setpoint=s)
    return s


def best_setpoint_grid(model, sigmas) -> np.ndarray:
    """Vectorized best_setpoint over an array of concentrations.

    Plain bisection on the stationarity residual, 70 rounds, which pins the
    root to relative precision ~2^-70.  Requires mu/mu_prime to broadcast.
    Entries with sigma <= 0 yield 0.
    """
    sig = np.asarray(sigmas, dtype=float)
    pos = sig > 0.0
    lo = np.zeros_like(sig)
    hi = np.where(pos, sig, 1.0)
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        res = model.mu(mid) - model.mu_prime(mid) * (sig - mid)
        high = res > 0.0
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    out = 0.5 * (lo + hi)
    return np.where(pos, out, 0.0)


def best_treatment_rate(model, sigma: float) -> float:
    """Maximal removal rate of a patch at concentration sigma (> 0)."""
    s = best_setpoint(model, sigma)
    return model.mu(s) * (sigma - s)


def best_treatment_rate_grid(model, sigmas) -> np.ndarray:
    """Vectorized best_treatment_rate; zero where sigma <= 0."""
    sig = np.asarray(sigmas, dtype=float)
    s = best_setpoint_grid(model, sig)
    return np.where(sig > 0.0, model.mu(s) * (sig - s), 0.0)


def best_treatment_rate_prime(model, sigma: float) -> float:
    """Derivative of the maximal removal rate: mu evaluated at the best setpoint."""
    return model.mu(best_setpoint(model, sigma))


@dataclass(frozen=True)
class DrainTime:
    """Time to drain one optimally treated homogeneous patch to the threshold.

    ``T(sigma) = max(0, integral from s_bar to sigma of d xi / rate(xi))``
    where ``rate`` is the best treatment rate.  Evaluated by adaptive
    Gauss-Kronrod quadrature; the integrand is smooth and positive away from
    zero concentration.  ``signed(sigma)`` exposes the signed integral (no
    clamping), which is strictly increasing on all of (0, inf) and is what
    trajectory reconstruction inverts.
    """

    model: object
    s_bar: float
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.s_bar <= 0.0:
            raise ValueError(f"threshold s_bar must be positive, got {self.s_bar}")

    def signed(self, sigma: float) -> float:
        if sigma == self.s_bar:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                val, err = quad(
                    lambda x: 1.0 / best_treatment_rate(self.model, x),
                    self.s_bar,
                    sigma,
                    epsabs=0.0,
                    epsrel=self.rel_tol,
                    limit=300,
                )
            except IntegrationWarning as exc:
                raise NumericalFailure(
                    f"drain-time quadrature did not converge: {exc}", sigma=sigma
                ) from exc
        if err > 10.0 * self.rel_tol * max(abs(val), 1e-300):
            raise NumericalFailure(
                "drain-time quadrature error estimate above tolerance",
                sigma=sigma,
                estimate=err,
            )
        return val

    def __call__(self, sigma: float) -> float:
        if sigma < 0.0:
            raise ValueError(f"concentration must be nonnegative, got {sigma}")
        if sigma <= self.s_bar:
            return 0.0
        return max(0.0, self.signed(sigma))

    def inverse(self, value: float, lo: float, hi: float) -> float:
        """Concentration at which the signed drain time equals ``value``.

        ``lo``/``hi`` must bracket the answer; used to reconstruct the
        homogenized phase of trajectories as a function of time.
        """
        f = lambda s: self.signed(s) - value
        f_lo, f_hi = f(lo), f(hi)
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        if f_lo * f_hi > 0.0:
            raise NumericalFailure("drain-time inversion bracket invalid", value=value, lo=lo, hi=hi)
        return brentq(f, lo, hi, xtol=1e-14 * max(hi, 1.0), rtol=8.9e-16, maxiter=200)
