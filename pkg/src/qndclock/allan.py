"""Laser-noise-averaged estimator variance and the resulting Allan deviation.

The detuning seen in a given cycle is drawn from a Gaussian of width gamma
around the operating point; the single-shot MSE is averaged over it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .errors import InvalidArgument, QuadratureError
from .estimator import SensitivityCurve, mse_at
from .protocol import PhysicalParams, ProtocolSpec

MSE_CAP = 4.0  # rad^2/s^2
TRUNCATION_SIGMAS = 8.0
SR_CLOCK_OMEGA0 = 2 * math.pi * 429.228e12  # rad/s, 87Sr 1S0-3P0


@dataclass(frozen=True)
class LaserNoiseModel:
    """Gaussian detuning spread ``gamma`` and integration half-window ``epsilon`` (rad/s)."""

    gamma: float
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidArgument("gamma must be finite and positive")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidArgument("epsilon must be finite and positive")

    @classmethod
    def for_rabi(cls, gamma: float, omega: float) -> "LaserNoiseModel":
        """Window of half-width pi*omega."""
        return cls(gamma=gamma, epsilon=math.pi * omega)


Evaluator = Union[Callable[[float], float], SensitivityCurve]


def protocol_evaluator(spec: ProtocolSpec, params: PhysicalParams) -> Callable[[float], float]:
    """MSE(delta) with the linearization re-centred at delta."""
    def f(delta):
        return float(mse_at(spec, params, np.array([delta]), check=False)[0])
    return f


def _as_callable(evaluator: Evaluator) -> Callable[[float], float]:
    if isinstance(evaluator, SensitivityCurve):
        curve = evaluator
        return lambda d: float(curve.interpolate(d))
    if not callable(evaluator):
        raise InvalidArgument("evaluator must be callable or a SensitivityCurve")
    return evaluator


def gaussian_weight(delta, center: float, gamma: float):
    return np.exp(-0.5 * ((delta - center) / gamma) ** 2) / (gamma * math.sqrt(2 * math.pi))


def _integrate(f, lo: float, hi: float, center: float, gamma: float, rtol: float, what: str) -> float:
    # breakpoints where the Gaussian weight changes scale
    points = sorted({p for k in (0, 1, 3, 5, 8, 12) for s in (-1, 1)
                     for p in [center + s * k * gamma] if lo < p < hi})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, info, *msg = integrate.quad(f, lo, hi, points=points or None, epsrel=rtol,
                                                   epsabs=0.0, limit=500, full_output=True)
    ok = not msg and np.isfinite(value) and abserr <= max(rtol * abs(value), 1e-300) * 10
    if not ok:
        raise QuadratureError(
            f"{what} quadrature did not converge",
            dict(value=value, abserr=abserr, evaluations=info.get("neval"), interval=(lo, hi),
                 gamma=gamma, message=msg[0] if msg else ""))
    return float(value)


def averaged_mse(evaluator: Evaluator, delta_est: float, noise: LaserNoiseModel,
                 rtol: float = 1e-6) -> float:
    r"""E[MSE] = \int_{d-eps}^{d+eps} P_gamma(delta) MSE(delta) d delta.

    The Gaussian weight is not renormalized to the window.  MSE(delta) may
    diverge inside the window (where the outcome slope vanishes); this is
    only harmless while the weight there underflows, otherwise a
    :class:`QuadratureError` carries the quadrature diagnostics.
    """
    mse_fn = _as_callable(evaluator)
    gamma = noise.gamma

    def integrand(d):
        w = gaussian_weight(d, delta_est, gamma)
        if w == 0.0:
            return 0.0
        return w * mse_fn(d)

    return _integrate(integrand, delta_est - noise.epsilon, delta_est + noise.epsilon, delta_est,
                      gamma, rtol, "windowed")


def averaged_mse_regularized(evaluator: Evaluator, delta_est: float, gamma: float,
                             cap: float = MSE_CAP, rtol: float = 1e-6) -> float:
    """Average of min(MSE, cap) over the Gaussian, truncated at +-8 gamma."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidArgument("gamma must be finite and positive")
    if not cap > 0:
        raise InvalidArgument("cap must be positive")
    mse_fn = _as_callable(evaluator)

    def integrand(d):
        v = mse_fn(d)
        return gaussian_weight(d, delta_est, gamma) * (cap if not v < cap else v)

    half = TRUNCATION_SIGMAS * gamma
    return _integrate(integrand, delta_est - half, delta_est + half, delta_est, gamma, rtol,
                      "regularized")


def allan_deviation(e_mse: float, t_cycle: float, omega0: float, tau_av: float) -> float:
    """sigma(tau) = sqrt(E[MSE] T_c / (omega0^2 tau))."""
    for name, v in (("e_mse", e_mse), ("t_cycle", t_cycle), ("omega0", omega0), ("tau_av", tau_av)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be positive")
    return math.sqrt(e_mse * t_cycle / (omega0 ** 2 * tau_av))
