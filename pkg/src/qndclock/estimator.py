"""Linearized maximum-likelihood detuning estimator and its mean squared error."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la

from .errors import InvalidArgument, NumericalDegeneracy, Unidentifiable
from .protocol import (MeasurementModel, PhysicalParams, ProtocolSpec, _richardson_check,
                       run_protocol)


def _factor(gamma_x):
    try:
        return la.cho_factor(np.asarray(gamma_x, dtype=float))
    except la.LinAlgError as exc:
        raise NumericalDegeneracy("outcome covariance is singular") from exc


def _information(model: MeasurementModel, cho=None) -> float:
    cho = cho or _factor(model.gamma_x)
    mu_prime = np.asarray(model.mu_prime, dtype=float)
    info = float(mu_prime @ la.cho_solve(cho, mu_prime))
    if not np.any(mu_prime) or info <= 0:
        raise Unidentifiable("outcome means do not depend on the detuning")
    return info


def estimate_detuning(outcomes, model: MeasurementModel) -> float:
    r"""Maximum-likelihood detuning for a Gaussian outcome vector.

    .. math::

        \hat\delta = \delta_0 + \frac{\mu'^T \Gamma_X^{-1} (X - \mu_0)}
                                     {\mu'^T \Gamma_X^{-1} \mu'}

    ``outcomes`` may be a 2-D array with one draw per row.
    """
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.shape[-1] != len(model.mu0):
        raise InvalidArgument("outcome length does not match the measurement model")
    cho = _factor(model.gamma_x)
    info = _information(model, cho)
    weights = la.cho_solve(cho, np.asarray(model.mu_prime, dtype=float))
    return model.delta0 + (outcomes - model.mu0) @ weights / info


def mse(model: MeasurementModel) -> float:
    """1 / (mu'^T Gamma_X^-1 mu'), in rad^2/s^2."""
    return 1.0 / _information(model)


def mse_batch(mu_prime: np.ndarray, gamma_x: np.ndarray) -> np.ndarray:
    """Vectorized MSE over leading axes; unidentifiable points give +inf."""
    chol = np.linalg.cholesky(gamma_x)
    y = np.linalg.solve(chol, mu_prime[..., None])[..., 0]
    info = np.sum(y * y, axis=-1)
    out = np.full(info.shape, np.inf)
    ok = (info > 0) & np.any(mu_prime != 0, axis=-1)
    out[ok] = 1.0 / info[ok]
    return out


@dataclass
class SensitivityCurve:
    delta_grid: np.ndarray
    mse_values: np.ndarray
    protocol_id: str = ""
    params: Optional[PhysicalParams] = None
    spec: Optional[ProtocolSpec] = field(default=None, repr=False)

    def __post_init__(self):
        self.delta_grid = np.asarray(self.delta_grid, dtype=float)
        self.mse_values = np.asarray(self.mse_values, dtype=float)
        if self.delta_grid.ndim != 1 or np.any(np.diff(self.delta_grid) <= 0):
            raise InvalidArgument("detuning grid must be strictly increasing")

    def interpolate(self, delta):
        return np.interp(delta, self.delta_grid, self.mse_values)


def mse_at(spec: ProtocolSpec, params: PhysicalParams, delta, rel_step: float = 1e-6,
           check: bool = True) -> np.ndarray:
    """MSE with the linearization re-centred at each ``delta`` (array OK).

    The covariance and the finite-difference offsets are propagated in one
    batch; the derivative is the same central difference as
    :func:`~qndclock.protocol.mu_derivative`.
    """
    delta = np.asarray(delta, dtype=float)
    h = rel_step * np.maximum(spec.omega, np.abs(delta))
    cols = [delta, delta + h, delta - h]
    if check:
        cols += [delta + h / 2, delta - h / 2]
    mu, gamma = run_protocol(spec, params, np.stack(cols, axis=-1))
    d1 = (mu[..., 1, :] - mu[..., 2, :]) / (2 * h)[..., None]
    if check:
        d2 = (mu[..., 3, :] - mu[..., 4, :]) / h[..., None]
        _richardson_check(d1, d2, mu, h, 1e-4)
    return mse_batch(d1, gamma[..., 0, :, :])


def sensitivity_curve(spec: ProtocolSpec, params: PhysicalParams, delta_grid,
                      protocol_id: str = "", check: bool = True) -> SensitivityCurve:
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.size == 0:
        raise InvalidArgument("detuning grid is empty")
    values = mse_at(spec, params, delta_grid, check=check)
    return SensitivityCurve(delta_grid, values, protocol_id, params, spec)


def fisher_information(model_fn, delta, step: float) -> float:
    """Fisher information of a Gaussian outcome model with fixed covariance.

    ``model_fn(delta) -> (mu, gamma_x)``.  Computed as minus the expected
    second derivative of the log-likelihood, by finite differences of the
    exact log-density averaged over the outcome distribution at ``delta``.
    The covariance is frozen at ``delta`` so the result is comparable with
    the linearized MSE.
    """
    mu0, gamma_x = model_fn(delta)
    cho = _factor(gamma_x)

    def expected_loglik(d):
        mu, _ = model_fn(d)
        diff = mu - mu0
        # E[(X-mu)^T G^-1 (X-mu)] for X ~ N(mu0, G) = d + diff^T G^-1 diff
        return -0.5 * (len(mu0) + diff @ la.cho_solve(cho, diff))

    f_plus, f0, f_minus = (expected_loglik(delta + step), expected_loglik(delta),
                           expected_loglik(delta - step))
    return -(f_plus - 2 * f0 + f_minus) / step ** 2


def monte_carlo(model: MeasurementModel, delta_true: float, mu_true, n_draws: int = 100_000,
                seed: int = 0):
    """Sample outcomes ~ N(mu_true, Gamma_X) and return the estimates.

    Uses a counter-based generator (Philox) so results depend only on
    ``seed``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.multivariate_normal(np.asarray(mu_true, dtype=float), model.gamma_x,
                                    size=n_draws, method="cholesky")
    return estimate_detuning(draws, model)
