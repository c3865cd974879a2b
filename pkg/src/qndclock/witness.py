"""Spin-squeezing witness for ensembles with a fluctuating atom number."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import gaussian as gc
from .errors import InvalidArgument, WitnessUndefined
from .protocol import PhysicalParams, ProtocolSpec, propagate

SCAN_KINDS = ("detuning", "photons")


@dataclass(frozen=True)
class WitnessReport:
    xi2: float
    axis: np.ndarray
    lhs: float
    rhs: float
    conditional: bool = False
    candidate_xi2: float = math.nan
    cov_j0_l: float = math.nan


def _moments(state: gc.PhaseSpaceState):
    if state.batch_shape:
        raise InvalidArgument("witness evaluation expects a single (unbatched) state")
    n = float(state.mean_atom_number)
    m = np.asarray(state.spin_mean, dtype=float)
    c = np.asarray(state.spin_cov, dtype=float)
    return n, m, c


def _ratio(n, m, c, axis):
    axis = axis / np.linalg.norm(axis)
    denom = m @ m - (m @ axis) ** 2
    if denom <= 0:
        return np.inf
    return n * (axis @ c @ axis) / denom


def _orthonormal_complement(v: np.ndarray):
    """Two unit vectors completing ``v`` to a right-handed orthonormal basis."""
    v = v / np.linalg.norm(v)
    helper = np.eye(3)[int(np.argmin(np.abs(v)))]
    u = np.cross(v, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(v, u)


def _tilted_optimum(m, c, plane):
    """Exact minimizer of the ratio over all unit vectors.

    Writing the axis as p + t*m_hat with p in the plane normal to the mean,
    the ratio becomes <N> (p + t m_hat)^T C (p + t m_hat) / |<J>|^2; the
    optimal tilt t leaves the Schur complement of C on the plane.
    """
    m_hat = m / np.linalg.norm(m)
    c_pp = plane @ c @ plane.T
    c_pm = plane @ c @ m_hat
    c_mm = float(m_hat @ c @ m_hat)
    if c_mm > 1e-14 * max(np.trace(c), 1e-300):
        schur = c_pp - np.outer(c_pm, c_pm) / c_mm
    else:
        schur, c_pm, c_mm = c_pp, np.zeros(2), 1.0
    _, vecs = np.linalg.eigh(schur)
    p = vecs[:, 0]
    return p @ plane - (p @ c_pm) / c_mm * m_hat


def witness_xi2(state: gc.PhaseSpaceState, conditional: bool = False) -> WitnessReport:
    r"""xi^2 = min_l <N> Var(J_l) / (|<J>|^2 - <J_l>^2) over unit vectors l.

    The candidate axis is the minimum-variance direction in the plane normal
    to the mean spin.  It is exact when the plane has no covariance with the
    mean direction; in general the optimum tilts toward the mean, which is
    solved in closed form and then polished by a local two-angle search.
    ``<N> = 2<J0>``.
    """
    n, m, c = _moments(state)
    if not np.linalg.norm(m) > 0:
        raise WitnessUndefined("mean spin vector is zero")
    if not n > 0:
        raise InvalidArgument("mean atom number must be positive")
    u, v = _orthonormal_complement(m)
    plane = np.stack([u, v])
    _, vecs = np.linalg.eigh(plane @ c @ plane.T)
    candidate = _ratio(n, m, c, vecs[:, 0] @ plane)

    start = _tilted_optimum(m, c, plane)
    start /= np.linalg.norm(start)
    best = _ratio(n, m, c, start)
    a, b = _orthonormal_complement(start)
    f = lambda x: _ratio(n, m, c, start + x[0] * a + x[1] * b)
    res = optimize.minimize(f, np.zeros(2), method="Nelder-Mead",
                            options=dict(xatol=1e-12, fatol=1e-15 * max(best, 1.0),
                                         initial_simplex=[[0, 0], [1e-4, 0], [0, 1e-4]]))
    if res.fun < best:
        axis = start + res.x[0] * a + res.x[1] * b
        xi2 = float(res.fun)
    else:
        axis, xi2 = start, float(best)
    axis = axis / np.linalg.norm(axis)
    if axis @ m < 0 or (axis @ m == 0 and axis[np.argmax(np.abs(axis))] < 0):
        axis = -axis  # fix the sign for reproducible output

    j, k = _orthonormal_complement(axis)
    lhs, rhs = squeezing_inequality(state, np.stack([j, k, axis]))
    cov_j0 = float(state.cov[gc.J0, gc.JX:gc.JZ + 1] @ axis)
    return WitnessReport(xi2=xi2, axis=axis, lhs=lhs, rhs=rhs, conditional=conditional,
                         candidate_xi2=float(candidate), cov_j0_l=cov_j0)


def squeezing_inequality(state: gc.PhaseSpaceState, triad) -> tuple:
    r"""Both sides of Var(J_l) >= <J_j^2/N> + <J_k^2/N> for separable states.

    ``triad`` rows are the orthonormal axes (j, k, l).  Each <J_m^2/N> uses
    the second-order expansion about the means, with N = 2 J0:

    .. math::

        \frac{\langle J_m\rangle^2}{\langle N\rangle}
        + \frac{\mathrm{Var}(J_m)}{\langle N\rangle}
        - \frac{2\langle J_m\rangle \mathrm{Cov}(J_m, N)}{\langle N\rangle^2}
        + \frac{\langle J_m\rangle^2 \mathrm{Var}(N)}{\langle N\rangle^3}
    """
    n, m, c = _moments(state)
    if not n > 0:
        raise InvalidArgument("mean atom number must be positive")
    triad = np.asarray(triad, dtype=float)
    if triad.shape != (3, 3) or not np.allclose(triad @ triad.T, np.eye(3), atol=1e-10):
        raise InvalidArgument("triad must be three orthonormal axes")
    var_n = 4 * float(state.cov[gc.J0, gc.J0])
    cov_n = 2 * state.cov[gc.J0, gc.JX:gc.JZ + 1]
    rhs = 0.0
    for axis in triad[:2]:
        mean_m = float(axis @ m)
        rhs += (mean_m ** 2 / n + float(axis @ c @ axis) / n
                - 2 * mean_m * float(axis @ cov_n) / n ** 2 + mean_m ** 2 * var_n / n ** 3)
    lhs = float(triad[2] @ c @ triad[2])
    return lhs, rhs


def pre_readout_state(spec: ProtocolSpec, params: PhysicalParams, delta: float,
                      conditional: bool = True) -> gc.PhaseSpaceState:
    """State just before the last pulse, optionally conditioned on the others.

    Conditioning uses the expected outcomes; the conditional covariance does
    not depend on the outcome values.
    """
    last = spec.n_pulses - 1
    state = propagate(spec, params, float(delta), stop_before=last)
    if conditional and last > 0:
        state = gc.condition_on_pulses(state, range(last))
    return state


@dataclass
class WitnessCurve:
    scan_kind: str
    values: np.ndarray
    xi2: np.ndarray
    axes: np.ndarray
    reports: list


def witness_scan(spec: ProtocolSpec, params: PhysicalParams, scan_kind: str, values: Sequence[float],
                 delta: Optional[float] = None, conditional: bool = True) -> WitnessCurve:
    """xi^2 just before the last pulse over a detuning or photon-number grid.

    ``scan_kind="detuning"`` sweeps delta (rad/s) with the spec's photons;
    ``scan_kind="photons"`` sets every pulse to each photon number and uses
    ``delta`` (default ``spec.delta0``).
    """
    if scan_kind not in SCAN_KINDS:
        raise InvalidArgument(f"scan kind must be one of {SCAN_KINDS}")
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidArgument("scan grid must be a non-empty 1-D sequence")
    delta = spec.delta0 if delta is None else delta
    reports = []
    for value in values:
        if scan_kind == "detuning":
            s, d = spec, value
        else:
            s, d = spec.with_pulses((t, value) for t in spec.times), delta
        reports.append(witness_xi2(pre_readout_state(s, params, d, conditional), conditional))
    return WitnessCurve(scan_kind, values, np.array([r.xi2 for r in reports]),
                        np.array([r.axis for r in reports]), reports)
