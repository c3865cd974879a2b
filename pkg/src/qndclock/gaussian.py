"""Gaussian moment propagation for a collective spin coupled to probe pulses.

The phase-space vector is ``(J0, Jx, Jy, Jz, dX_1, dP_1, dX_2, dP_2, ...)``.
Spin components are dimensionless (hbar = 1); optical quadratures use the
convention ``[X, P] = i/2`` so that vacuum has variance 1/4.

Every operation returns a new :class:`PhaseSpaceState`.  All arrays may carry
leading batch dimensions (e.g. one entry per detuning on a scan grid), in
which case ``mean`` has shape ``(..., d)`` and ``cov`` has shape
``(..., d, d)``; the operations broadcast over those dimensions.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, NumericalDegeneracy

SPIN_DIM = 4
VACUUM_VARIANCE = 0.25
SMALL_ANGLE_WARN = 0.3  # rad, optical phase g<N_down> above which linearization is doubtful

J0, JX, JY, JZ = range(4)
_EYE_SPIN = np.eye(SPIN_DIM)


class AtomNumberKind(enum.Enum):
    DETERMINISTIC = "deterministic"
    POISSON = "poisson"


@dataclass(frozen=True)
class AtomNumberModel:
    """Statistics of the atom number at state preparation.

    ``transverse_variance`` is the variance of Jx and Jy per atom.  The
    coherent spin state value 1/4 is the default; 1/2 reproduces the
    alternative normalization some references quote for the same state.
    """

    kind: AtomNumberKind
    mean: float
    transverse_variance: float = 0.25

    def __post_init__(self):
        if not self.mean > 0:
            raise InvalidArgument(f"mean atom number must be positive, got {self.mean}")
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", AtomNumberKind(self.kind.lower()))

    @classmethod
    def deterministic(cls, n: float) -> "AtomNumberModel":
        return cls(AtomNumberKind.DETERMINISTIC, float(n))

    @classmethod
    def poisson(cls, n: float) -> "AtomNumberModel":
        return cls(AtomNumberKind.POISSON, float(n))


@dataclass(frozen=True)
class PhaseSpaceState:
    mean: np.ndarray
    cov: np.ndarray
    n_pulses: int = 0
    measured: frozenset = field(default_factory=frozenset)

    @property
    def dim(self) -> int:
        return SPIN_DIM + 2 * self.n_pulses

    @property
    def batch_shape(self) -> tuple:
        return self.mean.shape[:-1]

    @property
    def mean_atom_number(self):
        """<N> = 2<J0>."""
        return 2.0 * self.mean[..., J0]

    @property
    def spin_mean(self) -> np.ndarray:
        """(<Jx>, <Jy>, <Jz>)."""
        return self.mean[..., JX:JZ + 1]

    @property
    def spin_cov(self) -> np.ndarray:
        """Covariance of (Jx, Jy, Jz)."""
        return self.cov[..., JX:JZ + 1, JX:JZ + 1]

    def x_index(self, pulse: int) -> int:
        return SPIN_DIM + 2 * pulse

    def p_index(self, pulse: int) -> int:
        return SPIN_DIM + 2 * pulse + 1


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def _transform(state: PhaseSpaceState, S: np.ndarray, **changes) -> PhaseSpaceState:
    mean = np.einsum("...ij,...j->...i", S, state.mean)
    cov = _symmetrize(S @ state.cov @ np.swapaxes(S, -1, -2))
    return replace(state, mean=mean, cov=cov, **changes)


def new_coherent_state(model: AtomNumberModel) -> PhaseSpaceState:
    """All atoms in the lower clock state, Gaussian moments.

    For Poisson loading J0 = N/2 and Jz = -N/2 fluctuate together, so
    Var(J0) = Var(Jz) = -Cov(J0, Jz) = <N>/4 and Var(J0 - Jz) = <N>.
    """
    n = float(model.mean)
    mean = np.array([n / 2, 0.0, 0.0, -n / 2])
    cov = np.zeros((SPIN_DIM, SPIN_DIM))
    cov[JX, JX] = cov[JY, JY] = model.transverse_variance * n
    if model.kind is AtomNumberKind.POISSON:
        cov[J0, J0] = cov[JZ, JZ] = n / 4
        cov[J0, JZ] = cov[JZ, J0] = -n / 4
    return PhaseSpaceState(mean=mean, cov=cov)


def append_probe_mode(state: PhaseSpaceState) -> PhaseSpaceState:
    """Append an uncorrelated vacuum-noise probe mode (dX, dP)."""
    d = state.dim
    batch = state.batch_shape
    mean = np.zeros(batch + (d + 2,))
    mean[..., :d] = state.mean
    cov = np.zeros(batch + (d + 2, d + 2))
    cov[..., :d, :d] = state.cov
    cov[..., d, d] = cov[..., d + 1, d + 1] = VACUUM_VARIANCE
    return replace(state, mean=mean, cov=cov, n_pulses=state.n_pulses + 1)


def rotation_matrix(omega, delta, t) -> np.ndarray:
    """Heisenberg-picture rotation of (Jx, Jy, Jz) under H = omega*Jx - delta*Jz.

    The generator is dJ/dt = w x J with w = (omega, 0, -delta).  ``delta`` may
    be an array; the result then has shape ``delta.shape + (3, 3)``.
    """
    delta = np.asarray(delta, dtype=float)
    omega = np.broadcast_to(np.asarray(omega, dtype=float), delta.shape)
    w = np.stack([omega, np.zeros_like(delta), -delta], axis=-1)
    rate = np.linalg.norm(w, axis=-1)
    theta = rate * t
    safe = np.where(rate > 0, rate, 1.0)
    k = w / safe[..., None]
    K = np.zeros(delta.shape + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -k[..., 2], k[..., 1]
    K[..., 1, 0], K[..., 1, 2] = k[..., 2], -k[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -k[..., 1], k[..., 0]
    s = np.sin(theta)[..., None, None]
    c = (1.0 - np.cos(theta))[..., None, None]
    return np.eye(3) + s * K + c * (K @ K)


def _broadcast_state(state: PhaseSpaceState, batch: tuple):
    if state.batch_shape == batch:
        return state.mean.copy(), state.cov.copy()
    d = state.dim
    return (np.broadcast_to(state.mean, batch + (d,)).copy(),
            np.broadcast_to(state.cov, batch + (d, d)).copy())


def rabi_evolve(state: PhaseSpaceState, omega: float, delta, duration: float) -> PhaseSpaceState:
    if duration < 0:
        raise InvalidArgument(f"duration must be non-negative, got {duration}")
    if duration == 0:
        return state
    R = rotation_matrix(omega, delta, duration)
    batch = np.broadcast_shapes(R.shape[:-2], state.batch_shape)
    mean, cov = _broadcast_state(state, batch)
    spin = slice(JX, JZ + 1)
    # only the (Jx, Jy, Jz) rows and columns change
    mean[..., spin] = np.einsum("...ij,...j->...i", R, mean[..., spin])
    cov[..., spin, :] = R @ cov[..., spin, :]
    cov[..., :, spin] = cov[..., :, spin] @ np.swapaxes(R, -1, -2)
    return PhaseSpaceState(mean, _symmetrize(cov), state.n_pulses, state.measured)


def _check_pulse(state: PhaseSpaceState, pulse: int):
    if not 0 <= pulse < state.n_pulses:
        raise InvalidArgument(f"pulse index {pulse} out of range for {state.n_pulses} pulses")


def _qnd_update(v: np.ndarray, x: int, p: int, ga, cy, cx):
    """In place v <- S v along the last axis, S = 1 + E with E[Jx, p] = cy,
    E[Jy, p] = cx, E[x, J0] = ga, E[x, Jz] = -ga.  Source entries are never
    targets, so the update order does not matter."""
    dp = v[..., p].copy()
    dn = v[..., J0] - v[..., JZ]
    v[..., JX] += cy * dp
    v[..., JY] += cx * dp
    v[..., x] += ga * dn


def qnd_interact(state: PhaseSpaceState, pulse: int, g: float, alpha_sq: float,
                 residual_rotation: float = 0.0) -> PhaseSpaceState:
    """Linearized QND coupling between the spin and probe ``pulse``.

    Jx += 2g|a|<Jy> dP, Jy -= 2g|a|<Jx> dP, dX += g|a| (J0 - Jz), with the
    mean values taken immediately before the pulse.  The classical light
    shift g|a|^2 is assumed compensated to a multiple of 2*pi;
    ``residual_rotation`` adds an uncompensated rotation about z (rad).
    """
    _check_pulse(state, pulse)
    if alpha_sq < 0:
        raise InvalidArgument(f"photon number must be non-negative, got {alpha_sq}")
    if alpha_sq == 0 and residual_rotation == 0:
        return state
    amp = np.sqrt(alpha_sq)
    n_down = state.mean[..., J0] - state.mean[..., JZ]
    if np.any(np.abs(g * n_down) > SMALL_ANGLE_WARN):
        warnings.warn("optical phase g<N_down> exceeds 0.3 rad; linearized QND model is unreliable",
                      RuntimeWarning, stacklevel=2)
    x, p = state.x_index(pulse), state.p_index(pulse)
    ga = g * amp
    cy = 2 * ga * state.mean[..., JY]
    cx = -2 * ga * state.mean[..., JX]
    mean, cov = state.mean.copy(), state.cov.copy()
    _qnd_update(mean, x, p, ga, cy, cx)
    _qnd_update(np.swapaxes(cov, -1, -2), x, p, ga, cy[..., None], cx[..., None])  # S C
    _qnd_update(cov, x, p, ga, cy[..., None], cx[..., None])  # (S C) S^T
    out = PhaseSpaceState(mean, _symmetrize(cov), state.n_pulses, state.measured)
    if residual_rotation:
        c, s = np.cos(residual_rotation), np.sin(residual_rotation)
        Rz = np.eye(state.dim)
        Rz[JX, JX], Rz[JX, JY], Rz[JY, JX], Rz[JY, JY] = c, -s, s, c
        out = _transform(out, Rz)
    return out


def current_single_atom_cov(state: PhaseSpaceState) -> np.ndarray:
    """Single-atom covariance taken as the collective spin block divided by <N>."""
    n = state.mean_atom_number
    return state.cov[..., :SPIN_DIM, :SPIN_DIM] / np.asarray(n)[..., None, None]


def apply_decoherence(state: PhaseSpaceState, eta: float,
                      single_atom_cov: Callable[[PhaseSpaceState], np.ndarray] = current_single_atom_cov,
                      ) -> PhaseSpaceState:
    """Loss of a fraction ``eta`` of atoms through spontaneous scattering.

    Spin means shrink by (1 - eta); the spin covariance becomes
    (1-eta)^2 G + eta(1-eta) <N> G_1 + <N> eta f(f+1)/3 I with f = 1/2,
    where G_1 is the single-atom covariance.  Optical blocks are untouched.
    """
    if not 0 <= eta < 1:
        if eta >= 1:
            raise InvalidArgument(f"eta={eta}: probe destroys ensemble")
        raise InvalidArgument(f"eta must be in [0, 1), got {eta}")
    if eta == 0:
        return state
    n = np.asarray(state.mean_atom_number)[..., None, None]
    gamma_1 = single_atom_cov(state)
    keep = 1 - eta
    mean, cov = state.mean.copy(), state.cov.copy()
    mean[..., :SPIN_DIM] *= keep
    cov[..., :SPIN_DIM, :] *= keep
    cov[..., :, :SPIN_DIM] *= keep
    cov[..., :SPIN_DIM, :SPIN_DIM] += eta * keep * n * gamma_1 + n * eta * 0.25 * _EYE_SPIN
    return PhaseSpaceState(mean, _symmetrize(cov), state.n_pulses, state.measured)


def extract_measurement_stats(state: PhaseSpaceState, pulses: Sequence[int]):
    """X-quadrature means and covariance of the given pulses, in the given order."""
    for k in pulses:
        _check_pulse(state, k)
    idx = [state.x_index(k) for k in pulses]
    mu = state.mean[..., idx]
    gamma_x = state.cov[..., idx, :][..., :, idx]
    return mu, gamma_x


def condition_on_pulses(state: PhaseSpaceState, pulses: Sequence[int],
                        outcomes: Optional[Sequence[float]] = None) -> PhaseSpaceState:
    """Gaussian conditioning on measured X quadratures (Schur complement).

    With ``outcomes=None`` the expected outcomes are used, so the means are
    left unchanged and only the covariance is updated.  Measured rows and
    columns are set to the outcome with zero variance.
    """
    pulses = list(pulses)
    if len(set(pulses)) != len(pulses):
        raise InvalidArgument("each pulse may be conditioned on at most once")
    for k in pulses:
        _check_pulse(state, k)
        if k in state.measured:
            raise InvalidArgument(f"pulse {k} has already been measured")
    if not pulses:
        return state
    idx = [state.x_index(k) for k in pulses]
    mu_x, gamma_x = extract_measurement_stats(state, pulses)
    if outcomes is None:
        innovation = np.zeros_like(mu_x)
    else:
        innovation = np.asarray(outcomes, dtype=float) - mu_x
    gamma_vx = state.cov[..., :, idx]
    try:
        chol = np.linalg.cholesky(gamma_x)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracy("covariance of conditioned quadratures is singular") from exc
    # gain = G_vx G_x^{-1}, computed as solve(G_x, G_xv)^T
    gain = np.swapaxes(_cho_solve(chol, np.swapaxes(gamma_vx, -1, -2)), -1, -2)
    mean = state.mean + np.einsum("...ij,...j->...i", gain, innovation)
    cov = state.cov - gain @ np.swapaxes(gamma_vx, -1, -2)
    cov[..., idx, :] = 0.0
    cov[..., :, idx] = 0.0
    return replace(state, mean=mean, cov=_symmetrize(cov),
                   measured=state.measured | frozenset(pulses))


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(np.swapaxes(chol, -1, -2), y)


def psd_margin(cov: np.ndarray) -> float:
    """min eigenvalue / trace, the quantity bounded below by -1e-9."""
    cov = np.asarray(cov)
    eig = np.linalg.eigvalsh(cov)
    tr = np.trace(cov, axis1=-2, axis2=-1)
    return float(np.min(eig[..., 0] / np.where(tr > 0, tr, 1.0)))
