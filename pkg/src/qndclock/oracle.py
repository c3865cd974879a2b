"""Exact state-vector reference for a handful of atoms.

Used only to validate the Gaussian moment propagation.  The atomic register
is a full 2^N amplitude vector; the probe is not simulated as a Hilbert
space.  For a coherent probe the output quadrature is X_out = X_in + g|a| N_down
with N_down commuting with everything the probe touches, so its mean and
variance follow in closed form from the atomic distribution of N_down:

    <X_out> = g|a| <N_down>,   Var(X_out) = 1/4 + g^2 |a|^2 Var(N_down).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import expm

from .errors import InvalidArgument

MAX_ATOMS = 10

# single-atom basis: index 0 = up, index 1 = down
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _embed(op: np.ndarray, site: int, n: int) -> np.ndarray:
    factors = [op if k == site else _I2 for k in range(n)]
    return reduce(np.kron, factors)


def collective(n: int):
    """(Jx, Jy, Jz) on n spin-1/2 atoms, each the sum of sigma/2."""
    return tuple(sum(_embed(s / 2, k, n) for k in range(n)) for s in (_SX, _SY, _SZ))


@dataclass(frozen=True)
class ExactState:
    amplitudes: np.ndarray
    n_atoms: int

    def __post_init__(self):
        if abs(np.linalg.norm(self.amplitudes) - 1) > 1e-12:
            raise InvalidArgument("state vector is not normalized")

    def expect(self, op: np.ndarray) -> float:
        return float(np.real(np.vdot(self.amplitudes, op @ self.amplitudes)))

    def n_down_distribution(self) -> np.ndarray:
        """P(N_down = k) for k = 0..N."""
        probs = np.abs(self.amplitudes) ** 2
        counts = np.array([bin(i).count("1") for i in range(len(probs))])
        return np.bincount(counts, weights=probs, minlength=self.n_atoms + 1)


def all_down(n: int) -> ExactState:
    if not 1 <= n <= MAX_ATOMS:
        raise InvalidArgument(f"oracle supports 1..{MAX_ATOMS} atoms, got {n}")
    psi = np.zeros(2 ** n, dtype=complex)
    psi[-1] = 1.0
    return ExactState(psi, n)


def exact_rabi(state: ExactState, omega: float, delta: float, t: float) -> ExactState:
    """psi <- exp(-i H t) psi with H = omega*Jx - delta*Jz."""
    if t < 0:
        raise InvalidArgument("duration must be non-negative")
    jx, _, jz = collective(state.n_atoms)
    u = expm(-1j * t * (omega * jx - delta * jz))
    psi = u @ state.amplitudes
    return ExactState(psi / np.linalg.norm(psi), state.n_atoms)


def exact_probe_moments(state: ExactState, g: float, alpha_sq: float):
    """Mean and variance of the probe X quadrature after one QND pulse."""
    p = state.n_down_distribution()
    k = np.arange(len(p))
    mean_n = float(p @ k)
    var_n = float(p @ (k - mean_n) ** 2)
    amp = np.sqrt(alpha_sq)
    return g * amp * mean_n, 0.25 + g ** 2 * alpha_sq * var_n


def spin_moments(state: ExactState):
    """<(Jx, Jy, Jz)> and the symmetrized covariance of (Jx, Jy, Jz)."""
    ops = collective(state.n_atoms)
    mean = np.array([state.expect(o) for o in ops])
    cov = np.empty((3, 3))
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            cov[i, j] = 0.5 * state.expect(a @ b + b @ a) - mean[i] * mean[j]
    return mean, cov
