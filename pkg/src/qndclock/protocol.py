"""Protocol description and the pipeline that turns it into outcome statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from . import gaussian as gc
from .errors import DerivativeUnstable, InvalidArgument, ProtocolInfeasible

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class CavityModel:
    """Dispersive probing of the 1S0-1P1 line through a cavity mode.

    Units: area in um^2, linewidth and detuning in rad/s, wavelength in m,
    power in W, saturation intensity in W/m^2.  The saturation intensity
    default is the two-level value pi*h*c*Gamma/(3*lambda^3) for the stated
    linewidth and wavelength.
    """

    s_eff_um2: float = 2.9e3
    gamma_line: float = TWO_PI * 32e6
    delta_qnd: float = TWO_PI * 920e6
    lambda_probe: float = 461e-9
    p_cavity: float = 4e-3
    i_sat: float = 427.0

    def __post_init__(self):
        for name in ("s_eff_um2", "gamma_line", "delta_qnd", "lambda_probe", "p_cavity", "i_sat"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")

    @property
    def s_eff(self) -> float:
        return self.s_eff_um2 * 1e-12

    @property
    def saturation(self) -> float:
        return self.p_cavity / (self.s_eff * self.i_sat)


# Per-photon scattered fraction, calibrated against two statements about the
# equal-photon protocols (optimal photon number, squeezing vs photons);
# see README "Physical parameters".
DEFAULT_ETA_GAMMA = 1.2e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Atom-light coupling ``g`` (rad/atom) and scattered fraction per photon.

    Exactly one of ``g`` (direct override) and ``cavity`` must be given.
    """

    g: Optional[float] = None
    eta_gamma: float = DEFAULT_ETA_GAMMA
    cavity: Optional[CavityModel] = None

    def __post_init__(self):
        if (self.g is None) == (self.cavity is None):
            raise InvalidArgument("give exactly one of a direct coupling g or a cavity model")
        if self.g is not None and not self.g > 0:
            raise InvalidArgument("g must be positive")
        if self.eta_gamma < 0:
            raise InvalidArgument("eta_gamma must be non-negative")

    @property
    def coupling(self) -> float:
        if self.g is not None:
            return self.g
        return coupling_from_cavity(self.cavity)


def coupling_from_cavity(cavity: CavityModel) -> float:
    """g = (1/S_eff) (3 lambda^2 / 2 pi) (D/G) / (s + 4 (D/G)^2)."""
    ratio = cavity.delta_qnd / cavity.gamma_line
    cross_section = 3 * cavity.lambda_probe ** 2 / TWO_PI
    return cross_section / cavity.s_eff * ratio / (cavity.saturation + 4 * ratio ** 2)


def scattering_rate(cavity: CavityModel) -> float:
    """Incoherent scattering rate per atom, Gamma/2 * s / (s + 4 (D/G)^2), in 1/s."""
    ratio = cavity.delta_qnd / cavity.gamma_line
    s = cavity.saturation
    return cavity.gamma_line / 2 * s / (s + 4 * ratio ** 2)


def scattering_fraction(params: PhysicalParams, alpha_sq: float) -> float:
    if alpha_sq < 0:
        raise InvalidArgument("photon number must be non-negative")
    eta = params.eta_gamma * alpha_sq
    if eta >= 1:
        raise ProtocolInfeasible(f"{alpha_sq:.3g} photons scatter a fraction {eta:.3g} >= 1 of the atoms")
    return eta


@dataclass(frozen=True)
class ProtocolSpec:
    """Rabi drive plus instantaneous QND pulses at given times.

    ``pulses`` is a sequence of ``(time, photons)``; it is stored sorted by
    time (stable), which is the canonical order of all outputs.
    """

    omega: float
    delta0: float
    pulses: Tuple[Tuple[float, float], ...]
    atom_model: gc.AtomNumberModel
    total_time: Optional[float] = None

    def __post_init__(self):
        pulses = tuple(sorted(((float(t), float(a)) for t, a in self.pulses), key=lambda p: p[0]))
        object.__setattr__(self, "pulses", pulses)
        if not self.omega > 0:
            raise InvalidArgument("Rabi frequency must be positive")
        if not pulses:
            raise InvalidArgument("a protocol needs at least one pulse")
        total = self.total_time if self.total_time is not None else pulses[-1][0]
        object.__setattr__(self, "total_time", float(total))
        for t, a in pulses:
            if t < 0 or t > self.total_time * (1 + 1e-12):
                raise InvalidArgument(f"pulse time {t} outside [0, {self.total_time}]")
            if a < 0:
                raise InvalidArgument(f"negative photon number {a}")

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.pulses])

    @property
    def photons(self) -> np.ndarray:
        return np.array([a for _, a in self.pulses])

    @property
    def n_pulses(self) -> int:
        return len(self.pulses)

    def with_pulses(self, pulses) -> "ProtocolSpec":
        return replace(self, pulses=tuple(pulses))


@dataclass(frozen=True)
class MeasurementModel:
    mu0: np.ndarray
    mu_prime: np.ndarray
    gamma_x: np.ndarray
    delta0: float


def reference_protocol(omega: float, interrogation_time: float, alpha_sq: float,
                       n_atoms: float) -> ProtocolSpec:
    """Single readout at the end of the Rabi pulse, exactly ``n_atoms`` atoms."""
    if not (omega > 0 and interrogation_time > 0 and alpha_sq > 0 and n_atoms > 0):
        raise InvalidArgument("reference protocol inputs must be positive")
    return ProtocolSpec(omega=omega, delta0=0.0, pulses=((interrogation_time, alpha_sq),),
                        atom_model=gc.AtomNumberModel.deterministic(n_atoms),
                        total_time=interrogation_time)


def three_pulse_protocol(omega: float, t2: float, t3: float, photons: Sequence[float],
                         n_atoms: float, delta0: float = 0.0,
                         total_time: Optional[float] = None) -> ProtocolSpec:
    """First pulse at t=0 calibrates the atom number; Poisson loading."""
    if total_time is None:
        total_time = 3 * math.pi / omega
    p1, p2, p3 = photons
    return ProtocolSpec(omega=omega, delta0=delta0, pulses=((0.0, p1), (t2, p2), (t3, p3)),
                        atom_model=gc.AtomNumberModel.poisson(n_atoms), total_time=total_time)


def propagate(spec: ProtocolSpec, params: PhysicalParams, delta, stop_before: Optional[int] = None,
              single_atom_cov=gc.current_single_atom_cov) -> gc.PhaseSpaceState:
    """Run the pulse sequence and return the joint state.

    If ``stop_before`` is given, stop after the Rabi evolution up to that
    pulse's time but before its QND interaction (the pulse mode is not
    appended).
    """
    g = params.coupling
    state = gc.new_coherent_state(spec.atom_model)
    delta = np.asarray(delta, dtype=float)
    if delta.ndim:
        state = replace(state, mean=np.broadcast_to(state.mean, delta.shape + state.mean.shape).copy(),
                        cov=np.broadcast_to(state.cov, delta.shape + state.cov.shape).copy())
    t_now = 0.0
    for k, (t, alpha_sq) in enumerate(spec.pulses):
        state = gc.rabi_evolve(state, spec.omega, delta, t - t_now)
        t_now = t
        if stop_before is not None and k == stop_before:
            return state
        eta = scattering_fraction(params, alpha_sq)
        state = gc.append_probe_mode(state)
        state = gc.qnd_interact(state, k, g, alpha_sq)
        state = gc.apply_decoherence(state, eta, single_atom_cov)
    return state


def run_protocol(spec: ProtocolSpec, params: PhysicalParams, delta):
    """Outcome means and covariance of all pulses at the true detuning ``delta``.

    ``delta`` may be an array; outputs then carry its shape as leading axes.
    """
    state = propagate(spec, params, delta)
    return gc.extract_measurement_stats(state, range(spec.n_pulses))


def _derivative_step(spec: ProtocolSpec, delta, rel_step: float):
    return rel_step * np.maximum(spec.omega, np.abs(delta))


def mu_derivative(spec: ProtocolSpec, params: PhysicalParams, delta0, rel_step: float = 1e-6,
                  check: bool = True, rtol: float = 1e-4):
    """Central finite difference of the outcome means with respect to detuning.

    The step is ``rel_step * max(omega, |delta0|)``.  The estimate is
    repeated with half the step; if the two disagree by more than ``rtol``
    (relative, in norm) :class:`DerivativeUnstable` is raised.
    """
    if not rel_step > 0:
        raise InvalidArgument("rel_step must be positive")
    delta0 = np.asarray(delta0, dtype=float)
    h = _derivative_step(spec, delta0, rel_step)
    offsets = np.stack([delta0 + h, delta0 - h, delta0 + h / 2, delta0 - h / 2], axis=-1)
    mu, _ = run_protocol(spec, params, offsets)
    d1 = (mu[..., 0, :] - mu[..., 1, :]) / (2 * h)[..., None]
    if not check:
        return d1
    d2 = (mu[..., 2, :] - mu[..., 3, :]) / h[..., None]
    _richardson_check(d1, d2, mu, h, rtol)
    return d1


def _richardson_check(d1, d2, mu, h, rtol):
    n1 = np.linalg.norm(d1, axis=-1)
    diff = np.linalg.norm(d1 - d2, axis=-1)
    # rounding floor of the difference quotient
    floor = 64 * np.finfo(float).eps * np.max(np.abs(mu), axis=(-1, -2)) / h
    bad = diff > rtol * n1 + floor
    if np.any(bad):
        worst = float(np.max(np.where(n1 > 0, diff / np.where(n1 > 0, n1, 1), np.inf)[bad]))
        raise DerivativeUnstable(f"halving the step changed the derivative by {worst:.3g} (relative)")


def mu_derivative_4th(spec: ProtocolSpec, params: PhysicalParams, delta0, rel_step: float = 1e-4):
    """Five-point stencil; an independent check of :func:`mu_derivative`."""
    delta0 = np.asarray(delta0, dtype=float)
    h = _derivative_step(spec, delta0, rel_step)
    offsets = np.stack([delta0 - 2 * h, delta0 - h, delta0 + h, delta0 + 2 * h], axis=-1)
    mu, _ = run_protocol(spec, params, offsets)
    num = mu[..., 0, :] - 8 * mu[..., 1, :] + 8 * mu[..., 2, :] - mu[..., 3, :]
    return num / (12 * h)[..., None]


def measurement_model(spec: ProtocolSpec, params: PhysicalParams, delta0=None,
                      rel_step: float = 1e-6, check: bool = True) -> MeasurementModel:
    """Linearized outcome model at ``delta0`` (defaults to ``spec.delta0``)."""
    if delta0 is None:
        delta0 = spec.delta0
    mu0, gamma_x = run_protocol(spec, params, delta0)
    mu_prime = mu_derivative(spec, params, delta0, rel_step=rel_step, check=check)
    return MeasurementModel(mu0=mu0, mu_prime=mu_prime, gamma_x=gamma_x, delta0=delta0)
