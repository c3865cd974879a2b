"""Run configuration: a TOML document mapped onto library objects.

Schema (all tables optional unless the subcommand needs them)::

    seed = 0
    output_dir = "results"
    threads = 1

    [physics]
    n_atoms = 2e4
    interrogation_time = 1.0      # s; sets omega for every protocol
    g = 3.05e-7                   # rad/atom, or give [physics.cavity] instead
    eta_gamma = 1.2e-12           # scattered fraction per photon
    transverse_variance = 0.25    # Var(Jx)/N of the initial state

    [physics.cavity]              # fields of CavityModel
    p_cavity = 4e-3

    [[protocols]]
    id = "sql"
    kind = "reference"            # single readout at the end, exact N
    alpha_sq = 7.18e9

    [[protocols]]
    id = "apriori"
    kind = "three_pulse"          # pulses at 0, t2, t3; Poisson N
    t2_over_pi = 1.0              # in units of pi/omega
    t3_over_pi = 3.0
    photons = [7.18e9, 7.18e9, 7.18e9]

    [sensitivity]
    protocols = ["sql", "apriori"]
    delta_over_omega = {start = 0.01, stop = 2.0, num = 200}

    [optimize]
    regimes = ["unconstrained"]
    base_photons = 7.18e9
    total_photons = 2.142e10      # capped regime
    photon_max = 1e12
    restarts = 20
    max_evals = 2000

    [allan]
    protocols = ["sql"]
    gamma_over_omega_ref = {start = 1e-3, stop = 0.1, num = 21, log = true}
    cap = 4.0

    [witness]
    protocol = "timings"
    [[witness.scans]]
    id = "a"
    kind = "detuning"             # or "photons"
    photons = 7.18e9              # detuning scans: photons per pulse
    values_over_omega = [0.5, 0.642]
    # photon scans: values = [...] and delta_over_omega = 0.642

Grids are either explicit arrays or ``{start, stop, num[, log]}`` tables.
Only ``QNDCLOCK_OUTPUT_DIR`` and ``QNDCLOCK_THREADS`` are read from the
environment.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import gaussian as gc
from .errors import InvalidArgument
from .protocol import (DEFAULT_ETA_GAMMA, CavityModel, PhysicalParams, ProtocolSpec,
                       reference_protocol, three_pulse_protocol)

ENV_OUTPUT_DIR = "QNDCLOCK_OUTPUT_DIR"
ENV_THREADS = "QNDCLOCK_THREADS"


class ConfigError(InvalidArgument):
    """Malformed or inconsistent run configuration (exit code 2)."""


def grid(spec, name: str) -> np.ndarray:
    """Explicit list or {start, stop, num[, log]} table -> 1-D array."""
    if isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: grid table needs numeric start, stop, num") from exc
        if num < 0:
            raise ConfigError(f"{name}: num must be non-negative")
        if spec.get("log", False):
            if not (start > 0 and stop > 0):
                raise ConfigError(f"{name}: log grid needs positive bounds")
            values = np.geomspace(start, stop, num)
        else:
            values = np.linspace(start, stop, num)
    elif isinstance(spec, (list, tuple)):
        try:
            values = np.array(spec, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: grid entries must be numbers") from exc
    else:
        raise ConfigError(f"{name}: expected a list or a {{start, stop, num}} table")
    if values.ndim != 1 or values.size == 0:
        raise ConfigError(f"{name}: grid is empty")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{name}: grid contains non-finite values")
    return values


@dataclass
class RunConfig:
    raw: Dict[str, Any]
    params: PhysicalParams
    n_atoms: float
    interrogation_time: float
    transverse_variance: float
    protocols: Dict[str, ProtocolSpec]
    seed: int = 0
    output_dir: str = "results"
    threads: int = 1

    @property
    def omega_ref(self) -> float:
        return math.pi / self.interrogation_time

    @property
    def omega_3p(self) -> float:
        return 3 * math.pi / self.interrogation_time

    def section(self, name: str) -> Dict[str, Any]:
        sec = self.raw.get(name)
        if not isinstance(sec, dict):
            raise ConfigError(f"missing [{name}] table")
        return sec

    def protocol(self, pid: str) -> ProtocolSpec:
        try:
            return self.protocols[pid]
        except KeyError:
            raise ConfigError(f"protocol {pid!r} is not defined") from None

    def digest(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(text.encode()).hexdigest()


def number(table, key, default=None, positive=True):
    value = table.get(key, default)
    if value is None:
        raise ConfigError(f"missing required key {key!r}")
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number") from exc
    if positive and not value > 0:
        raise ConfigError(f"{key} must be positive")
    return value


def _physics(raw) -> tuple:
    phys = raw.get("physics", {})
    if not isinstance(phys, dict):
        raise ConfigError("[physics] must be a table")
    eta_gamma = number(phys, "eta_gamma", DEFAULT_ETA_GAMMA, positive=False)
    cavity = phys.get("cavity")
    try:
        if cavity is not None:
            if "g" in phys:
                raise ConfigError("give either physics.g or [physics.cavity], not both")
            params = PhysicalParams(eta_gamma=eta_gamma, cavity=CavityModel(**cavity))
        else:
            params = PhysicalParams(g=number(phys, "g"), eta_gamma=eta_gamma)
    except TypeError as exc:
        raise ConfigError(f"[physics.cavity]: {exc}") from exc
    except ConfigError:
        raise
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    return (params, number(phys, "n_atoms"), number(phys, "interrogation_time", 1.0),
            number(phys, "transverse_variance", 0.25))


def build_protocol(entry: Dict[str, Any], n_atoms: float, T: float,
                   transverse_variance: float = 0.25) -> ProtocolSpec:
    kind = entry.get("kind")
    try:
        if kind == "reference":
            spec = reference_protocol(math.pi / T, T, number(entry, "alpha_sq"), n_atoms)
        elif kind == "three_pulse":
            omega = 3 * math.pi / T
            photons = entry.get("photons")
            if not isinstance(photons, list) or len(photons) != 3:
                raise ConfigError(f"protocol {entry.get('id')!r}: photons must list three numbers")
            spec = three_pulse_protocol(omega, number(entry, "t2_over_pi", positive=False) * math.pi / omega,
                                        number(entry, "t3_over_pi", positive=False) * math.pi / omega,
                                        [float(a) for a in photons], n_atoms, total_time=T)
        else:
            raise ConfigError(f"protocol {entry.get('id')!r}: unknown kind {kind!r}")
    except ConfigError:
        raise
    except (InvalidArgument, TypeError, ValueError) as exc:
        raise ConfigError(f"protocol {entry.get('id')!r}: {exc}") from exc
    if transverse_variance != 0.25:
        model = gc.AtomNumberModel(spec.atom_model.kind, spec.atom_model.mean, transverse_variance)
        spec = ProtocolSpec(spec.omega, spec.delta0, spec.pulses, model, spec.total_time)
    return spec


def from_dict(raw: Dict[str, Any], env: Optional[Dict[str, str]] = None) -> RunConfig:
    raw = copy.deepcopy(raw)
    env = os.environ if env is None else env
    params, n_atoms, T, tv = _physics(raw)
    protocols = {}
    for entry in raw.get("protocols", []):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ConfigError("each [[protocols]] entry needs an id")
        if entry["id"] in protocols:
            raise ConfigError(f"duplicate protocol id {entry['id']!r}")
        protocols[entry["id"]] = build_protocol(entry, n_atoms, T, tv)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    output_dir = env.get(ENV_OUTPUT_DIR) or raw.get("output_dir", "results")
    threads = env.get(ENV_THREADS) or raw.get("threads", 1)
    try:
        threads = int(threads)
    except (TypeError, ValueError) as exc:
        raise ConfigError("threads must be an integer") from exc
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return RunConfig(raw=raw, params=params, n_atoms=n_atoms, interrogation_time=T,
                     transverse_variance=tv, protocols=protocols, seed=seed,
                     output_dir=str(output_dir), threads=threads)


def load(path: str, env: Optional[Dict[str, str]] = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw, env)
