"""Parameter sets of the published sensitivity, noise and squeezing figures.

All protocols share the interrogation time T = 1 s.  The reference protocol
is a single pi pulse over T (omega_ref = pi/T); the three-pulse protocols
rotate by 3*pi over the same T (omega = 3*pi/T).
"""

from __future__ import annotations

import math

N_ATOMS = 2e4
G_COUPLING = 3.05e-7  # rad/atom
ALPHA_REF = 7.18e9  # photons, reference pulse and a-priori protocol
ALPHA_ORANGE = 7.14e9
INTERROGATION_TIME = 1.0  # s

OMEGA_REF = math.pi / INTERROGATION_TIME
OMEGA_3P = 3 * math.pi / INTERROGATION_TIME


def _three_pulse(pid, t2, t3, photons):
    return {"id": pid, "kind": "three_pulse", "t2_over_pi": t2, "t3_over_pi": t3,
            "photons": list(photons)}


# t2, t3 in units of pi/omega
PROTOCOLS = [
    {"id": "sql", "kind": "reference", "alpha_sq": ALPHA_REF},
    _three_pulse("apriori", 1.0, 3.0, [ALPHA_REF] * 3),
    _three_pulse("timings", 1.79, 3.0, [ALPHA_ORANGE] * 3),
    _three_pulse("capped", 1.27, 3.0, [3.37e9, 5.4e9, 1.28e10]),
    _three_pulse("full", 1.29, 3.0, [9.77e9, 2.12e10, 1.35e11]),
]


def _linspace(start, stop, num):
    return {"start": start, "stop": stop, "num": num}


REPRODUCE_CONFIG = {
    "seed": 0,
    "physics": {
        "n_atoms": N_ATOMS,
        "g": G_COUPLING,
        "interrogation_time": INTERROGATION_TIME,
    },
    "protocols": PROTOCOLS,
    "sensitivity": {
        "protocols": [p["id"] for p in PROTOCOLS],
        "delta_over_omega": _linspace(0.01, 2.0, 200),
    },
    "optimize": {
        "regimes": ["apriori_timings_equal_photons", "optimize_timings_equal_photons",
                    "capped_total_photons", "unconstrained"],
        "base_photons": ALPHA_REF,
        "total_photons": 3 * ALPHA_ORANGE,
        "restarts": 20,
        "max_evals": 2000,
    },
    "allan": {
        "protocols": [p["id"] for p in PROTOCOLS],
        "gamma_over_omega_ref": {"start": 1e-3, "stop": 1e-1, "num": 21, "log": True},
    },
    "witness": {
        "protocol": "timings",
        "scans": [
            {"id": "detuning_1x", "kind": "detuning", "photons": ALPHA_REF,
             "values_over_omega": _linspace(0.02, 2.0, 100)},
            {"id": "detuning_2x", "kind": "detuning", "photons": 2 * ALPHA_REF,
             "values_over_omega": _linspace(0.02, 2.0, 100)},
            {"id": "photons_0.642", "kind": "photons", "delta_over_omega": 0.642,
             "values": {"start": 1e8, "stop": 1e11, "num": 61, "log": True}},
            {"id": "photons_0.5", "kind": "photons", "delta_over_omega": 0.5,
             "values": {"start": 1e8, "stop": 1e11, "num": 61, "log": True}},
        ],
    },
}
