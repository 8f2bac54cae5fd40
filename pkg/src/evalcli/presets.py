"""
Per-system experiment defaults.

Every benchmark carries its cost weights, horizon, initial-state box, data-generation
counts, training and inference settings. Configuration files override these values
key by key.
"""
from typing import Any, Dict

from ..dynamics import SystemKind

Section = Dict[str, Any]
Preset = Dict[str, Section]


CART_POLE: Preset = {
    "system": {"kind": "cart_pole", "dt": 0.01},
    "ocp": {
        "horizon": 64,
        "q": "0.01, 0.01, 1000, 0.01",
        "r": "0.001",
        "p": "0.01, 0.1, 1000, 0.1",
        "lower": "-100",
        "upper": "100",
    },
    "datagen": {
        "n_s": 150, "n_t": 50, "n_p": 16,
        "sigma": "0.15",
        "chi": "-3:3, 0, 1.8:4.4, 0",
        "phi_initial": 20.0,
        "phi_floor": 1.0,
    },
    "diffusion": {"batch_size": 4096, "epochs": 300, "learning_rate": 3e-3, "diffusion_steps": 25},
    "behavior_clone": {"batch_size": 1024, "epochs": 300},
    "control": {"candidates": 5, "episodes": 100, "steps": 50, "restarts": 20,
                "guess_amplitude": 20.0, "phi_floor": 1.0},
}

PENDUBOT: Preset = {
    "system": {"kind": "pendubot", "dt": 0.01},
    "ocp": {
        "horizon": 256,
        "q": "100, 100, 1, 1",
        "r": "1",
        "p": "1000, 1000, 10, 10",
        "lower": "-5",
        "upper": "5",
    },
    "datagen": {
        "n_s": 50, "n_t": 400, "n_p": 16,
        "sigma": "0.05",
        "chi": "0, -0.7853981633974483:0.7853981633974483, 0, 0",
        "phi_initial": 5.0,
        "phi_floor": 0.5,
    },
    "diffusion": {"batch_size": 1024, "epochs": 100, "learning_rate": 3e-3, "diffusion_steps": 25},
    "behavior_clone": {"batch_size": 1024, "epochs": 100},
    "control": {"candidates": 30, "episodes": 30, "steps": 80, "restarts": 30,
                "guess_amplitude": 5.0, "inference_steps": 20, "phi_floor": 0.5},
}

DOUBLE_CART_POLE: Preset = {
    "system": {"kind": "double_cart_pole", "dt": 0.01},
    "ocp": {
        "horizon": 128,
        "q": "1, 1, 1000, 1, 1000, 1",
        "r": "0.001",
        "p": "1, 1, 100, 1, 100, 1",
        "lower": "-100",
        "upper": "100",
    },
    "datagen": {
        "n_s": 50, "n_t": 5, "n_p": 6,
        "sigma": "0.02",
        "chi": "-3:3, 0, 3.141592653589793, 0, 3.3, 0",
        "phi_initial": 20.0,
        "phi_floor": 1.0,
    },
    "diffusion": {"batch_size": 1024, "epochs": 1000, "learning_rate": 3e-3, "diffusion_steps": 25},
    "behavior_clone": {"batch_size": 1024, "epochs": 1000},
    "control": {"candidates": 30, "episodes": 20, "steps": 5, "restarts": 30,
                "guess_amplitude": 20.0, "phi_floor": 1.0},
}

# Scalar test plant x' = a x + b u, used for quick runs and closed-form checks.
LINEAR: Preset = {
    "system": {"kind": "linear", "dt": 0.01, "linear_a": 1.0, "linear_b": 1.0},
    "ocp": {"horizon": 16, "q": "1", "r": "0.1", "p": "10", "lower": "-5", "upper": "5"},
    "datagen": {"n_s": 4, "n_t": 10, "n_p": 4, "sigma": "0.1", "chi": "-1:1", "phi_initial": 5.0},
    "diffusion": {"batch_size": 256, "epochs": 50, "learning_rate": 3e-3, "diffusion_steps": 25},
    "behavior_clone": {"batch_size": 256, "epochs": 50},
    "control": {"candidates": 5, "episodes": 5, "steps": 20, "restarts": 5, "guess_amplitude": 5.0},
}

PRESETS: Dict[SystemKind, Preset] = {
    SystemKind.CART_POLE: CART_POLE,
    SystemKind.PENDUBOT: PENDUBOT,
    SystemKind.DOUBLE_CART_POLE: DOUBLE_CART_POLE,
    SystemKind.LINEAR: LINEAR,
}


def preset_for(kind: SystemKind) -> Preset:
    """Deep-enough copy of a preset (sections are fresh dicts)."""
    return {name: dict(section) for name, section in PRESETS[kind].items()}
