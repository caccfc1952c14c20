"""Single structured-text (JSON) configuration shared by the CLI and the
experiment harness, with desk-scale defaults.

Every section may be partially specified; unknown keys are rejected so typos
fail loudly. The full-scale settings from the reference radar (N = 3750,
120 us window) are expressible by overriding ``signal.pulse_duration_s``.
"""

from __future__ import annotations

import copy
import json
from typing import Any

import numpy as np

from .baselines import AdmmConfig, CfarConfig
from .diffusion import DiffusionSchedule, make_vp_schedule
from .engine import DmddConfig
from .harness import ExperimentConfig
from .jamming import CombParams
from .score.net import ScoreNetSpec
from .score.training import TrainConfig
from .signals import ChirpParams, RangeGrid

_SAMPLE_FREQ = 31.25e6

DEFAULTS: dict[str, Any] = {
    "signal": {
        "carrier_freq_hz": 8.11e9,
        "fm_slope_hz_per_s": 1.5e12,
        "pulse_width_s": 1.0e-5,
        "pulse_duration_s": 512 / _SAMPLE_FREQ,  # N = 512 desk scale
        "bandwidth_hz": 1.5e7,
        "sample_freq_hz": _SAMPLE_FREQ,
    },
    "grid": {
        "start_m": 0.0,
        "spacing_m": 2.4,
        "count": 1024,
    },
    "jamming": {
        "n_tones": [5, 10],
        "freq_range_hz": [-7.5e6, 7.5e6],
        "spacing_range_hz": [5.0e5, 1.5e6],
        "amp_range": [0.5, 1.5],
    },
    "diffusion": {
        "n_steps": 200,
        "rate_min": 0.1,
        "rate_max": 20.0,
    },
    "score_model": {
        "base_channels": 32,
        "mid_channels": 64,
        "kernel": 3,
        "time_embed_dim": 64,
        "groups": 8,
        "input_domain": "time",
    },
    "train": {
        "batch_size": 128,
        "learning_rate": 1e-4,
        "n_epochs": 10,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "loss_weighting": "variance",
        "checkpoint_every": 1,
        "seed": 0,
    },
    "dmdd": {
        "n_chains": 16,
        "bank_size": 64,
        "atom_source": "chains",
        "zeta_scale": 1e-6,
        "threshold_db": 16.8,
        "corrector_scale": 1.0,
        "em_update_sigma": True,
        "em_update_noise": True,
        "sigma_sq_init": 1e4,
        "noise_var_init": 1.0,
        "input_scale": "auto",
    },
    "cfar": {
        "n_train": 32,
        "n_guard": 4,
        "target_pfa": 1e-5,
    },
    "admm": {
        "lam": None,
        "rho": 1.0,
        "max_iter": 500,
        "tol": 1e-6,
        "freq_grid_size": None,
    },
    "sbl": {
        "max_iter": 200,
        "tol": 1e-4,
    },
    "monte_carlo": {
        "methods": ["pc", "sbl", "dmdd"],
        "n_targets": 6,
        "snr_sweep_db": [12.0, 14.0, 16.0, 18.0, 20.0, 22.0],
        "sjr_db": -20.0,
        "n_trials": 100,
        "seed": 1234,
        "grid_mode": "on",
        "noise_var": 1.0,
        "exclusion_radius": 1,
        "paths": {
            "checkpoint": None,
            "oracle_cov": None,
            "bank_dataset": None,
            "som_dataset": None,
        },
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise KeyError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None = None) -> dict:
    """Defaults merged with the JSON document at ``path`` (if given)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path) as fh:
        user = json.load(fh)
    return _merge(DEFAULTS, user)


def make_chirp(cfg: dict) -> ChirpParams:
    s = cfg["signal"]
    return ChirpParams(
        carrier_freq=s["carrier_freq_hz"],
        fm_slope=s["fm_slope_hz_per_s"],
        pulse_width=s["pulse_width_s"],
        pulse_duration=s["pulse_duration_s"],
        bandwidth=s["bandwidth_hz"],
        sample_freq=s["sample_freq_hz"],
    )


def make_grid(cfg: dict) -> RangeGrid:
    g = cfg["grid"]
    return RangeGrid.uniform(g["start_m"], g["spacing_m"], g["count"])


def make_comb_params(cfg: dict) -> CombParams:
    j = cfg["jamming"]
    return CombParams(
        k_range=tuple(j["n_tones"]),
        freq_range=tuple(j["freq_range_hz"]),
        spacing_range=tuple(j["spacing_range_hz"]),
        amp_range=tuple(j["amp_range"]),
    )


def make_schedule(cfg: dict) -> DiffusionSchedule:
    d = cfg["diffusion"]
    return make_vp_schedule(d["n_steps"], d["rate_min"], d["rate_max"])


def make_net_spec(cfg: dict, expected_length: int | None = None) -> ScoreNetSpec:
    s = cfg["score_model"]
    return ScoreNetSpec(
        base_channels=s["base_channels"],
        mid_channels=s["mid_channels"],
        kernel=s["kernel"],
        time_embed_dim=s["time_embed_dim"],
        groups=s["groups"],
        expected_length=expected_length,
        input_domain=s["input_domain"],
    )


def make_train_config(cfg: dict, **overrides) -> TrainConfig:
    t = dict(cfg["train"])
    t.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**t)


def make_dmdd_config(cfg: dict, **overrides) -> DmddConfig:
    d = dict(cfg["dmdd"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    return DmddConfig(**d)


def make_cfar_config(cfg: dict) -> CfarConfig:
    return CfarConfig(**cfg["cfar"])


def make_admm_config(cfg: dict) -> AdmmConfig:
    a = dict(cfg["admm"])
    j = cfg["jamming"]
    fs = cfg["signal"]["sample_freq_hz"]
    a["freq_range"] = (j["freq_range_hz"][0] / fs, j["freq_range_hz"][1] / fs)
    return AdmmConfig(**a)


def make_experiment_config(cfg: dict, **overrides) -> ExperimentConfig:
    m = dict(cfg["monte_carlo"])
    m.pop("paths")
    m.update({k: v for k, v in overrides.items() if v is not None})
    m["methods"] = tuple(m["methods"])
    m["snr_sweep_db"] = tuple(float(x) for x in m["snr_sweep_db"])
    return ExperimentConfig(**m)


def integrated_to_amplitude(cfg: dict, integrated_snr_db: float, noise_var: float = 1.0) -> float:
    """Target amplitude magnitude realizing an integrated SNR under the
    configured waveform."""
    n_coh = make_chirp(cfg).n_coherent
    gain = 10.0 * np.log10(n_coh)
    return float(np.sqrt(noise_var * 10.0 ** ((integrated_snr_db - gain) / 10.0)))
