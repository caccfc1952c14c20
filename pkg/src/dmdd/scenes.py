"""Scene files: JSON documents carrying either a raw measurement or a
synthesis recipe, so runs are reproducible from a small text artifact."""

from __future__ import annotations

import json

import numpy as np

from .jamming import CombParams, draw_comb
from .signals import (
    ChirpParams,
    RangeGrid,
    Scene,
    scale_jamming_to_sjr,
    synthesize_scene,
)

SCENE_FORMAT = "scene-v1"


def _complex_to_json(x: np.ndarray) -> dict:
    return {"re": [float(v) for v in x.real], "im": [float(v) for v in x.imag]}


def _complex_from_json(obj: dict) -> np.ndarray:
    return np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)


def save_scene(path: str, scene: Scene) -> None:
    doc = {
        "format": SCENE_FORMAT,
        "noise_var": scene.noise_var,
        "seed": scene.rng_seed,
        "targets": [
            {"range_m": float(r), "amp": [float(a.real), float(a.imag)]}
            for r, a in zip(scene.true_ranges, scene.true_amplitudes)
        ],
        "jamming": _complex_to_json(scene.jamming),
        "measurement": _complex_to_json(scene.measurement),
    }
    if scene.target_signal is not None:
        doc["target_signal"] = _complex_to_json(scene.target_signal)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_scene(
    source: str | dict,
    params: ChirpParams,
    grid: RangeGrid,
    comb_params: CombParams | None = None,
) -> Scene:
    """Load a scene from a path, a JSON string, or a parsed document.

    Two layouts are accepted: a stored measurement (written by
    :func:`save_scene`) or a ``generate`` recipe::

        {"format": "scene-v1",
         "generate": {"targets": [{"range_m": 480.0, "amp": [0.7, 0.0]}],
                      "sjr_db": -20.0, "noise_var": 1.0,
                      "jamming_seed": 7, "noise_seed": 8}}

    The recipe draws comb jamming from ``comb_params`` (omit ``sjr_db`` or
    set it null for a jamming-free scene).
    """
    if isinstance(source, str):
        text = source.strip()
        if text.startswith("{"):
            doc = json.loads(text)
        else:
            with open(source) as fh:
                doc = json.load(fh)
    else:
        doc = source
    if doc.get("format") != SCENE_FORMAT:
        raise ValueError(f"unsupported scene format {doc.get('format')!r}")

    if "generate" in doc:
        g = doc["generate"]
        targets = [
            (float(t["range_m"]), complex(t["amp"][0], t["amp"][1]))
            for t in g.get("targets", [])
        ]
        noise_var = float(g.get("noise_var", 1.0))
        sjr_db = g.get("sjr_db")
        if sjr_db is not None:
            if comb_params is None:
                raise ValueError("scene recipe needs comb jamming parameters")
            rng = np.random.default_rng(int(g.get("jamming_seed", 0)))
            jam = draw_comb(comb_params, params.n_samples, params.sample_freq, rng).signal
            probe = synthesize_scene(params, grid, targets, jam, 0.0, rng_seed=0)
            jam = scale_jamming_to_sjr(probe, float(sjr_db))
        else:
            jam = None
        return synthesize_scene(
            params, grid, targets, jam, noise_var,
            rng_seed=int(g.get("noise_seed", 0)),
        )

    measurement = _complex_from_json(doc["measurement"])
    jamming = (
        _complex_from_json(doc["jamming"])
        if "jamming" in doc
        else np.zeros_like(measurement)
    )
    targets = doc.get("targets", [])
    ranges = np.asarray([t["range_m"] for t in targets], dtype=float)
    amps = np.asarray([complex(t["amp"][0], t["amp"][1]) for t in targets])
    if "target_signal" in doc:
        signal = _complex_from_json(doc["target_signal"])
    else:
        signal = measurement - jamming  # noise left in; ground truth is metadata
    return Scene(
        true_ranges=ranges,
        true_amplitudes=amps,
        jamming=jamming,
        noise_var=float(doc.get("noise_var", 0.0)),
        measurement=measurement,
        target_signal=signal,
        rng_seed=doc.get("seed"),
    )
