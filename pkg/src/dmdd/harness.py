"""Monte Carlo detection experiments: trial orchestration, Pd/Pfa scoring,
and result persistence (CSV + static SVG).

Determinism contract: every random quantity in a run derives from the master
seed through counter-keyed ``SeedSequence`` spawns, so identical configs
produce bit-identical curves.csv and trials.csv. Wall-clock timings go to a
separate runtimes.csv, which is the only non-deterministic output.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (
    AdmmConfig,
    CfarConfig,
    admm_solve,
    cfar_detect,
    pulse_compress,
    sbl_solve,
    sbl_som_solve,
)
from .engine import DmddConfig, PriorSampleBank, run_dmdd, threshold_detect
from .jamming import CombParams, JammingDataset, draw_comb
from .signals import (
    SPEED_OF_LIGHT,
    ChirpParams,
    Dictionary,
    RangeGrid,
    Scene,
    scale_jamming_to_sjr,
    synthesize_scene,
)

KNOWN_METHODS = ("pc", "sbl", "sbl-som", "admm", "dmdd")


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = ("pc", "sbl", "dmdd")
    n_targets: int = 6
    snr_sweep_db: tuple[float, ...] = (12.0, 14.0, 16.0, 18.0, 20.0, 22.0)
    sjr_db: float = -20.0
    n_trials: int = 100
    seed: int = 1234
    grid_mode: str = "on"  # "on" or "off" (targets midway between bins)
    noise_var: float = 1.0
    exclusion_radius: int = 1  # hit window half-width in bins

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.snr_sweep_db:
            raise ValueError("snr_sweep_db must be nonempty")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.grid_mode not in ("on", "off"):
            raise ValueError("grid_mode must be 'on' or 'off'")


@dataclass
class TrialRecord:
    sweep_db: float
    trial: int
    method: str
    true_bins: list[int]
    detected_bins: list[int]
    hits: list[bool]
    false_alarms: int
    runtime_s: float
    failed: bool = False


@dataclass
class PerformanceCurve:
    method: str
    sweep_db: list[float]
    pd: list[float]
    pfa: list[float]
    n_trials: list[int]
    pd_ci_lo: list[float]
    pd_ci_hi: list[float]


@dataclass
class MethodAssets:
    """Everything the per-trial runners need besides the scene itself."""

    params: ChirpParams
    grid: RangeGrid
    dictionary: Dictionary
    schedule: object | None = None
    score_model: object | None = None
    dmdd_config: DmddConfig | None = None
    bank: PriorSampleBank | None = None
    bank_dataset: JammingDataset | None = None  # prior-bank mode: redrawn per trial
    som_dataset: JammingDataset | None = None
    cfar_config: CfarConfig = field(default_factory=CfarConfig)
    admm_config: AdmmConfig = field(default_factory=AdmmConfig)
    sbl_max_iter: int = 200
    sbl_tol: float = 1e-4
    threshold_db: float = 16.8


def wilson_interval(successes: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total == 0:
        return 0.0, 1.0
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / total + z * z / (4 * total * total))
    return max(center - half, 0.0), min(center + half, 1.0)


def score_trial(
    true_ranges: np.ndarray,
    grid: RangeGrid,
    detections: list[int],
    exclusion_radius_bins: int = 1,
) -> tuple[list[bool], int]:
    """Match detections to targets within +/- radius bins.

    Each detection credits at most one target (nearest-first greedy);
    leftovers count as false alarms.
    """
    true_bins = [int(b) for b in np.atleast_1d(grid.nearest_index(true_ranges))]
    remaining = list(dict.fromkeys(int(d) for d in detections))
    hits = []
    for tb in true_bins:
        candidates = [d for d in remaining if abs(d - tb) <= exclusion_radius_bins]
        if candidates:
            best = min(candidates, key=lambda d: (abs(d - tb), d))
            remaining.remove(best)
            hits.append(True)
        else:
            hits.append(False)
    return hits, len(remaining)


def false_alarm_cells(grid_size: int, n_targets: int, radius: int) -> int:
    """Bins counted in the Pfa denominator: total minus the hit windows."""
    return grid_size - n_targets * (2 * radius + 1)


def trial_seed_sequence(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """Counter-keyed child sequence; non-overlapping across distinct keys."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in keys))


# ---------------------------------------------------------------------------
# scene synthesis and per-method runners


def _valid_target_bins(assets: MethodAssets) -> np.ndarray:
    """Bins whose echoes keep full pulse support inside the window."""
    p = assets.params
    max_delay = (p.n_samples - p.n_coherent) * p.sample_interval
    limit = 0.5 * SPEED_OF_LIGHT * max_delay
    ranges = assets.grid.ranges
    mask = ranges <= limit
    if assets.grid.size > 1:
        mask[-1] = False  # keep room for the off-grid midpoint shift
    return np.flatnonzero(mask)


def make_trial_scene(
    config: ExperimentConfig,
    assets: MethodAssets,
    integrated_snr_db: float,
    rng: np.random.Generator,
    comb_params: CombParams,
) -> tuple[Scene, np.ndarray]:
    """One random scene: K targets on distinct bins (separated by more than
    the hit window so Pd attribution is unambiguous), fresh comb jamming
    rescaled to the configured SJR, and CN noise."""
    p, grid = assets.params, assets.grid
    valid = _valid_target_bins(assets)
    min_sep = 2 * config.exclusion_radius + 1
    for _ in range(200):
        bins = np.sort(rng.choice(valid, size=config.n_targets, replace=False))
        if config.n_targets == 1 or np.min(np.diff(bins)) > min_sep:
            break
    else:
        raise RuntimeError("could not place targets with the required separation")
    ranges = grid.ranges[bins].astype(float)
    if config.grid_mode == "off":
        ranges = ranges + 0.5 * grid.spacing
    gain_db = 10.0 * np.log10(p.n_coherent)
    amp = np.sqrt(config.noise_var * 10.0 ** ((integrated_snr_db - gain_db) / 10.0))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.n_targets)
    amps = amp * np.exp(1j * phases)
    jam = draw_comb(comb_params, p.n_samples, p.sample_freq, rng).signal
    targets = list(zip(ranges, amps))
    probe = synthesize_scene(p, grid, targets, jam, 0.0, rng_seed=0)
    jam = scale_jamming_to_sjr(probe, config.sjr_db)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    scene = synthesize_scene(p, grid, targets, jam, config.noise_var, rng_seed=noise_seed)
    return scene, bins


def _detect_bins_pc(scene: Scene, assets: MethodAssets) -> list[int]:
    profile = pulse_compress(scene.measurement, assets.params)
    lags = cfar_detect(profile, assets.cfar_config)
    ranges = lags * SPEED_OF_LIGHT / (2.0 * assets.params.sample_freq)
    return sorted(set(int(i) for i in assets.grid.nearest_index(ranges)))


def _detect_bins_threshold(mu: np.ndarray, noise_var: float, assets: MethodAssets) -> list[int]:
    dets = threshold_detect(
        mu, noise_var, assets.threshold_db, assets.params.n_coherent, assets.grid
    )
    return [d.index for d in dets]


def amplitude_on_grid(method: str, scene: Scene, assets: MethodAssets) -> np.ndarray:
    """Per-bin complex amplitude estimate for reporting.

    The matched-filter profile (real, lag domain) is resampled onto the
    range grid; the sparse solvers return their coefficient vectors.
    """
    y = scene.measurement
    atoms = assets.dictionary.atoms
    if method == "pc":
        profile = pulse_compress(y, assets.params)
        lag_ranges = (
            np.arange(profile.size) * SPEED_OF_LIGHT / (2.0 * assets.params.sample_freq)
        )
        nearest = np.clip(
            np.rint((assets.grid.ranges - lag_ranges[0]) / (lag_ranges[1] - lag_ranges[0])),
            0, profile.size - 1,
        ).astype(int)
        return profile[nearest].astype(complex)
    if method == "sbl":
        mu, _, _ = sbl_solve(y, atoms, max_iter=assets.sbl_max_iter, tol=assets.sbl_tol)
        return mu
    if method == "sbl-som":
        mu, _ = sbl_som_solve(
            y, atoms, assets.som_dataset, max_iter=assets.sbl_max_iter, tol=assets.sbl_tol
        )
        return mu
    if method == "admm":
        res = admm_solve(y, atoms, assets.admm_config, noise_std=np.sqrt(scene.noise_var))
        return res.x
    raise ValueError(f"unknown method {method!r}")


def run_method_on_scene(
    method: str,
    scene: Scene,
    assets: MethodAssets,
    trial_seed: int = 0,
) -> list[int]:
    """Detected grid bins for one method on one scene.

    Methods that estimate a noise level (plain SBL, the diffusion detector)
    threshold against their own estimate; the whitened and LASSO baselines
    have no noise output and use the scene's configured power.
    """
    y = scene.measurement
    atoms = assets.dictionary.atoms
    if method == "pc":
        return _detect_bins_pc(scene, assets)
    if method == "sbl":
        mu, _, noise_est = sbl_solve(
            y, atoms, max_iter=assets.sbl_max_iter, tol=assets.sbl_tol
        )
        # plain SBL ignores the jamming, so its own noise estimate (which
        # absorbs the unmodeled interference) is its honest reference level
        return _detect_bins_threshold(mu, max(noise_est, 1e-12), assets)
    if method == "sbl-som":
        mu, _ = sbl_som_solve(
            y, atoms, assets.som_dataset, max_iter=assets.sbl_max_iter, tol=assets.sbl_tol
        )
        return _detect_bins_threshold(mu, scene.noise_var, assets)
    if method == "admm":
        res = admm_solve(y, atoms, assets.admm_config, noise_std=np.sqrt(scene.noise_var))
        return _detect_bins_threshold(res.x, scene.noise_var, assets)
    if method == "dmdd":
        if assets.schedule is None or assets.score_model is None:
            raise ValueError("dmdd requires a schedule and a score model")
        cfg = assets.dmdd_config or DmddConfig()
        cfg = replace(cfg, seed=trial_seed, threshold_db=assets.threshold_db)
        result = run_dmdd(
            y, assets.dictionary, assets.score_model, assets.schedule, cfg,
            bank=assets.bank,
        )
        return [d.index for d in result.detections]
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# the sweep


def run_monte_carlo(
    config: ExperimentConfig,
    assets: MethodAssets,
    comb_params: CombParams,
    progress: bool = False,
) -> tuple[list[PerformanceCurve], list[TrialRecord]]:
    """Sweep integrated SNR; per point run ``n_trials`` independent scenes
    through every method and aggregate Pd / Pfa with Wilson intervals.

    A method failure inside a trial is recorded and that trial is excluded
    from the failing method's aggregate only.
    """
    records: list[TrialRecord] = []
    cells = false_alarm_cells(assets.grid.size, config.n_targets, config.exclusion_radius)
    if cells <= 0:
        raise ValueError("grid too small for the Pfa denominator")
    if "dmdd" in config.methods and (assets.schedule is None or assets.score_model is None):
        raise ValueError("dmdd requires a schedule and a score model in the assets")
    if "sbl-som" in config.methods and assets.som_dataset is None:
        raise ValueError("sbl-som requires a jamming dataset in the assets")
    curves = {
        m: PerformanceCurve(m, [], [], [], [], [], []) for m in config.methods
    }
    for si, sweep_db in enumerate(config.snr_sweep_db):
        tallies = {m: [0, 0, 0] for m in config.methods}  # hits, fas, ok-trials
        for trial in range(config.n_trials):
            ss = trial_seed_sequence(config.seed, si, trial)
            rng = np.random.default_rng(ss)
            scene, true_bins = make_trial_scene(
                config, assets, sweep_db, rng, comb_params
            )
            method_seed = int(rng.integers(0, 2**31 - 1))
            for method in config.methods:
                t0 = time.perf_counter()
                try:
                    detected = run_method_on_scene(method, scene, assets, method_seed)
                    failed = False
                except Exception:
                    detected, failed = [], True
                elapsed = time.perf_counter() - t0
                if failed:
                    records.append(
                        TrialRecord(sweep_db, trial, method, list(map(int, true_bins)),
                                    [], [False] * config.n_targets, 0, elapsed, True)
                    )
                    continue
                hits, fas = score_trial(
                    scene.true_ranges, assets.grid, detected, config.exclusion_radius
                )
                tallies[method][0] += sum(hits)
                tallies[method][1] += fas
                tallies[method][2] += 1
                records.append(
                    TrialRecord(sweep_db, trial, method, list(map(int, true_bins)),
                                detected, hits, fas, elapsed)
                )
            if progress:
                print(f"sweep {sweep_db:+.1f} dB: trial {trial + 1}/{config.n_trials}",
                      flush=True)
        for method in config.methods:
            hits, fas, ok = tallies[method]
            target_count = ok * config.n_targets
            pd = hits / target_count if target_count else 0.0
            pfa = fas / (ok * cells) if ok else 0.0
            lo, hi = wilson_interval(hits, target_count)
            c = curves[method]
            c.sweep_db.append(float(sweep_db))
            c.pd.append(pd)
            c.pfa.append(pfa)
            c.n_trials.append(ok)
            c.pd_ci_lo.append(lo)
            c.pd_ci_hi.append(hi)
    return list(curves.values()), records


# ---------------------------------------------------------------------------
# persistence


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curves_csv(curves: list[PerformanceCurve], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "sweep_db", "pd", "pfa", "n", "ci_lo", "ci_hi"])
        for c in curves:
            for i in range(len(c.sweep_db)):
                w.writerow([
                    c.method, _fmt(c.sweep_db[i]), _fmt(c.pd[i]), _fmt(c.pfa[i]),
                    c.n_trials[i], _fmt(c.pd_ci_lo[i]), _fmt(c.pd_ci_hi[i]),
                ])


def read_curves_csv(path: str) -> list[PerformanceCurve]:
    by_method: dict[str, PerformanceCurve] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            c = by_method.setdefault(
                row["method"],
                PerformanceCurve(row["method"], [], [], [], [], [], []),
            )
            c.sweep_db.append(float(row["sweep_db"]))
            c.pd.append(float(row["pd"]))
            c.pfa.append(float(row["pfa"]))
            c.n_trials.append(int(row["n"]))
            c.pd_ci_lo.append(float(row["ci_lo"]))
            c.pd_ci_hi.append(float(row["ci_hi"]))
    return list(by_method.values())


def write_trials_csv(records: list[TrialRecord], path: str) -> None:
    """Deterministic per-trial outcomes (timings live in runtimes.csv)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep_db", "trial", "method", "true_bins", "detected_bins",
                    "hits", "false_alarms", "failed"])
        for r in records:
            w.writerow([
                _fmt(r.sweep_db), r.trial, r.method,
                ";".join(map(str, r.true_bins)),
                ";".join(map(str, r.detected_bins)),
                ";".join("1" if h else "0" for h in r.hits),
                r.false_alarms, int(r.failed),
            ])


def write_runtimes_csv(records: list[TrialRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep_db", "trial", "method", "runtime_s"])
        for r in records:
            w.writerow([_fmt(r.sweep_db), r.trial, r.method, f"{r.runtime_s:.6f}"])


_SVG_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _svg_panel(series, origin, size, y_of, y_ticks, y_label, title):
    """One panel's markup from (method, sweeps, values) triples; ``y_of``
    maps a data value to panel coordinates."""
    x0, y0 = origin
    width, height = size
    sweeps = sorted({s for _, sw, _ in series for s in sw})
    lo_s, hi_s = min(sweeps), max(sweeps)
    span = (hi_s - lo_s) or 1.0

    def x_of(s):
        return x0 + (s - lo_s) / span * width

    parts = [
        f'<rect x="{x0}" y="{y0}" width="{width}" height="{height}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{x0 + width / 2:.1f}" y="{y0 - 8}" text-anchor="middle" '
        f'font-size="13">{title}</text>',
    ]
    for s in sweeps:
        parts.append(
            f'<text x="{x_of(s):.1f}" y="{y0 + height + 16}" text-anchor="middle" '
            f'font-size="10">{s:g}</text>'
        )
    for val, label in y_ticks:
        yy = y_of(val)
        parts.append(
            f'<line x1="{x0}" y1="{yy:.1f}" x2="{x0 + width}" y2="{yy:.1f}" '
            'stroke="#ddd" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{x0 - 6}" y="{yy + 3:.1f}" text-anchor="end" '
            f'font-size="10">{label}</text>'
        )
    parts.append(
        f'<text x="{x0 + width / 2:.1f}" y="{y0 + height + 32}" text-anchor="middle" '
        'font-size="11">integrated SNR (dB)</text>'
    )
    parts.append(
        f'<text x="{x0 - 44}" y="{y0 + height / 2:.1f}" font-size="11" '
        f'transform="rotate(-90 {x0 - 44} {y0 + height / 2:.1f})" '
        f'text-anchor="middle">{y_label}</text>'
    )
    for ci, (_, sw, values) in enumerate(series):
        color = _SVG_COLORS[ci % len(_SVG_COLORS)]
        pts = " ".join(f"{x_of(s):.2f},{y_of(v):.2f}" for s, v in zip(sw, values))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
    return parts


def write_curves_svg(curves: list[PerformanceCurve], path: str) -> None:
    """Self-contained SVG 1.1: Pd (linear) and Pfa (log) vs the sweep, one
    polyline per method per panel."""
    pw, ph = 300, 220
    margin, gap = 70, 90
    total_w = margin * 2 + pw * 2 + gap
    total_h = ph + 110
    y0 = 40
    pfa_floor = 1e-6

    def pd_y(v):
        return y0 + ph * (1.0 - np.clip(v, 0.0, 1.0))

    def pfa_y(v):
        lv = np.log10(max(v, pfa_floor))
        return y0 + ph * (np.clip(-lv, 0.0, 6.0) / 6.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{total_w}" height="{total_h}" font-family="sans-serif">',
    ]
    if not curves or not any(c.sweep_db for c in curves):
        parts.append('<text x="20" y="30" font-size="12">no data</text></svg>')
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
        return
    parts += _svg_panel(
        [(c.method, c.sweep_db, c.pd) for c in curves],
        (margin, y0), (pw, ph), pd_y,
        [(v, f"{v:.1f}") for v in (0.0, 0.25, 0.5, 0.75, 1.0)],
        "Pd", "detection probability",
    )
    parts += _svg_panel(
        [(c.method, c.sweep_db, c.pfa) for c in curves],
        (margin + pw + gap, y0), (pw, ph), pfa_y,
        [(10.0**-e, f"1e-{e}") for e in range(0, 7)],
        "Pfa", "false alarm probability",
    )
    for ci, c in enumerate(curves):
        color = _SVG_COLORS[ci % len(_SVG_COLORS)]
        yy = y0 + ph + 56 + 14 * ci
        parts.append(
            f'<line x1="{margin}" y1="{yy}" x2="{margin + 24}" y2="{yy}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{margin + 30}" y="{yy + 4}" font-size="11">{c.method}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def emit_results(
    curves: list[PerformanceCurve], records: list[TrialRecord], out_dir: str
) -> dict[str, str]:
    """Write curves.csv, trials.csv, runtimes.csv and curves.svg; returns the
    path of each artifact."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "curves": os.path.join(out_dir, "curves.csv"),
        "trials": os.path.join(out_dir, "trials.csv"),
        "runtimes": os.path.join(out_dir, "runtimes.csv"),
        "svg": os.path.join(out_dir, "curves.svg"),
    }
    write_curves_csv(curves, paths["curves"])
    write_trials_csv(records, paths["trials"])
    write_runtimes_csv(records, paths["runtimes"])
    write_curves_svg(curves, paths["svg"])
    return paths
