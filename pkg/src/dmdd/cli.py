"""Command-line entry point.

Subcommands: generate-dataset, train-score, sample-prior, run-dmdd,
run-baseline, monte-carlo, plot. Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from .engine import (
    DmddConfig,
    build_prior_bank,
    run_dmdd,
    sample_unconditional,
    threshold_detect,
)
from .errors import DmddError
from .harness import (
    MethodAssets,
    amplitude_on_grid,
    emit_results,
    read_curves_csv,
    run_method_on_scene,
    run_monte_carlo,
    write_curves_svg,
)
from .jamming import generate_comb_dataset, read_dataset, write_dataset
from .scenes import load_scene
from .score import AnalyticGaussianScore, ConvScoreNet, load_checkpoint, save_checkpoint, train
from .signals import build_dictionary

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dmdd", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="progress output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-dataset", help="draw a comb-jamming training set")
    p.add_argument("--config", default=None)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-score", help="fit the score network on a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("sample-prior", help="unconditional reverse-diffusion draws")
    p.add_argument("--config", default=None)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("run-dmdd", help="detect targets in one scene")
    p.add_argument("--config", default=None)
    p.add_argument("--scene", required=True, help="scene file path or inline JSON")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle-cov", default=None, help=".npy Hermitian prior covariance")
    p.add_argument("--bank-dataset", default=None)
    p.add_argument("--out", required=True, help="detections CSV")
    p.add_argument("--diagnostics", default=None, help="per-step diagnostics CSV")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("run-baseline", help="run one reference method on a scene")
    p.add_argument("--method", required=True, choices=["pc", "sbl", "sbl-som", "admm"])
    p.add_argument("--config", default=None)
    p.add_argument("--scene", required=True)
    p.add_argument("--som-dataset", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("monte-carlo", help="Pd/Pfa sweep over integrated SNR")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("plot", help="re-render curves.csv to SVG")
    p.add_argument("--curves", required=True)
    p.add_argument("--out", required=True)
    return parser


def _write_detections_csv(path, margins, mu, noise_var, grid):
    """Per-bin rows; ``margins`` maps detected bin -> margin dB (or None)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_index", "range_m", "amp_re", "amp_im", "power_db",
                    "detected", "margin_db"])
        with np.errstate(divide="ignore"):
            power_db = 10.0 * np.log10(np.abs(mu) ** 2 / noise_var)
        for q in range(mu.size):
            margin = margins.get(q, None) if q in margins else None
            w.writerow([
                q, repr(float(grid.ranges[q])), repr(float(mu[q].real)),
                repr(float(mu[q].imag)), repr(float(power_db[q])),
                int(q in margins),
                "" if margin is None else repr(float(margin)),
            ])


def _score_model_from_args(args, schedule, n):
    if args.ckpt and args.oracle_cov:
        raise DmddError("give either --ckpt or --oracle-cov, not both")
    if args.ckpt:
        if not os.path.exists(args.ckpt):
            raise DmddError(f"missing checkpoint: {args.ckpt}")
        net = load_checkpoint(args.ckpt, expect_n=n)
        if net.schedule is None:
            net.schedule = schedule
        return net
    if args.oracle_cov:
        if not os.path.exists(args.oracle_cov):
            raise DmddError(f"missing covariance file: {args.oracle_cov}")
        cov = np.load(args.oracle_cov)
        return AnalyticGaussianScore(cov, schedule)
    raise DmddError("a score model is required: --ckpt or --oracle-cov")


def _cmd_generate_dataset(args) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.make_chirp(cfg)
    comb = cfgmod.make_comb_params(cfg)
    rng = np.random.default_rng(args.seed)
    ds = generate_comb_dataset(comb, args.count, params.n_samples, params.sample_freq, rng)
    write_dataset(args.out, ds)
    print(f"wrote {ds.count} x {ds.n_samples} samples to {args.out}")
    return 0


def _cmd_train_score(args, verbose: bool) -> int:
    cfg = cfgmod.load_config(args.config)
    if not os.path.exists(args.dataset):
        raise DmddError(f"missing dataset: {args.dataset}")
    dataset = read_dataset(args.dataset, mmap=True)
    schedule = cfgmod.make_schedule(cfg)
    spec = cfgmod.make_net_spec(cfg, expected_length=dataset.n_samples)
    tc = cfgmod.make_train_config(cfg, n_epochs=args.epochs, seed=args.seed)
    net = ConvScoreNet(spec, seed=tc.seed, schedule=schedule)
    result = train(net, dataset, tc, schedule, log_every=50 if verbose else 0)
    save_checkpoint(result.net, args.out)
    losses = ", ".join(f"{x:.3f}" for x in result.epoch_losses)
    print(f"epoch losses: {losses}")
    if result.aborted:
        print("training aborted on non-finite loss; saved last good checkpoint")
    print(f"wrote {args.out}")
    return 0


def _cmd_sample_prior(args) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.make_chirp(cfg)
    if not os.path.exists(args.ckpt):
        raise DmddError(f"missing checkpoint: {args.ckpt}")
    net = load_checkpoint(args.ckpt)
    schedule = net.schedule or cfgmod.make_schedule(cfg)
    n = net.spec.expected_length or params.n_samples
    rng = np.random.default_rng(args.seed)
    snaps = sample_unconditional(net, schedule, args.count, n, rng)
    os.makedirs(args.out, exist_ok=True)
    time_path = os.path.join(args.out, "time_domain.csv")
    spec_path = os.path.join(args.out, "dft_magnitude.csv")
    fs = params.sample_freq
    with open(time_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sample", "n", "re", "im"])
        for t in sorted(snaps, reverse=True):
            for s in range(args.count):
                for i, v in enumerate(snaps[t][s]):
                    w.writerow([t, s, i, repr(v.real), repr(v.imag)])
    with open(spec_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sample", "bin", "freq_hz", "mag_db"])
        freqs = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / fs))
        for t in sorted(snaps, reverse=True):
            for s in range(args.count):
                mag = np.abs(np.fft.fftshift(np.fft.fft(snaps[t][s])))
                mag_db = 20.0 * np.log10(np.maximum(mag, 1e-12))
                for i in range(n):
                    w.writerow([t, s, i, repr(float(freqs[i])), repr(float(mag_db[i]))])
    print(f"wrote {time_path} and {spec_path}")
    return 0


def _cmd_run_dmdd(args) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.make_chirp(cfg)
    grid = cfgmod.make_grid(cfg)
    comb = cfgmod.make_comb_params(cfg)
    schedule = cfgmod.make_schedule(cfg)
    scene = load_scene(args.scene, params, grid, comb)
    dictionary = build_dictionary(params, grid)
    score_model = _score_model_from_args(args, schedule, params.n_samples)
    dc = cfgmod.make_dmdd_config(cfg, seed=args.seed)
    bank = None
    if dc.atom_source == "prior-bank":
        if not args.bank_dataset:
            raise DmddError("prior-bank atom source needs --bank-dataset")
        if not os.path.exists(args.bank_dataset):
            raise DmddError(f"missing bank dataset: {args.bank_dataset}")
        ds = read_dataset(args.bank_dataset, expect_n=params.n_samples, mmap=True)
        bank = build_prior_bank(ds, schedule, dc.bank_size, np.random.default_rng(dc.seed))
    result = run_dmdd(scene.measurement, dictionary, score_model, schedule, dc, bank=bank)
    margins = {d.index: d.margin_db for d in result.detections}
    _write_detections_csv(args.out, margins, result.mean, result.noise_var, grid)
    if args.diagnostics:
        with open(args.diagnostics, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "sigma_w", "residual_norm"])
            for d in result.diagnostics:
                w.writerow([d.step, repr(d.t), repr(d.noise_var),
                            repr(d.residual_norm)])
    print(f"{len(result.detections)} detections; noise_var={result.noise_var:.4g}; "
          f"wrote {args.out}")
    return 0


def _cmd_run_baseline(args) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.make_chirp(cfg)
    grid = cfgmod.make_grid(cfg)
    comb = cfgmod.make_comb_params(cfg)
    scene = load_scene(args.scene, params, grid, comb)
    dictionary = build_dictionary(params, grid)
    som_dataset = None
    if args.method == "sbl-som":
        if not args.som_dataset:
            raise DmddError("sbl-som needs --som-dataset")
        som_dataset = read_dataset(args.som_dataset, expect_n=params.n_samples)
    assets = MethodAssets(
        params=params,
        grid=grid,
        dictionary=dictionary,
        som_dataset=som_dataset,
        cfar_config=cfgmod.make_cfar_config(cfg),
        admm_config=cfgmod.make_admm_config(cfg),
        sbl_max_iter=cfg["sbl"]["max_iter"],
        sbl_tol=cfg["sbl"]["tol"],
        threshold_db=cfg["dmdd"]["threshold_db"],
    )
    bins = run_method_on_scene(args.method, scene, assets)
    mu = amplitude_on_grid(args.method, scene, assets)
    noise_ref = scene.noise_var if scene.noise_var > 0 else 1.0
    p_min = assets.threshold_db - 10.0 * np.log10(params.n_coherent)
    margins = {}
    for q in bins:
        power = abs(mu[q]) ** 2 / noise_ref
        margins[q] = 10.0 * np.log10(power) - p_min if power > 0 else None
    _write_detections_csv(args.out, margins, mu, noise_ref, grid)
    print(f"{len(bins)} detections; wrote {args.out}")
    return 0


def _cmd_monte_carlo(args, verbose: bool) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.make_chirp(cfg)
    grid = cfgmod.make_grid(cfg)
    comb = cfgmod.make_comb_params(cfg)
    dictionary = build_dictionary(params, grid)
    exp = cfgmod.make_experiment_config(cfg, seed=args.seed)
    paths = cfg["monte_carlo"]["paths"]
    schedule = score_model = bank = som_dataset = None
    dmdd_cfg = cfgmod.make_dmdd_config(cfg)
    if "dmdd" in exp.methods:
        schedule = cfgmod.make_schedule(cfg)
        ckpt, oracle = paths.get("checkpoint"), paths.get("oracle_cov")
        if ckpt:
            if not os.path.exists(ckpt):
                raise DmddError(f"missing checkpoint: {ckpt}")
            score_model = load_checkpoint(ckpt, expect_n=params.n_samples)
            if score_model.schedule is None:
                score_model.schedule = schedule
        elif oracle:
            if not os.path.exists(oracle):
                raise DmddError(f"missing covariance file: {oracle}")
            score_model = AnalyticGaussianScore(np.load(oracle), schedule)
        else:
            raise DmddError(
                "monte_carlo.paths.checkpoint or .oracle_cov is required for dmdd"
            )
        if dmdd_cfg.atom_source == "prior-bank":
            bank_path = paths.get("bank_dataset")
            if not bank_path or not os.path.exists(bank_path):
                raise DmddError(f"missing bank dataset: {bank_path}")
            ds = read_dataset(bank_path, expect_n=params.n_samples, mmap=True)
            bank = build_prior_bank(
                ds, schedule, dmdd_cfg.bank_size, np.random.default_rng(exp.seed)
            )
    if "sbl-som" in exp.methods:
        som_path = paths.get("som_dataset")
        if not som_path or not os.path.exists(som_path):
            raise DmddError(f"missing som dataset: {som_path}")
        som_dataset = read_dataset(som_path, expect_n=params.n_samples)
    assets = MethodAssets(
        params=params,
        grid=grid,
        dictionary=dictionary,
        schedule=schedule,
        score_model=score_model,
        dmdd_config=dmdd_cfg,
        bank=bank,
        som_dataset=som_dataset,
        cfar_config=cfgmod.make_cfar_config(cfg),
        admm_config=cfgmod.make_admm_config(cfg),
        sbl_max_iter=cfg["sbl"]["max_iter"],
        sbl_tol=cfg["sbl"]["tol"],
        threshold_db=cfg["dmdd"]["threshold_db"],
    )
    curves, records = run_monte_carlo(exp, assets, comb, progress=verbose)
    paths_out = emit_results(curves, records, args.out)
    print("wrote " + ", ".join(sorted(paths_out.values())))
    return 0


def _cmd_plot(args) -> int:
    if not os.path.exists(args.curves):
        raise DmddError(f"missing curves file: {args.curves}")
    curves = read_curves_csv(args.curves)
    write_curves_svg(curves, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        if args.command == "generate-dataset":
            return _cmd_generate_dataset(args)
        if args.command == "train-score":
            return _cmd_train_score(args, args.verbose)
        if args.command == "sample-prior":
            return _cmd_sample_prior(args)
        if args.command == "run-dmdd":
            return _cmd_run_dmdd(args)
        if args.command == "run-baseline":
            return _cmd_run_baseline(args)
        if args.command == "monte-carlo":
            return _cmd_monte_carlo(args, args.verbose)
        if args.command == "plot":
            return _cmd_plot(args)
        raise DmddError(f"unhandled command {args.command!r}")
    except DmddError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
