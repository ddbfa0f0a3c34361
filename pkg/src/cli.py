"""
Command-line entry point: train, evaluate, ablate, sweep, analyze, synth.

Flags override values from ``--config FILE`` (flat key=value). Exit codes:
0 success, 2 usage or configuration error, 3 data error, 4 numeric divergence.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from src.config import RunConfig, load_run_config
from src.data.loader import load_csv
from src.data.windows import SeriesWindows, SplitSpec
from src.errors import ConfigError, DataLoadError, NumericError, ShapeError

logger = logging.getLogger("src.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# flag dest -> config key
FLAG_KEYS = {
    "data": "data",
    "date_column": "date_column",
    "allow_gaps": "allow_gaps",
    "out": "out",
    "lookback": "lookback",
    "horizon": "horizon",
    "patch_len": "patch_len",
    "stride": "stride",
    "d_model": "d_model",
    "heads": "heads",
    "depth": "depth",
    "kernel": "kernel",
    "gamma": "gamma",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "k_factors": "k_factors",
    "seed": "seed",
    "epochs": "epochs",
    "batch": "batch_size",
    "lr": "lr",
    "patience": "patience",
    "order": "order",
    "max_steps": "max_steps",
    "window_stride": "window_stride",
    "no_period": "no_period",
    "no_rlc": "no_rlc",
    "no_csca": "no_csca",
    "no_hierarchy": "no_hierarchy",
    "strict_zero_pad": "strict_zero_pad",
    "no_head_bias": "head_bias",
}


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _k_factors(text: str) -> int:
    if text.strip().lower() == "auto":
        return 0
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k-factors expects an integer or 'auto', got '{text}'") from None


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags override it")
    common.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--quiet", action="store_true", help="no progress bars, warnings only")
    return common


def _run_flags() -> argparse.ArgumentParser:
    run = argparse.ArgumentParser(add_help=False)
    data = run.add_argument_group("data")
    data.add_argument("--data", help="CSV with a timestamp column followed by numeric channels")
    data.add_argument("--date-column", dest="date_column")
    data.add_argument("--allow-gaps", dest="allow_gaps", action="store_true", default=None)
    data.add_argument("--out", help="run directory")

    model = run.add_argument_group("model")
    model.add_argument("--lookback", type=int)
    model.add_argument("--horizon", type=int)
    model.add_argument("--patch-len", dest="patch_len", type=int)
    model.add_argument("--stride", type=int)
    model.add_argument("--d-model", dest="d_model", type=int)
    model.add_argument("--heads", type=int)
    model.add_argument("--depth", type=int)
    model.add_argument("--kernel", type=int, help="moving-average width (odd)")
    model.add_argument("--gamma", type=float)
    model.add_argument("--k-factors", dest="k_factors", type=_k_factors, help="latent factor count or 'auto' (2C)")
    model.add_argument("--order", help="stage order, e.g. s1s2s3")
    model.add_argument("--no-period", dest="no_period", action="store_true", default=None)
    model.add_argument("--no-rlc", dest="no_rlc", action="store_true", default=None)
    model.add_argument("--no-csca", dest="no_csca", action="store_true", default=None)
    model.add_argument("--no-hierarchy", dest="no_hierarchy", action="store_true", default=None)
    model.add_argument("--strict-zero-pad", dest="strict_zero_pad", action="store_true", default=None)
    model.add_argument("--no-head-bias", dest="no_head_bias", action="store_true", default=None)

    train = run.add_argument_group("training")
    train.add_argument("--lambda1", type=float)
    train.add_argument("--lambda2", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--seeds", type=_int_list, help="comma-separated seeds for repeated runs")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--patience", type=int)
    train.add_argument("--max-steps", dest="max_steps", type=int)
    train.add_argument("--window-stride", dest="window_stride", type=int)
    return run


def build_parser() -> argparse.ArgumentParser:
    common, run = _common_flags(), _run_flags()
    parser = argparse.ArgumentParser(prog="pesd", description="Structured-decomposition multivariate forecaster")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common, run], help="fit one model (or one per --seeds entry)")

    p = sub.add_parser("evaluate", parents=[common, run], help="score a checkpoint on a split")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("ablate", parents=[common, run], help="full model against component deletions")
    p.add_argument("--orders", default="", help="extra stage orders, e.g. s1s2s3,s2s1s3")

    p = sub.add_parser("sweep", parents=[common, run], help="one run per grid value")
    p.add_argument("--param", choices=("lambda", "gamma", "k"), required=True)
    p.add_argument("--grid", type=_float_list, required=True)

    p = sub.add_parser("analyze", parents=[common, run], help="spectral, topology, latent and gate exports")
    p.add_argument("checkpoint")
    p.add_argument("--adjacency", help="ground-truth adjacency or distance matrix CSV")
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--no-two-hop", dest="two_hop", action="store_false")
    p.add_argument("--spectral", action="store_true", help="also write and print the band-share table")
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--channel", type=int, default=0)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset with ground truth")
    p.add_argument("--preset", choices=("solar", "coupled", "spectral", "leadlag"), default="coupled")
    p.add_argument("--seed", type=int, default=2021)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--out", required=True, help="CSV path")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        overrides[key] = (not value) if dest == "no_head_bias" else value
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config, collect_overrides(args))
    if not config.data:
        raise ConfigError("no dataset given (--data or data= in the config file)")
    return config


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def cmd_train(args: argparse.Namespace) -> int:
    from src.training.trainer import run_seeds, train

    config = resolve_config(args)
    ds = load_csv(config.data, config.date_column, config.allow_gaps)
    if args.seeds and len(args.seeds) > 1:
        run_seeds(ds, config, args.seeds, run_dir=config.out, force=args.force, quiet=args.quiet)
        return EXIT_OK
    if args.seeds:
        config.train.seed = config.model.seed = args.seeds[0]
    result = train(ds, config, run_dir=config.out, force=args.force, quiet=args.quiet)
    print(f"[OK] {result.run_dir}: test mse={result.metrics['mse']:.6f} mae={result.metrics['mae']:.6f}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    from src.training.trainer import evaluate

    config = resolve_config(args)
    ds = load_csv(config.data, config.date_column, config.allow_gaps)
    out = Path(args.out) / "metrics.json" if args.out else Path(args.checkpoint).with_name(f"metrics_{args.split}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics = evaluate(args.checkpoint, ds, config, split=args.split, out=out)
    print(f"[OK] {args.split}: mse={metrics['mse']:.6f} mae={metrics['mae']:.6f} -> {out}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    from src.training.trainer import ablate

    config = resolve_config(args)
    ds = load_csv(config.data, config.date_column, config.allow_gaps)
    orders = [o for o in args.orders.split(",") if o.strip()]
    rows = ablate(ds, config, orders=orders, seeds=args.seeds or (), run_dir=config.out,
                  force=args.force, quiet=args.quiet)
    print(pd.DataFrame(rows).to_string(index=False))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    from src.training.trainer import sweep

    config = resolve_config(args)
    ds = load_csv(config.data, config.date_column, config.allow_gaps)
    rows = sweep(ds, args.param, args.grid, config, run_dir=config.out, force=args.force, quiet=args.quiet)
    print(pd.DataFrame(rows).to_string(index=False))
    return EXIT_OK


def run_analysis(checkpoint: str, config: RunConfig, out_dir: Path, adjacency: Optional[str] = None,
                 topk: int = 5, two_hop: bool = True, spectral_table: bool = False, split: str = "val",
                 channel: int = 0) -> Dict[str, Any]:
    """Every analysis the checkpoint supports, written to ``out_dir``; returns a summary."""
    from src.analysis import (
        attention_map,
        build_ground_truth,
        decomposition_trace,
        gate_trace,
        latent_diagnostics,
        spectral_profile_batches,
        topology_match,
    )
    from src.model.checkpoint import load_checkpoint
    from src.training import persistence

    model, _ = load_checkpoint(checkpoint)
    ds = load_csv(config.data, config.date_column, config.allow_gaps)
    if ds.channels != model.config.channels:
        raise ConfigError(f"checkpoint expects {model.config.channels} channels, data has {ds.channels}")
    cfg = config.train
    views = SeriesWindows(ds, model.config.lookback, model.config.horizon,
                          split=SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac), scale=cfg.scale)
    windows = views.segment(split, stride=cfg.eval_stride)

    def batches():
        return windows.batches(cfg.batch_size)

    out_dir.mkdir(parents=True, exist_ok=True)
    summary: Dict[str, Any] = {"checkpoint": str(checkpoint), "split": split}

    if model.encoder.attention:
        profile = spectral_profile_batches(model, batches())
        profile.to_frame().to_csv(out_dir / "spectral.csv", index=False, float_format="%.10g")
        bands = pd.DataFrame(profile.band_rows())
        summary["spectral"] = profile.band_rows()
        if spectral_table:
            bands.to_csv(out_dir / "spectral_bands.csv", index=False, float_format="%.6f")
            print(bands.to_string(index=False))
        trace = decomposition_trace(model, next(iter(batches())), channel=channel)
        trace["decomposition"].to_csv(out_dir / "decomposition.csv", index=False, float_format="%.10g")
        trace["forecast"].to_csv(out_dir / "forecast.csv", index=False, float_format="%.10g")
    else:
        print("[WARN] model has no detrended-attention stage; spectral step skipped")

    if model.encoder.csca is not None:
        attention = attention_map(model, batches())
        persistence.save_matrix(attention, out_dir / "attention.csv", labels=ds.channel_names)
        if adjacency:
            truth = build_ground_truth(adjacency, two_hop=two_hop)
            report = topology_match(attention, truth, k=topk)
            persistence.save_json(report.to_dict(), out_dir / "topology.json")
            summary["topology"] = report.to_dict()
            print(f"[INFO] top-{topk} IoU {report.iou:.4f} (random {report.random_iou:.4f})")
        else:
            print("[INFO] no --adjacency given; topology step skipped")
    elif adjacency:
        print("[WARN] model has no cross-channel attention; topology step skipped")

    if model.rlc is not None:
        steps_path = Path(checkpoint).with_name("steps.csv")
        steps = persistence.load_table(steps_path) if steps_path.exists() else None
        summary["latent"] = latent_diagnostics(model, batches(), steps, out_dir=out_dir)

    if model.gating is not None:
        start, stop = views.split.segment(ds.length, split)
        frame, corr = gate_trace(model, views.values[start:stop], views.marks[start:stop], channel=channel)
        frame.to_csv(out_dir / "gate_trace.csv", index=False, float_format="%.10g")
        summary["gate_volatility_corr"] = corr

    persistence.save_json(summary, out_dir / "analysis.json")
    return summary


def cmd_analyze(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    run_analysis(args.checkpoint, config, out_dir, adjacency=args.adjacency, topk=args.topk,
                 two_hop=args.two_hop, spectral_table=args.spectral, split=args.split, channel=args.channel)
    print(f"[OK] analysis written to {out_dir}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from src.synth import generate, preset

    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    result = generate(preset(args.preset, seed=args.seed, length=args.length))
    paths = result.save(out)
    print(f"[OK] {args.preset}: {result.spec.channels} channels x {result.spec.length} steps -> {paths['csv']}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    configure_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ShapeError) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataLoadError, FileNotFoundError, IndexError) as exc:
        # IndexError: a calendar code outside its embedding table
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
