"""
Long-running acceptance checks on synthetic data (and ETTh1 when present).

    python scripts/run_acceptance.py                 # every check
    python scripts/run_acceptance.py --only spectral topology
    python scripts/run_acceptance.py --etth1 data/ETTh1.csv --prefix 0.2

Each check trains small models from scratch, prints [OK]/[FAIL] with the
measured values and the script exits non-zero if any check failed. The fast
properties (gradients, decomposition, metric formulas, patch counts) live in
the unit suite.
"""
import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Tuple

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.analysis import (
    attention_map,
    build_ground_truth,
    correlation_matrix,
    latent_factors,
    max_off_diagonal,
    spectral_profile_batches,
    topology_match,
)
from src.config import RunConfig, load_run_config
from src.data.loader import SeriesDataset, load_csv
from src.model import PESDTSF
from src.rlc import orth_residual, spectral_norm
from src.synth import generate, patch_linear_reference, preset
from src.training import ablate, train, window_views

CheckResult = Tuple[bool, str]
SEEDS = (2021, 2022, 2023)


def synthetic_config(name: str, **overrides) -> RunConfig:
    config = load_run_config(ROOT / "data" / "configs" / f"{name}.cfg")
    for key, value in overrides.items():
        for section in (config, config.model, config.train):
            if hasattr(section, key):
                setattr(section, key, value)
    return config


def check_orthogonality(args) -> CheckResult:
    ds = generate(preset("solar", seed=2021, length=args.length)).dataset
    config = synthetic_config("solar_synth", max_steps=500, epochs=50, patience=50)
    result = train(ds, config, quiet=True)
    steps = result.fit.steps
    final_orth = orth_residual(result.model.rlc.W_rlc)
    worst_step = max(row["l_orth"] for row in steps[len(steps) // 2:])
    sigma = spectral_norm(result.model.rlc.W_rlc)
    val = window_views(ds, result.config).segment("val", stride=result.config.train.eval_stride)
    corr = max_off_diagonal(correlation_matrix(latent_factors(result.model, val.batches(64))))
    ok = final_orth < 1e-6 and worst_step < 1e-6 and 0.999 <= sigma <= 1.001 and corr < 0.05
    detail = (f"final L_orth={final_orth:.2e} (worst over last half of {len(steps)} steps {worst_step:.2e}), "
              f"sigma_max={sigma:.5f}, max |corr| off-diagonal={corr:.4f}")
    return ok, detail


def check_spectral(args) -> CheckResult:
    ds = generate(preset("spectral", seed=2021, length=args.length)).dataset
    result = train(ds, synthetic_config("spectral_synth"), quiet=True)
    views = window_views(ds, result.config)
    profile = spectral_profile_batches(result.model, views.segment("val", stride=4).batches(64))
    trend_low = profile.band_share("trend")["low"]
    variation_low = profile.band_share("variation")["low"]
    ok = trend_low >= 0.60 and trend_low > variation_low
    return ok, f"low-band share trend={trend_low:.3f} variation={variation_low:.3f}"


def check_topology(args) -> CheckResult:
    ious, baselines = [], []
    for seed in SEEDS:
        data = generate(preset("coupled", seed=seed, length=args.length))
        config = synthetic_config("coupled_synth", seed=seed)
        result = train(data.dataset, config, quiet=True)
        views = window_views(data.dataset, result.config)
        attention = attention_map(result.model, views.segment("val").batches(64))
        report = topology_match(attention, build_ground_truth(data.adjacency, two_hop=False), k=5)
        ious.append(report.iou)
        baselines.append(report.random_iou)
    mean_iou, baseline = float(np.mean(ious)), float(np.mean(baselines))
    return mean_iou >= 3 * baseline, f"mean top-5 IoU {mean_iou:.3f} vs random {baseline:.3f}"


def check_ablation(args) -> CheckResult:
    ds = generate(preset("leadlag", seed=2021, length=args.length)).dataset
    rows = ablate(ds, synthetic_config("leadlag_synth"), seeds=SEEDS, quiet=True)
    val = {row["variant"]: row["val_mse"] for row in rows}
    full = val["full"]
    not_worse = all(full <= val[name] for name in val if name != "full")
    margins = {name: val[name] / full - 1.0 for name in ("w/o_csca", "w/o_period")}
    ok = not_worse and all(m >= 0.02 for m in margins.values())
    table = ", ".join(f"{name}={value:.4f}" for name, value in val.items())
    return ok, f"{table}; margins csca={margins['w/o_csca']:+.1%} period={margins['w/o_period']:+.1%}"


def check_reduction(args) -> CheckResult:
    ds = generate(preset("spectral", seed=7, length=400)).dataset
    config = synthetic_config("smoke", gamma=0.0, no_csca=True, no_hierarchy=True, no_rlc=True)
    config.model.channels = ds.channels
    batch = next(window_views(ds, config).segment("train").batches(16))
    model = PESDTSF(config.model)
    same = np.array_equal(model(batch).y_hat.data, patch_linear_reference(model, batch))
    return same, "bitwise equal" if same else "outputs differ"


def check_etth1(args) -> CheckResult:
    path = Path(args.etth1)
    if not path.exists():
        return True, f"skipped: {path} not found"
    ds = load_csv(path)
    prefix_only = args.prefix < 1.0
    if prefix_only:
        stop = int(ds.length * args.prefix)
        ds = SeriesDataset(ds.timestamps[:stop], ds.values[:stop], ds.channel_names, ds.freq)
    result = train(ds, load_run_config(ROOT / "data" / "configs" / "etth1.cfg"), quiet=True)
    mse, baseline = result.metrics["mse"], result.metrics["baseline_mse_repeat_last"]
    beats = mse <= 0.8 * baseline
    ok = beats if prefix_only else beats and mse <= 0.42
    return ok, f"test mse={mse:.4f} repeat-last={baseline:.4f}" + (" (prefix run)" if prefix_only else "")


CHECKS: Dict[str, Callable] = {
    "orthogonality": check_orthogonality,
    "spectral": check_spectral,
    "topology": check_topology,
    "ablation": check_ablation,
    "reduction": check_reduction,
    "etth1": check_etth1,
}


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(description="Run the long acceptance checks")
    parser.add_argument("--only", nargs="+", choices=sorted(CHECKS), help="subset of checks")
    parser.add_argument("--length", type=int, default=2000, help="synthetic series length")
    parser.add_argument("--etth1", default=str(ROOT / "data" / "ETTh1.csv"))
    parser.add_argument("--prefix", type=float, default=1.0, help="fraction of ETTh1 to use")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    failed = []
    for name in args.only or list(CHECKS):
        print(f"[INFO] {name} ...")
        started = time.time()
        ok, detail = CHECKS[name](args)
        print(f"[{'OK' if ok else 'FAIL'}] {name}: {detail} ({time.time() - started:.0f}s)")
        if not ok:
            failed.append(name)
    if failed:
        print(f"[WARN] failed: {', '.join(failed)}")
        return 1
    print("[OK] all acceptance checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
