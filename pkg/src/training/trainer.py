"""
Training loop, early stopping and the experiment drivers built on it
(single runs, seed repeats, sweeps and ablations).
"""
import copy
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from src.analysis.latent import correlation_matrix, latent_factors, mean_off_diagonal
from src.autodiff import Tape
from src.config import RunConfig
from src.data.loader import SeriesDataset
from src.data.windows import SeriesWindows, SplitSpec, WindowDataset
from src.errors import ConfigError, DivergenceError
from src.evaluation.metrics import all_metrics, naive_baselines
from src.model.checkpoint import load_checkpoint, save_checkpoint
from src.model.model import PESDTSF
from src.model.predictor import Predictor
from src.rlc.regularizer import LossBundle, orth_residual, rlc_state, spectral_norm, stat_readout, total_loss
from src.training.optimizer import Adam
from src.training import persistence

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("lambda", "gamma", "k")
ABLATIONS = {
    "full": {},
    "w/o_period": {"no_period": True},
    "w/o_rlc": {"no_rlc": True},
    "w/o_csca": {"no_csca": True},
    "w/o_hierarchy": {"no_hierarchy": True},
}


@dataclass
class FitResult:
    history: List[Dict[str, float]]
    steps: List[Dict[str, float]]
    best_epoch: int
    best_val_mse: float
    stopped_early: bool


@dataclass
class RunResult:
    model: PESDTSF
    config: RunConfig
    fit: FitResult
    metrics: Dict[str, object]
    run_dir: Optional[Path] = None


class Trainer:
    def __init__(self, model: PESDTSF, config: RunConfig, run_dir: Optional[Path] = None, quiet: bool = False,
                 channel_names: Sequence[str] = ()):
        self.model = model
        self.channel_names = list(channel_names)
        self.config = config
        self.train_cfg = config.train
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.quiet = quiet or not sys.stderr.isatty()
        self.optimizer = Adam(
            dict(model.named_parameters()),
            lr=self.train_cfg.lr,
            clip_norm=self.train_cfg.clip_norm,
        )
        self.use_rlc = model.rlc is not None
        self.retract = self.use_rlc and self.train_cfg.orth_retraction
        self.lambda1 = self.train_cfg.lambda1 if self.use_rlc else 0.0
        self.lambda2 = self.train_cfg.lambda2 if self.use_rlc else 0.0
        self.step = 0
        self.steps: List[Dict[str, float]] = []
        self.last_good: Optional[Path] = None
        self.last_meta: Dict[str, object] = {}

    def _checkpoint_path(self) -> Optional[Path]:
        return self.run_dir / "checkpoint.npz" if self.run_dir is not None else None

    def train_step(self, batch) -> LossBundle:
        lambda2 = self.lambda2 if batch.size >= 2 else 0.0
        with Tape() as tape:
            result = self.model.forward(batch)
            rlc = None
            if self.use_rlc and (self.lambda1 > 0 or lambda2 > 0):
                rlc = rlc_state(result.stages.z_final, batch.Y_gt, self.model.rlc)
            bundle = total_loss(result.y_hat, batch.Y_gt, rlc, self.lambda1, lambda2)
            if not np.isfinite(bundle.value):
                logger.error("training loss diverged at step %d", self.step + 1)
                raise DivergenceError(
                    f"training loss is not finite at step {self.step + 1}",
                    last_good_checkpoint=str(self.last_good) if self.last_good else None,
                )
            self.optimizer.zero_grad()
            tape.backward(bundle.total)
        try:
            self.optimizer.step()
        except DivergenceError as exc:
            exc.last_good_checkpoint = str(self.last_good) if self.last_good else None
            raise
        if self.retract and self.lambda1 > 0:
            self.model.rlc.retract()
        self.step += 1
        self.steps.append({
            "step": self.step,
            "l_mse": bundle.l_mse,
            "l_orth": bundle.l_orth,
            "pcc_sum": bundle.pcc_sum,
            "sigma_max": spectral_norm(self.model.rlc.W_rlc) if self.use_rlc else 0.0,
        })
        return bundle

    def _limit_reached(self) -> bool:
        return 0 < self.train_cfg.max_steps <= self.step

    def train_epoch(self, dataset: WindowDataset, epoch: int) -> Dict[str, float]:
        cfg = self.train_cfg
        total = dataset.num_batches(cfg.batch_size)
        if cfg.max_batches > 0:
            total = min(total, cfg.max_batches)
        batches = dataset.batches(cfg.batch_size, shuffle=cfg.shuffle, seed=cfg.seed + epoch)
        mse_sum, orth, pcc_sum, count = 0.0, 0.0, 0.0, 0
        for i, batch in enumerate(tqdm(batches, total=total, desc=f"epoch {epoch}", disable=self.quiet, leave=False)):
            if i >= total or self._limit_reached():
                break
            bundle = self.train_step(batch)
            mse_sum += bundle.l_mse
            orth = bundle.l_orth
            pcc_sum += bundle.pcc_sum
            count += 1
        count = max(1, count)
        return {"train_mse": mse_sum / count, "l_orth": orth, "pcc_sum": pcc_sum / count}

    def eval_epoch(self, dataset: WindowDataset) -> float:
        sq_sum, n = 0.0, 0
        predictor = Predictor(self.model)
        for batch in dataset.batches(self.train_cfg.batch_size):
            diff = predictor.predict(batch) - batch.Y_gt
            sq_sum += float(np.sum(diff * diff))
            n += diff.size
        return sq_sum / max(1, n)

    def stat_features(self, dataset: WindowDataset) -> np.ndarray:
        rows = [stat_readout(self.model.forward(batch).stages.z_final).data
                for batch in dataset.batches(self.train_cfg.batch_size)]
        return np.concatenate(rows) if rows else np.zeros((0, 2 * self.model.rlc.channels))

    def align_factors(self, dataset: WindowDataset) -> Optional[np.ndarray]:
        """Rotate W_rlc within its column span so the factors are uncorrelated on ``dataset``.

        Forecasts do not depend on W_rlc, so only the latent readout changes.
        The checkpoint is rewritten when one was saved.
        """
        f_stat = self.stat_features(dataset)
        if f_stat.shape[0] < 2:
            logger.warning("Skipping factor alignment: %d windows", f_stat.shape[0])
            return None
        rotation = self.model.rlc.align(f_stat)
        logger.info("Aligned latent factors on %d windows (L_orth %.3e)",
                    f_stat.shape[0], orth_residual(self.model.rlc.W_rlc))
        path = self._checkpoint_path()
        if path is not None and self.last_good is not None:
            self.last_good = save_checkpoint(self.model, path, self.last_meta)
        return rotation

    def fit(self, train_set: WindowDataset, val_set: WindowDataset) -> FitResult:
        cfg = self.train_cfg
        history: List[Dict[str, float]] = []
        best_val, best_epoch, best_state = float("inf"), 0, None
        waited = 0
        stopped_early = False
        for epoch in range(1, cfg.epochs + 1):
            stats = self.train_epoch(train_set, epoch)
            val_mse = self.eval_epoch(val_set)
            if not np.isfinite(val_mse):
                raise DivergenceError(
                    f"validation MSE is not finite after epoch {epoch}",
                    last_good_checkpoint=str(self.last_good) if self.last_good else None,
                )
            history.append({"epoch": epoch, "train_mse": stats["train_mse"], "val_mse": val_mse,
                            "l_orth": stats["l_orth"], "pcc_sum": stats["pcc_sum"]})
            logger.info("epoch %d: train_mse=%.6f val_mse=%.6f l_orth=%.3e",
                        epoch, stats["train_mse"], val_mse, stats["l_orth"])
            if val_mse < best_val:
                best_val, best_epoch, waited = val_mse, epoch, 0
                best_state = self.model.state_dict()
                self.last_meta = {"epoch": epoch, "val_mse": val_mse, "channel_names": self.channel_names}
                path = self._checkpoint_path()
                if path is not None:
                    self.last_good = save_checkpoint(self.model, path, self.last_meta)
            else:
                waited += 1
                if waited >= cfg.patience:
                    logger.info("Early stop at epoch %d (best %d, val_mse=%.6f)", epoch, best_epoch, best_val)
                    stopped_early = True
                    break
            if self._limit_reached():
                logger.info("Step budget of %d reached", cfg.max_steps)
                break
        if best_state is not None:
            self.model.load_state_dict(best_state)
            logger.info("Restored best checkpoint from epoch %d", best_epoch)
        if self.use_rlc and cfg.align_factors:
            self.align_factors(val_set)
        return FitResult(history, self.steps, best_epoch, best_val, stopped_early)


def _split(config: RunConfig) -> SplitSpec:
    cfg = config.train
    return SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac)


def bind_dataset(config: RunConfig, ds: SeriesDataset) -> RunConfig:
    """Copy of ``config`` with channel count and frequency taken from the data."""
    config = copy.deepcopy(config)
    config.model.channels = ds.channels
    config.model.freq = ds.freq
    config.model.seed = config.train.seed
    return config.validate()


def window_views(ds: SeriesDataset, config: RunConfig) -> SeriesWindows:
    return SeriesWindows(ds, config.model.lookback, config.model.horizon, split=_split(config),
                         stride=config.train.window_stride, scale=config.train.scale)


def test_metrics(model: PESDTSF, test_set: WindowDataset, batch_size: int) -> Dict[str, object]:
    _, y, y_hat = Predictor(model).predict_all(test_set.batches(batch_size))
    metrics: Dict[str, object] = dict(all_metrics(y, y_hat))
    baselines = naive_baselines(test_set.batches(batch_size))
    metrics["baseline_mse_repeat_last"] = baselines["repeat_last"]["mse"]
    metrics["baseline_mse_mean"] = baselines["global_mean"]["mse"]
    return metrics


def train(ds: SeriesDataset, config: RunConfig, run_dir: Optional[Union[str, Path]] = None,
          force: bool = False, quiet: bool = False, dataset_name: str = "") -> RunResult:
    """Fit on the train split, early-stop on validation, report test metrics."""
    config = bind_dataset(config, ds)
    if run_dir is not None:
        run_dir = persistence.prepare_run_dir(run_dir, force=force)
        persistence.save_config(config, run_dir)
    views = window_views(ds, config)
    train_set, val_set = views.segment("train"), views.segment("val", stride=config.train.eval_stride)
    test_set = views.segment("test", stride=config.train.eval_stride)

    model = PESDTSF(config.model)
    trainer = Trainer(model, config, run_dir=run_dir, quiet=quiet, channel_names=ds.channel_names)
    try:
        fit = trainer.fit(train_set, val_set)
    finally:
        if run_dir is not None:
            persistence.save_table(trainer.steps, run_dir / "steps.csv", columns=persistence.STEP_COLUMNS)

    metrics = test_metrics(model, test_set, config.train.batch_size)
    metrics.update({
        "dataset": dataset_name or Path(config.data).stem,
        "horizon": config.model.horizon,
        "seed": config.train.seed,
        "best_epoch": fit.best_epoch,
        "val_mse": fit.best_val_mse,
    })
    if run_dir is not None:
        persistence.save_table(fit.history, run_dir / "history.csv", columns=persistence.HISTORY_COLUMNS)
        persistence.save_json(metrics, run_dir / "metrics.json")
    logger.info("Test mse=%.6f mae=%.6f (repeat-last %.6f)",
                metrics["mse"], metrics["mae"], metrics["baseline_mse_repeat_last"])
    return RunResult(model=model, config=config, fit=fit, metrics=metrics, run_dir=run_dir)


def evaluate(checkpoint: Union[str, Path], ds: SeriesDataset, config: RunConfig, split: str = "test",
             out: Optional[Union[str, Path]] = None) -> Dict[str, object]:
    """Reload a checkpoint and score it on one split of ``ds``."""
    model, meta = load_checkpoint(checkpoint)
    config = copy.deepcopy(config)
    config.model = copy.deepcopy(model.config)
    if ds.channels != model.config.channels:
        raise ConfigError(f"checkpoint expects {model.config.channels} channels, data has {ds.channels}")
    views = window_views(ds, config)
    metrics = test_metrics(model, views.segment(split, stride=config.train.eval_stride), config.train.batch_size)
    metrics.update({"split": split, "horizon": model.config.horizon, "seed": model.config.seed,
                    "checkpoint_epoch": meta.get("epoch")})
    if out is not None:
        persistence.save_json(metrics, out)
    return metrics


def run_seeds(ds: SeriesDataset, config: RunConfig, seeds: Sequence[int] = (2021, 2022, 2023),
              run_dir: Optional[Union[str, Path]] = None, force: bool = False, quiet: bool = False) -> Dict[str, object]:
    """Repeat a run per seed and summarise test mse/mae as mean and population std."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    root = persistence.prepare_run_dir(run_dir, force=force) if run_dir is not None else None
    rows = []
    for seed in seeds:
        cfg = copy.deepcopy(config)
        cfg.train.seed = int(seed)
        sub = root / f"seed_{seed}" if root is not None else None
        result = train(ds, cfg, run_dir=sub, force=force, quiet=quiet)
        rows.append({"seed": int(seed), "mse": result.metrics["mse"], "mae": result.metrics["mae"],
                     "val_mse": result.fit.best_val_mse})
    mse = np.array([r["mse"] for r in rows])
    mae = np.array([r["mae"] for r in rows])
    summary = {"seeds": [r["seed"] for r in rows], "mse_mean": float(mse.mean()), "mse_std": float(mse.std()),
               "mae_mean": float(mae.mean()), "mae_std": float(mae.std())}
    if root is not None:
        persistence.save_table(rows, root / "seeds.csv", columns=["seed", "mse", "mae", "val_mse"])
        persistence.save_json(summary, root / "seeds_summary.json")
    print(f"[OK] {len(rows)} seeds: mse {summary['mse_mean']:.4f} ± {summary['mse_std']:.4f}")
    return {"rows": rows, "summary": summary}


def _sweep_config(base: RunConfig, parameter: str, value: float) -> RunConfig:
    cfg = copy.deepcopy(base)
    if parameter == "lambda":
        cfg.train.lambda1 = cfg.train.lambda2 = float(value)
    elif parameter == "gamma":
        cfg.model.gamma = float(value)
    elif parameter == "k":
        cfg.model.k_factors = int(value)
    return cfg


def sweep(ds: SeriesDataset, parameter: str, grid: Sequence[float], base: RunConfig,
          run_dir: Optional[Union[str, Path]] = None, force: bool = False, quiet: bool = False) -> List[Dict[str, float]]:
    """One full run per grid value with a shared seed; returns (value, val_mse, ...) rows."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got '{parameter}'")
    if not grid:
        raise ConfigError("sweep grid is empty")
    channels = ds.channels
    root = persistence.prepare_run_dir(run_dir, force=force) if run_dir is not None else None
    rows = []
    for value in grid:
        cfg = _sweep_config(base, parameter, value)
        if parameter == "k":
            k = int(value)
            if not 1 <= k <= 2 * channels:
                raise ConfigError(f"K={k} outside [1, 2C={2 * channels}]")
            if k != 2 * channels and cfg.train.lambda2 > 0:
                logger.warning("K=%d != 2C=%d: running with lambda2=0", k, 2 * channels)
                cfg.train.lambda2 = 0.0
        result = train(ds, cfg, quiet=quiet)
        row = {"value": value, "val_mse": result.fit.best_val_mse, "test_mse": result.metrics["mse"],
               "test_mae": result.metrics["mae"]}
        if parameter == "k" and result.model.rlc is not None:
            views = window_views(ds, result.config)
            z = latent_factors(result.model, views.segment("val").batches(cfg.train.batch_size))
            row["latent_corr"] = mean_off_diagonal(correlation_matrix(z))
        rows.append(row)
        logger.info("sweep %s=%s: val_mse=%.6f", parameter, value, row["val_mse"])
    if root is not None:
        persistence.save_table(rows, root / "sweep.csv")
    return rows


def ablate(ds: SeriesDataset, base: RunConfig, orders: Sequence[str] = (), seeds: Sequence[int] = (),
           run_dir: Optional[Union[str, Path]] = None, force: bool = False, quiet: bool = False) -> List[Dict[str, object]]:
    """Full model, the four component deletions and optional stage orders, seed-averaged."""
    seeds = list(seeds) or [base.train.seed]
    variants = [(name, flags) for name, flags in ABLATIONS.items()]
    variants += [(f"order:{order}", {"order": order}) for order in orders]
    root = persistence.prepare_run_dir(run_dir, force=force) if run_dir is not None else None
    rows = []
    for name, flags in variants:
        mses, maes, vals = [], [], []
        for seed in seeds:
            cfg = copy.deepcopy(base)
            cfg.train.seed = int(seed)
            for key, value in flags.items():
                setattr(cfg.model, key, value)
            result = train(ds, cfg, quiet=quiet)
            mses.append(result.metrics["mse"])
            maes.append(result.metrics["mae"])
            vals.append(result.fit.best_val_mse)
        rows.append({"variant": name, "horizon": base.model.horizon, "mse": float(np.mean(mses)),
                     "mae": float(np.mean(maes)), "val_mse": float(np.mean(vals)), "seeds": len(seeds)})
        print(f"[INFO] {name}: mse={rows[-1]['mse']:.4f} mae={rows[-1]['mae']:.4f}")
    if root is not None:
        persistence.save_table(rows, root / "ablation.csv")
    return rows
