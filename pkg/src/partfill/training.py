"""Dataset handling, the training loop, and checkpointed runs.

A full run is a pure function of (dataset, config): every random draw comes
from a seed derived from (config.seed, a stream tag, epoch, item index), so
reruns and save/resume continuations are bitwise identical.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cloudio import load_cloud_bin, load_cloud_xyz
from .mesh import load_mesh, normalize_mesh, sample_surface
from .models import CompletionModel, build_model, joint_loss, load_model, save_model
from .metrics import emd_gradient
from .nn import adam_step, clip_grad_norm, zero_grads
from .sampling import make_sample
from .toyshapes import KINDS, toy_cloud

# stream tags keeping the derived seed spaces disjoint
TAG_SAMPLE = 0
TAG_SHUFFLE = 1
TAG_DECODE = 2
TAG_MERGE = 3
TAG_SURFACE = 4
TAG_EVAL = 5


class ConfigError(ValueError):
    """Invalid training configuration; message lists every problem found."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 200
    batch_size: int = 64
    radius: float = 0.35
    decoder: str = "mbd"  # mlp | mbd
    mu: float = 1.0
    seed: int = 0
    sampling_method: str = "ifps"  # ifps | mds
    checkpoint_every: int = 50
    # data source & outputs
    data: str = "toy"  # "toy" or a manifest CSV path
    toy_shapes: int = 4
    out_dir: str = "runs/default"
    # numerics
    precision: str = "float64"  # float64 | float32
    emd_eps: float = 0.002  # final auction epsilon for the training loss
    emd_eps_start: float = 0.5
    grad_clip: float = 0.0  # 0 disables clipping
    mds_sigma: float = 0.05
    loss_workers: int = 2  # threads for the per-sample loss solves

    def validate(self) -> list[str]:
        """Return every problem with this config (empty list when valid)."""
        errors = []
        if self.lr <= 0:
            errors.append(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            errors.append(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0.0 < self.radius < 1.0:
            errors.append(f"radius must lie in (0, 1), got {self.radius}")
        if self.decoder not in ("mlp", "mbd"):
            errors.append(f"decoder must be 'mlp' or 'mbd', got {self.decoder!r}")
        if self.mu <= 0:
            errors.append(f"mu must be positive, got {self.mu}")
        if self.seed < 0:
            errors.append(f"seed must be a non-negative 64-bit integer, got {self.seed}")
        if self.sampling_method not in ("ifps", "mds"):
            errors.append(f"sampling_method must be 'ifps' or 'mds', got {self.sampling_method!r}")
        if self.checkpoint_every < 1:
            errors.append(f"checkpoint_every must be at least 1, got {self.checkpoint_every}")
        if self.toy_shapes < 1:
            errors.append(f"toy_shapes must be at least 1, got {self.toy_shapes}")
        if self.precision not in ("float64", "float32"):
            errors.append(f"precision must be 'float64' or 'float32', got {self.precision!r}")
        if self.emd_eps <= 0:
            errors.append(f"emd_eps must be positive, got {self.emd_eps}")
        if self.emd_eps_start <= 0:
            errors.append(f"emd_eps_start must be positive, got {self.emd_eps_start}")
        if self.grad_clip < 0:
            errors.append(f"grad_clip must be non-negative, got {self.grad_clip}")
        if self.mds_sigma <= 0:
            errors.append(f"mds_sigma must be positive, got {self.mds_sigma}")
        if self.loss_workers < 1:
            errors.append(f"loss_workers must be at least 1, got {self.loss_workers}")
        return errors


_BOOLABLE = {"true": True, "false": False, "1": True, "0": False}


def parse_config_file(path) -> TrainConfig:
    """Read a flat `key = value` config file (# starts a comment)."""
    values = {}
    errors = []
    known = {f.name: f for f in fields(TrainConfig)}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                errors.append(f"{path}:{lineno}: unknown key {key!r}")
                continue
            try:
                values[key] = _coerce(known[key].type, value)
            except ValueError:
                errors.append(f"{path}:{lineno}: bad value for {key}: {value!r}")
    if errors:
        raise ConfigError("\n".join(errors))
    return TrainConfig(**values)


def _coerce(type_name: str, value: str):
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value


@dataclass
class Dataset:
    """Normalized 8192-point clouds with category and split tags."""

    clouds: list = field(default_factory=list)
    categories: list = field(default_factory=list)
    splits: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.clouds)

    def filter_split(self, split: str) -> "Dataset":
        keep = [i for i, s in enumerate(self.splits) if s == split]
        return Dataset(
            clouds=[self.clouds[i] for i in keep],
            categories=[self.categories[i] for i in keep],
            splits=[self.splits[i] for i in keep],
        )


def generate_toy_dataset(n_shapes: int, seed: int) -> Dataset:
    """Procedural stand-in dataset: shapes cycle sphere/box/cylinder/torus.

    Every fifth shape is tagged 'test' (deterministic 80/20 by index), so
    small datasets of up to four shapes are all 'train'.
    """
    if n_shapes < 1:
        raise ValueError(f"n_shapes must be at least 1, got {n_shapes}")
    ds = Dataset()
    for i in range(n_shapes):
        kind = KINDS[i % len(KINDS)]
        rng = np.random.default_rng([seed, TAG_SURFACE, i])
        ds.clouds.append(toy_cloud(kind, rng))
        ds.categories.append(kind)
        ds.splits.append("train" if i % 5 < 4 else "test")
    return ds


def load_manifest_dataset(manifest_path, n_points: int = 8192, seed: int = 0) -> Dataset:
    """Load a dataset from a manifest CSV with columns path, category, split.

    Paths are relative to the manifest. Mesh rows (.off/.obj) are normalized
    and surface-sampled; cloud rows (.bin/.xyz) are loaded as-is and must
    already be normalized (inside the unit sphere) with `n_points` points.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    ds = Dataset()
    with open(manifest_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"path", "category", "split"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{manifest_path}: manifest needs columns path, category, split")
        for i, row in enumerate(reader):
            path = root / row["path"]
            suffix = path.suffix.lower()
            if suffix in (".off", ".obj"):
                mesh = normalize_mesh(load_mesh(path))
                cloud = sample_surface(mesh, n_points, [seed, TAG_SURFACE, i])
            elif suffix == ".bin":
                cloud, _ = load_cloud_bin(path)
            elif suffix == ".xyz":
                cloud, _ = load_cloud_xyz(path)
            else:
                raise ValueError(f"{manifest_path}: unsupported dataset entry {path}")
            if len(cloud) != n_points:
                raise ValueError(f"{path}: expected {n_points} points, got {len(cloud)}")
            max_norm = float(np.linalg.norm(cloud, axis=1).max())
            if max_norm > 1.0 + 1e-6:
                raise ValueError(f"{path}: cloud is not normalized (max point norm {max_norm:.6f})")
            ds.clouds.append(cloud)
            ds.categories.append(row["category"])
            ds.splits.append(row["split"])
    if len(ds) == 0:
        raise ValueError(f"{manifest_path}: empty dataset")
    return ds


def load_dataset_for_config(config: TrainConfig) -> Dataset:
    if config.data == "toy":
        return generate_toy_dataset(config.toy_shapes, config.seed)
    return load_manifest_dataset(config.data)


@dataclass
class EpochStats:
    loss_total: float
    loss_missing: float
    loss_refined: float


def run_epoch(model: CompletionModel, dataset: Dataset, config: TrainConfig, epoch_index: int) -> EpochStats:
    """One pass over the dataset: fresh sphere splits, shuffled batches,
    forward, joint loss, backward, ADAM step. Returns per-sample mean losses."""
    n = len(dataset)
    order = np.random.default_rng([config.seed, TAG_SHUFFLE, epoch_index]).permutation(n)
    dtype = np.float64 if config.precision == "float64" else np.float32
    params = model.params()
    sum_missing = sum_refined = 0.0
    for start in range(0, n, config.batch_size):
        batch = order[start : start + config.batch_size]
        samples = [
            make_sample(dataset.clouds[i], config.radius, [config.seed, TAG_SAMPLE, epoch_index, int(i)])
            for i in batch
        ]
        partial = np.stack([s.partial for s in samples]).astype(dtype)
        missing_gt = [s.missing for s in samples]
        complete_gt = [s.complete for s in samples]
        ctx = model.forward_batch(
            partial,
            train=True,
            decode_seed=[config.seed, TAG_DECODE, epoch_index, start],
            merge_seeds=[[config.seed, TAG_MERGE, epoch_index, int(i)] for i in batch],
        )
        B = len(batch)
        grad_missing = np.zeros_like(ctx.missing_pred)
        grad_refined = np.zeros_like(ctx.refined)
        # the auction kernel releases the GIL, so per-sample loss solves can
        # overlap; results are joined in sample order, keeping runs bitwise
        # independent of the worker count
        with ThreadPoolExecutor(max_workers=config.loss_workers) as pool:
            futures = [
                pool.submit(
                    joint_loss,
                    ctx.missing_pred[b],
                    missing_gt[b],
                    ctx.refined[b],
                    complete_gt[b],
                    eps=config.emd_eps,
                    eps_start=config.emd_eps_start,
                )
                for b in range(B)
            ]
            batch_losses = [f.result() for f in futures]
        for b, losses in enumerate(batch_losses):
            grad_missing[b] = emd_gradient(ctx.missing_pred[b], missing_gt[b], losses.missing_match) / B
            grad_refined[b] = emd_gradient(ctx.refined[b], complete_gt[b], losses.refined_match) / B
            sum_missing += losses.missing
            sum_refined += losses.refined
        zero_grads(params)
        model.backward_batch(ctx, grad_missing, grad_refined)
        if config.grad_clip > 0:
            clip_grad_norm(params, config.grad_clip)
        adam_step(params, lr=config.lr)
        zero_grads(params)
    mean_missing = sum_missing / n
    mean_refined = sum_refined / n
    # total derived from the parts, so the decomposition holds exactly
    return EpochStats(mean_missing + mean_refined, mean_missing, mean_refined)


LOG_HEADER = "epoch,loss_total,loss_missing,loss_refined,seconds"


def save_checkpoint(path, model: CompletionModel, config: TrainConfig, epochs_completed: int) -> None:
    save_model(path, model, {"config": asdict(config), "epochs_completed": int(epochs_completed)})


def load_checkpoint(path):
    """Returns (model, config stored at save time, epochs completed)."""
    model, meta = load_model(path)
    config = TrainConfig(**meta.get("config", {}))
    return model, config, int(meta.get("epochs_completed", 0))


def train(config: TrainConfig, resume_path=None, log=print):
    """Run (or resume) a full training; returns (model, per-epoch stats list).

    Writes an append-only CSV log and periodic checkpoints under
    config.out_dir. Resuming from a checkpoint continues the exact run the
    checkpoint interrupted, because all sampling seeds derive from
    (config.seed, epoch, item) rather than from mutable RNG state.
    """
    errors = config.validate()
    if errors:
        raise ConfigError("\n".join(errors))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset_for_config(config).filter_split("train")
    if len(dataset) == 0:
        raise ValueError("training dataset has no 'train' shapes")

    start_epoch = 0
    if resume_path is not None:
        model, saved_config, start_epoch = load_checkpoint(resume_path)
        if saved_config.decoder != config.decoder:
            log(
                f"warning: checkpoint was trained with decoder '{saved_config.decoder}', "
                f"ignoring requested '{config.decoder}' (the checkpoint manifest wins)"
            )
        config = saved_config
    else:
        model = build_model(
            seed=config.seed,
            decoder=config.decoder,
            mu=config.mu,
            sampling_method=config.sampling_method,
            mds_sigma=config.mds_sigma,
            precision=config.precision,
        )

    log_path = out_dir / "train_log.csv"
    if not log_path.exists():
        log_path.write_text(LOG_HEADER + "\n", encoding="utf-8")

    stats_history = []
    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        stats = run_epoch(model, dataset, config, epoch)
        seconds = time.perf_counter() - t0
        stats_history.append(stats)
        with open(log_path, "a", encoding="utf-8") as handle:
            handle.write(
                f"{epoch},{stats.loss_total!r},{stats.loss_missing!r},{stats.loss_refined!r},{seconds:.3f}\n"
            )
        log(
            f"epoch {epoch + 1}/{config.epochs}: total {stats.loss_total:.6f} "
            f"(missing {stats.loss_missing:.6f}, refined {stats.loss_refined:.6f}) [{seconds:.1f}s]"
        )
        done = epoch + 1
        if done % config.checkpoint_every == 0 or done == config.epochs:
            save_checkpoint(out_dir / f"checkpoint_{done:05d}.ckpt", model, config, done)
    save_checkpoint(out_dir / "model.ckpt", model, config, config.epochs)
    return model, stats_history
