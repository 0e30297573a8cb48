"""Learning the null-space removal map: dataset synthesis, SGD training, inference.

The network sees the ROI of the truncated-data FBP and is trained to output
the ROI of the ground truth, i.e. minimize sum_i ||f_i - Q(M y_i)||^2 with M
the FBP. Inference is Q(M y) for new truncated data; the measured sinogram
is only ever read.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from intomo.fbp import FilterSpec, crop_roi, fbp_reconstruct
from intomo.metrics import psnr
from intomo.neural.unet import (NetSpec, NetworkParams, he_init, recalibrate_batchnorm,
                                unet_backward, unet_forward)
from intomo.phantom import make_random_phantom, rasterize
from intomo.projector import Geometry, Sinogram, desk_geometry, radon_forward, truncate
from intomo.rng import PCG32

log = logging.getLogger(__name__)

# PCG32 stream selectors, one per independent random sequence
_STREAM_DATA = 101
_STREAM_SHUFFLE = 202

SPLIT_OFFSETS = {"train": 0, "val": 1, "test": 2}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 8
    lr_init: float = 1e-3
    lr_final: float = 1e-5
    weight_decay: float = 1e-4
    momentum: float = 0.9
    seed: int = 0
    n_train: int = 300
    n_val: int = 10
    n_test: int = 10
    image_n: int = 128
    roi_n: int = 64
    min_ellipses: int = 3
    max_ellipses: int = 12
    loss: str = "mean"
    dtype: str = "float32"
    recalibrate_bn: bool = True
    geometry: Geometry | None = None
    net: NetSpec = field(default_factory=NetSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)

    def __post_init__(self):
        if self.geometry is None:
            self.geometry = desk_geometry(self.image_n)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr_final <= self.lr_init:
            raise ValueError("need 0 < lr_final <= lr_init")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.roi_n % 2 ** self.net.stages:
            raise ValueError("roi_n must be divisible by 2**stages")
        if self.loss not in ("mean", "sum"):
            raise ValueError("loss must be 'mean' or 'sum'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def lr_at(self, epoch: int) -> float:
        """Geometric decay from lr_init (first epoch) to lr_final (last epoch)."""
        if self.epochs == 1:
            return self.lr_init
        return self.lr_init * (self.lr_final / self.lr_init) ** (epoch / (self.epochs - 1))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("geometry", "net", "filter")}
        d["geometry"] = self.geometry.to_dict()
        d["net"] = asdict(self.net)
        d["filter"] = asdict(self.filter)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "geometry" in d and d["geometry"] is not None:
            d["geometry"] = Geometry.from_dict(d["geometry"])
        if "net" in d:
            d["net"] = NetSpec(**d["net"])
        if "filter" in d:
            d["filter"] = FilterSpec(**d["filter"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Dataset:
    inputs: np.ndarray    # (N, 1, roi_n, roi_n) ROI of truncated-data FBP
    targets: np.ndarray   # (N, 1, roi_n, roi_n) ROI of the ground truth
    seeds: np.ndarray     # phantom seed per sample
    input_mean: float = 0.0
    input_std: float = 1.0

    def __len__(self):
        return len(self.inputs)


def sample_plan(cfg: TrainConfig, split: str, count: int):
    """(phantom_seed, n_ellipses) for every sample of a split; splits never share seeds."""
    rng = PCG32(cfg.seed * 3 + SPLIT_OFFSETS[split], _STREAM_DATA)
    plan = []
    for i in range(count):
        seed = (cfg.seed << 24) + (SPLIT_OFFSETS[split] << 20) + i
        n_e = cfg.min_ellipses + rng.bounded(cfg.max_ellipses - cfg.min_ellipses + 1)
        plan.append((seed, n_e))
    return plan


def simulate_pair(seed: int, n_ellipses: int, cfg: TrainConfig):
    """Ground truth, truncated sinogram and FBP input for one phantom."""
    f = rasterize(make_random_phantom(seed, n_ellipses), cfg.image_n)
    y_t = truncate(radon_forward(f, cfg.geometry))
    x = fbp_reconstruct(y_t, cfg.filter, cfg.image_n)
    return f, y_t, x


def make_dataset(cfg: TrainConfig, split: str = "train") -> Dataset:
    count = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}[split]
    if count < 1:
        raise ValueError(f"the {split} split is empty")
    inputs = np.empty((count, 1, cfg.roi_n, cfg.roi_n))
    targets = np.empty_like(inputs)
    plan = sample_plan(cfg, split, count)
    for i, (seed, n_e) in enumerate(plan):
        f, _, x = simulate_pair(seed, n_e, cfg)
        inputs[i, 0] = crop_roi(x, cfg.roi_n)
        targets[i, 0] = crop_roi(f, cfg.roi_n)
    return Dataset(inputs, targets, np.array([s for s, _ in plan], dtype=np.int64),
                   float(inputs.mean()), float(inputs.std()))


def attach_pipeline(params: NetworkParams, cfg: TrainConfig) -> NetworkParams:
    params.meta = {"image_n": cfg.image_n, "roi_n": cfg.roi_n, "filter": cfg.filter,
                   "geometry": cfg.geometry}
    return params


def _loss_and_grad(out, target, reduction):
    diff = out - target
    if reduction == "mean":
        return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
    # per-image sum over pixels, averaged over the batch
    n = diff.shape[0]
    return float(np.sum(diff * diff)) / n, (2.0 / n) * diff


def predict(params: NetworkParams, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Infer-mode network output for a stack of ROI images (N, 1, H, W)."""
    dtype = next(iter(params.tensors.values())).dtype
    outs = []
    for i in range(0, len(x), batch_size):
        out, _ = unet_forward(x[i:i + batch_size].astype(dtype), params, "infer")
        outs.append(out.astype(np.float64))
    return np.concatenate(outs)


def train(cfg: TrainConfig, data: Dataset, val: Dataset | None = None,
          history_path=None, progress=None):
    """SGD with momentum on the per-batch MSE; returns (params, history).

    ``history`` is a list of dicts with epoch, lr, train_loss (infer-mode MSE over
    the whole training set after the epoch), batch_loss (mean of the minibatch
    losses) and, when ``val`` is given, val_psnr. With ``cfg.recalibrate_bn`` the
    running statistics are replaced after every epoch by the population
    statistics over the training set; they never affect the updates. Fully
    deterministic for a fixed config.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    dtype = np.dtype(cfg.dtype)
    params = attach_pipeline(he_init(cfg.net, cfg.seed).astype(dtype), cfg)
    learnable = params.learnable()
    velocity = {k: np.zeros_like(params.tensors[k]) for k in learnable}
    decayed = {k for k in learnable if k.endswith(".w")}
    shuffle = PCG32(cfg.seed, _STREAM_SHUFFLE)
    x_all = data.inputs.astype(dtype)
    t_all = data.targets.astype(dtype)
    n = len(data)
    history = []

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle.permutation(n)
        losses = []
        t0 = time.perf_counter()
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            out, cache = unet_forward(x_all[idx], params, "train")
            loss, dout = _loss_and_grad(out, t_all[idx], cfg.loss)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            grads, _ = unet_backward(dout.astype(dtype), cache, params)
            for k in learnable:
                g = grads[k]
                if k in decayed:
                    g = g + cfg.weight_decay * params.tensors[k]
                v = velocity[k]
                v *= cfg.momentum
                v -= lr * g.astype(dtype)
                params.tensors[k] += v
            for k, v in cache["running"].items():
                params.tensors[k] = v.astype(dtype)
            losses.append(loss)
        # batch_loss mixes parameter versions and train-mode batch statistics;
        # train_loss is the objective at the end-of-epoch parameters
        if cfg.recalibrate_bn:
            # momentum-0.9 running stats only remember the last few batches
            params, pred = recalibrate_batchnorm(params, x_all)
        else:
            pred = predict(params, x_all)
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean((pred - t_all) ** 2)),
               "batch_loss": float(np.mean(losses)), "seconds": time.perf_counter() - t0}
        if val is not None:
            pred = predict(params, val.inputs)
            row["val_psnr"] = float(np.mean([psnr(t[0], p[0]) for t, p in zip(val.targets, pred)]))
        history.append(row)
        log.info("epoch %d lr %.3g loss %.4g%s", epoch, lr, row["train_loss"],
                 f" val {row['val_psnr']:.2f} dB" if "val_psnr" in row else "")
        if progress is not None:
            progress(row)
    if history_path is not None:
        write_history(history_path, history)
    return params, history


def write_history(path, history):
    keys = ["epoch", "lr", "train_loss", "batch_loss", "val_psnr", "seconds"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in history:
            w.writerow([repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "")
                        for k in keys])


def infer(params: NetworkParams, y_t: Sinogram) -> np.ndarray:
    """ROI estimate Q(M y_t): FBP, ROI crop, then the network in infer mode."""
    meta = params.meta
    if not meta:
        raise ValueError("params carry no pipeline description (image size, ROI, filter)")
    if not y_t.geometry.same_as(meta["geometry"]):
        raise ValueError("sinogram geometry differs from the training geometry")
    x = crop_roi(fbp_reconstruct(y_t, meta["filter"], meta["image_n"]), meta["roi_n"])
    return predict(params, x[None, None])[0, 0]
