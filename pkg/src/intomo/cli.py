"""Command-line front end: ``intomo <subcommand> [options]``.

Images are TensorFiles (``.itom``), sinograms and networks are checkpoints
(``.itck``). Every subcommand takes ``--config`` (a JSON object whose keys
fill in options not given on the command line) and ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time

import numpy as np

from intomo import io as tio
from intomo.fbp import FilterSpec, crop_roi, extrapolate_sinogram, fbp_reconstruct
from intomo.metrics import report, write_reports
from intomo.nullspace import ChordLine, discrete_hilbert, nullspace_sample, random_seed
from intomo.phantom import Phantom, make_random_phantom, make_shepp_logan, rasterize
from intomo.projector import Geometry, desk_geometry, radon_forward, truncate
from intomo.rng import PCG32
from intomo.tvrecon import TvConfig, default_tv_config, lambda_sweep, tv_reconstruct, write_history_csv

log = logging.getLogger("intomo")


class CliError(Exception):
    pass


def _opt(args, cfg, name, default=None):
    """Command-line value, else config value, else ``default``."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _geometry(args, cfg, n) -> Geometry:
    if "geometry" in cfg:
        return Geometry.from_dict(cfg["geometry"])
    return desk_geometry(n, n_views=_opt(args, cfg, "views"))


def _filter(args, cfg) -> FilterSpec:
    return FilterSpec(_opt(args, cfg, "filter", "ram-lak"), cfg.get("padded_len"))


def _save_image(path, img, args):
    tio.write_tensor(path, np.asarray(img, dtype=np.float64))
    if getattr(args, "pgm", None):
        tio.export_pgm(img, args.pgm, tuple(args.window))


# -- subcommands ---------------------------------------------------------------

def cmd_phantom(args, cfg):
    kind = _opt(args, cfg, "kind", "random")
    seed = _opt(args, cfg, "seed", 0)
    if kind == "shepp-logan":
        p = make_shepp_logan()
    else:
        p = make_random_phantom(seed, _opt(args, cfg, "n_ellipses", 8))
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(p.to_json())
    _save_image(args.out, rasterize(p, _opt(args, cfg, "n", 256)), args)


def cmd_project(args, cfg):
    f = tio.read_tensor(args.image)
    y = radon_forward(f, _geometry(args, cfg, f.shape[0]))
    tio.write_sinogram(args.out, y)


def cmd_truncate(args, cfg):
    tio.write_sinogram(args.out, truncate(tio.read_sinogram(args.sino)))


def cmd_fbp(args, cfg):
    y = tio.read_sinogram(args.sino)
    img = fbp_reconstruct(y, _filter(args, cfg), _opt(args, cfg, "n", 256))
    roi = _opt(args, cfg, "roi")
    _save_image(args.out, crop_roi(img, roi) if roi else img, args)


def cmd_extrapolate(args, cfg):
    y = tio.read_sinogram(args.sino)
    tio.write_sinogram(args.out, extrapolate_sinogram(y, _opt(args, cfg, "taper", 16)))


def cmd_nullspace_demo(args, cfg):
    mu = _opt(args, cfg, "mu", 0.5)
    chord = ChordLine(_opt(args, cfg, "v", 0.0), mu, _opt(args, cfg, "half_length", 64.0),
                      _opt(args, cfg, "du", 0.01))
    seed = random_seed(chord, PCG32(_opt(args, cfg, "seed", 0)))
    g = nullspace_sample(chord, seed)
    hg = discrete_hilbert(g)
    inner = chord.interior(0.9)
    resid = float(np.max(np.abs(hg + seed.psi)[inner]) / np.max(np.abs(seed.psi)))
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["u", "psi", "g", "Hg", "Hg_plus_psi", "in_interval"])
        for row in zip(chord.u, seed.psi, g, hg, hg + seed.psi, chord.interior()):
            wr.writerow([repr(float(x)) for x in row[:5]] + [int(row[5])])
    print(f"max |Hg + psi| / max |psi| on inner 90% of I(v): {resid:.3e}")


def cmd_tv(args, cfg):
    y = tio.read_sinogram(args.sino)
    n = _opt(args, cfg, "n", 128)
    tv_cfg = TvConfig.from_dict(cfg["tv"]) if "tv" in cfg else default_tv_config()
    if args.iters is not None:
        tv_cfg = TvConfig.from_dict({**tv_cfg.to_dict(), "max_iters": args.iters})
    if args.sweep:
        if not args.truth:
            raise CliError("--sweep needs --truth (ground-truth image)")
        roi = _opt(args, cfg, "roi", n // 2)
        truth = crop_roi(tio.read_tensor(args.truth), roi)
        lams = cfg.get("lambdas", [float(10.0 ** e) for e in np.arange(-4.0, -0.99, 0.5)])
        rows = lambda_sweep(y, truth, lams, tv_cfg, n)
        best = max(rows, key=lambda r: r[1])
        with open(args.out, "w") as fh:
            json.dump({"config": {**tv_cfg.to_dict(), "lam": best[0]},
                       "sweep": [{"lambda": l, "roi_psnr": p} for l, p in rows]}, fh, indent=1)
        for lam, p in rows:
            print(f"lambda {lam:.3g}  ROI PSNR {p:.2f} dB")
        return
    history = [] if args.history else None
    img = tv_reconstruct(y, tv_cfg, n, history=history)
    if args.history:
        write_history_csv(args.history, history)
    roi = _opt(args, cfg, "roi")
    _save_image(args.out, crop_roi(img, roi) if roi else img, args)


def _train_config(args, cfg):
    from intomo.trainer import TrainConfig
    d = dict(cfg.get("train", cfg))
    d.pop("config", None)
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        d["epochs"] = args.epochs
    return TrainConfig.from_dict(d)


def _dataset_entries(ds):
    return [("inputs", ds.inputs), ("targets", ds.targets), ("seeds", ds.seeds.astype(np.float64))]


def cmd_make_dataset(args, cfg):
    from intomo.trainer import make_dataset
    ds = make_dataset(_train_config(args, cfg), args.split)
    tio.write_checkpoint(args.out, _dataset_entries(ds))


def _load_dataset(path):
    from intomo.trainer import Dataset
    e = tio.read_checkpoint(path)
    return Dataset(e["inputs"], e["targets"], e["seeds"].astype(np.int64))


def cmd_train(args, cfg):
    from intomo.trainer import make_dataset, train
    tc = _train_config(args, cfg)
    data = _load_dataset(args.data) if args.data else make_dataset(tc, "train")
    val = _load_dataset(args.val) if args.val else make_dataset(tc, "val")
    params, _ = train(tc, data, val, history_path=args.history,
                      progress=lambda r: print(f"epoch {r['epoch']:3d}  loss {r['train_loss']:.5f}"
                                               f"  val {r.get('val_psnr', float('nan')):.2f} dB",
                                               flush=True))
    tio.write_params(args.out, params)


def cmd_infer(args, cfg):
    from intomo.trainer import infer
    params = tio.read_params(args.params)
    _save_image(args.out, infer(params, tio.read_sinogram(args.sino)), args)


def cmd_eval(args, cfg):
    ref = tio.read_tensor(args.ref)
    rows, images = [], []
    for item in args.test:
        label, _, path = item.rpartition("=")
        img = tio.read_tensor(path)
        if img.shape != ref.shape:
            raise CliError(f"{path}: shape {img.shape} differs from reference {ref.shape}")
        rows.append((label or path, report(ref, img, _opt(args, cfg, "peak", 1.0))))
        images.append((label or path, img))
    write_reports(args.out, rows)
    for label, r in rows:
        print(f"{label}: PSNR {r.psnr_db:.4f} dB  NMSE {r.nmse:.6g}")
    if args.profile_out:
        row = _opt(args, cfg, "row", ref.shape[0] // 2)
        with open(args.profile_out, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["column", "reference"] + [label for label, _ in images])
            for j in range(ref.shape[1]):
                wr.writerow([j, repr(float(ref[row, j]))] + [repr(float(im[row, j])) for _, im in images])


def cmd_bench(args, cfg):
    from intomo import _backend
    from intomo.neural.unet import NetSpec, he_init
    from intomo.trainer import predict

    n = _opt(args, cfg, "n", 128)
    roi = _opt(args, cfg, "roi", n // 2)
    reps = _opt(args, cfg, "repeats", 3)
    g = desk_geometry(n)
    f = rasterize(make_random_phantom(_opt(args, cfg, "seed", 0), 8), n)
    y_t = truncate(radon_forward(f, g))
    tv_cfg = TvConfig.from_dict(cfg["tv"]) if "tv" in cfg else default_tv_config()
    params = he_init(NetSpec(), 0).astype(np.float32)

    def timed(fn):
        best = math.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        return best

    rows = []
    backends = ["cython", "python"] if _backend.available("cython") else ["python"]
    for b in backends:
        rows.append((f"radon_forward[{b}]", timed(lambda: radon_forward(f, g, backend=b))))
        rows.append((f"fbp[{b}]", timed(lambda: fbp_reconstruct(y_t, n=n, backend=b))))
    rows.append(("tv_reconstruct", timed(lambda: tv_reconstruct(y_t, tv_cfg, n))))
    rows.append(("fbp+unet infer", timed(lambda: predict(
        params, crop_roi(fbp_reconstruct(y_t, n=n), roi)[None, None]))))
    print(f"{'step':28s} seconds")
    for name, sec in rows:
        print(f"{name:28s} {sec:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "seconds"])
            wr.writerows((name, repr(sec)) for name, sec in rows)


# -- parser --------------------------------------------------------------------

def _image_out(p):
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also export a 16-bit PGM")
    p.add_argument("--window", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="intomo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=fn)
        return p

    p = add("phantom", cmd_phantom, "generate and rasterize a phantom")
    p.add_argument("--kind", choices=["random", "shepp-logan"])
    p.add_argument("--n-ellipses", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--json-out", help="write the ellipse description")
    _image_out(p)

    p = add("project", cmd_project, "forward-project an image")
    p.add_argument("--image", required=True)
    p.add_argument("--views", type=int)
    p.add_argument("--out", required=True)

    p = add("truncate", cmd_truncate, "keep only the central detector window")
    p.add_argument("--sino", required=True)
    p.add_argument("--out", required=True)

    p = add("fbp", cmd_fbp, "filtered backprojection")
    p.add_argument("--sino", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--roi", type=int, help="crop the centered ROI of this size")
    p.add_argument("--filter", choices=["ram-lak", "hann"])
    _image_out(p)

    p = add("extrapolate", cmd_extrapolate, "cosine-taper extrapolation of truncated data")
    p.add_argument("--sino", required=True)
    p.add_argument("--taper", type=int)
    p.add_argument("--out", required=True)

    p = add("nullspace-demo", cmd_nullspace_demo, "build a null-space sample on one chord")
    p.add_argument("--mu", type=float)
    p.add_argument("--v", type=float)
    p.add_argument("--half-length", type=float)
    p.add_argument("--du", type=float)
    p.add_argument("--out", required=True, help="CSV with u, psi, g, Hg")

    p = add("tv", cmd_tv, "TV-penalized reconstruction (or lambda sweep)")
    p.add_argument("--sino", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--roi", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--history", help="per-iteration objective CSV")
    p.add_argument("--sweep", action="store_true", help="sweep lambda, write the best config JSON")
    p.add_argument("--truth", help="ground-truth image for --sweep")
    _image_out(p)

    p = add("make-dataset", cmd_make_dataset, "synthesize training pairs")
    p.add_argument("--split", choices=["train", "val", "test"], default="train")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the U-Net")
    p.add_argument("--data")
    p.add_argument("--val")
    p.add_argument("--epochs", type=int)
    p.add_argument("--history", help="per-epoch CSV")
    p.add_argument("--out", required=True)

    p = add("infer", cmd_infer, "ROI reconstruction with a trained network")
    p.add_argument("--params", required=True)
    p.add_argument("--sino", required=True)
    _image_out(p)

    p = add("eval", cmd_eval, "PSNR/NMSE table and cut profile")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True, nargs="+", help="[label=]path")
    p.add_argument("--row", type=int, help="cut-profile row (default: center)")
    p.add_argument("--peak", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--profile-out")

    p = add("bench", cmd_bench, "timing table")
    p.add_argument("--n", type=int)
    p.add_argument("--roi", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = {}
        if args.config:
            with open(args.config) as fh:
                cfg = json.load(fh)
            if not isinstance(cfg, dict):
                raise CliError("config must be a JSON object")
        args.func(args, cfg)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as e:
        print(f"intomo {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
