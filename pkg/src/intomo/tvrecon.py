"""TV-penalized reconstruction by gradient descent on a smoothed objective.

Minimizes 0.5 ||A f - y||^2 + lambda * TV_eps(f), where A is the (possibly
truncated) projector and TV_eps uses forward differences with a replicated
boundary. The descent step is 0.9 / L with L = ||A^T A|| (power iteration)
plus the TV curvature bound 8 lambda / eps, which makes the iteration monotone.

With ``accelerate`` the gradient step is taken from a Nesterov extrapolated
point; whenever that would raise the objective the momentum is dropped and a
plain step from the current iterate is taken instead, so the objective is
still non-increasing.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources

import numpy as np

from intomo.projector import Sinogram, radon_adjoint, radon_forward, truncation_mask

log = logging.getLogger(__name__)


class TvDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TvConfig:
    lam: float = 1e-3
    epsilon: float = 1e-2
    max_iters: int = 300
    step: float | str = "auto"
    tol: float = 1e-7
    power_iters: int = 20
    accelerate: bool = True

    def __post_init__(self):
        if self.lam <= 0 or self.epsilon <= 0 or self.tol < 0:
            raise ValueError("lam and epsilon must be positive, tol non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step != "auto" and not float(self.step) > 0:
            raise ValueError("step must be positive or 'auto'")

    @classmethod
    def from_dict(cls, d: dict) -> "TvConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return asdict(self)


def default_tv_config() -> TvConfig:
    """Configuration recorded by the lambda sweep (``data/tv_default.json``)."""
    text = resources.files("intomo").joinpath("data/tv_default.json").read_text()
    return TvConfig.from_dict(json.loads(text)["config"])


def _forward_diffs(f):
    dx = np.zeros_like(f)
    dy = np.zeros_like(f)
    dx[:, :-1] = f[:, 1:] - f[:, :-1]
    dy[:-1, :] = f[1:, :] - f[:-1, :]
    return dx, dy


def tv_value(f: np.ndarray, epsilon: float) -> float:
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    dx, dy = _forward_diffs(f)
    mag = np.sqrt(dx * dx + dy * dy + epsilon * epsilon)
    return float(mag.sum() - epsilon * f.size)


def tv_gradient(f: np.ndarray, epsilon: float) -> np.ndarray:
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0 for a differentiable TV")
    dx, dy = _forward_diffs(f)
    mag = np.sqrt(dx * dx + dy * dy + epsilon * epsilon)
    px = dx / mag
    py = dy / mag
    # minus the divergence of (px, py), transpose of the forward differences
    g = -px - py
    g[:, 1:] += px[:, :-1]
    g[1:, :] += py[:-1, :]
    return g


class _Operator:
    """A = mask * R, with mask = 1 on kept detector columns when data are truncated."""

    def __init__(self, y: Sinogram, n: int, backend=None):
        self.g = y.geometry
        self.n = n
        self.backend = backend
        self.mask = truncation_mask(self.g)[None, :] if y.truncated else None

    def forward(self, f):
        if self.mask is None:
            return radon_forward(f, self.g, self.backend).data
        return radon_forward(f, self.g, self.backend, columns=self.g.kept).data

    def adjoint(self, r):
        if self.mask is not None:
            r = r * self.mask
        return radon_adjoint(Sinogram(r, self.g), self.n, self.backend)


def operator_norm_sq(op: _Operator, iters: int) -> float:
    """Largest eigenvalue of A^T A by power iteration from a constant start."""
    x = np.full((op.n, op.n), 1.0 / op.n)
    lam = 0.0
    for _ in range(iters):
        z = op.adjoint(op.forward(x))
        lam = float(np.linalg.norm(z))
        if lam == 0.0:
            return 0.0
        x = z / lam
    return lam


def tv_objective(op, f, y, cfg: TvConfig) -> float:
    r = op.forward(f) - y
    return 0.5 * float(np.sum(r * r)) + cfg.lam * tv_value(f, cfg.epsilon)


def tv_reconstruct(y: Sinogram, cfg: TvConfig, n: int, history: list | None = None,
                   backend: str | None = None) -> np.ndarray:
    """Full-grid ``n x n`` reconstruction; crop the ROI afterwards.

    ``history``, when given, receives one objective value per iterate
    (including the zero start).
    """
    op = _Operator(y, n, backend)
    data = y.data if op.mask is None else y.data * op.mask
    if cfg.step == "auto":
        lip = operator_norm_sq(op, cfg.power_iters) + cfg.lam * 8.0 / cfg.epsilon
        step = 0.9 / lip
    else:
        step = float(cfg.step)

    def objective(f, r):
        return 0.5 * float(np.sum(r * r)) + cfg.lam * tv_value(f, cfg.epsilon)

    def descend(f, r):
        g = f - step * (op.adjoint(r) + cfg.lam * tv_gradient(f, cfg.epsilon))
        rg = op.forward(g) - data
        return g, rg, objective(g, rg)

    f = np.zeros((n, n))
    r = op.forward(f) - data
    obj = objective(f, r)
    if history is not None:
        history.append(obj)
    # extrapolated point and its residual (A is linear, so residuals extrapolate too)
    z, rz, t = f, r, 1.0
    rises = 0
    for it in range(cfg.max_iters):
        new_f, new_r, new = descend(z, rz) if cfg.accelerate else descend(f, r)
        if cfg.accelerate and new > obj:
            t = 1.0
            new_f, new_r, new = descend(f, r)
        if history is not None:
            history.append(new)
        if not math.isfinite(new):
            raise TvDivergenceError(f"objective became {new} at iteration {it}")
        if new > obj:
            rises += 1
            if rises >= 5:
                raise TvDivergenceError(f"objective increased 5 times in a row (iteration {it})")
        else:
            rises = 0
        if cfg.accelerate:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            z = new_f + beta * (new_f - f)
            rz = new_r + beta * (new_r - r)
            t = t_next
        done = obj > 0 and 0.0 <= obj - new <= cfg.tol * obj
        f, r, obj = new_f, new_r, new
        if done:
            log.debug("tv converged after %d iterations", it + 1)
            break
    return f


def lambda_sweep(y: Sinogram, f_roi: np.ndarray, lams, cfg: TvConfig, n: int,
                 backend: str | None = None):
    """ROI PSNR of the reconstruction for every lambda; returns [(lam, psnr)]."""
    from intomo.fbp import crop_roi
    from intomo.metrics import psnr

    out = []
    for lam in lams:
        f = tv_reconstruct(y, replace(cfg, lam=float(lam)), n, backend=backend)
        out.append((float(lam), psnr(f_roi, crop_roi(f, f_roi.shape[0]))))
    return out


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(history):
            w.writerow([i, repr(v)])
