"""PSNR and NMSE for [0, 1] images."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

PSNR_CAP = 99.0


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    nmse: float
    n_pixels: int


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {test.shape}")
    return ref, test


def psnr(ref, test, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); MSE = 0 returns the 99 dB cap."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    ref, test = _pair(ref, test)
    mse = float(np.mean((test - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def nmse(ref, test) -> float:
    """||test - ref||^2 / ||ref||^2."""
    ref, test = _pair(ref, test)
    denom = float(np.sum(ref ** 2))
    if denom == 0.0:
        raise ValueError("reference image is all zero")
    return float(np.sum((test - ref) ** 2)) / denom


def report(ref, test, peak: float = 1.0) -> MetricReport:
    return MetricReport(psnr(ref, test, peak), nmse(ref, test), int(np.size(ref)))


def write_reports(path, rows):
    """CSV with one ``label, psnr_db, nmse, n_pixels`` line per (label, MetricReport)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "psnr_db", "nmse", "n_pixels"])
        for label, r in rows:
            w.writerow([label, repr(r.psnr_db), repr(r.nmse), r.n_pixels])
