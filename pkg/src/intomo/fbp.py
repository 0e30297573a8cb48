"""Filtered backprojection (the right inverse used everywhere) and truncation baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from intomo import _backend
from intomo.projector import Sinogram


@dataclass(frozen=True)
class FilterSpec:
    """Ramp filter choice. ``padded_len=None`` picks the next power of two >= 2 * n_det."""

    kind: str = "ram-lak"
    padded_len: int | None = None

    def __post_init__(self):
        if self.kind not in ("ram-lak", "hann"):
            raise ValueError(f"unknown filter kind {self.kind!r}")

    def length_for(self, n_det: int) -> int:
        if self.padded_len is None:
            return 1 << max(1, (2 * n_det - 1).bit_length())
        p = self.padded_len
        if p < 2 * n_det or p & (p - 1):
            raise ValueError("padded_len must be a power of two >= 2 * n_det")
        return p


def ramlak_kernel(n_taps: int, ds: float) -> np.ndarray:
    """Band-limited ramp taps h[k], k = -(n_taps-1)..(n_taps-1)."""
    k = np.arange(-(n_taps - 1), n_taps)
    h = np.zeros(k.shape)
    h[k == 0] = 1.0 / (4.0 * ds * ds)
    odd = k % 2 == 1
    h[odd] = -1.0 / (math.pi * k[odd] * ds) ** 2
    return h


def _frequency_response(n_det: int, ds: float, spec: FilterSpec) -> np.ndarray:
    p = spec.length_for(n_det)
    taps = ramlak_kernel(n_det, ds)
    circ = np.zeros(p)
    lags = np.arange(-(n_det - 1), n_det)
    circ[lags % p] = taps
    resp = np.fft.rfft(circ)
    if spec.kind == "hann":
        freq = np.fft.rfftfreq(p)
        resp = resp * (0.5 * (1.0 + np.cos(2.0 * math.pi * freq)))
    return resp


def ramp_filter_rows(y: Sinogram, spec: FilterSpec = FilterSpec()) -> Sinogram:
    """Linear convolution of every view with the ramp kernel, times the detector pitch.

    The pitch factor makes the discrete sum a quadrature of the continuous
    convolution, so a unit impulse row returns ``det_pitch * h``.
    """
    g = y.geometry
    p = spec.length_for(g.n_det)
    resp = _frequency_response(g.n_det, g.det_pitch, spec)
    rows = np.fft.irfft(np.fft.rfft(y.data, n=p, axis=1) * resp, n=p, axis=1)
    return y.with_data(g.det_pitch * rows[:, :g.n_det], truncated=False)


def fbp_reconstruct(y: Sinogram, spec: FilterSpec = FilterSpec(), n: int = 256,
                    backend: str | None = None) -> np.ndarray:
    """Ramp-filter, then backproject with linear detector interpolation, scaled by pi / n_views.

    Truncated input is used as is (zero outside the kept window).
    """
    g = y.geometry
    q = np.ascontiguousarray(ramp_filter_rows(y, spec).data)
    k = _backend.get(backend)
    img = np.asarray(k.backproject(q, np.cos(g.angles), np.sin(g.angles), g.det_pitch, n))
    return img * (math.pi / g.n_views)


def cosine_taper(k, width: int):
    """Half-cosine weight at ``k`` samples past the window edge (1 at k=0, 0 at k=width)."""
    k = np.asarray(k, dtype=np.float64)
    return np.where(k <= width, 0.5 * (1.0 + np.cos(np.pi * np.minimum(k, width) / width)), 0.0)


def extrapolate_sinogram(y: Sinogram, taper_width: int) -> Sinogram:
    """Fill the truncated columns by continuing each row's edge values under a cosine taper."""
    g = y.geometry
    if taper_width < 1:
        raise ValueError("taper_width must be >= 1")
    avail = (g.n_det - g.n_det_kept) // 2
    if taper_width > avail:
        raise ValueError(f"taper_width {taper_width} exceeds the {avail} truncated columns per side")
    kept = g.kept
    data = np.zeros_like(y.data)
    data[:, kept] = y.data[:, kept]
    w = cosine_taper(np.arange(1, avail + 1), taper_width)
    left = y.data[:, kept.start][:, None]
    right = y.data[:, kept.stop - 1][:, None]
    data[:, kept.stop:] = right * w[None, :]
    data[:, :kept.start] = left * w[::-1][None, :]
    return Sinogram(data, g, truncated=False)


def crop_roi(f: np.ndarray, n_roi: int) -> np.ndarray:
    """Centered ``n_roi x n_roi`` crop of the last two axes."""
    n = f.shape[-1]
    if n_roi > n or n_roi < 1:
        raise ValueError("n_roi must be in [1, n]")
    if (n - n_roi) % 2:
        raise ValueError("n - n_roi must be even for a centered crop")
    start = (n - n_roi) // 2
    return f[..., start:start + n_roi, start:start + n_roi].copy()
