"""Null space of the truncated Radon transform along chord lines.

Along a chord at offset v the interior data constrain the Hilbert transform
of the image only on I(v) = {u : u^2 + v^2 <= mu^2}. Any

    g(u) = -1/pi * integral_{u' not in I(v)} psi(u') / (u - u') du'

has H g = psi, which vanishes on I(v): g is invisible to the data there.
Hilbert convention: Hf(u) = p.v. 1/pi * integral f(u') / (u - u') du', so that
H cos = sin and H H = -I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from intomo.fbp import FilterSpec, crop_roi, fbp_reconstruct
from intomo.projector import Geometry, radon_forward, truncate


def discrete_hilbert(f, pad: int = 2) -> np.ndarray:
    """Hilbert transform by the -i sgn(omega) multiplier on a zero-padded FFT.

    ``pad`` is the minimum padding factor; the FFT length is the next power
    of two >= pad * len(f). ``pad=1`` gives the periodic (unpadded) transform.
    """
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[-1]
    if n < 8:
        raise ValueError("signal must have at least 8 samples")
    if pad < 1:
        raise ValueError("pad must be >= 1")
    p = n if pad == 1 else 1 << (pad * n - 1).bit_length()
    spec = np.fft.fft(f, n=p, axis=-1)
    mult = -1j * np.sign(np.fft.fftfreq(p))
    if p % 2 == 0:
        mult[p // 2] = 0.0
    return np.real(np.fft.ifft(spec * mult, axis=-1))[..., :n]


@dataclass(frozen=True)
class ChordLine:
    """Chord parallel to the x axis at offset ``v``, sampled on [-half_length, half_length]."""

    v: float
    mu: float
    half_length: float
    du: float

    def __post_init__(self):
        if not abs(self.v) < self.mu:
            raise ValueError("chord must cross the field of view (|v| < mu)")
        if self.half_length <= self.mu_v:
            raise ValueError("grid must extend past the interval I(v)")

    @property
    def mu_v(self) -> float:
        return math.sqrt(self.mu ** 2 - self.v ** 2)

    @property
    def u(self) -> np.ndarray:
        m = int(round(self.half_length / self.du))
        return np.arange(-m, m + 1) * self.du

    def interior(self, fraction: float = 1.0) -> np.ndarray:
        """Mask of grid points within ``fraction`` of I(v)."""
        return np.abs(self.u) <= fraction * self.mu_v


@dataclass(frozen=True)
class NullSeed:
    psi: np.ndarray

    def check(self, chord: ChordLine, guard: int = 2):
        psi = np.asarray(self.psi)
        if psi.shape != chord.u.shape:
            raise ValueError("psi must be sampled on the chord grid")
        limit = chord.mu_v + guard * chord.du
        bad = (np.abs(chord.u) < limit) & (psi != 0)
        if bad.any():
            raise ValueError("psi support must stay a guard gap outside I(v)")


def gaussian_seed(chord: ChordLine, center: float, width: float, amplitude: float = 1.0,
                  cutoff: float = 6.0) -> NullSeed:
    """Gaussian bump cut to zero beyond ``cutoff`` widths."""
    u = chord.u
    z = (u - center) / width
    psi = np.where(np.abs(z) <= cutoff, amplitude * np.exp(-0.5 * z * z), 0.0)
    return NullSeed(psi)


def random_seed(chord: ChordLine, rng, max_bumps: int = 1) -> NullSeed:
    """Sum of 1..max_bumps Gaussian bumps on either side of I(v), each cut off outside it.

    The chord grid is finite, so g's 1/u tail beyond it is lost; its effect on
    H g inside I(v) grows with the seed's mass, which the narrow widths keep small.
    """
    psi = np.zeros_like(chord.u)
    for _ in range(1 + rng.bounded(max_bumps)):
        width = rng.uniform_range(0.02, 0.05)
        center = chord.mu_v + 6.0 * width + rng.uniform_range(0.1, 0.5) * chord.mu
        if rng.uniform() < 0.5:
            center = -center
        psi += gaussian_seed(chord, center, width, rng.uniform_range(0.5, 2.0)).psi
    return NullSeed(psi)


def nullspace_sample(chord: ChordLine, seed: NullSeed) -> np.ndarray:
    """g = -(1/pi) p.v. integral psi(u') / (u - u') du' on the chord grid.

    Composite trapezoid rule over the support of psi. On I(v) the integrand is
    regular; where u hits a support node the singular node is dropped and its
    regular-part value -psi'(u) du is added back (central difference).
    """
    seed.check(chord)
    u = chord.u
    du = chord.du
    psi = np.asarray(seed.psi, dtype=np.float64)
    g = np.zeros_like(u)
    support = np.nonzero(psi)[0]
    for k in support:
        diff = u - u[k]
        diff[k] = np.inf
        g += psi[k] / diff
    g *= du
    dpsi = np.gradient(psi, du)
    g[support] -= du * dpsi[support]
    return -g / math.pi


def second_difference_bound(chord: ChordLine, seed: NullSeed) -> float:
    """Upper bound on |g''| over I(v): 2 ||psi||_1 / (pi gap^3)."""
    psi = np.asarray(seed.psi)
    gap = np.min(np.abs(chord.u[psi != 0])) - chord.mu_v
    return 2.0 * np.sum(np.abs(psi)) * chord.du / (math.pi * gap ** 3)


def make_cupping_image(f_star: np.ndarray, g: Geometry, spec: FilterSpec = FilterSpec(),
                       n_roi: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """ROI of the truncated-data FBP and its error against ``f_star``.

    The error is the empirical null-space (cupping) component plus the ordinary
    FBP discretization error.
    """
    n = f_star.shape[0]
    n_roi = n // 2 if n_roi is None else n_roi
    recon = fbp_reconstruct(truncate(radon_forward(f_star, g)), spec, n)
    recon_roi = crop_roi(recon, n_roi)
    return recon_roi, recon_roi - crop_roi(f_star, n_roi)


def low_frequency_fraction(img: np.ndarray, cutoff: float = 0.125) -> float:
    """Share of spectral energy at radial frequency below ``cutoff`` cycles/pixel.

    Nyquist is 0.5, so the default is a quarter of Nyquist.
    """
    spec = np.abs(np.fft.fft2(img)) ** 2
    fy = np.fft.fftfreq(img.shape[0])[:, None]
    fx = np.fft.fftfreq(img.shape[1])[None, :]
    low = np.hypot(fx, fy) < cutoff
    total = spec.sum()
    return float(spec[low].sum() / total) if total > 0 else 1.0


def ring_averages(img: np.ndarray, n_rings: int) -> np.ndarray:
    """Mean value over concentric rings out to the inscribed circle of ``img``."""
    n = img.shape[0]
    c = (np.arange(n) - (n - 1) / 2)
    r = np.hypot(c[None, :], c[:, None]) / (n / 2)
    edges = np.linspace(0.0, 1.0, n_rings + 1)
    idx = np.digitize(r, edges) - 1
    return np.array([img[idx == k].mean() for k in range(n_rings)])
