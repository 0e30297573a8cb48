"""Parallel-beam Radon transform with detector truncation, and its exact transpose.

Images are square ``(n, n)`` float arrays covering [-1, 1]^2; row index runs
along y, column index along x. A sinogram row is one view angle theta, its
columns are detector offsets s_m = (m - (n_det - 1) / 2) * det_pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from intomo import _backend

# Paper-scale acquisition: 736 detectors of which the central 350 are kept.
PAPER_N_DET = 736
PAPER_N_DET_KEPT = 350


@dataclass
class Geometry:
    """Parallel-beam acquisition geometry.

    ``n_det_kept`` is the width of the centered detector window that survives
    truncation; the field-of-view radius is ``mu = n_det_kept / 2 * det_pitch``.
    """

    n_views: int
    n_det: int
    det_pitch: float
    n_det_kept: int
    angles: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.angles is None:
            self.angles = np.arange(self.n_views) * (math.pi / self.n_views)
        self.angles = np.ascontiguousarray(self.angles, dtype=np.float64)
        if self.angles.shape != (self.n_views,):
            raise ValueError("angles must have n_views entries")
        if self.n_det % 2 or self.n_det_kept % 2:
            raise ValueError("n_det and n_det_kept must be even")
        if not 0 < self.n_det_kept <= self.n_det:
            raise ValueError("need 0 < n_det_kept <= n_det")
        if self.det_pitch <= 0:
            raise ValueError("det_pitch must be positive")
        # full coverage of the [-1, 1]^2 diagonal, with rounding slack
        if self.det_pitch * self.n_det < 2 * math.sqrt(2) * (1 - 1e-12):
            raise ValueError("detector does not cover the image domain")

    @property
    def mu(self) -> float:
        return self.n_det_kept / 2 * self.det_pitch

    @property
    def s(self) -> np.ndarray:
        return (np.arange(self.n_det) - (self.n_det - 1) / 2) * self.det_pitch

    @property
    def kept(self) -> slice:
        start = (self.n_det - self.n_det_kept) // 2
        return slice(start, start + self.n_det_kept)

    @property
    def is_truncating(self) -> bool:
        return self.n_det_kept < self.n_det

    def untruncated(self) -> "Geometry":
        return Geometry(self.n_views, self.n_det, self.det_pitch, self.n_det, self.angles.copy())

    def same_as(self, other: "Geometry") -> bool:
        return (self.n_views == other.n_views and self.n_det == other.n_det
                and self.det_pitch == other.det_pitch
                and self.n_det_kept == other.n_det_kept
                and np.array_equal(self.angles, other.angles))

    def to_dict(self) -> dict:
        return {"n_views": self.n_views, "n_det": self.n_det, "det_pitch": self.det_pitch,
                "n_det_kept": self.n_det_kept, "angles": self.angles.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        if "image_n" in d and "n_det" not in d:
            return desk_geometry(d["image_n"], n_views=d.get("n_views"))
        angles = d.get("angles")
        return cls(int(d["n_views"]), int(d["n_det"]), float(d["det_pitch"]),
                   int(d["n_det_kept"]), None if angles is None else np.asarray(angles))


def _even(x: float) -> int:
    return 2 * int(round(x / 2))


def desk_geometry(n: int, n_views: int | None = None, truncate: bool = True) -> Geometry:
    """The 736/350 detector setup scaled to an ``n x n`` image.

    At n=256 this gives 368 detectors, 176 kept and 360 views over [0, pi).
    """
    n_det = _even(n * 368 / 256)
    kept = _even(n_det * PAPER_N_DET_KEPT / PAPER_N_DET) if truncate else n_det
    if n_views is None:
        n_views = int(round(360 * n / 256))
    return Geometry(n_views, n_det, 2 * math.sqrt(2) / n_det, kept)


@dataclass
class Sinogram:
    data: np.ndarray
    geometry: Geometry
    truncated: bool = False

    def __post_init__(self):
        g = self.geometry
        if self.data.shape != (g.n_views, g.n_det):
            raise ValueError(f"sinogram shape {self.data.shape} does not match geometry")
        if self.truncated:
            k = g.kept
            if np.any(self.data[:, :k.start]) or np.any(self.data[:, k.stop:]):
                raise ValueError("truncated sinogram has data outside the kept window")

    def with_data(self, data, truncated=None) -> "Sinogram":
        return Sinogram(data, self.geometry, self.truncated if truncated is None else truncated)


def ray_samples(n: int) -> tuple[float, int]:
    """Step ``dt`` (half a pixel) and sample count spanning the domain diagonal."""
    dt = 1.0 / n
    n_t = 2 * math.ceil(math.sqrt(2) / dt) + 1
    return dt, n_t


def radon_forward(f: np.ndarray, g: Geometry, backend: str | None = None,
                  columns: slice | None = None) -> Sinogram:
    """Line integrals by bilinear sampling every half pixel along each ray.

    ``columns`` restricts the computation to a detector range; other columns
    are left at zero.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("image must be square")
    dt, n_t = ray_samples(f.shape[0])
    k = _backend.get(backend)
    s = g.s if columns is None else np.ascontiguousarray(g.s[columns])
    data = np.asarray(k.radon_forward(f, np.cos(g.angles), np.sin(g.angles), s, dt, n_t))
    if columns is not None:
        full = np.zeros((g.n_views, g.n_det))
        full[:, columns] = data
        data = full
    return Sinogram(data, g, truncated=False)


def radon_adjoint(y: Sinogram, n: int, backend: str | None = None) -> np.ndarray:
    """Transpose of :func:`radon_forward` for an ``n x n`` image (bilinear splatting)."""
    g = y.geometry
    dt, n_t = ray_samples(n)
    k = _backend.get(backend)
    data = np.ascontiguousarray(y.data, dtype=np.float64)
    return np.asarray(k.radon_adjoint(data, np.cos(g.angles), np.sin(g.angles), g.s, dt, n_t, n))


def truncate(y: Sinogram) -> Sinogram:
    """Zero every detector column outside the centered kept window."""
    data = np.zeros_like(y.data)
    kept = y.geometry.kept
    data[:, kept] = y.data[:, kept]
    return Sinogram(data, y.geometry, truncated=True)


def truncation_mask(g: Geometry) -> np.ndarray:
    mask = np.zeros(g.n_det)
    mask[g.kept] = 1.0
    return mask
