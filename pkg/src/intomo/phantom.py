"""Ellipse phantoms: rasterization and closed-form parallel-beam projections."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from intomo.projector import Geometry, Sinogram
from intomo.rng import PCG32


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float
    density: float

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise ValueError("semi-axes must be positive")

    def fits_unit_disk(self) -> bool:
        return math.hypot(*self.center) + max(self.semi_axes) <= 1.0

    def scaled(self, factor: float) -> "Ellipse":
        return Ellipse(self.center, self.semi_axes, self.angle, self.density * factor)

    def rotated(self, delta: float) -> "Ellipse":
        """The ellipse rotated by ``delta`` about the origin."""
        c, s = math.cos(delta), math.sin(delta)
        x, y = self.center
        return Ellipse((c * x - s * y, s * x + c * y), self.semi_axes, self.angle + delta,
                       self.density)


@dataclass
class Phantom:
    ellipses: list[Ellipse] = field(default_factory=list)
    seed: int | None = None

    def scaled(self, factor: float) -> "Phantom":
        return Phantom([e.scaled(factor) for e in self.ellipses], self.seed)

    def rotated(self, delta: float) -> "Phantom":
        return Phantom([e.rotated(delta) for e in self.ellipses], self.seed)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "ellipses": [asdict(e) for e in self.ellipses]},
                          indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Phantom":
        d = json.loads(text)
        ellipses = [Ellipse(tuple(e["center"]), tuple(e["semi_axes"]), float(e["angle"]),
                            float(e["density"])) for e in d["ellipses"]]
        return cls(ellipses, d.get("seed"))


# Modified Shepp-Logan (Toft): density, a, b, x0, y0, angle in degrees.
_SHEPP_LOGAN = [
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]


def make_shepp_logan() -> Phantom:
    """Ten-ellipse modified Shepp-Logan phantom; rasterizes into [0, 1]."""
    return Phantom([Ellipse((x0, y0), (a, b), math.radians(phi), d)
                    for d, a, b, x0, y0, phi in _SHEPP_LOGAN])


def make_random_phantom(seed: int, n_ellipses: int) -> Phantom:
    """Piecewise-constant random phantom, deterministic in ``seed``.

    The first ellipse is a large background body (density 0.2-0.4) that
    extends past the default field of view; the others are features of
    density +-(0.05-0.3) placed inside the body's inscribed disk. Densities are
    then rescaled (never clamped) so the largest possible overlap sum is exactly 1
    and the smallest is >= 0.
    """
    if not 1 <= n_ellipses <= 32:
        raise ValueError("n_ellipses must be in [1, 32]")
    rng = PCG32(seed)
    u = rng.uniform_range

    a, b = u(0.92, 0.98), u(0.92, 0.98)
    r_off = u(0.0, 1.0 - max(a, b))
    phi = u(0.0, 2 * math.pi)
    bg_center = (r_off * math.cos(phi), r_off * math.sin(phi))
    bg = Ellipse(bg_center, (a, b), u(0.0, math.pi), u(0.2, 0.4))
    inner_radius = min(a, b)

    inner = []
    for _ in range(n_ellipses - 1):
        ea, eb = u(0.03, 0.3), u(0.03, 0.3)
        room = inner_radius - max(ea, eb)
        if room <= 0:
            ea, eb = ea * 0.5 * inner_radius / max(ea, eb), eb * 0.5 * inner_radius / max(ea, eb)
            room = inner_radius - max(ea, eb)
        r = room * math.sqrt(u(0.0, 1.0))
        t = u(0.0, 2 * math.pi)
        center = (bg_center[0] + r * math.cos(t), bg_center[1] + r * math.sin(t))
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        inner.append(Ellipse(center, (ea, eb), u(0.0, math.pi), sign * u(0.05, 0.3)))

    # Inner features sit inside the body, so pixel values are bg + a subset of
    # inner densities: bounded below by bg + sum(neg) and above by bg + sum(pos).
    neg = sum(e.density for e in inner if e.density < 0)
    if bg.density + neg < 0:
        shrink = bg.density / -neg
        inner = [e.scaled(shrink) if e.density < 0 else e for e in inner]
    pos = bg.density + sum(e.density for e in inner if e.density > 0)
    return Phantom([e.scaled(1.0 / pos) for e in [bg] + inner], seed)


def pixel_centers(n: int) -> np.ndarray:
    return -1.0 + (np.arange(n) + 0.5) * (2.0 / n)


def _inside(e: Ellipse, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c, s = math.cos(e.angle), math.sin(e.angle)
    dx, dy = x - e.center[0], y - e.center[1]
    xr = dx * c + dy * s
    yr = -dx * s + dy * c
    a, b = e.semi_axes
    return (xr / a) ** 2 + (yr / b) ** 2 < 1.0


def rasterize(p: Phantom, n: int) -> np.ndarray:
    """Sum of densities of the ellipses containing each pixel center."""
    if n < 8:
        raise ValueError("n must be at least 8")
    coords = pixel_centers(n)
    x, y = np.meshgrid(coords, coords)
    img = np.zeros((n, n))
    for e in p.ellipses:
        img[_inside(e, x, y)] += e.density
    # densities that cancel in decimal (1 - 0.8 - 0.2) leave binary rounding residue
    img[np.abs(img) < 1e-12] = 0.0
    return img


def ellipse_projection(e: Ellipse, theta: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Line integrals of one ellipse for every (theta, s) pair (outer product)."""
    theta = np.asarray(theta, dtype=np.float64)[:, None]
    s = np.asarray(s, dtype=np.float64)[None, :]
    a, b = e.semi_axes
    s_rel = s - (e.center[0] * np.cos(theta) + e.center[1] * np.sin(theta))
    th = theta - e.angle
    a2 = (a * np.cos(th)) ** 2 + (b * np.sin(th)) ** 2
    disc = np.maximum(a2 - s_rel ** 2, 0.0)
    return 2 * a * b * e.density * np.sqrt(disc) / a2


def analytic_sinogram(p: Phantom, g: Geometry) -> Sinogram:
    data = np.zeros((g.n_views, g.n_det))
    for e in p.ellipses:
        data += ellipse_projection(e, g.angles, g.s)
    return Sinogram(data, g, truncated=False)
