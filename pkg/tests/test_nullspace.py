import math

import numpy as np
import pytest

from intomo.fbp import crop_roi
from intomo.nullspace import (ChordLine, NullSeed, discrete_hilbert, gaussian_seed,
                              low_frequency_fraction, make_cupping_image, nullspace_sample,
                              ring_averages, second_difference_bound)
from intomo.phantom import Ellipse, Phantom, make_shepp_logan, rasterize
from intomo.projector import desk_geometry

MU = 0.5


def chord(v=0.0):
    return ChordLine(v, MU, 64.0, 0.01)


def test_hilbert_of_cosine_is_sine():
    n = 4096
    u = np.linspace(-1, 1, n, endpoint=False)
    w = 128 * math.pi
    err = np.abs(discrete_hilbert(np.cos(w * u)) - np.sin(w * u))[n // 10:-n // 10]
    assert err.max() < 1e-3


def test_hilbert_is_an_involution_up_to_sign():
    x = np.linspace(-1, 1, 1024)
    f = np.exp(-0.5 * (x / 0.1) ** 2) * np.cos(40 * x)
    hh = discrete_hilbert(discrete_hilbert(f))
    inner = slice(102, -102)
    assert np.abs(hh + f)[inner].max() < 1e-3 * np.abs(f).max()


def test_hilbert_of_constant_vanishes_in_periodic_mode():
    # zero padding turns a constant into a box, whose transform is log-singular
    # at the ends, so the check uses the periodic transform
    assert np.abs(discrete_hilbert(np.full(256, 3.0), pad=1)).max() < 1e-12


def test_hilbert_validation():
    with pytest.raises(ValueError):
        discrete_hilbert(np.ones(4))
    with pytest.raises(ValueError):
        discrete_hilbert(np.ones(16), pad=0)


def test_chord_geometry():
    c = ChordLine(0.3, MU, 2.0, 0.01)
    assert c.mu_v == pytest.approx(0.4)
    u = c.u
    np.testing.assert_allclose(u, -u[::-1], atol=1e-15)
    with pytest.raises(ValueError):
        ChordLine(0.6, MU, 2.0, 0.01)
    with pytest.raises(ValueError):
        ChordLine(0.0, MU, 0.4, 0.01)


def test_zero_seed_gives_zero_sample():
    c = chord()
    assert not nullspace_sample(c, NullSeed(np.zeros_like(c.u))).any()


def test_seed_support_violation_is_rejected():
    c = chord()
    with pytest.raises(ValueError):
        nullspace_sample(c, gaussian_seed(c, 0.0, 0.05))
    # inside the guard gap
    psi = np.zeros_like(c.u)
    psi[np.argmin(np.abs(c.u - (MU + 0.01)))] = 1.0
    with pytest.raises(ValueError):
        nullspace_sample(c, NullSeed(psi))


def test_gaussian_seed_at_one_and_a_half_mu_is_in_the_null_space():
    c = chord()
    seed = gaussian_seed(c, 1.5 * MU, 0.03)
    g = nullspace_sample(c, seed)
    resid = np.abs(discrete_hilbert(g) + seed.psi)[c.interior(0.9)]
    assert resid.max() < 1e-3 * np.abs(seed.psi).max()


def test_sample_is_smooth_inside_the_interval():
    c = chord(0.2)
    seed = gaussian_seed(c, -1.6 * MU, 0.04)
    g = nullspace_sample(c, seed)
    d2 = np.abs(g[2:] - 2 * g[1:-1] + g[:-2]) / c.du ** 2
    inside = c.interior()[1:-1]
    assert d2[inside].max() <= second_difference_bound(c, seed)


def test_linearity_and_scaling():
    c = chord()
    a = gaussian_seed(c, 0.9, 0.03)
    b = gaussian_seed(c, -1.1, 0.05, amplitude=-0.5)
    ga, gb = nullspace_sample(c, a), nullspace_sample(c, b)
    np.testing.assert_allclose(nullspace_sample(c, NullSeed(a.psi + b.psi)), ga + gb,
                               atol=1e-14)
    np.testing.assert_array_equal(nullspace_sample(c, NullSeed(2 * a.psi)), 2 * ga)


def test_untruncated_cupping_image_is_just_fbp_error():
    f = rasterize(make_shepp_logan(), 128)
    recon, err = make_cupping_image(f, desk_geometry(128, truncate=False))
    np.testing.assert_array_equal(recon - crop_roi(f, 64), err)
    assert np.sqrt(np.mean(err ** 2)) < 0.05


def test_disk_cupping_rises_toward_the_roi_edge():
    f = rasterize(Phantom([Ellipse((0, 0), (0.9, 0.9), 0.0, 1.0)]), 256)
    _, err = make_cupping_image(f, desk_geometry(256))
    rings = ring_averages(err, 8)
    assert np.all(np.diff(rings) > 0)
    assert low_frequency_fraction(err) >= 0.8


def test_low_frequency_fraction_extremes():
    n = 32
    assert low_frequency_fraction(np.ones((n, n))) == pytest.approx(1.0)
    checker = np.indices((n, n)).sum(axis=0) % 2 * 2.0 - 1.0
    assert low_frequency_fraction(checker) == pytest.approx(0.0, abs=1e-12)
