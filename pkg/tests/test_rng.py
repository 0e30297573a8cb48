import numpy as np
import pytest

from intomo.rng import PCG32


def test_matches_reference_pcg32_demo_output():
    # first outputs of the reference pcg32 demo, seeded (42, 54)
    r = PCG32(42, 54)
    got = [r.next_u32() for _ in range(6)]
    assert got == [0xA15C02B7, 0x7B47F409, 0xBA1D3330, 0x83D2F293, 0xBFA4784B, 0xCBED606E]


def test_array_fill_continues_the_scalar_sequence(backend):
    from intomo import _backend

    a, b = PCG32(7), PCG32(7)
    scalar = [a.next_u32() for _ in range(100)]
    arr, state = _backend.get(backend).pcg32_fill(b.state, b.inc, 100)
    assert list(arr) == scalar
    assert state == a.state


def test_normal_array_equals_scalar_normals():
    a, b = PCG32(3), PCG32(3)
    scalar = [a.normal() for _ in range(11)]
    np.testing.assert_array_equal(b.normal_array(11), scalar)


def test_normal_array_refuses_a_cached_spare():
    r = PCG32(0)
    r.normal()
    with pytest.raises(RuntimeError):
        r.normal_array(4)


def test_uniform_range_and_moments():
    r = PCG32(11)
    u = np.array([r.uniform() for _ in range(20000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_bounded_is_in_range_and_covers_it():
    r = PCG32(5)
    vals = {r.bounded(7) for _ in range(500)}
    assert vals == set(range(7))
    with pytest.raises(ValueError):
        r.bounded(0)


def test_permutation_is_a_permutation_and_seeded():
    p = PCG32(9).permutation(50)
    assert sorted(p) == list(range(50))
    np.testing.assert_array_equal(p, PCG32(9).permutation(50))
    assert not np.array_equal(p, PCG32(10).permutation(50))


def test_streams_are_independent():
    a = [PCG32(1, 1).next_u32() for _ in range(3)]
    b = [PCG32(1, 2).next_u32() for _ in range(3)]
    assert a != b
