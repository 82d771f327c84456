import math

import numpy as np
import pytest

from smoothmc.rng import Rng, as_rng


def test_same_seed_same_stream():
    a, b = Rng(99), Rng(99)
    np.testing.assert_array_equal(a.uniform(50), b.uniform(50))
    np.testing.assert_array_equal(a.normal(51), b.normal(51))


def test_spawn_is_order_independent():
    parent = Rng(5)
    first = parent.spawn(3, 1).uniform(5)
    parent.uniform(1000)
    np.testing.assert_array_equal(parent.spawn(3, 1).uniform(5), first)
    assert not np.array_equal(parent.spawn(3, 2).uniform(5), first)


def test_uniform_transform_matches_raw_bits():
    raw = np.random.PCG64(np.random.SeedSequence(entropy=7)).random_raw(10)
    expected = [(int(r) >> 11) * 2.0**-53 for r in raw]
    np.testing.assert_array_equal(Rng(7).uniform(10), expected)


def test_box_muller_transform():
    u = Rng(11).uniform(4)
    r0 = math.sqrt(-2 * math.log(1 - u[0]))
    r1 = math.sqrt(-2 * math.log(1 - u[2]))
    expected = [r0 * math.cos(2 * math.pi * u[1]), r0 * math.sin(2 * math.pi * u[1]),
                r1 * math.cos(2 * math.pi * u[3])]
    np.testing.assert_allclose(Rng(11).normal(3), expected, rtol=1e-15)


def test_normal_moments():
    z = Rng(3).normal(200_000)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02


def test_integers_and_subsets():
    g = Rng(1)
    x = g.integers(7, 10_000)
    assert x.min() == 0 and x.max() == 6
    sub = g.choice_without_replacement(20, 20)
    assert sorted(sub.tolist()) == list(range(20))
    with pytest.raises(ValueError):
        g.choice_without_replacement(3, 4)
    with pytest.raises(ValueError):
        g.integers(0, 3)


def test_negative_seed_wraps():
    assert Rng(-1).seed == 2**64 - 1


def test_as_rng():
    g = Rng(4)
    assert as_rng(g) is g
    assert as_rng(4).seed == 4
    assert as_rng(None).seed == 0
    with pytest.raises(TypeError):
        as_rng("seed")
