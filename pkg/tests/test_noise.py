import numpy as np
import pytest

from gravpursuit.errors import InputError
from gravpursuit.forward import TrackSet, reuter_grid
from gravpursuit.noise import (DEFAULT_LOCAL_REGION, WHOLE_SPHERE, LatLonBox, NoiseSpec,
                               add_colored, add_local, add_white, in_region, noise_level)


def _lag1(x):
    x = x - x.mean()
    return float(x[1:] @ x[:-1] / (x @ x))


def test_noise_level_examples():
    assert noise_level([3.0, 4.0], 0.1) == pytest.approx(0.35355, abs=1e-5)
    assert noise_level([3.0, 4.0], 0.0) == 0.0
    y = np.array([1.0, -2.0, 5.0])
    assert noise_level(-3 * y, 0.2) == pytest.approx(3 * noise_level(y, 0.2))
    with pytest.raises(InputError):
        noise_level([], 0.1)


def test_white_basic():
    y = np.linspace(1, 2, 50)
    np.testing.assert_array_equal(add_white(y, 0.0, 1), y)
    assert add_white(y, 0.05, 7).tobytes() == add_white(y, 0.05, 7).tobytes()


def test_white_relative_std():
    y = np.full(100_000, 3.0)
    rel = (add_white(y, 0.05, 11) - y) / y
    assert abs(rel.std() / 0.05 - 1) < 0.02


def test_white_realized_ratio():
    y = np.random.default_rng(987654).standard_normal(8000)
    for seed in range(20):
        ye = add_white(y, 0.05, seed)
        ratio = np.linalg.norm(ye - y) / np.linalg.norm(y)
        assert 0.8 * 0.05 <= ratio <= 1.2 * 0.05


def test_colored_alpha_zero_is_white():
    y = np.linspace(1, 2, 40)
    tracks = TrackSet([np.arange(40)])
    ye, alpha = add_colored(y, tracks, 0.05, 0.0, 3)
    assert alpha == 0.0
    eps = (ye / y - 1) / 0.05
    assert abs(eps.std() - 1) < 0.5
    # same generator family, so a zero coefficient leaves the normals unfiltered
    ye2, _ = add_colored(y, tracks, 0.05, 0.0, 3)
    np.testing.assert_array_equal(ye, ye2)


def test_colored_autocorrelation():
    n = 100_000
    y = np.ones(n)
    ye, _ = add_colored(y, TrackSet([np.arange(n)]), 1.0, 0.54, 5)
    assert abs(_lag1(ye - 1) - 0.54) <= 0.05


def test_colored_stationary_variance():
    n = 100_000
    ye, _ = add_colored(np.ones(n), TrackSet([np.arange(n)]), 1.0, 0.5, 9)
    assert abs(np.var(ye - 1) * (1 - 0.25) - 1) < 0.05


def test_colored_track_order_independent():
    y = np.arange(1.0, 31.0)
    t1 = TrackSet([np.arange(10), np.arange(10, 30)])
    a, _ = add_colored(y, t1, 0.1, 0.3, 2)
    b, _ = add_colored(y, t1, 0.1, 0.3, 2)
    np.testing.assert_array_equal(a, b)
    # the noise does not cross track boundaries: changing one track's length
    # leaves the other untouched
    t2 = TrackSet([np.arange(10), np.arange(10, 25)])
    c, _ = add_colored(y[:25], t2, 0.1, 0.3, 2)
    np.testing.assert_array_equal(a[:10], c[:10])


def test_colored_random_alpha():
    y = np.ones(20)
    t = TrackSet([np.arange(20)])
    _, a1 = add_colored(y, t, 0.05, "random", 4)
    _, a2 = add_colored(y, t, 0.05, "random", 4)
    assert a1 == a2 and -1 < a1 < 1
    with pytest.raises(InputError):
        add_colored(y, t, 0.05, 1.0, 4)
    with pytest.raises(InputError):
        add_colored(y, TrackSet([np.arange(10)]), 0.05, 0.1, 4)


def test_local_limits():
    g = reuter_grid(20, 1.05)
    y = np.linspace(1, 2, len(g))
    np.testing.assert_array_equal(add_local(y, g, WHOLE_SPHERE, 0.05, 0.01, 3),
                                  add_white(y, 0.05, 3))
    np.testing.assert_array_equal(add_local(y, g, (), 0.05, 0.01, 3), add_white(y, 0.01, 3))


def test_local_region_fraction():
    g = reuter_grid(60, 1.05)
    inside = in_region(g, DEFAULT_LOCAL_REGION).mean()
    expected = DEFAULT_LOCAL_REGION[0].solid_angle() / (4 * np.pi)
    assert abs(inside / expected - 1) <= 0.10
    assert DEFAULT_LOCAL_REGION[0] == LatLonBox(-90, 0, -90, 0)


def test_latlon_box_validation():
    with pytest.raises(InputError):
        LatLonBox(10, -10, 0, 5)
    with pytest.raises(InputError):
        LatLonBox(0, 10, -200, 5)


def test_noise_spec():
    g = reuter_grid(10, 1.05)
    y = np.linspace(1, 2, len(g))
    spec = NoiseSpec("local", 0.05)
    ye, info = spec.apply(y, g, seed=2)
    assert info == {}
    lvl = spec.level(y, g)
    assert noise_level(y, 0.01) < lvl < noise_level(y, 0.05)
    assert NoiseSpec("white", 0.05).level(y) == noise_level(y, 0.05)
    with pytest.raises(InputError):
        NoiseSpec("pink")
    with pytest.raises(InputError):
        NoiseSpec("colored").apply(y)
    d = NoiseSpec(region=((-10, 10, -20, 20),)).to_dict()
    assert d["region"] == [[-10, 10, -20, 20]]
