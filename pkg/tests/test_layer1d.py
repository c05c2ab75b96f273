import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from custom_problems import tilted_linear
from layerlab import layer1d
from layerlab.errors import WindowTooShort
from layerlab.geometry import MINUS, PLUS, SectorGeometry
from layerlab.problem import builtin_fixture

P_MAX = 0.81 / 4


@pytest.fixture(scope="module")
def grid():
    return layer1d.default_grid(0.9, P_MAX)


def _setup(name):
    prob = builtin_fixture(name)
    return prob, SectorGeometry(prob.omega)


def cubic_exact(xi):
    return np.sqrt(2.0) / np.sinh(xi + np.arcsinh(np.sqrt(2.0)))


@pytest.mark.parametrize("p", [0.0, 0.05, 0.19, -0.1])
def test_linear_profile_closed_form(grid, p):
    prob, geom = _setup("MP-LIN")
    v = layer1d.solve_v0(prob, geom, PLUS, 0.4, p, grid, p_max=P_MAX)
    assert np.max(np.abs(v.values - np.exp(-np.sqrt(1 - p) * v.xi))) <= 1e-7


def test_linear_value_at_one(grid):
    prob, geom = _setup("MP-LIN")
    v = layer1d.solve_v0(prob, geom, PLUS, 0.0, 0.0, grid)
    assert abs(float(v(1.0)) - np.exp(-1.0)) <= 1e-7


def test_cubic_profile_closed_form_and_runtime(grid):
    prob, geom = _setup("MP-CUBIC")
    t0 = time.perf_counter()
    v = layer1d.solve_v0(prob, geom, MINUS, 0.2, 0.0, grid)
    assert time.perf_counter() - t0 < 1.0
    assert np.max(np.abs(v.values - cubic_exact(v.xi))) <= 1e-6


def test_cubic_error_is_second_order():
    prob, geom = _setup("MP-CUBIC")
    errs = []
    for n in (2001, 4001, 8001):
        g = layer1d.HalfLineGrid(40.0, n)
        v = layer1d.solve_v0(prob, geom, PLUS, 0.0, 0.0, g)
        errs.append(np.max(np.abs(v.values - cubic_exact(v.xi))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


@pytest.mark.parametrize("name,p", [("MP-CUBIC", 0.0), ("MP-CUBIC", 0.1), ("MP-VAR", 0.0), ("MP-VAR", -0.1)])
def test_first_integral_oracle(grid, name, p):
    prob, geom = _setup(name)
    v = layer1d.solve_v0(prob, geom, PLUS, 0.3, p, grid, p_max=P_MAX)
    xs = np.array([0.5, 1.0, 2.0, 5.0])
    assert np.max(np.abs(v(xs) - layer1d.v0_oracle(prob, geom, PLUS, 0.3, p, xs))) <= 1e-6
    slope = (-3 * v.values[0] + 4 * v.values[1] - v.values[2]) / (2 * grid.h)
    assert slope == pytest.approx(layer1d.first_integral_slope(prob, geom, PLUS, 0.3, p), rel=1e-5)


def test_oracle_inverse_consistency():
    prob, geom = _setup("MP-CUBIC")
    xi = layer1d.oracle_xi_of_v(prob, geom, PLUS, 0.0, 0.0, 0.25)
    assert layer1d.v0_oracle(prob, geom, PLUS, 0.0, 0.0, [xi])[0] == pytest.approx(0.25, rel=1e-10)
    assert float(cubic_exact(xi)) == pytest.approx(0.25, rel=1e-10)


def test_dp_sensitivity_closed_form(grid):
    prob, geom = _setup("MP-LIN")
    p = 0.1
    v = layer1d.solve_v0(prob, geom, PLUS, 0.0, p, grid, p_max=P_MAX)
    w = layer1d.sensitivity(prob, geom, PLUS, 0.0, p, v, "dp")
    k = np.sqrt(1 - p)
    exact = v.xi / (2 * k) * np.exp(-k * v.xi)
    assert np.max(np.abs(w.values - exact)) <= 1e-7


@pytest.mark.parametrize("which", ["ds", "dss"])
def test_s_sensitivities_match_difference_quotients(grid, which):
    prob, geom = _setup("MP-VAR")
    s, d = 0.4, 1e-3
    prof = {t: layer1d.solve_v0(prob, geom, PLUS, s + t * d, 0.0, grid) for t in (-1, 0, 1)}
    w = layer1d.sensitivity(prob, geom, PLUS, s, 0.0, prof[0], which)
    if which == "ds":
        fd = (prof[1].values - prof[-1].values) / (2 * d)
    else:
        fd = (prof[1].values - 2 * prof[0].values + prof[-1].values) / d**2
    assert np.max(np.abs(w.values - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_first_order_profile_tilted_closed_form(grid):
    prob = tilted_linear(0.5)
    geom = SectorGeometry(prob.omega)
    v0 = layer1d.solve_v0(prob, geom, PLUS, 0.3, 0.0, grid)
    v1 = layer1d.solve_v1(prob, geom, PLUS, 0.3, grid, v0)
    exact = -(0.5 / 4) * (v1.xi**2 + v1.xi) * np.exp(-v1.xi)
    assert np.max(np.abs(v1.values - exact)) <= 1e-6


def test_first_order_profile_needs_unperturbed(grid):
    prob, geom = _setup("MP-LIN")
    v = layer1d.solve_v0(prob, geom, PLUS, 0.0, 0.1, grid, p_max=P_MAX)
    with pytest.raises(ValueError):
        layer1d.solve_v1(prob, geom, PLUS, 0.0, grid, v)


def test_zero_amplitude_gives_zero_profile(grid):
    import dataclasses

    prob, geom = _setup("MP-LIN")
    flat = dataclasses.replace(prob, g_gamma=lambda s: np.zeros(np.shape(s)))
    v = layer1d.solve_v0(flat, geom, PLUS, 0.0, 0.0, grid)
    assert not np.any(v.values)


def test_decay_fit_and_window(grid):
    prob, geom = _setup("MP-LIN")
    v = layer1d.solve_v0(prob, geom, PLUS, 0.0, 0.0, grid)
    fit = layer1d.decay_rate(v)
    assert fit["rate"] == pytest.approx(1.0, abs=1e-6) and fit["r2"] > 0.999999
    with pytest.raises(WindowTooShort):
        layer1d.fit_decay(np.arange(5.0), np.exp(-np.arange(5.0)))
    with pytest.raises(ValueError):
        layer1d.fit_decay(np.arange(10.0), np.zeros(10))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 39.0))
def test_interpolation_exact_for_cubics(x):
    h = 0.1
    nodes = np.arange(0, 40.05, h)
    poly = lambda t: 1 + 2 * t - 0.3 * t**2 + 0.01 * t**3  # noqa: E731
    assert layer1d.interp_uniform(poly(nodes), h, x) == pytest.approx(poly(x), rel=1e-9, abs=1e-9)


def test_interpolation_is_zero_past_the_grid():
    assert layer1d.interp_uniform(np.ones(20), 0.1, 5.0) == 0.0


def test_truncation_guard():
    with pytest.raises(ValueError):
        layer1d.check_truncation(layer1d.HalfLineGrid(20.0, 101), 0.9, 0.0)
    layer1d.check_truncation(layer1d.default_grid(0.9, P_MAX), 0.9, P_MAX)


def test_side_bank_interpolates_in_s(grid):
    prob, geom = _setup("MP-VAR")
    bank = layer1d.build_side_profiles(prob, geom, MINUS, 0.0, grid, (0.0, 0.5))
    s = 0.237
    direct = layer1d.solve_v0(prob, geom, MINUS, s, 0.0, grid)
    xi = np.array([0.0, 0.3, 1.0, 4.0])
    got = bank.evaluate(xi, np.full(4, s), kinds=("v0", "v1"))
    assert np.max(np.abs(got["v0"] - direct(xi))) <= 1e-7
    v1 = layer1d.solve_v1(prob, geom, MINUS, s, grid, direct)
    assert np.max(np.abs(got["v1"] - v1(xi))) <= 1e-6
    with pytest.raises(ValueError):
        bank.evaluate(xi, np.full(4, 3.0))


def test_profile_cache_lru():
    cache = layer1d.ProfileCache(2)
    calls = []
    for key in ("a", "b", "a", "c", "b"):
        cache.get_or_build(key, lambda k=key: calls.append(k) or k)
    assert calls == ["a", "b", "c", "b"]
    assert cache.stats()["hits"] == 1


def test_export_csv(tmp_path, grid):
    prob, geom = _setup("MP-LIN")
    v = layer1d.solve_v0(prob, geom, PLUS, 0.0, 0.0, layer1d.HalfLineGrid(10.0, 101))
    path = tmp_path / "v0.csv"
    layer1d.export_csv(v, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().startswith("xi,value\n") and data.shape == (101, 2)
    assert np.array_equal(data[:, 1], v.values)
