import numpy as np
import pytest

from custom_problems import flat_data, weak_reaction
from layerlab.geometry import SectorGeometry
from layerlab.problem import FIXTURES, LayerNonlinearity, builtin_fixture, validate_assumptions


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixtures_satisfy_assumptions(name):
    prob = builtin_fixture(name)
    rep = validate_assumptions(prob, SectorGeometry(prob.omega))
    assert rep.all_passed, rep.to_dict()


def test_unknown_fixture():
    with pytest.raises(KeyError):
        builtin_fixture("MP-NOPE")


def test_flat_data_flags_a4():
    prob = flat_data()
    rep = validate_assumptions(prob, SectorGeometry(prob.omega))
    assert not rep.passed["A4"] and rep.passed["A1"]


def test_weak_reaction_flags_a1():
    prob = weak_reaction()
    rep = validate_assumptions(prob, SectorGeometry(prob.omega))
    assert not rep.passed["A1"]
    assert np.isclose(rep.a1_margin, 0.01 - 0.81)


def test_corner_amplitude():
    assert builtin_fixture("MP-LIN").corner_amplitude() == 1.0
    var = builtin_fixture("MP-VAR")
    assert np.isclose(var.corner_amplitude(), 1.0)


def test_mp_var_reduced_solution_and_laplacian():
    prob = builtin_fixture("MP-VAR")
    x = np.array([[0.3, 0.2], [1.0, 0.5]])
    assert np.allclose(prob.b(x, prob.u0(x)), 0.0)
    # Lap tanh(x1) = -2 tanh sech^2
    t = np.tanh(x[:, 0])
    assert np.allclose(prob.lap_u0(x), -2 * t * (1 - t**2), atol=1e-6)


def test_layer_nonlinearity_matches_finite_differences():
    prob = builtin_fixture("MP-VAR")
    nl = LayerNonlinearity(prob)
    x = np.array([0.4, 0.3])
    t, d = 0.7, 1e-6
    assert np.isclose(nl.B_t(x, t), (nl.B(x, t + d) - nl.B(x, t - d)) / (2 * d), atol=1e-7)
    e = np.array([0.0, 1.0])
    fd = (nl.B(x + d * e, t) - nl.B(x - d * e, t)) / (2 * d)
    assert np.isclose(nl.dir_grad_B(x, t, e), fd, atol=1e-7)
    assert np.isclose(nl.Btilde(x, t, 0.1), nl.B(x, t) - 0.1 * t)
