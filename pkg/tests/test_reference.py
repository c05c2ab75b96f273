import dataclasses

import numpy as np
import pytest

from layerlab.errors import ConfigError
from layerlab.problem import builtin_fixture
from layerlab.reference import reference_domain_size, reference_solve, shishkin_nodes


def _plane_wave(eps, omega, n=(0.6, 0.8)):
    """MP-LIN on the sector of angle ``omega`` with data from the exact solution ``exp(-x.n / eps)``."""
    n = np.asarray(n)
    exact = lambda x: np.exp(-(np.asarray(x) @ n) / eps)  # noqa: E731
    em = np.array([np.cos(omega), np.sin(omega)])
    prob = dataclasses.replace(
        builtin_fixture("MP-LIN"),
        omega=omega,
        g_gamma=lambda s: np.exp(-s * n[0] / eps),
        g_gamma_minus=lambda s: np.exp(-s * (em @ n) / eps),
    )
    return prob, exact


def test_shishkin_nodes():
    z = shishkin_nodes(1.0, 8, 0.2)
    assert z.size == 9 and z[4] == pytest.approx(0.2) and z[-1] == 1.0
    assert np.allclose(np.diff(z[:5]), 0.05) and np.allclose(np.diff(z[4:]), 0.2)
    assert shishkin_nodes(1.0, 8, 5.0)[4] == 0.5
    with pytest.raises(ValueError):
        shishkin_nodes(1.0, 7, 0.2)


def test_domain_fits_radius():
    for w in (np.pi / 3, np.pi / 2, 2 * np.pi / 3):
        L = reference_domain_size(1.0, w)
        far = L * np.array([1 + np.cos(w), np.sin(w)])
        assert np.hypot(*far) <= 1.0 + 1e-12


@pytest.mark.parametrize("omega", [np.pi / 2, np.pi / 3, 2 * np.pi / 3])
def test_second_order_on_exact_solution(omega):
    eps = 0.1
    prob, exact = _plane_wave(eps, omega)
    errs = []
    for N in (80, 160, 320):
        ref = reference_solve(prob, eps, exact, 1.0, N=N)
        errs.append(np.max(np.abs(ref.values - exact(ref.x))))
    assert errs[-1] <= 1e-3
    assert errs[0] / errs[1] >= 3.0 and errs[1] / errs[2] >= 3.0


def test_linear_problem_one_newton_step_and_exact_boundary():
    prob = builtin_fixture("MP-LIN")
    ref = reference_solve(prob, 0.05, lambda x: np.zeros(np.shape(x)[:-1]), 0.7, N=128)
    assert ref.iterations == 1 and ref.residual <= 1e-10
    assert np.array_equal(ref.values[:, 0], prob.g_gamma(ref.zeta))
    assert np.array_equal(ref.values[0, :], prob.g_gamma_minus(ref.zeta))
    assert not ref.interior[0].any() and not ref.interior[:, 0].any()
    # maximum principle: 0 <= u <= 1
    assert ref.values.min() >= 0.0 and ref.values.max() <= 1.0 + 1e-12


def test_coarse_mesh_is_rejected():
    with pytest.raises(ConfigError):
        reference_solve(builtin_fixture("MP-LIN"), 0.01, lambda x: 0 * x[..., 0], 1.0, N=16)
