"""Problems outside the built-in fixtures, loadable as ``custom_problems:<name>``."""

import numpy as np

from layerlab.problem import SemilinearProblem


def _shape(x, u):
    return np.broadcast_shapes(np.shape(x)[:-1], np.shape(u))


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def _const(c):
    return lambda s: np.full(np.shape(s), c, dtype=float)


def tilted_linear(slope: float = 0.5) -> SemilinearProblem:
    """``b = (1 + slope * x2) u`` on the quarter plane, ``g = 1``: a linear problem whose
    first-order layer correction on the x1-axis is nonzero and known in closed form."""

    def a(x):
        return 1.0 + slope * np.asarray(x, dtype=float)[..., 1]

    def grad(x, u):
        out = np.zeros(_shape(x, u) + (2,))
        out[..., 1] = slope * np.broadcast_to(u, _shape(x, u))
        return out

    return SemilinearProblem(
        name="TILT",
        b=lambda x, u: a(x) * u,
        b_u=lambda x, u: np.broadcast_to(a(x), _shape(x, u)).astype(float),
        b_uu=lambda x, u: np.zeros(_shape(x, u)),
        grad_x_b=grad,
        u0=_zero,
        grad_u0=lambda x: np.zeros(np.shape(x)),
        g_gamma=_const(1.0),
        dg_gamma=_const(0.0),
        g_gamma_minus=_const(1.0),
        dg_gamma_minus=_const(0.0),
        gamma=0.9,
        omega=np.pi / 2,
    )


def weak_reaction() -> SemilinearProblem:
    """``b = 0.01 u + u^3``: violates the uniform positivity of ``b_u`` at ``u0 = 0``."""
    return SemilinearProblem(
        name="WEAK",
        b=lambda x, u: np.broadcast_to(0.01 * u + u**3, _shape(x, u)).astype(float),
        b_u=lambda x, u: np.broadcast_to(0.01 + 3 * u**2, _shape(x, u)).astype(float),
        b_uu=lambda x, u: np.broadcast_to(6.0 * u, _shape(x, u)).astype(float),
        grad_x_b=lambda x, u: np.zeros(_shape(x, u) + (2,)),
        u0=_zero,
        grad_u0=lambda x: np.zeros(np.shape(x)),
        g_gamma=_const(1.0),
        dg_gamma=_const(0.0),
        g_gamma_minus=_const(1.0),
        dg_gamma_minus=_const(0.0),
        gamma=0.9,
        omega=np.pi / 2,
    )


def flat_data() -> SemilinearProblem:
    """MP-LIN with ``g = u0``: no layer at all."""
    from layerlab.problem import builtin_fixture
    import dataclasses

    return dataclasses.replace(builtin_fixture("MP-LIN"), name="FLAT", g_gamma=_const(0.0), g_gamma_minus=_const(0.0))


def unstable_spot(depth: float = 1.5, center=(0.5, 0.5), width: float = 0.1) -> SemilinearProblem:
    """``b = a(x) u + u^3`` with ``a = 1 - depth * exp(-|x - center|^2 / width^2)``.

    ``a`` is negative near ``center``, well away from both sides, so the layers
    are unaffected while ``b_u(x, u0) < 0`` there.
    """
    c = np.asarray(center, dtype=float)

    def bump(x):
        d = np.asarray(x, dtype=float) - c
        return np.exp(-np.sum(d**2, axis=-1) / width**2)

    def a(x):
        return 1.0 - depth * bump(x)

    def grad(x, u):
        d = np.asarray(x, dtype=float) - c
        ga = (2 * depth / width**2) * bump(x)[..., None] * d
        return ga * np.broadcast_to(u, _shape(x, u))[..., None]

    return SemilinearProblem(
        name="SPOT",
        b=lambda x, u: a(x) * u + u**3,
        b_u=lambda x, u: a(x) + 3 * u**2,
        b_uu=lambda x, u: np.broadcast_to(6.0 * u, _shape(x, u)).astype(float),
        grad_x_b=grad,
        u0=_zero,
        grad_u0=lambda x: np.zeros(np.shape(x)),
        g_gamma=_const(1.0),
        dg_gamma=_const(0.0),
        g_gamma_minus=_const(1.0),
        dg_gamma_minus=_const(0.0),
        gamma=0.9,
        omega=np.pi / 2,
    )
