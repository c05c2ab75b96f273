"""Semilinear problem data, layer nonlinearities and the built-in fixtures.

All callables are vectorised: ``x`` has shape ``(..., 2)`` and ``u``/``t``
broadcast against ``x[..., 0]``.  Callables must be pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .geometry import MINUS, PLUS, SectorGeometry

_FD_STEP = 1e-5


@dataclass(frozen=True)
class SemilinearProblem:
    """Data of ``-eps^2 Lap u + b(x, u) = 0`` in S, ``u = g`` on the boundary.

    ``g_gamma(s)`` and ``g_gamma_minus(s)`` give the boundary data along each
    side as a function of arclength from the vertex; ``dg_*`` are their first
    derivatives.  ``omega`` is the fixture's default opening angle.
    """

    name: str
    b: Callable
    b_u: Callable
    b_uu: Callable
    grad_x_b: Callable
    u0: Callable
    grad_u0: Callable
    g_gamma: Callable
    dg_gamma: Callable
    g_gamma_minus: Callable
    dg_gamma_minus: Callable
    gamma: float
    omega: float = np.pi / 2
    description: str = ""

    def g_side(self, side: str) -> tuple[Callable, Callable]:
        if side == PLUS:
            return self.g_gamma, self.dg_gamma
        if side == MINUS:
            return self.g_gamma_minus, self.dg_gamma_minus
        raise ValueError(f"unknown side {side!r}")

    def corner_amplitude(self) -> float:
        """``A = g(O) - u0(O)``."""
        return float(self.g_gamma(0.0) - self.u0(np.zeros(2)))

    def lap_u0(self, x) -> np.ndarray:
        """Laplacian of ``u0`` by central differences of ``grad_u0``."""
        x = np.asarray(x, dtype=float)
        h = 1e-5
        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])
        d1 = (self.grad_u0(x + e1)[..., 0] - self.grad_u0(x - e1)[..., 0]) / (2 * h)
        d2 = (self.grad_u0(x + e2)[..., 1] - self.grad_u0(x - e2)[..., 1]) / (2 * h)
        return d1 + d2


@dataclass(frozen=True)
class LayerNonlinearity:
    """``B(x,t) = b(x, u0(x)+t)`` and its perturbed version ``B(x,t) - p t``."""

    prob: SemilinearProblem

    def B(self, x, t):
        return self.prob.b(x, self.prob.u0(x) + t)

    def B_t(self, x, t):
        return self.prob.b_u(x, self.prob.u0(x) + t)

    def B_tt(self, x, t):
        return self.prob.b_uu(x, self.prob.u0(x) + t)

    def grad_x_B(self, x, t):
        x = np.asarray(x, dtype=float)
        u = self.prob.u0(x) + t
        return self.prob.grad_x_b(x, u) + self.prob.b_u(x, u)[..., None] * self.prob.grad_u0(x)

    def Btilde(self, x, t, p):
        return self.B(x, t) - p * t

    def Btilde_t(self, x, t, p):
        return self.B_t(x, t) - p

    def dir_grad_B(self, x, t, e):
        """``e . grad_x B(x, t)``."""
        return self.grad_x_B(x, t) @ np.asarray(e, dtype=float)

    def dir_grad_Bt(self, x, t, e):
        """``e . grad_x B_t(x, t)`` by a central difference along ``e``."""
        x = np.asarray(x, dtype=float)
        d = _FD_STEP * np.asarray(e, dtype=float)
        return (self.B_t(x + d, t) - self.B_t(x - d, t)) / (2 * _FD_STEP)

    def dir_hess_B(self, x, t, e):
        """``e^T Hess_x B(x, t) e`` by a central difference of the gradient."""
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        d = _FD_STEP * e
        return (self.dir_grad_B(x + d, t, e) - self.dir_grad_B(x - d, t, e)) / (2 * _FD_STEP)


def make_layer_nonlinearity(prob: SemilinearProblem) -> LayerNonlinearity:
    return LayerNonlinearity(prob)


# ---------------------------------------------------------------------------
# assumptions A1-A4


@dataclass(frozen=True)
class SamplingPlan:
    """Where assumptions are sampled: boundary arclengths in ``[0, radius]``
    and interior points of the sector disc of that radius."""

    radius: float = 3.0
    n_boundary: int = 61
    n_interior: int = 400
    n_v: int = 64
    seed: int = 0


@dataclass
class AssumptionReport:
    a1_margin: float
    a2_min_integral: float
    a3_value: float
    a4_margin: float
    reduced_residual: float
    vertex_jump: float
    passed: dict = field(default_factory=dict)
    note: str = "checked on bounded region"

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "a1_margin": self.a1_margin,
            "a2_min_integral": self.a2_min_integral,
            "a3_value": self.a3_value,
            "a4_margin": self.a4_margin,
            "reduced_residual": self.reduced_residual,
            "vertex_jump": self.vertex_jump,
            "passed": dict(self.passed),
            "all_passed": self.all_passed,
            "note": self.note,
        }


def _interior_samples(geom: SectorGeometry, plan: SamplingPlan) -> np.ndarray:
    rng = np.random.default_rng(plan.seed)
    rad = plan.radius * np.sqrt(rng.random(plan.n_interior))
    ang = geom.omega * rng.random(plan.n_interior)
    pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
    return np.vstack([np.zeros((1, 2)), pts])


def validate_assumptions(
    prob: SemilinearProblem, geom: SectorGeometry, sampling: SamplingPlan | None = None
) -> AssumptionReport:
    """Measure the margins of A1-A4 on a bounded sample of the sector.

    Failures are reported, never raised, so that fixtures violating the
    assumptions can still be studied.
    """
    plan = sampling or SamplingPlan()
    x_int = _interior_samples(geom, plan)
    u0_int = prob.u0(x_int)
    a1_margin = float(np.min(prob.b_u(x_int, u0_int)) - prob.gamma**2)
    reduced = float(np.max(np.abs(prob.b(x_int, u0_int))))

    s_b = np.linspace(0.0, plan.radius, plan.n_boundary)
    a2_min = np.inf
    a4_margin = np.inf
    for side in (PLUS, MINUS):
        g, _ = prob.g_side(side)
        xb = geom.boundary_point(side, s_b)
        gap = g(s_b) - prob.u0(xb)
        a4_margin = min(a4_margin, float(np.min(gap)))
        for xk, u0k, gk in zip(xb, prob.u0(xb), g(s_b)):
            if gk == u0k:
                continue
            # 64 interior v-samples plus the endpoint g
            for v in np.linspace(u0k, gk, plan.n_v + 1)[1:]:
                val, _ = integrate.quad(lambda u: float(prob.b(xk, u)), u0k, v, epsabs=1e-14, epsrel=1e-12)
                a2_min = min(a2_min, val)

    o = np.zeros(2)
    g_o = float(prob.g_gamma(0.0))
    a3_value = float(prob.b(o, g_o))
    jump = abs(g_o - float(prob.g_gamma_minus(0.0)))
    if not np.isfinite(a2_min):
        a2_min = 0.0
    passed = {
        "A1": a1_margin > 0.0,
        "A2": a2_min > 0.0,
        "A3": a3_value > 0.0,
        "A4": a4_margin > 0.0,
        "reduced": reduced <= 1e-10,
        "vertex_continuity": jump <= 1e-12,
    }
    return AssumptionReport(
        a1_margin=a1_margin,
        a2_min_integral=float(a2_min),
        a3_value=a3_value,
        a4_margin=float(a4_margin),
        reduced_residual=reduced,
        vertex_jump=jump,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# fixtures


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def _zero_grad(x):
    return np.zeros(np.shape(x))


def _const(c):
    return lambda s: np.full(np.shape(s), c, dtype=float)


def _mp_lin() -> SemilinearProblem:
    return SemilinearProblem(
        name="MP-LIN",
        b=lambda x, u: np.broadcast_to(u, np.broadcast_shapes(np.shape(x)[:-1], np.shape(u))).astype(float),
        b_u=lambda x, u: np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u))),
        b_uu=lambda x, u: np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u))),
        grad_x_b=lambda x, u: np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)) + (2,)),
        u0=_zero,
        grad_u0=_zero_grad,
        g_gamma=_const(1.0),
        dg_gamma=_const(0.0),
        g_gamma_minus=_const(1.0),
        dg_gamma_minus=_const(0.0),
        gamma=0.9,
        omega=np.pi / 2,
        description="b = u, u0 = 0, g = 1",
    )


def _mp_cubic() -> SemilinearProblem:
    def shape(x, u):
        return np.broadcast_shapes(np.shape(x)[:-1], np.shape(u))

    return SemilinearProblem(
        name="MP-CUBIC",
        b=lambda x, u: np.broadcast_to(u + u**3, shape(x, u)).astype(float),
        b_u=lambda x, u: np.broadcast_to(1.0 + 3.0 * u**2, shape(x, u)).astype(float),
        b_uu=lambda x, u: np.broadcast_to(6.0 * u, shape(x, u)).astype(float),
        grad_x_b=lambda x, u: np.zeros(shape(x, u) + (2,)),
        u0=_zero,
        grad_u0=_zero_grad,
        g_gamma=_const(1.0),
        dg_gamma=_const(0.0),
        g_gamma_minus=_const(1.0),
        dg_gamma_minus=_const(0.0),
        gamma=0.9,
        omega=np.pi / 2,
        description="b = u + u^3, u0 = 0, g = 1",
    )


def _mp_var() -> SemilinearProblem:
    omega = np.pi / 3
    cw = np.cos(omega)

    def a(x):
        return 1.0 + 1.0 / (1.0 + np.sum(np.asarray(x) ** 2, axis=-1))

    def grad_a(x):
        x = np.asarray(x, dtype=float)
        return -2.0 * x / (1.0 + np.sum(x**2, axis=-1))[..., None] ** 2

    def u0(x):
        return np.tanh(np.asarray(x, dtype=float)[..., 0])

    def grad_u0(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., 0] = 1.0 / np.cosh(x[..., 0]) ** 2
        return g

    def b(x, u):
        w = u - u0(x)
        return a(x) * w + w**3

    def b_u(x, u):
        w = u - u0(x)
        return a(x) + 3.0 * w**2

    def b_uu(x, u):
        return 6.0 * (u - u0(x))

    def grad_x_b(x, u):
        w = u - u0(x)
        return grad_a(x) * w[..., None] - ((a(x) + 3.0 * w**2)[..., None]) * grad_u0(x)

    return SemilinearProblem(
        name="MP-VAR",
        b=b,
        b_u=b_u,
        b_uu=b_uu,
        grad_x_b=grad_x_b,
        u0=u0,
        grad_u0=grad_u0,
        # g = u0 + 1 + 0.3 tanh(arclength) on each side
        g_gamma=lambda s: np.tanh(s) + 1.0 + 0.3 * np.tanh(s),
        dg_gamma=lambda s: 1.3 / np.cosh(s) ** 2,
        g_gamma_minus=lambda s: np.tanh(cw * s) + 1.0 + 0.3 * np.tanh(s),
        dg_gamma_minus=lambda s: cw / np.cosh(cw * s) ** 2 + 0.3 / np.cosh(s) ** 2,
        gamma=0.9,
        omega=omega,
        description="b = (1 + 1/(1+|x|^2)) (u-u0) + (u-u0)^3, u0 = tanh(x1), g = u0 + 1 + 0.3 tanh(s)",
    )


FIXTURES = {"MP-LIN": _mp_lin, "MP-CUBIC": _mp_cubic, "MP-VAR": _mp_var}


def builtin_fixture(name: str) -> SemilinearProblem:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
