"""First-order asymptotic expansion and its perturbed version.

``u_as = u0 + v + v^- + q`` and ``beta = u0 + vt + vt^- + qt + theta p`` with
``v = v0 + eps v1`` and ``q = q0 + eps q1``; tildes mark quantities solved at
the perturbation parameter ``p``.  The residual ``F w = -eps^2 Lap w + b(x,w)``
of ``beta`` is assembled analytically: every second derivative of a layer or
corner term is replaced by the equation that term satisfies, so only
``Lap u0`` and the ``s``-derivatives of profiles remain as derivatives.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .corner2d import CornerEvaluator, SectorGrid, solve_q1, solve_z0, vertex_profiles
from .errors import MissingProfiles
from .geometry import MINUS, PLUS, SIDES, SectorGeometry
from .layer1d import HalfLineGrid, ProfileCache, build_side_profiles, default_grid
from .problem import LayerNonlinearity, SemilinearProblem


@dataclass(frozen=True)
class ExpansionSettings:
    """Grid and region parameters shared by every bundle of one problem."""

    Xi_factor: float = 40.0
    n1d: int = 40001
    stride: int = 1
    ds: float = 0.05
    R_factor: float = 40.0
    n2d: int = 600
    radius: float = 1.0
    p_max: float | None = None
    cache_capacity: int = 32

    def to_dict(self) -> dict:
        return asdict(self)


class ExpansionWorkspace:
    """Solved ingredients of the expansion for one problem, cached by ``p``.

    Layer tables, vertex profiles and corner fields do not depend on ``eps``,
    so one workspace serves every ``eps`` of a sweep.
    """

    def __init__(self, prob: SemilinearProblem, settings: ExpansionSettings | None = None):
        self.prob = prob
        self.settings = settings or ExpansionSettings()
        st = self.settings
        self.geom = SectorGeometry(prob.omega)
        self.p_max = st.p_max if st.p_max is not None else prob.gamma**2 / 4
        self.grid1d: HalfLineGrid = default_grid(prob.gamma, self.p_max, st.Xi_factor, st.n1d)
        self.sector = SectorGrid(prob.omega, st.R_factor / prob.gamma, st.n2d)
        self.nl = LayerNonlinearity(prob)
        self._cache = ProfileCache(st.cache_capacity)
        self._lock = threading.Lock()

    # -- ingredients -----------------------------------------------------
    def check_p(self, p: float) -> None:
        if abs(p) > self.p_max * (1 + 1e-12):
            raise ValueError(f"|p|={abs(p):.4g} exceeds p_max={self.p_max:.4g}")

    def s_range(self) -> tuple[float, float]:
        r = self.settings.radius
        lo = r * min(0.0, np.cos(self.prob.omega))
        return lo - 0.05, r + 0.05

    def side(self, side: str, p: float):
        self.check_p(p)
        return self._cache.get_or_build(
            ("side", side, float(p)),
            lambda: build_side_profiles(
                self.prob,
                self.geom,
                side,
                float(p),
                self.grid1d,
                self.s_range(),
                ds=self.settings.ds,
                stride=self.settings.stride,
                p_max=self.p_max,
            ),
        )

    def vertex(self, p: float):
        self.check_p(p)
        return self._cache.get_or_build(
            ("vertex", float(p)), lambda: vertex_profiles(self.prob, self.geom, float(p), self.grid1d)
        )

    def corner(self, p: float) -> dict:
        """``{"z0", "evaluator"}`` at ``p``; at ``p = 0`` also ``q1`` and ``z1``."""
        self.check_p(p)

        def build():
            vp = self.vertex(p)
            z_init = None
            if p != 0.0:
                z_init = self.corner(0.0)["z0"].values
            z0 = solve_z0(self.prob, self.geom, float(p), self.sector, vp, z_init=z_init)
            out = {"z0": z0}
            if p == 0.0:
                q1, z1 = solve_q1(self.prob, self.geom, self.sector, z0, vp)
                out.update(q1=q1, z1=z1)
                out["evaluator"] = CornerEvaluator(z0, vp, z1)
            else:
                out["evaluator"] = CornerEvaluator(z0, vp)
            return out

        return self._cache.get_or_build(("corner", float(p)), build)

    def prepare(self, p_values) -> None:
        for p in sorted({0.0, *map(float, p_values)}, key=abs):
            for sd in SIDES:
                self.side(sd, p)
            self.corner(p)

    def stats(self) -> dict:
        return self._cache.stats()

    def bundle(self, eps: float, theta: float | None = None, points=None) -> "ExpansionBundle":
        b = ExpansionBundle(self, float(eps), 1.0)
        if theta is None:
            if points is None:
                raise ValueError("theta needs sample points")
            theta = choose_theta(b, points)
        b.theta = float(theta)
        return b


@dataclass
class Terms:
    """Pieces of the expansion at a set of points for one ``p``."""

    u0: np.ndarray
    side: dict = field(default_factory=dict)
    corner: dict = field(default_factory=dict)


@dataclass
class ExpansionBundle:
    """Evaluator of ``u_as`` and ``beta`` at fixed ``eps`` and ``theta``."""

    ws: ExpansionWorkspace
    eps: float
    theta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def prob(self) -> SemilinearProblem:
        return self.ws.prob

    @property
    def geom(self) -> SectorGeometry:
        return self.ws.geom

    def _need(self, p: float) -> None:
        keys = {("side", s, float(p)) for s in SIDES} | {("corner", float(p))}
        present = set(self.ws._cache._data)
        if not keys <= present:
            raise MissingProfiles(f"profiles at p={p} not prepared; call workspace.prepare([{p}])")

    # -- term evaluation ---------------------------------------------------
    def _side_terms(self, x: np.ndarray, side: str, p: float, derivs: bool) -> dict:
        e_s, e_r = self.geom.frame(side)
        eps = self.eps
        xi = x @ e_r / eps
        s = x @ e_s
        n = x.shape[0]
        tab = self.ws.side(side, p)
        tab0 = tab if p == 0.0 else self.ws.side(side, 0.0)
        m = xi < tab.grid.Xi
        out = {k: np.zeros(n) for k in ("vt0", "v0", "v1", "vt0_ss", "v1_ss")}
        out["xi"], out["s"], out["mask"] = xi, s, m
        if not m.any():
            return out
        kinds = ("v0", "v0_ss") if derivs else ("v0",)
        a = tab.evaluate(xi[m], s[m], kinds)
        b0 = tab0.evaluate(xi[m], s[m], ("v0", "v1", "v1_ss") if derivs else ("v0", "v1"))
        out["vt0"][m] = a["v0"]
        out["v0"][m] = b0["v0"]
        out["v1"][m] = b0["v1"]
        if derivs:
            out["vt0_ss"][m] = a["v0_ss"]
            out["v1_ss"][m] = b0["v1_ss"]
        return out

    def _corner_terms(self, x: np.ndarray, p: float) -> dict:
        eta = x / self.eps
        n = x.shape[0]
        c0 = self.ws.corner(0.0)
        cp = c0 if p == 0.0 else self.ws.corner(p)
        R = self.ws.sector.R
        m = np.hypot(eta[:, 0], eta[:, 1]) < R
        out = {k: np.zeros(n) for k in ("qt0", "q0", "q1")}
        out["eta"], out["mask"] = eta, m
        if m.any():
            out["qt0"][m] = cp["evaluator"].q0(eta[m])
            out["q0"][m] = out["qt0"][m] if p == 0.0 else c0["evaluator"].q0(eta[m])
            out["q1"][m] = c0["evaluator"].q1(eta[m])
        return out

    def terms(self, x, p: float = 0.0, derivs: bool = False) -> Terms:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self.ws.check_p(p)
        if p != 0.0:
            self._need(p)
        t = Terms(u0=self.prob.u0(x) * np.ones(x.shape[0]))
        for sd in SIDES:
            t.side[sd] = self._side_terms(x, sd, p, derivs)
        t.corner = self._corner_terms(x, p)
        return t

    # -- evaluation ----------------------------------------------------------
    def _assemble(self, t: Terms, p: float) -> np.ndarray:
        eps = self.eps
        out = t.u0.copy()
        for sd in SIDES:
            out += t.side[sd]["vt0"] + eps * t.side[sd]["v1"]
        out += t.corner["qt0"] + eps * t.corner["q1"]
        return out + self.theta * p

    def uas(self, x) -> np.ndarray:
        """``u_as`` at physical points ``x`` of shape ``(N, 2)`` (or one point)."""
        return self.beta(x, 0.0)

    def beta(self, x, p: float) -> np.ndarray:
        """Perturbed expansion; ``beta(x, 0)`` is ``u_as`` by the same code path."""
        return self._assemble(self.terms(x, p), p)

    def beta_vq(self, x, p: float) -> np.ndarray:
        """``u_as + V + V^- + Q + theta p`` with ``V = vt0 - v0`` and ``Q = qt0 - q0``."""
        t = self.terms(x, p)
        eps = self.eps
        uas = t.u0.copy()
        extra = np.zeros_like(uas)
        for sd in SIDES:
            uas += t.side[sd]["v0"] + eps * t.side[sd]["v1"]
            extra += t.side[sd]["vt0"] - t.side[sd]["v0"]
        uas += t.corner["q0"] + eps * t.corner["q1"]
        extra += t.corner["qt0"] - t.corner["q0"]
        return uas + extra + self.theta * p

    def layer_sum(self, x) -> np.ndarray:
        """``v0 + v0^- + q0`` (the quantity bounded from below near the vertex)."""
        t = self.terms(x, 0.0)
        return t.side[PLUS]["v0"] + t.side[MINUS]["v0"] + t.corner["q0"]

    def residual(self, x, p: float = 0.0) -> np.ndarray:
        """Analytically assembled ``F beta(.; p)``; ``p = 0`` gives ``F u_as``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nl = self.ws.nl
        eps = self.eps
        t = self.terms(x, p, derivs=True)
        w = self._assemble(t, p)
        F = self.prob.b(x, w) - eps**2 * self.prob.lap_u0(x)
        for sd in SIDES:
            st = t.side[sd]
            m = st["mask"]
            if not m.any():
                continue
            e_s, e_r = self.geom.frame(sd)
            xb = st["s"][m, None] * e_s
            vt0, v0, v1 = st["vt0"][m], st["v0"][m], st["v1"][m]
            sub = nl.B(xb, vt0) - p * vt0
            sub = sub + eps * (v1 * nl.B_t(xb, v0) + st["xi"][m] * nl.dir_grad_B(xb, v0, e_r))
            sub = sub + eps**2 * (st["vt0_ss"][m] + eps * st["v1_ss"][m])
            F[m] -= sub
        ct = t.corner
        m = ct["mask"]
        if m.any():
            F[m] -= self._corner_lap(ct, m, p)
        return F

    def _corner_lap(self, ct: dict, m: np.ndarray, p: float) -> np.ndarray:
        """``Lap_eta (qt0 + eps q1)`` from the corner equations."""
        nl = self.ws.nl
        O = np.zeros(2)
        eta = ct["eta"][m]
        geom = self.geom
        xi, xim = eta @ geom.e_r, eta @ geom.e_r_minus
        sig, sigm = eta @ geom.e_s, eta @ geom.e_s_minus
        vpp = self.ws.vertex(p)
        vp0 = self.ws.vertex(0.0)
        a, b = vpp.v0[PLUS](xi), vpp.v0[MINUS](xim)
        zt = ct["qt0"][m] + a + b
        lap0 = nl.B(O, zt) - nl.B(O, a) - nl.B(O, b) - p * ct["qt0"][m]
        a0, b0 = vp0.v0[PLUS](xi), vp0.v0[MINUS](xim)
        z0 = ct["q0"][m] + a0 + b0
        f = vp0.v1[PLUS](xi) + sig * vp0.v0_s[PLUS](xi)
        fm = vp0.v1[MINUS](xim) + sigm * vp0.v0_s[MINUS](xim)
        Bt_z = nl.B_t(O, z0)
        g = nl.grad_x_B(O, z0) - nl.grad_x_B(O, a0) - nl.grad_x_B(O, b0)
        lap1 = (
            ct["q1"][m] * Bt_z
            + np.einsum("ij,ij->i", eta, g)
            + f * (Bt_z - nl.B_t(O, a0))
            + fm * (Bt_z - nl.B_t(O, b0))
        )
        return lap0 + self.eps * lap1

    def residual_fd(self, x, p: float = 0.0, h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """5-point finite-difference ``F beta`` with step ``h`` (default ``eps/20``).

        Returns the step-``h`` value and a Richardson estimate of its
        truncation error from the step-``2h`` value.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = self.eps / 20.0 if h is None else h

        def at(step):
            offs = np.array([[0, 0], [step, 0], [-step, 0], [0, step], [0, -step]])
            pts = (x[:, None, :] + offs[None, :, :]).reshape(-1, 2)
            w = self.beta(pts, p).reshape(-1, 5)
            lap = (w[:, 1] + w[:, 2] + w[:, 3] + w[:, 4] - 4 * w[:, 0]) / step**2
            return -self.eps**2 * lap + self.prob.b(x, w[:, 0])

        fh, f2h = at(h), at(2 * h)
        return fh, np.abs(f2h - fh) / 3.0

    def summary(self) -> dict:
        ws = self.ws
        return {
            "eps": self.eps,
            "theta": self.theta,
            "p_max": ws.p_max,
            "Xi": ws.grid1d.Xi,
            "n1d": ws.grid1d.n,
            "R": ws.sector.R,
            "h_corner": ws.sector.h,
            "n2d": ws.sector.n,
            "cache": ws.stats(),
        }


def choose_theta(bundle: ExpansionBundle, points, n_theta: int = 17) -> float:
    """``theta = min(1, 1/(1 + Lambda))`` with ``Lambda`` the max of
    ``|b_uu(x, u0 + t (v0 + v0^- + q0))|`` over the points and ``t`` in ``[0, 1]``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    prob = bundle.prob
    lay = bundle.layer_sum(x)
    u0 = prob.u0(x) * np.ones(x.shape[0])
    lam = 0.0
    for t in np.linspace(0.0, 1.0, n_theta):
        lam = max(lam, float(np.max(np.abs(prob.b_uu(x, u0 + t * lay)))))
    return min(1.0, 1.0 / (1.0 + lam))
