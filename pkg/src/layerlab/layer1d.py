"""Half-line boundary-layer problems in the stretched normal variable.

For a point ``xbar = s e_s`` on a side the profiles solve

    -v0'' + B(xbar, v0) - p v0 = 0,       v0(0) = g - u0,  v0(inf) = 0
    -v1'' + B_t(xbar, v0) v1 = -xi e_r . grad_x B(xbar, v0),  v1(0) = v1(inf) = 0

on a truncated uniform grid with central differences.  Sensitivities in
``p`` and ``s`` solve the differentiated linear problems.  The
first-integral oracle is independent of the finite-difference path and is
meant for tests.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, optimize

from .errors import NewtonDiverged, QuadratureFailure, SingularSystem, WindowTooShort
from .geometry import SectorGeometry
from .problem import LayerNonlinearity, SemilinearProblem

KINDS = ("v0", "v1", "dv0_dp", "dv0_ds", "dv0_dss")


@dataclass(frozen=True)
class HalfLineGrid:
    Xi: float
    n: int

    def __post_init__(self):
        if self.n < 8 or not self.Xi > 0:
            raise ValueError("grid needs n >= 8 and Xi > 0")

    @property
    def h(self) -> float:
        return self.Xi / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.Xi, self.n)


def gamma_eff(gamma: float, p: float) -> float:
    return float(np.sqrt(gamma**2 - abs(p)))


def default_grid(gamma: float, p_max: float = 0.0, Xi_factor: float = 40.0, n: int = 40001) -> HalfLineGrid:
    """Uniform grid on ``[0, Xi_factor / gamma_eff]``, shared by every ``|p| <= p_max``."""
    return HalfLineGrid(Xi=Xi_factor / gamma_eff(gamma, p_max), n=n)


@dataclass
class LayerProfile:
    grid: HalfLineGrid
    values: np.ndarray
    side: str
    s: float
    p: float
    kind: str
    amplitude: float
    residual: float = 0.0
    iterations: int = 0

    @property
    def xi(self) -> np.ndarray:
        return self.grid.nodes

    def __call__(self, xi) -> np.ndarray:
        return interp_uniform(self.values, self.grid.h, xi)


def interp_uniform(values: np.ndarray, h: float, xi) -> np.ndarray:
    """Local cubic (4-point Lagrange) interpolation on ``0, h, 2h, ...``.

    ``values`` may carry leading batch axes; the last axis is the grid.  Points
    beyond the last node evaluate to 0 (layers have decayed there).
    """
    xi = np.asarray(xi, dtype=float)
    n = values.shape[-1]
    t = xi / h
    j = np.clip(np.floor(t).astype(np.int64), 1, n - 3)
    u = t - j
    w_m = -u * (u - 1.0) * (u - 2.0) / 6.0
    w_0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
    w_1 = -(u + 1.0) * u * (u - 2.0) / 2.0
    w_2 = (u + 1.0) * u * (u - 1.0) / 6.0
    if values.ndim == 1:
        out = w_m * values[j - 1] + w_0 * values[j] + w_1 * values[j + 1] + w_2 * values[j + 2]
    else:
        raise ValueError("use interp_rows for batched interpolation")
    return np.where(t > n - 1, 0.0, out)


def interp_rows(values: np.ndarray, rows: np.ndarray, h: float, xi) -> np.ndarray:
    """Like :func:`interp_uniform` but row ``rows[i]`` of a 2-D table is used for point ``i``."""
    xi = np.asarray(xi, dtype=float)
    n = values.shape[-1]
    t = xi / h
    j = np.clip(np.floor(t).astype(np.int64), 1, n - 3)
    u = t - j
    w_m = -u * (u - 1.0) * (u - 2.0) / 6.0
    w_0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
    w_1 = -(u + 1.0) * u * (u - 2.0) / 2.0
    w_2 = (u + 1.0) * u * (u - 1.0) / 6.0
    out = (
        w_m * values[rows, j - 1]
        + w_0 * values[rows, j]
        + w_1 * values[rows, j + 1]
        + w_2 * values[rows, j + 2]
    )
    return np.where(t > n - 1, 0.0, out)


# ---------------------------------------------------------------------------
# discrete operators


def _tridiag_solve(coef: np.ndarray, rhs: np.ndarray, h: float, left: float, right: float) -> np.ndarray:
    """Solve ``-w'' + coef w = rhs`` on the interior nodes with Dirichlet ends.

    ``coef`` and ``rhs`` are given on interior nodes; the full nodal vector is
    returned.
    """
    m = coef.size
    ab = np.empty((3, m))
    ab[0, :] = -1.0
    ab[1, :] = 2.0 + h * h * coef
    ab[2, :] = -1.0
    b = h * h * rhs.astype(float, copy=True)
    b[0] += left
    b[-1] += right
    try:
        w = linalg.solve_banded((1, 1), ab, b, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise SingularSystem("non-finite solution of the layer system")
    out = np.empty(m + 2)
    out[0], out[-1] = left, right
    out[1:-1] = w
    return out


def _scaled_residual(v: np.ndarray, h: float, react) -> np.ndarray:
    return -(v[:-2] - 2.0 * v[1:-1] + v[2:]) + h * h * react(v[1:-1])


def _side_data(prob: SemilinearProblem, geom: SectorGeometry, side: str, s: float):
    e_s, e_r = geom.frame(side)
    xbar = geom.boundary_point(side, float(s))
    g, dg = prob.g_side(side)
    amp = float(g(float(s)) - prob.u0(xbar))
    return xbar, e_s, e_r, amp


def _newton_v0(nl, xbar, amp, p, grid, v_init, max_iter=60):
    h = grid.h

    def react(v):
        return nl.Btilde(xbar, v, p)

    def react_t(v):
        return nl.Btilde_t(xbar, v, p)

    v = v_init.copy()
    v[0], v[-1] = amp, 0.0
    tol = 1e-13 * max(1.0, abs(amp))
    res = _scaled_residual(v, h, react)
    rnorm = np.max(np.abs(res))
    for it in range(max_iter):
        if rnorm <= tol:
            return v, rnorm, it
        m = v.size - 2
        ab = np.empty((3, m))
        ab[0, :] = -1.0
        ab[1, :] = 2.0 + h * h * react_t(v[1:-1])
        ab[2, :] = -1.0
        try:
            dv = linalg.solve_banded((1, 1), ab, -res)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NewtonDiverged(f"singular Jacobian: {exc}") from exc
        lam = 1.0
        while True:
            trial = v.copy()
            trial[1:-1] += lam * dv
            tres = _scaled_residual(trial, h, react)
            tnorm = np.max(np.abs(tres))
            if np.isfinite(tnorm) and (tnorm < rnorm or tnorm <= tol):
                break
            lam *= 0.5
            if lam < 1e-8:
                if rnorm <= 1e3 * tol:
                    # stagnated at roundoff level
                    return v, rnorm, it
                raise NewtonDiverged(f"damping failed at iteration {it}, residual {rnorm:.3e}")
        v, res, rnorm = trial, tres, tnorm
    if rnorm <= 1e3 * tol:
        return v, rnorm, max_iter
    raise NewtonDiverged(f"no convergence after {max_iter} iterations, residual {rnorm:.3e}")


def solve_v0(
    prob: SemilinearProblem,
    geom: SectorGeometry,
    side: str,
    s: float,
    p: float,
    grid: HalfLineGrid,
    v_init: np.ndarray | None = None,
    p_max: float | None = None,
) -> LayerProfile:
    """Monotone decaying solution of the nonlinear layer problem at ``(side, s, p)``.

    Damped Newton from ``A exp(-gamma_eff xi)`` (or ``v_init``); on failure,
    continuation in ``p`` from 0 in steps of ``p_max / 8``.
    """
    nl = LayerNonlinearity(prob)
    xbar, _, _, amp = _side_data(prob, geom, side, s)
    xi = grid.nodes
    if amp == 0.0:
        return LayerProfile(grid, np.zeros(grid.n), side, float(s), float(p), "v0", 0.0)
    if v_init is None:
        v_init = amp * np.exp(-gamma_eff(prob.gamma, min(abs(p), 0.99 * prob.gamma**2)) * xi)
    try:
        v, rnorm, its = _newton_v0(nl, xbar, amp, p, grid, v_init)
    except NewtonDiverged:
        if p == 0.0:
            raise
        step = (p_max if p_max else abs(p)) / 8.0
        n_steps = max(1, int(np.ceil(abs(p) / step)))
        v = amp * np.exp(-prob.gamma * xi)
        v, rnorm, its = _newton_v0(nl, xbar, amp, 0.0, grid, v)
        for pk in np.linspace(0.0, p, n_steps + 1)[1:]:
            v, rnorm, k = _newton_v0(nl, xbar, amp, pk, grid, v)
            its += k
    if amp > 0 and (np.min(v) < -1e-10 or np.max(np.diff(v)) > 1e-10):
        raise NewtonDiverged("computed layer profile is not monotone nonincreasing")
    return LayerProfile(grid, v, side, float(s), float(p), "v0", amp, residual=float(rnorm), iterations=its)


def solve_v1(
    prob: SemilinearProblem, geom: SectorGeometry, side: str, s: float, grid: HalfLineGrid, v0: LayerProfile
) -> LayerProfile:
    """First-order layer correction (independent of ``p``; ``v0`` must be the ``p = 0`` profile)."""
    if v0.p != 0.0:
        raise ValueError("v1 is built on the unperturbed profile (p = 0)")
    nl = LayerNonlinearity(prob)
    xbar, _, e_r, amp = _side_data(prob, geom, side, s)
    xi = grid.nodes
    vi = v0.values[1:-1]
    coef = nl.B_t(xbar, vi)
    rhs = -xi[1:-1] * nl.dir_grad_B(xbar, vi, e_r)
    w = _tridiag_solve(coef, rhs, grid.h, 0.0, 0.0)
    res = _scaled_residual(w, grid.h, lambda u: coef * u - rhs)
    return LayerProfile(grid, w, side, float(s), 0.0, "v1", amp, residual=float(np.max(np.abs(res))))


def sensitivity(
    prob: SemilinearProblem,
    geom: SectorGeometry,
    side: str,
    s: float,
    p: float,
    v0: LayerProfile,
    which: str,
    ds_profile: LayerProfile | None = None,
) -> LayerProfile:
    """Derivative of the layer profile in ``p`` (``dp``), ``s`` (``ds``) or twice in ``s`` (``dss``)."""
    nl = LayerNonlinearity(prob)
    grid = v0.grid
    xbar, e_s, _, amp = _side_data(prob, geom, side, s)
    vi = v0.values[1:-1]
    coef = nl.Btilde_t(xbar, vi, p)
    g, dg = prob.g_side(side)
    if which == "dp":
        rhs, left, kind = vi.copy(), 0.0, "dv0_dp"
    elif which == "ds":
        rhs = -nl.dir_grad_B(xbar, vi, e_s)
        left = float(dg(float(s)) - prob.grad_u0(xbar) @ e_s)
        kind = "dv0_ds"
    elif which == "dss":
        if ds_profile is None:
            ds_profile = sensitivity(prob, geom, side, s, p, v0, "ds")
        w = ds_profile.values[1:-1]
        rhs = -(nl.dir_hess_B(xbar, vi, e_s) + 2.0 * w * nl.dir_grad_Bt(xbar, vi, e_s) + nl.B_tt(xbar, vi) * w * w)
        d = 1e-4
        g2 = (dg(float(s) + d) - dg(float(s) - d)) / (2 * d)
        xp = geom.boundary_point(side, float(s) + d)
        xm = geom.boundary_point(side, float(s) - d)
        u0_ss = (prob.grad_u0(xp) @ e_s - prob.grad_u0(xm) @ e_s) / (2 * d)
        left = float(g2 - u0_ss)
        kind = "dv0_dss"
    else:
        raise ValueError(f"unknown sensitivity {which!r}")
    if amp == 0.0 and which == "dp":
        return LayerProfile(grid, np.zeros(grid.n), side, float(s), float(p), kind, 0.0)
    w = _tridiag_solve(coef, rhs, grid.h, left, 0.0)
    res = _scaled_residual(w, grid.h, lambda u: coef * u - rhs)
    return LayerProfile(grid, w, side, float(s), float(p), kind, amp, residual=float(np.max(np.abs(res))))


# ---------------------------------------------------------------------------
# first-integral oracle


def _potential(nl, xbar, p):
    def F(t):
        val, _ = integrate.quad(lambda tau: float(nl.Btilde(xbar, tau, p)), 0.0, t, epsabs=1e-15, epsrel=1e-13)
        return val

    return F


def first_integral_slope(prob, geom, side, s, p) -> float:
    """``v0'(0) = -sqrt(2 int_0^A Btilde dt)`` for the decaying branch."""
    nl = LayerNonlinearity(prob)
    xbar, _, _, amp = _side_data(prob, geom, side, s)
    F = _potential(nl, xbar, p)(amp)
    if F <= 0:
        raise QuadratureFailure("nonpositive potential at the boundary value")
    return -float(np.sqrt(2.0 * F))


def v0_oracle(prob, geom, side, s, p, xi_samples) -> np.ndarray:
    """Layer profile from the first integral ``(v')^2 / 2 = int_0^v Btilde``.

    ``xi(v) = int_v^A dt / sqrt(2 F(t))`` is evaluated by adaptive quadrature
    (in ``log t``) and inverted with Brent's method.
    """
    nl = LayerNonlinearity(prob)
    xbar, _, _, amp = _side_data(prob, geom, side, s)
    if not amp > 0:
        raise QuadratureFailure("oracle requires a positive boundary amplitude")
    F = _potential(nl, xbar, p)
    for t in np.linspace(0.0, amp, 65)[1:]:
        if F(t) <= 0:
            raise QuadratureFailure(f"potential nonpositive at t={t:.6g}")
    log_amp = np.log(amp)

    def xi_of_logv(lv):
        val, _ = integrate.quad(
            lambda u: np.exp(u) / np.sqrt(2.0 * F(np.exp(u))), lv, log_amp, epsabs=1e-13, epsrel=1e-12, limit=200
        )
        return val

    out = []
    for target in np.atleast_1d(np.asarray(xi_samples, dtype=float)):
        if target <= 0.0:
            out.append(amp)
            continue
        lo = log_amp - 2.0 * target - 2.0
        while xi_of_logv(lo) < target:
            lo -= 2.0 * target + 2.0
        lv = optimize.brentq(lambda x: xi_of_logv(x) - target, lo, log_amp, xtol=1e-14, rtol=1e-14)
        out.append(np.exp(lv))
    return np.array(out)


def oracle_xi_of_v(prob, geom, side, s, p, v) -> float:
    """Direct quadrature ``xi(v)`` (no inversion)."""
    nl = LayerNonlinearity(prob)
    xbar, _, _, amp = _side_data(prob, geom, side, s)
    F = _potential(nl, xbar, p)
    val, _ = integrate.quad(lambda t: 1.0 / np.sqrt(2.0 * F(t)), v, amp, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------------------------
# decay


def fit_decay(xi, values) -> dict:
    """Least-squares slope of ``-log(values)`` against ``xi``."""
    xi = np.asarray(xi, dtype=float)
    values = np.asarray(values, dtype=float)
    if xi.size < 8:
        raise WindowTooShort(f"{xi.size} nodes in window, need >= 8")
    if np.any(values <= 0):
        raise ValueError("decay fit needs strictly positive values")
    y = -np.log(values)
    A = np.vstack([xi, np.ones_like(xi)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"rate": float(coef[0]), "r2": r2}


def decay_rate(profile: LayerProfile, window=(5.0, 15.0)) -> dict:
    xi = profile.xi
    mask = (xi >= window[0]) & (xi <= window[1])
    return fit_decay(xi[mask], profile.values[mask])


# ---------------------------------------------------------------------------
# station tables and the profile evaluator


@dataclass
class SideProfiles:
    """Layer profiles of one side at one ``p``, tabulated on ``s``-stations.

    Values between stations use cubic Hermite interpolation in ``s`` (with the
    solved ``s``-derivative), second ``s``-derivatives are interpolated
    linearly.  In ``xi`` a local cubic on the stored grid is used.
    """

    side: str
    p: float
    grid: HalfLineGrid
    stride: int
    s0: float
    ds: float
    amplitude: np.ndarray
    v0: np.ndarray
    v0_s: np.ndarray
    v0_ss: np.ndarray
    v1: np.ndarray | None = None
    v1_s: np.ndarray | None = None
    v1_ss: np.ndarray | None = None
    ring_dp: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.grid.h * self.stride

    @property
    def n_stations(self) -> int:
        return self.v0.shape[0]

    @property
    def stations(self) -> np.ndarray:
        return self.s0 + self.ds * np.arange(self.n_stations)

    @property
    def ring_index(self) -> int:
        return int(round(-self.s0 / self.ds))

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        t = (s - self.s0) / self.ds
        if np.any(t < -1.0) or np.any(t > self.n_stations):
            raise ValueError(f"s outside station range [{self.s0}, {self.stations[-1]}]")
        k = np.clip(np.floor(t).astype(np.int64), 0, self.n_stations - 2)
        return k, t - k

    def _hermite(self, val, der, k, u, xi):
        a0 = interp_rows(val, k, self.h, xi)
        a1 = interp_rows(val, k + 1, self.h, xi)
        d0 = interp_rows(der, k, self.h, xi)
        d1 = interp_rows(der, k + 1, self.h, xi)
        u2, u3 = u * u, u * u * u
        return (
            (2 * u3 - 3 * u2 + 1) * a0
            + (u3 - 2 * u2 + u) * self.ds * d0
            + (-2 * u3 + 3 * u2) * a1
            + (u3 - u2) * self.ds * d1
        )

    def _linear(self, val, k, u, xi):
        return (1 - u) * interp_rows(val, k, self.h, xi) + u * interp_rows(val, k + 1, self.h, xi)

    def evaluate(self, xi, s, kinds=("v0",)) -> dict:
        """Interpolated profiles at points ``(xi, s)``; kinds from
        ``v0, v0_s, v0_ss, v1, v1_ss``."""
        xi = np.asarray(xi, dtype=float)
        k, u = self._locate(s)
        out = {}
        for kind in kinds:
            if kind == "v0":
                out[kind] = self._hermite(self.v0, self.v0_s, k, u, xi)
            elif kind == "v0_s":
                out[kind] = self._hermite(self.v0_s, self.v0_ss, k, u, xi)
            elif kind == "v0_ss":
                out[kind] = self._linear(self.v0_ss, k, u, xi)
            elif kind == "v1":
                out[kind] = self._zero_or(self.v1, lambda a: self._hermite(a, self.v1_s, k, u, xi), xi)
            elif kind == "v1_ss":
                out[kind] = self._zero_or(self.v1_ss, lambda a: self._linear(a, k, u, xi), xi)
            else:
                raise ValueError(f"unknown kind {kind!r}")
        return out

    def _zero_or(self, arr, f, xi):
        if arr is None:
            raise ValueError("first-order profiles exist only for p = 0 tables")
        return f(arr)

    def ring(self, xi, kind="v0") -> np.ndarray:
        """Profile at ``s = 0`` (the vertex station): kinds ``v0, v0_s, v1, dp``."""
        k = self.ring_index
        table = {"v0": self.v0, "v0_s": self.v0_s, "v1": self.v1, "dp": self.ring_dp}[kind]
        if table is None:
            raise ValueError(f"{kind} not tabulated at p={self.p}")
        xi = np.asarray(xi, dtype=float)
        return interp_rows(table, np.full(xi.shape, k), self.h, xi)


def _store(values, stride):
    return values[::stride].copy()


def build_side_profiles(
    prob: SemilinearProblem,
    geom: SectorGeometry,
    side: str,
    p: float,
    grid: HalfLineGrid,
    s_range: tuple[float, float],
    ds: float = 0.05,
    stride: int = 1,
    p_max: float | None = None,
) -> SideProfiles:
    if (grid.n - 1) % stride:
        raise ValueError("grid size minus one must be divisible by the storage stride")
    k_lo = int(np.floor(min(s_range[0], 0.0) / ds)) - 1
    k_hi = int(np.ceil(max(s_range[1], 0.0) / ds)) + 1
    stations = ds * np.arange(k_lo, k_hi + 1)
    n_st = stations.size
    m = (grid.n - 1) // stride + 1
    v0 = np.empty((n_st, m))
    v0_s = np.empty((n_st, m))
    v0_ss = np.empty((n_st, m))
    amp = np.empty(n_st)
    v1 = np.empty((n_st, m)) if p == 0.0 else None
    res = {"v0": 0.0, "ds": 0.0, "dss": 0.0, "v1": 0.0}
    ring_dp = None
    # march outward from the vertex so each Newton solve starts from its neighbour
    k0 = -k_lo
    order = list(range(k0, n_st)) + list(range(k0 - 1, -1, -1))
    prev = None
    for k in order:
        if k == k0 - 1:
            prev = first
        s = float(stations[k])
        prof = solve_v0(prob, geom, side, s, p, grid, v_init=prev, p_max=p_max)
        if k == k0:
            first = prof.values
            dp = sensitivity(prob, geom, side, s, p, prof, "dp")
            ring_dp = _store(dp.values, stride)
        prev = prof.values
        w = sensitivity(prob, geom, side, s, p, prof, "ds")
        w2 = sensitivity(prob, geom, side, s, p, prof, "dss", ds_profile=w)
        v0[k], v0_s[k], v0_ss[k], amp[k] = _store(prof.values, stride), _store(w.values, stride), _store(w2.values, stride), prof.amplitude
        res["v0"] = max(res["v0"], prof.residual)
        res["ds"] = max(res["ds"], w.residual)
        res["dss"] = max(res["dss"], w2.residual)
        if v1 is not None:
            q = solve_v1(prob, geom, side, s, grid, prof)
            v1[k] = _store(q.values, stride)
            res["v1"] = max(res["v1"], q.residual)
    out = SideProfiles(side, float(p), grid, stride, float(stations[0]), ds, amp, v0, v0_s, v0_ss, ring_dp=ring_dp, residuals=res)
    if v1 is not None:
        out.v1 = v1
        out.v1_s = np.gradient(v1, ds, axis=0, edge_order=2)
        out.v1_ss = np.gradient(out.v1_s, ds, axis=0, edge_order=2)
    return out


class ProfileCache:
    """Thread-safe LRU cache of solved profiles and station tables."""

    def __init__(self, capacity: int = 16):
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_build(self, key, build):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            self.misses += 1
        value = build()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)
        return value

    def stats(self) -> dict:
        return {"capacity": self.capacity, "entries": len(self._data), "hits": self.hits, "misses": self.misses}


def check_truncation(grid: HalfLineGrid, gamma: float, p: float) -> None:
    """Raise if ``Xi < 30 / gamma_eff`` (truncation would pollute the profile)."""
    if grid.Xi < 30.0 / gamma_eff(gamma, p):
        raise ValueError(f"Xi={grid.Xi:.4g} too short for gamma_eff={gamma_eff(gamma, p):.4g}")


def export_csv(profile: LayerProfile, path) -> None:
    """Write ``xi,value`` rows for every grid node."""
    data = np.column_stack([profile.xi, profile.values])
    np.savetxt(path, data, delimiter=",", header="xi,value", comments="", fmt="%.17g")
