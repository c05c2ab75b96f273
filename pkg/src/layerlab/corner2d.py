"""Corner-layer problems on the truncated stretched sector.

The sector ``S = {zeta1 e_s + zeta2 e_s^- : zeta >= 0}`` is mapped to the
quarter plane by oblique coordinates ``zeta``.  There the Laplacian reads

    Delta = (u_11 + u_22 - 2 c u_12) / sin(omega)^2,   c = cos(omega),

and the mixed term is folded into the diagonal that makes the stencil
monotone (7 points; 5 when ``c = 0``).  Nodes inside ``|eta| < R`` are
unknowns; sides carry their Dirichlet data and nodes just outside the disk
carry the artificial arc data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import cg

from .errors import ArcSensitivity, NewtonDiverged, SingularSystem
from .geometry import MINUS, PLUS, SectorGeometry
from .layer1d import HalfLineGrid, LayerProfile, fit_decay, sensitivity, solve_v0, solve_v1
from .problem import LayerNonlinearity, SemilinearProblem

FIELD_MAGIC = b"LLFIELD1"


@dataclass(frozen=True)
class SectorGrid:
    """Uniform ``n x n`` grid in oblique coordinates covering ``|eta| <= R``."""

    omega: float
    R: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("corner grid needs n >= 16")
        if not 0.0 < self.omega < np.pi:
            raise ValueError("opening angle must lie in (0, pi)")

    @cached_property
    def c(self) -> float:
        c = float(np.cos(self.omega))
        return 0.0 if abs(c) < 1e-15 else c

    @cached_property
    def sin(self) -> float:
        return float(np.sin(self.omega))

    @cached_property
    def h(self) -> float:
        # two spare layers beyond the disk so every unknown has all neighbours
        return self.R * max(1.0, 1.0 / self.sin) / (self.n - 3)

    @cached_property
    def zeta(self) -> np.ndarray:
        return self.h * np.arange(self.n)

    @cached_property
    def eta(self) -> np.ndarray:
        """Physical stretched coordinates, shape ``(n, n, 2)``; axis 0 is ``zeta1``."""
        z1, z2 = np.meshgrid(self.zeta, self.zeta, indexing="ij")
        return np.stack([z1 + self.c * z2, self.sin * z2], axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.hypot(self.eta[..., 0], self.eta[..., 1])

    @cached_property
    def stretched(self) -> dict:
        z1, z2 = np.meshgrid(self.zeta, self.zeta, indexing="ij")
        return {
            "xi": self.sin * z2,
            "xi_minus": self.sin * z1,
            "sigma": z1 + self.c * z2,
            "sigma_minus": self.c * z1 + z2,
        }

    @cached_property
    def interior(self) -> np.ndarray:
        m = self.radius < self.R
        m[0, :] = False
        m[:, 0] = False
        return m

    @cached_property
    def dirichlet(self) -> np.ndarray:
        """Non-interior nodes referenced by the stencil of some interior node."""
        near = np.zeros_like(self.interior)
        I = self.interior
        for di, dj in self._offsets:
            near |= np.roll(np.roll(I, di, axis=0), dj, axis=1)
        return near & ~I

    @property
    def _offsets(self):
        base = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        if self.c > 0:
            base += [(1, -1), (-1, 1)]
        elif self.c < 0:
            base += [(1, 1), (-1, -1)]
        return base

    @cached_property
    def gamma_nodes(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), bool)
        m[:, 0] = True
        return m

    @cached_property
    def gamma_minus_nodes(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), bool)
        m[0, :] = True
        return m

    def to_zeta(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        z2 = eta[..., 1] / self.sin
        return np.stack([eta[..., 0] - self.c * z2, z2], axis=-1)


def default_sector_grid(prob: SemilinearProblem, R_factor: float = 40.0, n: int = 600) -> SectorGrid:
    return SectorGrid(omega=prob.omega, R=R_factor / prob.gamma, n=n)


def neg_laplacian(grid: SectorGrid, U: np.ndarray) -> np.ndarray:
    """``-Delta_h U`` on nodes ``[1:-1, 1:-1]``."""
    c = abs(grid.c)
    C = U[1:-1, 1:-1]
    cross = U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2]
    out = (4.0 - 2.0 * c) * C - (1.0 - c) * cross
    if grid.c > 0:
        out -= c * (U[2:, :-2] + U[:-2, 2:])
    elif grid.c < 0:
        out -= c * (U[2:, 2:] + U[:-2, :-2])
    return out / (grid.sin**2 * grid.h**2)


@dataclass
class _Operator:
    """``-Delta_h`` restricted to interior rows, split into interior and Dirichlet columns."""

    A_ii: sparse.csr_matrix
    A_id: sparse.csr_matrix
    idx_i: np.ndarray
    idx_d: np.ndarray


_OPERATORS: dict = {}


def _operator(grid: SectorGrid) -> _Operator:
    key = (grid.omega, grid.R, grid.n)
    if key in _OPERATORS:
        return _OPERATORS[key]
    n = grid.n
    flat_i = np.flatnonzero(grid.interior.ravel())
    flat_d = np.flatnonzero(grid.dirichlet.ravel())
    pos = np.full(n * n, -1, dtype=np.int64)
    pos[flat_i] = np.arange(flat_i.size)
    dpos = np.full(n * n, -1, dtype=np.int64)
    dpos[flat_d] = np.arange(flat_d.size)
    c = abs(grid.c)
    scale = 1.0 / (grid.sin**2 * grid.h**2)
    rows, cols, vals = [flat_i], [flat_i], [np.full(flat_i.size, (4.0 - 2.0 * c) * scale)]
    for di, dj in grid._offsets:
        w = (1.0 - c) if (di == 0 or dj == 0) else c
        rows.append(flat_i)
        cols.append(flat_i + di * n + dj)
        vals.append(np.full(flat_i.size, -w * scale))
    r = np.concatenate(rows)
    k = np.concatenate(cols)
    v = np.concatenate(vals)
    ri = pos[r]
    in_i = pos[k] >= 0
    A_ii = sparse.csr_matrix((v[in_i], (ri[in_i], pos[k[in_i]])), shape=(flat_i.size, flat_i.size))
    A_id = sparse.csr_matrix((v[~in_i], (ri[~in_i], dpos[k[~in_i]])), shape=(flat_i.size, flat_d.size))
    op = _Operator(A_ii, A_id, flat_i, flat_d)
    _OPERATORS.clear()  # one grid at a time keeps memory bounded
    _OPERATORS[key] = op
    return op


def _spd_solve(A: sparse.csr_matrix, b: np.ndarray, x0=None, rtol: float = 1e-12) -> np.ndarray:
    d = A.diagonal()
    if np.any(d <= 0):
        raise SingularSystem("operator diagonal is not positive")
    M = sparse.diags(1.0 / d)
    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0], M=M)
    if info != 0:
        raise SingularSystem(f"conjugate gradients did not converge (info={info})")
    return x


# ---------------------------------------------------------------------------
# vertex profiles


@dataclass
class VertexProfiles:
    """Layer profiles at the vertex (``s = 0``) of both sides for one ``p``."""

    p: float
    v0: dict
    dp: dict
    v0_s: dict | None = None
    v1: dict | None = None

    def amplitude(self) -> float:
        return self.v0[PLUS].amplitude


def vertex_profiles(
    prob: SemilinearProblem, geom: SectorGeometry, p: float, grid: HalfLineGrid, first_order: bool | None = None
) -> VertexProfiles:
    first_order = (p == 0.0) if first_order is None else first_order
    v0, dp, vs, v1 = {}, {}, {}, {}
    for side in (PLUS, MINUS):
        v0[side] = solve_v0(prob, geom, side, 0.0, p, grid)
        dp[side] = sensitivity(prob, geom, side, 0.0, p, v0[side], "dp")
        if first_order:
            base = v0[side] if p == 0.0 else solve_v0(prob, geom, side, 0.0, 0.0, grid)
            vs[side] = sensitivity(prob, geom, side, 0.0, 0.0, base, "ds")
            v1[side] = solve_v1(prob, geom, side, 0.0, grid, base)
    amps = {round(v0[s].amplitude, 12) for s in v0}
    if len(amps) != 1:
        raise ValueError("boundary data is discontinuous at the vertex")
    return VertexProfiles(p, v0, dp, vs if first_order else None, v1 if first_order else None)


def _ring(prof: LayerProfile, xi) -> np.ndarray:
    return prof(xi)


def _side_sum(vp: VertexProfiles, st: dict, which: str) -> tuple[np.ndarray, np.ndarray]:
    """Values of a vertex profile pair at ``(xi, xi^-)``: returns (plus part, minus part)."""
    if which == "v0":
        return _ring(vp.v0[PLUS], st["xi"]), _ring(vp.v0[MINUS], st["xi_minus"])
    if which == "dp":
        return _ring(vp.dp[PLUS], st["xi"]), _ring(vp.dp[MINUS], st["xi_minus"])
    if which == "first":
        # v1 + sigma v0_s on each side
        a = _ring(vp.v1[PLUS], st["xi"]) + st["sigma"] * _ring(vp.v0_s[PLUS], st["xi"])
        b = _ring(vp.v1[MINUS], st["xi_minus"]) + st["sigma_minus"] * _ring(vp.v0_s[MINUS], st["xi_minus"])
        return a, b
    raise ValueError(which)


# ---------------------------------------------------------------------------
# fields


@dataclass
class CornerField:
    grid: SectorGrid
    values: np.ndarray
    kind: str
    p: float | None = None
    residual: float = 0.0
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @cached_property
    def spline(self) -> RectBivariateSpline:
        z = self.grid.zeta
        return RectBivariateSpline(z, z, self.values, kx=3, ky=3, s=0)

    def interpolate(self, eta) -> np.ndarray:
        """Cubic-spline value at stretched points; callers mask ``|eta| > R``."""
        eta = np.asarray(eta, dtype=float)
        zeta = self.grid.to_zeta(eta)
        shape = zeta.shape[:-1]
        zmax = self.grid.zeta[-1]
        a = np.clip(zeta[..., 0].ravel(), 0.0, zmax)
        b = np.clip(zeta[..., 1].ravel(), 0.0, zmax)
        return self.spline.ev(a, b).reshape(shape)

    def grad(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical gradient ``(d/deta1, d/deta2)`` by central differences on nodes ``[1:-1, 1:-1]``."""
        g = self.grid
        U = self.values
        d1 = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2 * g.h)
        d2 = (U[1:-1, 2:] - U[1:-1, :-2]) / (2 * g.h)
        # zeta1 = eta1 - c eta2/sin, zeta2 = eta2/sin
        return d1, (d2 - g.c * d1) / g.sin


def _fill_boundary(grid: SectorGrid, U: np.ndarray, gamma_vals, gamma_minus_vals, arc_vals) -> None:
    """Write Dirichlet data to every non-interior node."""
    outside = ~grid.interior
    U[outside] = arc_vals[outside]
    U[grid.gamma_nodes] = gamma_vals[grid.gamma_nodes]
    U[grid.gamma_minus_nodes] = gamma_minus_vals[grid.gamma_minus_nodes]


def solve_z0(
    prob: SemilinearProblem,
    geom: SectorGeometry,
    p: float,
    grid: SectorGrid,
    vp: VertexProfiles,
    z_init: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
) -> CornerField:
    """Damped Newton for ``-Delta z + Btilde(O, z; p) = 0``, ``z = A`` on the sides.

    Arc data is ``v0(xi) + v0^-(xi^-)`` clipped to ``A``; the same expression
    seeds the iteration unless ``z_init`` is given.
    """
    if vp.p != p:
        raise ValueError("vertex profiles solved at a different p")
    nl = LayerNonlinearity(prob)
    O = np.zeros(2)
    A = vp.amplitude()
    n = grid.n
    if A == 0.0:
        return CornerField(grid, np.zeros((n, n)), "z0", p)
    st = grid.stretched
    a, b = _side_sum(vp, st, "v0")
    arc = np.minimum(a + b, A)
    U = arc.copy() if z_init is None else z_init.copy()
    full_A = np.full((n, n), A)
    _fill_boundary(grid, U, full_A, full_A, arc)
    op = _operator(grid)
    ud = U.ravel()[op.idx_d]
    bd = op.A_id @ ud
    z = U.ravel()[op.idx_i]

    def residual(z):
        return op.A_ii @ z + bd + nl.Btilde(O, z, p)

    r = residual(z)
    rn = np.max(np.abs(r))
    it = 0
    while rn > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"corner Newton stalled at residual {rn:.3e}")
        J = op.A_ii + sparse.diags(nl.Btilde_t(O, z, p))
        dz = _spd_solve(J.tocsr(), -r)
        lam = 1.0
        while True:
            zt = z + lam * dz
            rt = residual(zt)
            rtn = np.max(np.abs(rt))
            if np.isfinite(rtn) and rtn < rn:
                break
            lam *= 0.5
            if lam < 1e-6:
                raise NewtonDiverged(f"corner Newton damping failed at residual {rn:.3e}")
        z, r, rn = zt, rt, rtn
        it += 1
    out = U.ravel().copy()
    out[op.idx_i] = z
    return CornerField(grid, out.reshape(n, n), "z0", p, residual=float(rn), iterations=it, meta={"A": A})


def assemble_q0(z0: CornerField, vp: VertexProfiles) -> CornerField:
    """``q0 = z0 - v0(xi) - v0^-(xi^-)`` at every node."""
    if z0.p != vp.p:
        raise ValueError("p mismatch between z0 and vertex profiles")
    a, b = _side_sum(vp, z0.grid.stretched, "v0")
    return CornerField(z0.grid, z0.values - a - b, "q0", z0.p)


def _linear_solve(grid: SectorGrid, coef: np.ndarray, rhs: np.ndarray, bvals: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``-Delta_h w + coef w = rhs`` with Dirichlet values ``bvals`` on non-interior nodes."""
    op = _operator(grid)
    n = grid.n
    bd = op.A_id @ bvals.ravel()[op.idx_d]
    ci = coef.ravel()[op.idx_i]
    J = (op.A_ii + sparse.diags(ci)).tocsr()
    f = rhs.ravel()[op.idx_i] - bd
    w = _spd_solve(J, f)
    res = float(np.max(np.abs(J @ w - f))) if w.size else 0.0
    out = bvals.ravel().copy()
    out[op.idx_i] = w
    return out.reshape(n, n), res


def solve_q1(
    prob: SemilinearProblem, geom: SectorGeometry, grid: SectorGrid, z0: CornerField, vp: VertexProfiles
) -> tuple[CornerField, CornerField]:
    """First-order corner correction in ``q``-form; returns ``(q1, z1)`` with ``z1`` reassembled."""
    if z0.p != 0.0 or vp.p != 0.0 or vp.v1 is None:
        raise ValueError("q1 needs p = 0 fields and first-order vertex profiles")
    nl = LayerNonlinearity(prob)
    O = np.zeros(2)
    st = grid.stretched
    eta = grid.eta
    Z = z0.values
    v, vm = _side_sum(vp, st, "v0")
    f, fm = _side_sum(vp, st, "first")
    gB = lambda t: nl.grad_x_B(O, t)  # noqa: E731
    gz, gv, gvm = gB(Z), gB(v), gB(vm)
    eta_dot = lambda g: eta[..., 0] * g[..., 0] + eta[..., 1] * g[..., 1]  # noqa: E731
    Bt_z = nl.B_t(O, Z)
    rhs = -(eta_dot(gz) - eta_dot(gv) - eta_dot(gvm)) - f * (Bt_z - nl.B_t(O, v)) - fm * (Bt_z - nl.B_t(O, vm))
    bvals = np.zeros_like(Z)
    _fill_boundary(grid, bvals, -fm, -f, np.zeros_like(Z))
    Q, res = _linear_solve(grid, Bt_z, rhs, bvals)
    q1 = CornerField(grid, Q, "q1", None, residual=res)
    z1 = CornerField(grid, Q + f + fm, "z1", None)
    return q1, z1


def solve_q0p(
    prob: SemilinearProblem,
    geom: SectorGeometry,
    p: float,
    grid: SectorGrid,
    z0: CornerField,
    vp: VertexProfiles,
    form: str = "z",
) -> CornerField:
    """``p``-derivative of ``q0`` from the differentiated corner problem.

    ``form="z"`` differentiates the discrete ``z0`` problem
    (``(-Delta_h + Bt_t) z_p = z0``, ``z_p = 0`` on the sides, arc data
    ``v_p + v_p^-``) and subtracts the profile derivatives; it agrees with
    differencing :func:`assemble_q0` in ``p`` to ``O(delta^2)``.
    ``form="q"`` discretizes the ``q``-form directly, which adds an ``O(h^2)``
    consistency error.
    """
    nl = LayerNonlinearity(prob)
    O = np.zeros(2)
    st = grid.stretched
    Z = z0.values
    v, vm = _side_sum(vp, st, "v0")
    w, wm = _side_sum(vp, st, "dp")
    Bt_z = nl.Btilde_t(O, Z, p)
    if form == "z":
        A = vp.amplitude()
        bvals = np.zeros_like(Z)
        # the clip at A is inactive on the arc except where both profiles are ~A
        arc = np.where(v + vm < A, w + wm, 0.0)
        _fill_boundary(grid, bvals, np.zeros_like(Z), np.zeros_like(Z), arc)
        Zp, res = _linear_solve(grid, Bt_z, Z, bvals)
        Q = Zp - w - wm
    elif form == "q":
        q0 = Z - v - vm
        rhs = q0 - w * (Bt_z - nl.Btilde_t(O, v, p)) - wm * (Bt_z - nl.Btilde_t(O, vm, p))
        bvals = np.zeros_like(Z)
        _fill_boundary(grid, bvals, -wm, -w, np.zeros_like(Z))
        Q, res = _linear_solve(grid, Bt_z, rhs, bvals)
    else:
        raise ValueError(f"unknown form {form!r}")
    return CornerField(grid, Q, "q0p", p, residual=res, meta={"form": form})


def z1_residual(prob: SemilinearProblem, z0: CornerField, z1: CornerField, radius: float | None = None) -> float:
    """Max discrete residual of ``-Delta z1 + B_t(O,z0) z1 + eta . grad_x B(O, z0)`` on ``|eta| < radius``."""
    nl = LayerNonlinearity(prob)
    grid = z1.grid
    O = np.zeros(2)
    radius = grid.R / 2 if radius is None else radius
    Z = z0.values[1:-1, 1:-1]
    eta = grid.eta[1:-1, 1:-1]
    g = nl.grad_x_B(O, Z)
    r = neg_laplacian(grid, z1.values) + nl.B_t(O, Z) * z1.values[1:-1, 1:-1] + eta[..., 0] * g[..., 0] + eta[..., 1] * g[..., 1]
    mask = grid.interior[1:-1, 1:-1] & (grid.radius[1:-1, 1:-1] < radius)
    return float(np.max(np.abs(r[mask]))) if mask.any() else 0.0


def q0_identity_residual(prob: SemilinearProblem, q0: CornerField, vp: VertexProfiles, p: float) -> float:
    """Max of ``|Delta_h q0 - [Bt(q0+v+v^-) - Bt(v) - Bt(v^-)]|`` over interior nodes."""
    nl = LayerNonlinearity(prob)
    grid = q0.grid
    O = np.zeros(2)
    v, vm = _side_sum(vp, grid.stretched, "v0")
    v, vm = v[1:-1, 1:-1], vm[1:-1, 1:-1]
    Q = q0.values[1:-1, 1:-1]
    rhs = nl.Btilde(O, Q + v + vm, p) - nl.Btilde(O, v, p) - nl.Btilde(O, vm, p)
    r = -neg_laplacian(grid, q0.values) - rhs
    mask = grid.interior[1:-1, 1:-1]
    return float(np.max(np.abs(r[mask])))


# ---------------------------------------------------------------------------
# evaluation at arbitrary stretched points


class CornerEvaluator:
    """``q0``, ``q1`` at arbitrary stretched points, zero for ``|eta| >= R``.

    The spline is taken of ``z`` fields (smooth, exact traces on the sides)
    and the continuous vertex profiles are subtracted afterwards.
    """

    def __init__(self, z0: CornerField, vp: VertexProfiles, z1: CornerField | None = None):
        self.z0, self.vp, self.z1 = z0, vp, z1
        self.grid = z0.grid
        self.geom = SectorGeometry(self.grid.omega)

    def _stretched(self, eta):
        eta = np.asarray(eta, dtype=float)
        g = self.geom
        return {
            "xi": eta @ g.e_r,
            "xi_minus": eta @ g.e_r_minus,
            "sigma": eta @ g.e_s,
            "sigma_minus": eta @ g.e_s_minus,
        }

    def _inside(self, eta):
        return np.hypot(eta[..., 0], eta[..., 1]) < self.grid.R

    def q0(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        st = self._stretched(eta)
        a, b = _side_sum(self.vp, st, "v0")
        out = self.z0.interpolate(eta) - a - b
        return np.where(self._inside(eta), out, 0.0)

    def q1(self, eta) -> np.ndarray:
        if self.z1 is None:
            raise ValueError("first-order corner field not available")
        eta = np.asarray(eta, dtype=float)
        st = self._stretched(eta)
        a, b = _side_sum(self.vp, st, "first")
        out = self.z1.interpolate(eta) - a - b
        return np.where(self._inside(eta), out, 0.0)


# ---------------------------------------------------------------------------
# claims


def _ray_decay(field: CornerField, direction: np.ndarray, r_lo: float, r_hi: float, floor: float = 1e-13) -> dict:
    r = np.linspace(r_lo, r_hi, 64)
    pts = r[:, None] * direction[None, :]
    vals = np.abs(field.interpolate(pts))
    keep = vals > floor
    if keep.sum() < 8:
        return {"rate": float("nan"), "r2": float("nan"), "C": float("nan")}
    fit = fit_decay(r[keep], vals[keep])
    # envelope constant so that |f| <= C exp(-rate r) on the ray
    fit["C"] = float(np.max(vals[keep] * np.exp(fit["rate"] * r[keep])))
    return fit


def check_corner_claims(prob: SemilinearProblem, fields: dict, vertex: dict) -> dict:
    """Sandwich, bounds, gradient and decay diagnostics.

    ``fields[p]`` is a dict with keys among ``z0, q0, q1, q0p``;
    ``vertex[p]`` the matching :class:`VertexProfiles`.
    """
    out = {"per_p": {}, "monotone_violations": 0, "monotone_worst": 0.0}
    ps = sorted(fields)
    for p in ps:
        f = fields[p]
        z0 = f["z0"]
        grid = z0.grid
        A = vertex[p].amplitude()
        a, b = _side_sum(vertex[p], grid.stretched, "v0")
        lower = np.maximum(a, b)
        I = grid.interior
        viol = np.maximum(lower - z0.values, 0.0)[I]
        over = np.maximum(z0.values - A, 0.0)[I]
        g1, g2 = z0.grad()
        gnorm = np.hypot(g1, g2)[I[1:-1, 1:-1]]
        bis = np.array([np.cos(grid.omega / 2), np.sin(grid.omega / 2)])
        rec = {
            "h": grid.h,
            "R": grid.R,
            "sandwich_violations": int(np.sum(viol > 0)),
            "sandwich_worst": float(viol.max(initial=0.0)),
            "upper_violations": int(np.sum(over > 1e-12)),
            "min_z0": float(z0.values[I].min()),
            "max_grad_z0": float(gnorm.max(initial=0.0)),
            "decay": {},
        }
        r_hi = 0.6 * grid.R
        rec["decay"]["z0"] = _ray_decay(z0, bis, 0.2 * grid.R, r_hi)
        for k in ("q0", "q1", "q0p"):
            if k in f and f[k] is not None:
                rec["decay"][k] = _ray_decay(f[k], bis, 3.0, 0.4 * grid.R)
        out["per_p"][p] = rec
    for p_lo, p_hi in zip(ps[:-1], ps[1:]):
        d = fields[p_hi]["z0"].values - fields[p_lo]["z0"].values
        worst = float(max(0.0, -d.min()))
        out["monotone_worst"] = max(out["monotone_worst"], worst)
        out["monotone_violations"] += int(np.sum(d < -1e-8))
    return out


def truncation_check(coarse: CornerField, wide: CornerField, h2_estimate: float) -> dict:
    """Compare ``z0`` on ``|eta| < R/2`` for radius ``R`` and ``2R`` (same ``h``)."""
    g = coarse.grid
    mask = g.interior & (g.radius < g.R / 2)
    pts = g.eta[mask]
    diff = float(np.max(np.abs(coarse.values[mask] - wide.interpolate(pts))))
    ok = diff <= 10.0 * h2_estimate
    rec = {"max_diff": diff, "bound": 10.0 * h2_estimate, "passed": ok}
    if not ok:
        raise ArcSensitivity(f"z0 moved by {diff:.3e} when R doubled (bound {10 * h2_estimate:.3e})")
    return rec


# ---------------------------------------------------------------------------
# export


def export_csv(field: CornerField, path, mask_outside: bool = True) -> None:
    g = field.grid
    m = (g.radius <= g.R) if mask_outside else np.ones_like(g.radius, bool)
    eta = g.eta[m]
    data = np.column_stack([eta[:, 0], eta[:, 1], field.values[m]])
    np.savetxt(path, data, delimiter=",", header="eta1,eta2,value", comments="", fmt="%.17g")


def export_binary(field: CornerField, path) -> None:
    """Binary dump: 8-byte magic ``LLFIELD1``, two little-endian uint32 dims
    (rows = zeta1 index, cols = zeta2 index), three float64 ``h, R, omega``,
    then row-major little-endian float64 values."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<II", g.n, g.n))
        fh.write(struct.pack("<ddd", g.h, g.R, g.omega))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_binary(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FIELD_MAGIC:
            raise ValueError("not a layerlab field dump")
        rows, cols = struct.unpack("<II", fh.read(8))
        h, R, omega = struct.unpack("<ddd", fh.read(24))
        vals = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols)
    return {"rows": rows, "cols": cols, "h": h, "R": R, "omega": omega}, vals.copy()
