"""Full finite-difference solve of ``-eps^2 Lap u + b(x, u) = 0`` near the vertex.

The domain is the parallelogram ``{zeta1 e_s + zeta2 e_s^- : 0 <= zeta <= L}``
with ``g`` on the two sides of the sector and ``u_as`` on the two artificial
sides.  Each oblique direction carries a piecewise-uniform (Shishkin) mesh
refined towards the sector side it meets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, NewtonDiverged
from .geometry import SectorGeometry
from .problem import SemilinearProblem


def shishkin_nodes(L: float, N: int, tau: float) -> np.ndarray:
    """``N/2`` uniform intervals on ``[0, tau]`` and ``N/2`` on ``[tau, L]``."""
    if N % 2:
        raise ValueError("N must be even")
    tau = min(tau, L / 2)
    return np.concatenate([np.linspace(0.0, tau, N // 2 + 1), np.linspace(tau, L, N // 2 + 1)[1:]])


@dataclass
class ReferenceSolution:
    eps: float
    zeta: np.ndarray
    x: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int
    tau: float
    interior: np.ndarray

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.zeta)))


def reference_solve(
    prob: SemilinearProblem,
    eps: float,
    arc_data,
    L: float,
    N: int = 256,
    tol: float = 1e-10,
    max_iter: int = 30,
) -> ReferenceSolution:
    """Damped Newton with sparse direct solves.

    ``arc_data(x)`` supplies values on the artificial sides and the initial
    guess (typically ``u_as``).
    """
    geom = SectorGeometry(prob.omega)
    c, sn = float(np.cos(prob.omega)), float(np.sin(prob.omega))
    if abs(c) < 1e-15:
        c = 0.0
    tau = (2.0 / prob.gamma) * eps * abs(np.log(eps)) / sn
    z = shishkin_nodes(L, N, tau)
    if z[1] > eps / 8:
        raise ConfigError(f"mesh too coarse: first spacing {z[1]:.3e} exceeds eps/8 at eps={eps}")
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    X = Z1[..., None] * geom.e_s + Z2[..., None] * geom.e_s_minus
    n = z.size
    hm = np.diff(z)[:-1]
    hp = np.diff(z)[1:]
    # 1-D nonuniform second difference weights at interior nodes 1..n-2
    wl = 2.0 / (hm * (hm + hp))
    wc = -2.0 / (hm * hp)
    wr = 2.0 / (hp * (hm + hp))
    wx = 1.0 / (hm + hp)
    k = -(eps**2) / sn**2
    m = n - 2
    idx = np.arange(n * n).reshape(n, n)
    I = idx[1:-1, 1:-1]
    rows, cols, vals = [], [], []

    def add(r, cc, v):
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(np.broadcast_to(v, r.shape).ravel())

    WL1, WC1, WR1 = (a[:, None] * np.ones((1, m)) for a in (wl, wc, wr))
    WL2, WC2, WR2 = (a[None, :] * np.ones((m, 1)) for a in (wl, wc, wr))
    add(I, idx[:-2, 1:-1], k * WL1)
    add(I, idx[2:, 1:-1], k * WR1)
    add(I, idx[1:-1, :-2], k * WL2)
    add(I, idx[1:-1, 2:], k * WR2)
    add(I, I, k * (WC1 + WC2))
    if c != 0.0:
        mix = -2.0 * c * k * (wx[:, None] * wx[None, :])
        add(I, idx[2:, 2:], mix)
        add(I, idx[:-2, :-2], mix)
        add(I, idx[2:, :-2], -mix)
        add(I, idx[:-2, 2:], -mix)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n))
    interior = np.zeros((n, n), bool)
    interior[1:-1, 1:-1] = True
    fi = np.flatnonzero(interior.ravel())
    fb = np.flatnonzero(~interior.ravel())
    A_ii = A[fi][:, fi].tocsc()
    A_ib = A[fi][:, fb]

    U = np.asarray(arc_data(X.reshape(-1, 2)), dtype=float).reshape(n, n)
    U[:, 0] = prob.g_gamma(z)
    U[0, :] = prob.g_gamma_minus(z)
    u_b = U.ravel()[fb]
    rhs_b = A_ib @ u_b
    Xi = X.reshape(-1, 2)[fi]
    u = U.ravel()[fi]

    def F(u):
        return A_ii @ u + rhs_b + prob.b(Xi, u)

    r = F(u)
    rn = float(np.max(np.abs(r)))
    it = 0
    while rn > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"reference Newton stalled at residual {rn:.3e} (eps={eps})")
        J = (A_ii + sparse.diags(prob.b_u(Xi, u))).tocsc()
        du = spsolve(J, -r)
        lam = 1.0
        while True:
            ut = u + lam * du
            rt = F(ut)
            rtn = float(np.max(np.abs(rt)))
            if np.isfinite(rtn) and (rtn < rn or rtn <= tol):
                break
            lam *= 0.5
            if lam < 1e-6:
                raise NewtonDiverged(f"reference Newton damping failed at residual {rn:.3e}")
        u, r, rn = ut, rt, rtn
        it += 1
    out = U.ravel().copy()
    out[fi] = u
    return ReferenceSolution(eps, z, X, out.reshape(n, n), rn, it, min(tau, L / 2), interior)


def reference_domain_size(radius: float, omega: float) -> float:
    """Largest ``L`` whose parallelogram fits in the disk of the given radius."""
    c = np.cos(omega)
    return radius / max(1.0, float(np.sqrt(2.0 + 2.0 * c)))
