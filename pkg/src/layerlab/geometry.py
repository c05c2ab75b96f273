"""Convex sector geometry, side frames and stretched coordinates.

The vertex sits at the origin and the side ``Gamma`` runs along the positive
x1-axis; the second side ``Gamma^-`` is the ray at angle ``omega``.  All maps
here are linear and vectorised: a point argument may be a single pair or an
array of shape ``(..., 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

PLUS = "plus"
MINUS = "minus"
SIDES = (PLUS, MINUS)


@dataclass(frozen=True)
class SideCoords:
    s: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class StretchedCoords:
    xi: np.ndarray
    sigma: np.ndarray
    xi_minus: np.ndarray
    sigma_minus: np.ndarray
    eta: np.ndarray


@dataclass(frozen=True)
class SectorGeometry:
    """Sector with vertex at the origin and opening angle ``omega`` in (0, pi)."""

    omega: float

    def __post_init__(self):
        if not (0.0 < self.omega < np.pi):
            raise ValueError(f"opening angle must lie in (0, pi), got {self.omega!r}")

    @cached_property
    def e_s(self) -> np.ndarray:
        return np.array([1.0, 0.0])

    @cached_property
    def e_r(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    @cached_property
    def e_s_minus(self) -> np.ndarray:
        return np.array([np.cos(self.omega), np.sin(self.omega)])

    @cached_property
    def e_r_minus(self) -> np.ndarray:
        return np.array([np.sin(self.omega), -np.cos(self.omega)])

    def frame(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(e_s, e_r)`` for the requested side."""
        if side == PLUS:
            return self.e_s, self.e_r
        if side == MINUS:
            return self.e_s_minus, self.e_r_minus
        raise ValueError(f"unknown side {side!r}")

    def boundary_point(self, side: str, s) -> np.ndarray:
        """Point ``s * e_s`` on the line through the given side."""
        e_s, _ = self.frame(side)
        return np.asarray(s, dtype=float)[..., None] * e_s

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x @ self.e_r >= -tol) & (x @ self.e_r_minus >= -tol)

    # oblique coordinates x = zeta1 * e_s + zeta2 * e_s_minus, used by the
    # corner and reference grids
    def to_oblique(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zeta2 = x[..., 1] / np.sin(self.omega)
        zeta1 = x[..., 0] - zeta2 * np.cos(self.omega)
        return np.stack([zeta1, zeta2], axis=-1)

    def from_oblique(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        return zeta[..., :1] * self.e_s + zeta[..., 1:2] * self.e_s_minus


def side_coords(geom: SectorGeometry, x, side: str) -> SideCoords:
    """Arclength ``s`` along ``side`` and signed distance ``r`` (positive inside S)."""
    x = np.asarray(x, dtype=float)
    e_s, e_r = geom.frame(side)
    return SideCoords(s=x @ e_s, r=x @ e_r)


def stretch(geom: SectorGeometry, x, eps: float) -> StretchedCoords:
    """Stretched variables ``xi = r/eps``, ``sigma = s/eps`` for both sides and ``eta = x/eps``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    x = np.asarray(x, dtype=float)
    eta = x / eps
    return StretchedCoords(
        xi=eta @ geom.e_r,
        sigma=eta @ geom.e_s,
        xi_minus=eta @ geom.e_r_minus,
        sigma_minus=eta @ geom.e_s_minus,
        eta=eta,
    )
