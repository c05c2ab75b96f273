import numpy as np
import pytest
from scipy import integrate

from layerlab import corner2d, layer1d
from layerlab.errors import ArcSensitivity
from layerlab.geometry import SectorGeometry
from layerlab.problem import builtin_fixture

# near-axis oracle values converge slowly; their accuracy is asserted directly
pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")


def quarter_plane_oracle(x1, x2):
    """Sine-transform solution of -Lap z + z = 0 on the quarter plane with z = 1 on both axes."""
    # sin(k x1) / k written as x1 sinc so the integrand is smooth at k = 0
    f = lambda k: x1 * np.sinc(k * x1 / np.pi) * np.exp(-np.sqrt(1 + k * k) * x2) / (1 + k * k)  # noqa: E731
    val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)
    return np.exp(-x1) + 2 / np.pi * val


def test_oracle_solves_the_corner_problem():
    d = 1e-2
    x = np.array([2.0, 1.5])
    z = lambda a, b: quarter_plane_oracle(a, b)  # noqa: E731
    lap = (z(x[0] + d, x[1]) + z(x[0] - d, x[1]) + z(x[0], x[1] + d) + z(x[0], x[1] - d) - 4 * z(*x)) / d**2
    assert abs(-lap + z(*x)) <= 1e-4
    # quadratic extrapolation to both axes recovers the boundary value 1
    for c in (2.0, 3.0):
        for f in ((lambda t: z(c, t)), (lambda t: z(t, c))):
            assert 3 * f(0.05) - 3 * f(0.1) + f(0.15) == pytest.approx(1.0, abs=2e-4)
    # the formula is not symmetric by construction, the solution is
    assert z(1.3, 2.6) == pytest.approx(z(2.6, 1.3), abs=1e-9)


def test_linear_corner_field_matches_sine_transform(ws_lin):
    z0 = ws_lin.corner(0.0)["z0"]
    pts = np.array([[3.0, 3.0], [1.0, 2.0], [5.0, 0.5], [0.7, 8.0]])
    got = z0.interpolate(pts)
    want = np.array([quarter_plane_oracle(*p) for p in pts])
    assert np.max(np.abs(got - want)) <= 0.05 * z0.grid.h**2
    assert got[0] >= np.exp(-3.0)
    assert want[0] == pytest.approx(0.091315, abs=1e-6)


def _small(name, n=120, R=12.0):
    prob = builtin_fixture(name)
    geom = SectorGeometry(prob.omega)
    g1 = layer1d.default_grid(prob.gamma, prob.gamma**2 / 4, n=8001)
    return prob, geom, corner2d.SectorGrid(prob.omega, R, n), g1


@pytest.mark.parametrize("omega", [np.pi / 2, np.pi / 3, 2 * np.pi / 3])
def test_discrete_laplacian_exact_on_quadratics(omega):
    grid = corner2d.SectorGrid(omega, 5.0, 40)
    e = grid.eta
    U = 0.5 * e[..., 0] ** 2 + 1.5 * e[..., 1] ** 2 - 0.7 * e[..., 0] * e[..., 1] + e[..., 0]
    assert np.allclose(corner2d.neg_laplacian(grid, U), -4.0, atol=1e-9)


def test_stencil_monotone_offsets():
    assert len(corner2d.SectorGrid(np.pi / 2, 5, 20)._offsets) == 4
    assert (1, -1) in corner2d.SectorGrid(np.pi / 3, 5, 20)._offsets
    assert (1, 1) in corner2d.SectorGrid(2 * np.pi / 3, 5, 20)._offsets


def test_cubic_corner_bounds_and_sandwich():
    prob, geom, grid, g1 = _small("MP-CUBIC")
    vp = corner2d.vertex_profiles(prob, geom, 0.0, g1)
    z0 = corner2d.solve_z0(prob, geom, 0.0, grid, vp)
    rep = corner2d.check_corner_claims(prob, {0.0: {"z0": z0}}, {0.0: vp})["per_p"][0.0]
    assert rep["upper_violations"] == 0 and rep["min_z0"] > 0
    assert rep["sandwich_worst"] <= 10 * grid.h**2
    assert z0.residual <= 1e-10


def test_q0_identity_and_zero_first_order_for_flat_linear():
    prob, geom, grid, g1 = _small("MP-LIN")
    vp = corner2d.vertex_profiles(prob, geom, 0.0, g1)
    z0 = corner2d.solve_z0(prob, geom, 0.0, grid, vp)
    q0 = corner2d.assemble_q0(z0, vp)
    # stencil truncation on exp(-xi): h^2/12 per direction
    assert corner2d.q0_identity_residual(prob, q0, vp, 0.0) <= grid.h**2 / 6
    q1, z1 = corner2d.solve_q1(prob, geom, grid, z0, vp)
    assert np.max(np.abs(q1.values)) == 0.0
    assert corner2d.z1_residual(prob, z0, z1) == 0.0


def test_q0p_matches_central_difference():
    prob, geom, grid, g1 = _small("MP-CUBIC", n=100, R=10.0)
    p, d = 0.05, 1e-3

    def q0_at(pp):
        vp = corner2d.vertex_profiles(prob, geom, pp, g1)
        return corner2d.assemble_q0(corner2d.solve_z0(prob, geom, pp, grid, vp), vp)

    fd = (q0_at(p + d).values - q0_at(p - d).values) / (2 * d)
    vp = corner2d.vertex_profiles(prob, geom, p, g1)
    z0 = corner2d.solve_z0(prob, geom, p, grid, vp)
    q0p = corner2d.solve_q0p(prob, geom, p, grid, z0, vp)
    I = grid.interior
    assert np.max(np.abs(q0p.values - fd)[I]) <= 1e-4


def test_monotone_in_p():
    prob, geom, grid, g1 = _small("MP-CUBIC", n=80, R=10.0)
    prev = None
    for p in (0.0, 0.02, 0.05):
        vp = corner2d.vertex_profiles(prob, geom, p, g1)
        z = corner2d.solve_z0(prob, geom, p, grid, vp).values
        if prev is not None:
            assert np.all(z - prev >= -1e-8)
        prev = z


def test_evaluator_vanishes_outside_radius(ws_cubic):
    ev = ws_cubic.corner(0.0)["evaluator"]
    R = ev.grid.R
    assert np.all(ev.q0(np.array([[R, 0.1], [0.0, 2 * R]])) == 0.0)
    assert abs(ev.q0(np.array([[0.5, 0.5]]))[0]) > 1e-3


def test_truncation_check_raises():
    prob, geom, _, g1 = _small("MP-LIN")
    vp = corner2d.vertex_profiles(prob, geom, 0.0, g1)
    a = corner2d.solve_z0(prob, geom, 0.0, corner2d.SectorGrid(prob.omega, 4.0, 43), vp)
    b = corner2d.solve_z0(prob, geom, 0.0, corner2d.SectorGrid(prob.omega, 8.0, 83), vp)
    with pytest.raises(ArcSensitivity):
        corner2d.truncation_check(a, b, 1e-12)


def test_binary_and_csv_export_roundtrip(tmp_path):
    grid = corner2d.SectorGrid(np.pi / 3, 5.0, 20)
    vals = np.arange(400.0).reshape(20, 20)
    f = corner2d.CornerField(grid, vals, "z0", 0.0)
    corner2d.export_binary(f, tmp_path / "z.bin")
    meta, back = corner2d.read_binary(tmp_path / "z.bin")
    assert np.array_equal(back, vals) and meta["rows"] == 20 and meta["omega"] == pytest.approx(np.pi / 3)
    corner2d.export_csv(f, tmp_path / "z.csv")
    assert (tmp_path / "z.csv").read_text().startswith("eta1,eta2,value\n")
    (tmp_path / "bad.bin").write_bytes(b"NOTAFIELD" * 4)
    with pytest.raises(ValueError):
        corner2d.read_binary(tmp_path / "bad.bin")
