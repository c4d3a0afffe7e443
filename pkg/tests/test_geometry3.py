import numpy as np
import pytest
import sympy as sp

from curvlab.catalog import (
    bump_metric, minkowski_slice, schwarzschild_slice, traceless_test_tensor,
)
from curvlab.fields import Grid3, TensorField
from curvlab.geometry3 import (
    EllipticError, Metric3, christoffel, covariant_derivative, div_curl_symmetric,
    einstein_divergence, hodge_identity_residual, laplace_beltrami_apply,
    riemann_ricci_scalar, scalar_hodge_identity_residual, solve_elliptic,
)

from conftest import grid_pair, measured_order


# --- symbolic oracle for the conformally flat slice -------------------------

def schwarzschild_symbolic_oracle(mass=1.0):
    """Closed-form Gamma, Ricci and scalar curvature of phi^4 * delta."""
    x, y, z = sp.symbols("x y z", positive=True)
    coords = (x, y, z)
    r = sp.sqrt(x * x + y * y + z * z)
    phi = 1 + mass / (2 * r)
    g = sp.eye(3) * phi ** 4
    ginv = g.inv()
    Gam = [[[sum(ginv[a, d] * (sp.diff(g[d, c], coords[b]) + sp.diff(g[b, d], coords[c])
                               - sp.diff(g[b, c], coords[d])) for d in range(3)) / 2
             for c in range(3)] for b in range(3)] for a in range(3)]
    ric = sp.zeros(3, 3)
    for b in range(3):
        for d in range(3):
            expr = 0
            for a in range(3):
                expr += sp.diff(Gam[a][d][b], coords[a]) - sp.diff(Gam[a][a][b], coords[d])
                for e in range(3):
                    expr += Gam[a][a][e] * Gam[e][d][b] - Gam[a][d][e] * Gam[e][a][b]
            ric[b, d] = sp.simplify(expr)
    scal = sp.simplify(sum(ginv[b, d] * ric[b, d] for b in range(3) for d in range(3)))
    gam_fns = [[[sp.lambdify((x, y, z), Gam[a][b][c], "numpy") for c in range(3)]
                for b in range(3)] for a in range(3)]

    def gam_fn(X, Y, Z):
        out = np.zeros(X.shape + (3, 3, 3))
        for a in range(3):
            for b in range(3):
                for c in range(3):
                    out[..., a, b, c] = gam_fns[a][b][c](X, Y, Z)
        return out

    return gam_fn, ric, scal


def test_christoffel_flat_zero(flat_metric_32):
    assert np.max(np.abs(flat_metric_32.christoffel)) == 0.0


def test_christoffel_constant_diagonal_metric():
    g = Grid3((8, 8, 8), 0.3)
    data = np.tile(np.diag([4.0, 9.0, 0.25]), tuple(g.extents) + (1, 1))
    m = Metric3(TensorField(g, 2, data, "symmetric"))
    assert np.max(np.abs(m.christoffel)) == 0.0


def test_christoffel_schwarzschild_against_symbolic(schwarzschild_box):
    metric, _, _, _ = schwarzschild_box
    gam_fn, _, _ = schwarzschild_symbolic_oracle(1.0)
    X, Y, Z = metric.grid.meshgrid()
    exact = gam_fn(X, Y, Z)
    # analytic-derivative mode: connection is exact up to float roundoff
    assert np.max(np.abs(metric.christoffel - exact)) < 1e-8


def test_curvature_flat_zero(flat_metric_32):
    bundle = riemann_ricci_scalar(flat_metric_32)
    assert np.max(np.abs(bundle.scalar.data)) < 1e-10
    assert np.max(np.abs(bundle.ricci.data)) < 1e-10


def test_schwarzschild_scalar_curvature_vanishes():
    errs, hs = [], []
    for n in (16, 32):
        g = Grid3((n,) * 3, 4.0 / (n - 1), origin=(6.0, 6.0, 6.0),
                  boundary="asymptotic-dirichlet")
        metric, _, _, _ = schwarzschild_slice(g, 1.0)
        bundle = riemann_ricci_scalar(metric)
        t = 3
        errs.append(np.max(np.abs(bundle.scalar.data[t:-t, t:-t, t:-t])))
        hs.append(g.spacing)
    assert errs[1] < 5e-8
    assert measured_order(errs[0], errs[1], hs[0], hs[1]) >= 1.8


def test_round_sphere_scalar_curvature():
    # chart patch of the round 3-sphere of radius a: R = 6/a^2
    a = 2.0
    g = Grid3((20, 20, 20), 0.04, origin=(0.3, 0.4, 0.2), boundary="asymptotic-dirichlet")
    X, Y, Z = g.meshgrid()

    def sphere_metric(X, Y, Z):
        # stereographic-type conformal chart: g = 4 a^2 / (1+|x|^2)^2 delta
        conf = 4 * a ** 2 / (1 + X ** 2 + Y ** 2 + Z ** 2) ** 2
        return conf[..., None, None] * np.eye(3)

    m = Metric3(TensorField(g, 2, sphere_metric(X, Y, Z), "symmetric"))
    bundle = riemann_ricci_scalar(m)
    t = 6  # one-sided boundary stencils contaminate a ring of cells
    interior = bundle.scalar.data[t:-t, t:-t, t:-t]
    assert np.max(np.abs(interior - 6.0 / a ** 2)) < 2e-4


def test_curvature_scaling_law(periodic_grid_32):
    m = bump_metric(periodic_grid_32, 0.06, seed=5)
    c2 = 2.25
    m_scaled = Metric3(TensorField(periodic_grid_32, 2, c2 * m.field.data, "symmetric"))
    r1 = riemann_ricci_scalar(m).scalar.data
    r2 = riemann_ricci_scalar(m_scaled).scalar.data
    assert np.max(np.abs(r2 - r1 / c2)) < 1e-10 * np.max(np.abs(r1))


def test_contracted_bianchi_converges():
    errs, hs = [], []
    for n in (24, 48):
        g = Grid3((n,) * 3, 2 * np.pi / n)
        m = bump_metric(g, 0.08, seed=7)
        div = einstein_divergence(m)
        errs.append(np.max(np.abs(div.data)))
        hs.append(g.spacing)
    assert measured_order(errs[0], errs[1], hs[0], hs[1]) >= 1.8


def test_div_curl_trivial_cases(periodic_grid_32, flat_metric_32):
    V = TensorField.zeros(periodic_grid_32, 2, "symmetric-traceless")
    D, C = div_curl_symmetric(V, flat_metric_32)
    assert np.max(np.abs(D.data)) == 0.0 and np.max(np.abs(C.data)) == 0.0
    const = np.zeros(tuple(periodic_grid_32.extents) + (3, 3))
    const[..., 0, 1] = const[..., 1, 0] = 1.3
    const[..., 0, 0], const[..., 1, 1] = 0.4, -0.4
    Vc = TensorField(periodic_grid_32, 2, const, "symmetric-traceless")
    D, C = div_curl_symmetric(Vc, flat_metric_32)
    assert np.max(np.abs(D.data)) < 1e-13
    assert np.max(np.abs(C.data)) < 1e-13


def test_div_curl_rejects_trace(periodic_grid_32, flat_metric_32):
    V = TensorField(periodic_grid_32, 2,
                    np.tile(np.eye(3), tuple(periodic_grid_32.extents) + (1, 1)),
                    "symmetric")
    with pytest.raises(ValueError, match="traceless"):
        div_curl_symmetric(V, flat_metric_32)


def test_divergence_matches_hand_derived():
    # V_ij = hess phi - (lap phi/3) delta for phi = sin(x1) sin(x2), flat torus:
    # div V_j = (2/3) d_j lap phi  (by commuting flat derivatives)
    g = Grid3((48, 48, 48), 2 * np.pi / 48)
    m, _, _ = minkowski_slice(g)
    X, Y, Z = g.meshgrid()
    phi = np.sin(X) * np.sin(Y)
    lap = -2 * phi
    V = np.zeros(tuple(g.extents) + (3, 3))
    V[..., 0, 0] = -phi - lap / 3
    V[..., 1, 1] = -phi - lap / 3
    V[..., 2, 2] = -lap / 3
    V[..., 0, 1] = V[..., 1, 0] = np.cos(X) * np.cos(Y)
    D, _ = div_curl_symmetric(TensorField(g, 2, V, "symmetric-traceless"), m)
    exact = np.zeros(tuple(g.extents) + (3,))
    exact[..., 0] = (2.0 / 3.0) * (-2 * np.cos(X) * np.sin(Y))
    exact[..., 1] = (2.0 / 3.0) * (-2 * np.sin(X) * np.cos(Y))
    assert np.max(np.abs(D.data - exact)) < 2e-4


def test_hodge_identity_flat_and_reduction(periodic_grid_32, flat_metric_32):
    V = traceless_test_tensor(periodic_grid_32, flat_metric_32, seed=3)
    res = hodge_identity_residual(V, flat_metric_32)
    assert res < 1e-12
    zero = TensorField.zeros(periodic_grid_32, 2, "symmetric-traceless")
    assert hodge_identity_residual(zero, flat_metric_32) == 0.0


def test_hodge_identity_curved_order():
    res, hs = [], []
    for n in (24, 48):
        g = Grid3((n,) * 3, 2 * np.pi / n)
        m = bump_metric(g, 0.08, seed=7)
        V = traceless_test_tensor(g, m, seed=9)
        res.append(hodge_identity_residual(V, m))
        hs.append(g.spacing)
    assert measured_order(res[0], res[1], hs[0], hs[1]) >= 1.8


def test_scalar_hodge_identity(periodic_grid_32, flat_metric_32):
    phi = TensorField.from_function(periodic_grid_32, lambda X, Y, Z: np.sin(X))
    assert scalar_hodge_identity_residual(phi, flat_metric_32) < 1e-12
    const = TensorField.from_function(periodic_grid_32, lambda X, Y, Z: 2.0 * np.ones_like(X))
    assert scalar_hodge_identity_residual(const, flat_metric_32) < 1e-12


def test_scalar_hodge_identity_curved_order():
    res, hs = [], []
    rng = np.random.default_rng(1)
    for n in (24, 48):
        g = Grid3((n,) * 3, 2 * np.pi / n)
        m = bump_metric(g, 0.08, seed=7)
        X, Y, Z = g.meshgrid()
        phi = TensorField(g, 0, np.sin(X + 0.3) * np.cos(2 * Y) + 0.5 * np.sin(Z + Y))
        res.append(scalar_hodge_identity_residual(phi, m))
        hs.append(g.spacing)
    assert measured_order(res[0], res[1], hs[0], hs[1]) >= 1.8


def test_identity_requires_closed_manifold(schwarzschild_box):
    metric, _, _, _ = schwarzschild_box
    V = TensorField.zeros(metric.grid, 2, "symmetric-traceless")
    with pytest.raises(ValueError, match="closed manifold"):
        hodge_identity_residual(V, metric)


# --- elliptic solver ---------------------------------------------------------

def test_elliptic_periodic_zero_rhs(flat_metric_32, periodic_grid_32):
    rhs = TensorField.zeros(periodic_grid_32, 0)
    u = solve_elliptic("laplace_beltrami", rhs, "periodic-zero-mean", flat_metric_32)
    assert np.max(np.abs(u.data)) == 0.0


def test_elliptic_dirichlet_closed_form():
    g = Grid3((20, 20, 20), 1.0 / 19, boundary="asymptotic-dirichlet")
    m, _, _ = minkowski_slice(g)
    X, _, _ = g.meshgrid()
    exact = X * (1 - X)
    rhs = TensorField(g, 0, -2 * np.ones(tuple(g.extents)))
    u = solve_elliptic("laplace_beltrami", rhs, ("dirichlet", TensorField(g, 0, exact)), m)
    assert np.max(np.abs(u.data - exact)) < 1e-9


def test_elliptic_constant_boundary_harmonic():
    g = Grid3((16, 16, 16), 1.0 / 15, boundary="asymptotic-dirichlet")
    m, _, _ = minkowski_slice(g)
    bc = TensorField(g, 0, np.ones(tuple(g.extents)))
    u = solve_elliptic("laplace_plus_potential", TensorField.zeros(g, 0),
                       ("dirichlet", bc), m, potential=TensorField.zeros(g, 0))
    assert np.max(np.abs(u.data - 1.0)) == 0.0


def test_elliptic_maximum_principle():
    g = Grid3((16, 16, 16), 1.0 / 15, boundary="asymptotic-dirichlet")
    m, _, _ = minkowski_slice(g)
    X, Y, Z = g.meshgrid()
    bc = TensorField(g, 0, 0.3 + 0.4 * np.sin(4 * X) * np.cos(3 * Y))  # in [-0.1, 0.7]
    pot = TensorField(g, 0, 2.0 + np.sin(X + Y))
    u = solve_elliptic("laplace_plus_potential", TensorField.zeros(g, 0),
                       ("dirichlet", bc), m, potential=pot, tol=1e-11)
    lo, hi = bc.data.min(), bc.data.max()
    # potential >= 0: values bounded by boundary data (zero included when signs mix)
    assert u.data.max() <= max(hi, 0.0) + 1e-9
    assert u.data.min() >= min(lo, 0.0) - 1e-9


def test_elliptic_rejects_negative_potential(flat_metric_32, periodic_grid_32):
    pot = TensorField.from_function(periodic_grid_32, lambda X, Y, Z: -np.ones_like(X))
    with pytest.raises(ValueError, match="nonnegative"):
        solve_elliptic("laplace_plus_potential", TensorField.zeros(periodic_grid_32, 0),
                       "periodic-zero-mean", flat_metric_32, potential=pot)


def test_elliptic_rejects_nonzero_mean_periodic(flat_metric_32, periodic_grid_32):
    rhs = TensorField.from_function(periodic_grid_32, lambda X, Y, Z: np.ones_like(X))
    with pytest.raises(ValueError, match="zero-mean"):
        solve_elliptic("laplace_beltrami", rhs, "periodic-zero-mean", flat_metric_32)


def test_covariant_derivative_metric_compatibility(schwarzschild_box):
    metric, _, _, _ = schwarzschild_box
    dg = covariant_derivative(metric.field, metric)
    t = 2
    assert np.max(np.abs(dg.data[t:-t, t:-t, t:-t])) < 1e-8


def test_elliptic_iteration_cap_carries_residual():
    g = Grid3((16, 16, 16), 1.0 / 15, boundary="asymptotic-dirichlet")
    m, _, _ = minkowski_slice(g)
    X, Y, Z = g.meshgrid()
    rhs = TensorField(g, 0, np.sin(6 * X) * np.sin(5 * Y) * np.sin(4 * Z))
    bc = TensorField.zeros(g, 0)
    with pytest.raises(EllipticError) as err:
        solve_elliptic("laplace_beltrami", rhs, ("dirichlet", bc), m,
                       tol=1e-12, maxiter=2)
    assert err.value.residual > 0


def test_full_riemann_consistency(periodic_grid_32):
    m = bump_metric(periodic_grid_32, 0.06, seed=3)
    bundle = riemann_ricci_scalar(m, with_riemann=True)
    assert bundle.riemann is not None
    # Ricci recontracted from the full tensor matches the direct route
    ric = np.einsum("...abad->...bd", bundle.riemann)
    assert np.max(np.abs(0.5 * (ric + np.swapaxes(ric, -1, -2))
                         - bundle.ricci.data)) < 1e-11
    flat, _, _ = minkowski_slice(periodic_grid_32)
    b0 = riemann_ricci_scalar(flat, with_riemann=True)
    assert np.max(np.abs(b0.riemann)) < 1e-12
