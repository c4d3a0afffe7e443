import itertools

import numpy as np
import pytest

from curvlab.catalog import (
    minkowski_slice, schwarzschild_slice, standing_wave_slice,
)
from curvlab.evolution import SliceData, lapse_solve, step
from curvlab.fields import Grid3
from curvlab.weyl import (
    ETA, EBPair, NullComponents, NullFrame, bel_robinson, contract4,
    curvature_prime_norm_squared, divergence_identity_residual, eh_from_weyl,
    electric_magnetic, null_decompose, null_flux_density, q_energy_density,
    random_null_frame, random_weyl, star_product_weyl, weyl_dual, weyl_from_eh,
    weyl_from_null_components,
)

from conftest import measured_order

RNG = np.random.default_rng(2024)


def test_weyl_dictionary_symmetries():
    W = random_weyl(RNG, 200)
    assert np.max(np.abs(W + np.swapaxes(W, -4, -3))) < 1e-14
    assert np.max(np.abs(W + np.swapaxes(W, -2, -1))) < 1e-14
    assert np.max(np.abs(W - np.transpose(W, (0, 3, 4, 1, 2)))) < 1e-14
    bianchi = W + np.transpose(W, (0, 1, 3, 4, 2)) + np.transpose(W, (0, 1, 4, 2, 3))
    assert np.max(np.abs(bianchi)) < 1e-13
    tr = np.einsum("ab,...ambn->...mn", np.linalg.inv(ETA), W)
    assert np.max(np.abs(tr)) < 1e-13
    E, H = eh_from_weyl(W)
    assert np.max(np.abs(weyl_from_eh(E, H) - W)) < 1e-13


def test_bel_robinson_symmetry_and_trace_fuzz():
    W = random_weyl(RNG, 100_000)
    Q = bel_robinson(W)
    scale = np.max(np.abs(Q))
    for perm in itertools.permutations(range(4)):
        axes = (0,) + tuple(1 + p for p in perm)
        assert np.max(np.abs(np.transpose(Q, axes) - Q)) < 1e-12 * scale
    tr = np.einsum("ab,...ambn->...mn", np.linalg.inv(ETA), Q)
    assert np.max(np.abs(tr)) < 1e-12 * scale


def test_bel_robinson_positivity_fuzz():
    W = random_weyl(RNG, 100_000)
    Q = bel_robinson(W)

    def future_vectors(n):
        v = RNG.normal(size=(n, 3))
        vn = np.linalg.norm(v, axis=-1)
        margin = RNG.exponential(0.5, size=n) * RNG.integers(0, 2, size=n)
        out = np.zeros((n, 4))
        out[:, 0] = vn + margin  # null when margin = 0, timelike otherwise
        out[:, 1:] = v
        return out

    vals = contract4(Q, *(future_vectors(100_000) for _ in range(4)))
    assert np.min(vals) >= 0.0


def test_q_tttt_is_energy_density():
    W = random_weyl(RNG, 500)
    E, H = eh_from_weyl(W)
    Q = bel_robinson(W)
    T = np.zeros((500, 4))
    T[:, 0] = 1.0
    got = contract4(Q, T, T, T, T)
    expect = np.sum(E ** 2, axis=(-2, -1)) + np.sum(H ** 2, axis=(-2, -1))
    assert np.max(np.abs(got - expect)) < 1e-12 * np.max(expect)


def test_flux_formula_matches_brute_force():
    n = 10_000
    W = random_weyl(RNG, n)
    frame, b = random_null_frame(RNG, n)
    nc = null_decompose(W, frame)
    closed = null_flux_density(nc, b)
    Q = bel_robinson(W)
    T = np.zeros((n, 4))
    T[:, 0] = 1.0
    brute = contract4(Q, T, T, T, frame.e4)
    assert np.max(np.abs(closed - brute) / (np.abs(brute) + 1e-30)) < 1e-10


def test_flux_density_rejects_bad_boost():
    nc = NullComponents.from_vector(np.zeros(10))
    with pytest.raises(ValueError):
        null_flux_density(nc, -1.0)


def test_flux_density_trivial_and_pure_rho():
    z = NullComponents.from_vector(np.zeros(10))
    assert null_flux_density(z, 1.0) == 0.0
    v = np.zeros(10)
    v[4] = 1.0  # rho
    nc = NullComponents.from_vector(v)
    # 3/2 b (rho^2+sigma^2) at b = 1 (coefficient verified against the full
    # contraction; see the flux identity test)
    assert abs(null_flux_density(nc, 1.0) - 1.5) < 1e-14


def test_null_components_roundtrip():
    n = 300
    W = random_weyl(RNG, n)
    frame, _ = random_null_frame(RNG, n)
    nc = null_decompose(W, frame)
    W2 = weyl_from_null_components(nc, frame)
    assert np.max(np.abs(W2 - W)) < 1e-10
    # pure-rho roundtrips through the inverse map
    v = np.zeros((4, 10))
    v[:, 4] = 1.0
    frame4, _ = random_null_frame(RNG, 4, b=1.0)
    ncr = NullComponents.from_vector(v)
    Wr = weyl_from_null_components(ncr, frame4)
    back = null_decompose(Wr, frame4)
    assert np.max(np.abs(back.as_vector() - v)) < 1e-12


def test_null_frame_validation():
    frame, _ = random_null_frame(RNG, 3)
    frame.validate()
    bad = NullFrame(frame.e1, frame.e2, frame.e3, 1.1 * frame.e4)
    with pytest.raises(ValueError, match="normalization"):
        bad.validate()


def test_signature_scaling():
    n = 200
    W = random_weyl(RNG, n)
    frame, b = random_null_frame(RNG, n, b=1.0)
    nc = null_decompose(W, frame)
    a = 2.0
    scaled = NullFrame(frame.e1, frame.e2, frame.e3 / a, frame.e4 * a)
    nc2 = null_decompose(W, scaled)
    assert np.max(np.abs(nc2.alpha - a ** 2 * nc.alpha)) < 1e-11
    assert np.max(np.abs(nc2.beta - a * nc.beta)) < 1e-11
    assert np.max(np.abs(nc2.rho - nc.rho)) < 1e-12
    assert np.max(np.abs(nc2.sigma - nc.sigma)) < 1e-12
    assert np.max(np.abs(nc2.beta_bar - nc.beta_bar / a)) < 1e-11
    assert np.max(np.abs(nc2.alpha_bar - nc.alpha_bar / a ** 2)) < 1e-11


def test_curvature_prime_norm_variants():
    v = RNG.normal(size=(50, 10))
    nc = NullComponents.from_vector(v)
    printed = curvature_prime_norm_squared(nc, "printed")
    flux = curvature_prime_norm_squared(nc, "flux")
    a2, b2, r2, s2, bb2, ab2 = nc.invariants()
    assert np.max(np.abs(printed - (a2 + b2 + ab2 + r2 + s2))) < 1e-13
    assert np.max(np.abs(flux - (a2 + b2 + r2 + s2 + bb2))) < 1e-13
    with pytest.raises(ValueError):
        curvature_prime_norm_squared(nc, "other")


def test_star_product_has_no_abar_abar_terms():
    """Quadratic coefficient of abar x abar vanishes in the null components
    of the symmetric Weyl product (signature bookkeeping)."""
    n = 300
    frame, _ = random_null_frame(RNG, n)
    v = np.zeros((n, 10))
    v[:, 8:] = RNG.normal(size=(n, 2))  # pure alpha_bar
    W_ab = weyl_from_null_components(NullComponents.from_vector(v), frame)
    S = star_product_weyl(W_ab, W_ab)
    out = null_decompose(S, frame)
    scale = np.max(np.abs(W_ab)) ** 2
    assert np.max(np.abs(out.as_vector())) < 1e-11 * scale


def test_electric_magnetic_cases(periodic_grid_32, flat_metric_32):
    m, k, n = minkowski_slice(periodic_grid_32)
    eb = electric_magnetic(SliceData(m, k, n))
    assert np.max(np.abs(eb.E.data)) == 0.0
    assert np.max(np.abs(eb.H.data)) == 0.0
    # time-symmetric data: H = 0 exactly
    g = Grid3((16,) * 3, 4.0 / 15, origin=(6.0, 6.0, 6.0), boundary="asymptotic-dirichlet")
    ms, ks, lap, _ = schwarzschild_slice(g, 1.0)
    ebs = electric_magnetic(SliceData(ms, ks, lap))
    assert np.max(np.abs(ebs.H.data)) == 0.0
    ebs.validate(ms, tol=max(10 * ebs.trace_residual, 1e-10))


def test_schwarzschild_electric_part_closed_form():
    errs, hs = [], []
    for n in (16, 32):
        g = Grid3((n,) * 3, 4.0 / (n - 1), origin=(6.0, 6.0, 6.0),
                  boundary="asymptotic-dirichlet")
        ms, ks, lap, _ = schwarzschild_slice(g, 1.0)
        slc = SliceData(ms, ks, lap)
        eb = electric_magnetic(slc)
        q = q_energy_density(eb, ms)
        X, Y, Z = g.meshgrid()
        r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
        r_areal = r * (1 + 1.0 / (2 * r)) ** 2
        t = 3
        err = np.max(np.abs(q - 6.0 / r_areal ** 6)[t:-t, t:-t, t:-t])
        errs.append(err)
        hs.append(g.spacing)
    assert measured_order(errs[0], errs[1], hs[0], hs[1]) >= 1.8


def test_divergence_identity_static_and_minkowski():
    g = Grid3((16,) * 3, 4.0 / 15, origin=(6.0, 6.0, 6.0), boundary="asymptotic-dirichlet")
    ms, ks, lap, _ = schwarzschild_slice(g, 1.0)
    slices = [SliceData(ms, ks, lap, t) for t in (0.0, 0.05, 0.1)]
    assert divergence_identity_residual(slices) < 1e-10
    gm = Grid3((12,) * 3, 0.2)
    mm, km, nm = minkowski_slice(gm)
    slices_m = [SliceData(mm, km, nm, t) for t in (0.0, 0.05, 0.1)]
    assert divergence_identity_residual(slices_m) == 0.0
    with pytest.raises(ValueError, match="3 consecutive"):
        divergence_identity_residual(slices_m[:2])


def test_divergence_identity_wave_slab_order():
    res, hs = [], []
    for n in (16, 24):
        g = Grid3((n,) * 3, 2 * np.pi / (n - 1), boundary="asymptotic-dirichlet")
        m, k, lap = standing_wave_slice(g, 1e-3)
        s = SliceData(m, k, lapse_solve(SliceData(m, k, lap), tol=1e-11))

        def provider(t, g=g):
            mm, kk, nn = standing_wave_slice(g, 1e-3, time=t)
            return SliceData(mm, kk, nn, t)

        dt = 0.02
        slices = [s]
        for _ in range(2):
            s = step(s, dt, boundary_provider=provider)
            slices.append(s)
        res.append(divergence_identity_residual(slices))
        hs.append(g.spacing)
    assert measured_order(res[0], res[1], hs[0], hs[1]) >= 1.5


def test_reduced_flux_cases():
    from curvlab.catalog import minkowski_spacetime
    from curvlab.nullcone import exp_map
    from curvlab.weyl import reduced_flux

    st = minkowski_spacetime()
    cone = exp_map(st, [0.0, 0.0, 0.0, 0.0], directions=1, s_max=2.0,
                   tol=1e-11, nsamples=300)
    nd, ns = len(cone.directions), len(cone.s)
    zero = NullComponents.from_vector(np.zeros((nd, ns, 10)))
    assert reduced_flux(cone, zero) == 0.0
    # synthetic rho = 1/s^3 on the flat cone: integral = 4 pi int s^2 s^-6 ds,
    # integrated away from the vertex where the quadrature resolves s^-4
    v = np.zeros((nd, ns, 10))
    v[..., 4] = 1.0 / cone.s[None, :] ** 3
    nc = NullComponents.from_vector(v)
    s0, s1 = 0.5, 1.9
    keep = (cone.s >= s0) & (cone.s <= s1)
    slo, shi = cone.s[keep][0], cone.s[keep][-1]
    got = reduced_flux(cone, nc, s_range=(s0, s1))
    expect = 4 * np.pi * (slo ** -3 - shi ** -3) / 3.0
    assert abs(got - expect) < 1e-7 * expect
    # alpha_bar-only field integrates to zero (excluded component)
    v2 = np.zeros((nd, ns, 10))
    v2[..., 8] = 1.0
    v2[..., 9] = -0.5
    assert reduced_flux(cone, NullComponents.from_vector(v2)) == 0.0
    # on the true (vacuum flat) curvature, the flux vanishes
    assert reduced_flux(cone, st=st) < 1e-18


def test_bel_robinson_contract_wrapper():
    from curvlab.weyl import bel_robinson_contract

    W = random_weyl(RNG, 10)
    T = np.zeros((10, 4))
    T[:, 0] = 1.0
    E, H = eh_from_weyl(W)
    got = bel_robinson_contract(W, T, T, T, T)
    expect = np.sum(E ** 2, axis=(-2, -1)) + np.sum(H ** 2, axis=(-2, -1))
    assert np.max(np.abs(got - expect)) < 1e-12 * np.max(expect)


def test_ebpair_validate_rejects_trace(periodic_grid_32, flat_metric_32):
    from curvlab.fields import TensorField

    bad = TensorField(periodic_grid_32, 2,
                      np.tile(np.eye(3), tuple(periodic_grid_32.extents) + (1, 1)),
                      "symmetric")
    zero = TensorField.zeros(periodic_grid_32, 2, "symmetric")
    pair = EBPair(bad, zero)
    with pytest.raises(ValueError, match="trace"):
        pair.validate(flat_metric_32)


def test_weyl_at_point_wrapper():
    from curvlab.weyl import WeylAtPoint

    E = np.diag([2.0, -1.0, -1.0]) * 1e-3
    H = np.zeros((3, 3))
    w = WeylAtPoint(E, H)
    T = np.array([1.0, 0, 0, 0])
    assert abs(w.bel_robinson_contract(T, T, T, T) - np.sum(E ** 2)) < 1e-15
    frame, _ = random_null_frame(RNG, 1, b=1.0)
    nc = w.null_decompose(frame)
    assert nc.rho.shape == (1,)
    with pytest.raises(ValueError, match="traceless"):
        WeylAtPoint(np.eye(3), H)
