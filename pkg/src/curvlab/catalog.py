"""Exact-solution catalog: analytic slices and spacetimes for tests and scenarios.

Slice constructors return (Metric3 with exact partials, k, lapse) triples ready
for the evolution module; spacetime constructors return AnalyticSpacetime
objects with closed-form metric4/dmetric4 used by the null-cone machinery.

Schwarzschild is in isotropic coordinates: conformal factor phi = 1 + M/(2r),
spatial metric phi^4 delta, static lapse (1 - M/2r)/(1 + M/2r); the time
slices are time-symmetric (k = 0) and maximal.
"""
from __future__ import annotations

import numpy as np

from .fields import Grid3, TensorField
from .geometry3 import Metric3

DELTA3 = np.eye(3)


# ---------------------------------------------------------------------------
# 3D slices


def minkowski_slice(grid):
    g = TensorField(grid, 2, np.tile(DELTA3, tuple(grid.extents) + (1, 1)), "symmetric")
    dg = np.zeros(tuple(grid.extents) + (3, 3, 3))
    metric = Metric3(g, dmetric=dg)
    k = TensorField.zeros(grid, 2, "symmetric")
    lapse = TensorField(grid, 0, np.ones(tuple(grid.extents)))
    return metric, k, lapse


def _schwarzschild_scalars(X, Y, Z, mass):
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    if np.min(r) <= mass / 2:
        raise ValueError("grid touches the isotropic horizon r = M/2")
    u = mass / (2.0 * r)
    phi = 1.0 + u
    lapse = (1.0 - u) / (1.0 + u)
    dphi_dr = -mass / (2.0 * r ** 2)
    dlapse_dr = mass / (r ** 2 * (1.0 + u) ** 2)
    return r, phi, lapse, dphi_dr, dlapse_dr


def schwarzschild_slice(grid, mass=1.0):
    """Time-symmetric isotropic slice with exact metric partials and lapse."""
    X, Y, Z = grid.meshgrid()
    r, phi, lapse, dphi, dlapse = _schwarzschild_scalars(X, Y, Z, mass)
    gdata = phi[..., None, None] ** 4 * DELTA3
    xhat = np.stack([X, Y, Z], axis=-1) / r[..., None]
    # d_k g_ij = 4 phi^3 phi'(r) xhat_k delta_ij
    dg = (4.0 * phi ** 3 * dphi)[..., None, None, None] * xhat[..., :, None, None] * DELTA3
    metric = Metric3(TensorField(grid, 2, gdata, "symmetric"), dmetric=dg)
    k = TensorField.zeros(grid, 2, "symmetric")
    lapse_f = TensorField(grid, 0, lapse)
    dlapse_f = TensorField(grid, 1, dlapse[..., None] * xhat)
    return metric, k, lapse_f, dlapse_f


def perturbed_minkowski_slice(grid, eps=1e-3, mode=(1, 0), time=0.0):
    """Transverse-traceless plane-wave data (local formula, any grid kind).

    h_xx = -h_yy = eps cos(kappa (z - t) + phase), k = (kappa/2) eps sin(...) e;
    solves the vacuum constraints to O(eps^2) pointwise and is the linearized
    evolution at time `time` (used as travelling boundary data). Note a closed
    slice admits no positive maximal lapse once k != 0, so evolution scenarios
    use asymptotic-dirichlet grids.
    """
    if eps > 1e-2:
        raise ValueError("perturbation amplitude out of documented range")
    nwave, phase_idx = mode
    L = grid.extents[2] * grid.spacing
    if grid.boundary != "periodic":
        L = (grid.extents[2] - 1) * grid.spacing
    kappa = 2.0 * np.pi * nwave / L
    X, Y, Z = grid.meshgrid()
    phase = kappa * (Z - time) + 0.5 * np.pi * phase_idx
    e_pol = np.zeros((3, 3))
    e_pol[0, 0], e_pol[1, 1] = 1.0, -1.0
    h = eps * np.cos(phase)
    gdata = DELTA3 + h[..., None, None] * e_pol
    dg = np.zeros(tuple(grid.extents) + (3, 3, 3))
    dg[..., 2, :, :] = (-eps * kappa * np.sin(phase))[..., None, None] * e_pol
    metric = Metric3(TensorField(grid, 2, gdata, "symmetric"), dmetric=dg)
    # d_t g = -2 n k with n = 1 + O(eps^2); re-project exactly maximal
    kdata = -0.5 * eps * kappa * np.sin(phase)[..., None, None] * e_pol
    trk = np.einsum("...ij,...ij->...", metric.inverse, kdata, optimize=True)
    kdata = kdata - (trk / 3.0)[..., None, None] * gdata
    k = TensorField(grid, 2, kdata, "symmetric")
    lapse = TensorField(grid, 0, np.ones(tuple(grid.extents)))
    return metric, k, lapse


def standing_wave_slice(grid, eps=1e-3, nwave=1, time=0.0):
    """Superposition of counter-propagating TT waves (standing wave).

    Unlike a single travelling wave, the slab integrals of the Bel-Robinson
    balance are genuinely time dependent for this data.
    """
    if eps > 1e-2:
        raise ValueError("perturbation amplitude out of documented range")
    L = grid.extents[2] * grid.spacing
    if grid.boundary != "periodic":
        L = (grid.extents[2] - 1) * grid.spacing
    kappa = 2.0 * np.pi * nwave / L
    X, Y, Z = grid.meshgrid()
    e_pol = np.zeros((3, 3))
    e_pol[0, 0], e_pol[1, 1] = 1.0, -1.0
    gdata = np.tile(DELTA3, tuple(grid.extents) + (1, 1)).copy()
    dg = np.zeros(tuple(grid.extents) + (3, 3, 3))
    kdata = np.zeros(tuple(grid.extents) + (3, 3))
    for direction in (+1.0, -1.0):
        phase = kappa * (Z - direction * time)
        gdata += (0.5 * eps * np.cos(phase))[..., None, None] * e_pol
        dg[..., 2, :, :] += (-0.5 * eps * kappa * np.sin(phase))[..., None, None] * e_pol
        # d_t g = -2 k per wave
        kdata += (-0.5 * direction * 0.5 * eps * kappa * np.sin(phase))[..., None, None] * e_pol
    metric = Metric3(TensorField(grid, 2, gdata, "symmetric"), dmetric=dg)
    trk = np.einsum("...ij,...ij->...", metric.inverse, kdata, optimize=True)
    kdata = kdata - (trk / 3.0)[..., None, None] * gdata
    k = TensorField(grid, 2, kdata, "symmetric")
    lapse = TensorField(grid, 0, np.ones(tuple(grid.extents)))
    return metric, k, lapse


def bump_metric(grid, amplitude=0.1, seed=7):
    """Smooth SPD periodic test metric: delta plus band-limited symmetric bumps."""
    if grid.boundary != "periodic":
        raise ValueError("bump metric is periodic")
    rng = np.random.default_rng(seed)
    X, Y, Z = grid.meshgrid()
    Ls = [grid.extents[a] * grid.spacing for a in range(3)]
    data = np.tile(DELTA3, tuple(grid.extents) + (1, 1)).copy()
    for i in range(3):
        for j in range(i, 3):
            f = np.zeros_like(X)
            for _ in range(2):
                kv = rng.integers(-2, 3, size=3)
                ph = rng.uniform(0, 2 * np.pi)
                f += rng.normal() * np.cos(
                    2 * np.pi * (kv[0] * X / Ls[0] + kv[1] * Y / Ls[1] + kv[2] * Z / Ls[2]) + ph
                )
            f *= amplitude / 3.0
            data[..., i, j] += f
            if i != j:
                data[..., j, i] += f
    return Metric3(TensorField(grid, 2, data, "symmetric"))


def traceless_test_tensor(grid, metric, seed=11, amplitude=1.0):
    """Band-limited symmetric field projected g-traceless, for identity tests."""
    rng = np.random.default_rng(seed)
    X, Y, Z = grid.meshgrid()
    Ls = [grid.extents[a] * grid.spacing for a in range(3)]
    data = np.zeros(tuple(grid.extents) + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            f = np.zeros_like(X)
            for _ in range(2):
                kv = rng.integers(-2, 3, size=3)
                ph = rng.uniform(0, 2 * np.pi)
                f += rng.normal() * np.cos(
                    2 * np.pi * (kv[0] * X / Ls[0] + kv[1] * Y / Ls[1] + kv[2] * Z / Ls[2]) + ph
                )
            data[..., i, j] = amplitude * f
            data[..., j, i] = amplitude * f
    tr = np.einsum("...ij,...ij->...", metric.inverse, data, optimize=True)
    data -= (tr / 3.0)[..., None, None] * metric.field.data
    return TensorField(grid, 2, data, "symmetric-traceless")


# ---------------------------------------------------------------------------
# 4D analytic spacetimes


class AnalyticSpacetime:
    """Closed-form Lorentzian metric provider on coordinates (t, x, y, z).

    metric4(x):  (..., 4, 4)
    dmetric4(x): (..., 4, 4, 4) ordered (k, mu, nu) = d_k g_{mu nu}
    """

    def __init__(self, name, metric4, dmetric4, lapse=None, dlapse=None,
                 extrinsic=None, domain_ok=None, fd_step=1e-5):
        self.name = name
        self.metric4 = metric4
        self.dmetric4 = dmetric4
        self._lapse = lapse
        self._dlapse = dlapse
        self._extrinsic = extrinsic
        self._domain_ok = domain_ok
        self.fd_step = fd_step

    def domain_ok(self, x):
        return True if self._domain_ok is None else bool(np.all(self._domain_ok(np.asarray(x, dtype=float))))

    def check_signature(self, x):
        g = self.metric4(np.asarray(x, dtype=float))
        ev = np.linalg.eigvalsh(g)
        return bool(np.all(ev[..., 0] < 0) and np.all(ev[..., 1:] > 0))

    def lapse(self, x):
        if self._lapse is None:
            g = self.metric4(np.asarray(x, dtype=float))
            return np.sqrt(-g[..., 0, 0])
        return self._lapse(np.asarray(x, dtype=float))

    def dlapse_spatial(self, x):
        """Spatial gradient of the slicing lapse, zero when not supplied."""
        x = np.asarray(x, dtype=float)
        if self._dlapse is None:
            return np.zeros(x.shape[:-1] + (3,))
        return self._dlapse(x)

    def extrinsic3(self, x):
        """Second fundamental form of the t-slices, coordinate components."""
        x = np.asarray(x, dtype=float)
        if self._extrinsic is None:
            dg = self.dmetric4(x)
            n = self.lapse(x)
            return -dg[..., 0, 1:, 1:] / (2.0 * n[..., None, None])
        return self._extrinsic(x)

    def christoffel4(self, x):
        g = self.metric4(np.asarray(x, dtype=float))
        dg = self.dmetric4(np.asarray(x, dtype=float))
        ginv = np.linalg.inv(g)
        term = (
            dg                                      # d_b g_dc, already (b, d, c)
            + np.einsum("...cbd->...bdc", dg)       # d_c g_bd
            - np.einsum("...dbc->...bdc", dg)       # d_d g_bc
        )
        return 0.5 * np.einsum("...ad,...bdc->...abc", ginv, term, optimize=True)

    def riemann4(self, x, lower=True):
        """Riemann by central differencing of the exact connection."""
        x = np.asarray(x, dtype=float)
        h = self.fd_step
        dG = np.zeros(x.shape[:-1] + (4, 4, 4, 4))
        for a in range(4):
            xp = x.copy(); xp[..., a] += h
            xm = x.copy(); xm[..., a] -= h
            dG[..., a, :, :, :] = (self.christoffel4(xp) - self.christoffel4(xm)) / (2 * h)
        G = self.christoffel4(x)
        riem = (
            np.einsum("...cadb->...abcd", dG) - np.einsum("...dacb->...abcd", dG)
            + np.einsum("...ace,...edb->...abcd", G, G, optimize=True)
            - np.einsum("...ade,...ecb->...abcd", G, G, optimize=True)
        )
        if lower:
            riem = np.einsum("...am,...mbcd->...abcd", self.metric4(x), riem, optimize=True)
        return riem


def minkowski_spacetime():
    eta = np.diag([-1.0, 1, 1, 1])

    def metric4(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eta, x.shape[:-1] + (4, 4)).copy()

    def dmetric4(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (4, 4, 4))

    return AnalyticSpacetime("minkowski", metric4, dmetric4,
                             lapse=lambda x: np.ones(np.asarray(x).shape[:-1]),
                             extrinsic=lambda x: np.zeros(np.asarray(x).shape[:-1] + (3, 3)))


def schwarzschild_spacetime(mass=1.0):
    def split(x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x[..., 1:] ** 2, axis=-1))
        return x, r

    def metric4(x):
        x, r = split(x)
        u = mass / (2.0 * r)
        phi4 = (1.0 + u) ** 4
        N2 = ((1.0 - u) / (1.0 + u)) ** 2
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = -N2
        for i in range(3):
            g[..., i + 1, i + 1] = phi4
        return g

    def dmetric4(x):
        x, r = split(x)
        u = mass / (2.0 * r)
        phi = 1.0 + u
        dphi = -mass / (2.0 * r ** 2)
        N = (1.0 - u) / (1.0 + u)
        dN = mass / (r ** 2 * phi ** 2)
        xhat = x[..., 1:] / r[..., None]
        dg = np.zeros(x.shape[:-1] + (4, 4, 4))
        for k in range(3):
            dg[..., k + 1, 0, 0] = -2.0 * N * dN * xhat[..., k]
            for i in range(3):
                dg[..., k + 1, i + 1, i + 1] = 4.0 * phi ** 3 * dphi * xhat[..., k]
        return dg

    def lapse(x):
        x, r = split(x)
        u = mass / (2.0 * r)
        return (1.0 - u) / (1.0 + u)

    def dlapse(x):
        x, r = split(x)
        u = mass / (2.0 * r)
        return (mass / (r ** 2 * (1.0 + u) ** 2))[..., None] * x[..., 1:] / r[..., None]

    def domain_ok(x):
        x, r = split(x)
        return r > 0.75 * mass  # comfortably outside the isotropic horizon M/2

    return AnalyticSpacetime(
        "schwarzschild", metric4, dmetric4, lapse=lapse, dlapse=dlapse,
        extrinsic=lambda x: np.zeros(np.asarray(x).shape[:-1] + (3, 3)),
        domain_ok=domain_ok,
    )


def weak_wave_spacetime(eps=1e-4, omega=1.0):
    """Linearized plus-polarized plane wave travelling along z; vacuum to O(eps^2)."""
    if eps > 1e-2:
        raise ValueError("weak-wave amplitude out of documented range")
    e_pol = np.zeros((3, 3))
    e_pol[0, 0], e_pol[1, 1] = 1.0, -1.0

    def metric4(x):
        x = np.asarray(x, dtype=float)
        ph = omega * (x[..., 3] - x[..., 0])
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = -1.0
        g[..., 1:, 1:] = DELTA3 + (eps * np.cos(ph))[..., None, None] * e_pol
        return g

    def dmetric4(x):
        x = np.asarray(x, dtype=float)
        ph = omega * (x[..., 3] - x[..., 0])
        s = eps * omega * np.sin(ph)
        dg = np.zeros(x.shape[:-1] + (4, 4, 4))
        dg[..., 0, 1:, 1:] = s[..., None, None] * e_pol       # d_t
        dg[..., 3, 1:, 1:] = (-s)[..., None, None] * e_pol    # d_z
        return dg

    return AnalyticSpacetime("weak-wave", metric4, dmetric4,
                             lapse=lambda x: np.ones(np.asarray(x).shape[:-1]))


def sphere_cross_time_spacetime(radius=1.0):
    """Static toy metric R x S^3(a) in hyperspherical chart (chi, theta, phi).

    Null geodesics from any point hit their first conjugate point at affine
    distance pi * a; used to exercise conjugate-point detection.
    """

    def metric4(x):
        x = np.asarray(x, dtype=float)
        chi, th = x[..., 1], x[..., 2]
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = -1.0
        g[..., 1, 1] = radius ** 2
        g[..., 2, 2] = radius ** 2 * np.sin(chi) ** 2
        g[..., 3, 3] = radius ** 2 * np.sin(chi) ** 2 * np.sin(th) ** 2
        return g

    def dmetric4(x):
        x = np.asarray(x, dtype=float)
        chi, th = x[..., 1], x[..., 2]
        dg = np.zeros(x.shape[:-1] + (4, 4, 4))
        dg[..., 1, 2, 2] = 2 * radius ** 2 * np.sin(chi) * np.cos(chi)
        dg[..., 1, 3, 3] = 2 * radius ** 2 * np.sin(chi) * np.cos(chi) * np.sin(th) ** 2
        dg[..., 2, 3, 3] = 2 * radius ** 2 * np.sin(chi) ** 2 * np.sin(th) * np.cos(th)
        return dg

    def domain_ok(x):
        x = np.asarray(x, dtype=float)
        return (x[..., 1] > 0.05) & (x[..., 1] < np.pi - 0.05) & \
               (x[..., 2] > 0.05) & (x[..., 2] < np.pi - 0.05)

    return AnalyticSpacetime("sphere-cross-time", metric4, dmetric4,
                             lapse=lambda x: np.ones(np.asarray(x).shape[:-1]),
                             domain_ok=domain_ok)


def spacetime_catalog(name, **params):
    if name == "minkowski":
        return minkowski_spacetime()
    if name == "schwarzschild":
        return schwarzschild_spacetime(params.get("mass", 1.0))
    if name == "weak-wave":
        return weak_wave_spacetime(params.get("eps", 1e-4), params.get("omega", 1.0))
    if name == "sphere-cross-time":
        return sphere_cross_time_spacetime(params.get("radius", 1.0))
    raise ValueError(f"unknown spacetime {name!r}")
