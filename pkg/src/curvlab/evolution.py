"""Maximal-gauge ADM evolution with breakdown monitors.

State is (g, k, n) on a slice: spatial metric, second fundamental form with
the sign convention k(X,Y) = -g(D_X T, Y), and lapse solving Lap n = |k|^2 n.
Evolution:

    d_t g_ij = -2 n k_ij
    d_t k_ij = -hess_ij n + n (Ric_ij - 2 k_ia k^a_j)

integrated with classical RK4, the lapse re-solved at every stage, and tr k
re-projected to zero after each step. Monitors accumulate the breakdown
functionals: sup norms of n and 1/n, the time integral of
(|k|_inf + |grad log n|_inf)^2 n, and the metric-comparability exponent
2 * int |n k|_inf dt (the factor 2 makes the Gronwall envelope exact for
d_t g = -2 n k).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import TensorField, pointwise_norm_squared
from .geometry3 import (
    Metric3, covariant_derivative, riemann_ricci_scalar, solve_elliptic,
)


@dataclass
class SliceData:
    """ADM state (metric, curv_k, lapse) at a time."""

    metric: Metric3
    curv_k: TensorField
    lapse: TensorField
    time: float = 0.0

    def validate(self, tol=1e-8):
        trk = np.einsum("...ij,...ij->...", self.metric.inverse, self.curv_k.data)
        kscale = np.sqrt(np.max(pointwise_norm_squared(
            self.curv_k, self.metric.field, self.metric.inverse))) + 1.0
        if np.max(np.abs(trk)) > tol * kscale:
            raise ValueError(f"slice is not maximal: max |tr k| = {np.max(np.abs(trk)):.3e}")
        if np.min(self.lapse.data) <= 0:
            raise ValueError("lapse must be positive")


@dataclass
class DeformationTensor:
    """Components of the metric's Lie derivative along the unit normal."""

    pi_00: TensorField
    pi_0i: TensorField
    pi_ij: TensorField


@dataclass(frozen=True)
class BreakdownMonitors:
    """Running breakdown functionals; all accumulators are nondecreasing."""

    delta0: float = 0.0
    sup_inv_lapse: float = 0.0
    sup_lapse: float = 0.0
    delta2_accum: float = 0.0
    nk_integral: float = 0.0
    time: float = 0.0

    @property
    def comparability_exponent(self):
        return 2.0 * self.nk_integral

    @property
    def comparability_envelope(self):
        e = self.comparability_exponent
        return (float(np.exp(-e)), float(np.exp(e)))


# ---------------------------------------------------------------------------


def _vol_normalized_l2(arr_sq, metric):
    vol = metric.volume_element
    num = np.sum(arr_sq * vol) * metric.grid.cell_volume
    den = np.sum(vol) * metric.grid.cell_volume
    return float(np.sqrt(num / den))


def constraint_residuals(slc):
    """(hamiltonian, momentum, maximal) volume-normalized RMS residuals."""
    metric = slc.metric
    bundle = riemann_ricci_scalar(metric)
    ginv = metric.inverse
    k = slc.curv_k
    ksq = pointwise_norm_squared(k, metric.field, ginv)
    ham = bundle.scalar.data - ksq
    dk = covariant_derivative(k, metric)  # (..., c, i, j)
    mom = np.einsum("...ci,...cij->...j", ginv, dk.data, optimize=True)
    mom_sq = np.einsum("...ij,...i,...j->...", ginv, mom, mom, optimize=True)
    trk = np.einsum("...ij,...ij->...", ginv, k.data, optimize=True)
    return (
        _vol_normalized_l2(ham ** 2, metric),
        _vol_normalized_l2(mom_sq, metric),
        _vol_normalized_l2(trk ** 2, metric),
    )


class LapseError(RuntimeError):
    pass


def lapse_solve(slc, boundary_value=1.0, tol=1e-10, dirichlet_data=None,
                initial_guess=None):
    """Solve Lap n = |k|^2 n for the maximal lapse.

    Asymptotic-dirichlet grids: Dirichlet data on the faces (constant
    boundary_value unless a full field is supplied; the field also serves as
    the interior lift, so exact solutions are reproduced exactly).
    Periodic grids: n = 1 + u with (Lap - |k|^2) u = |k|^2, which is the
    unique periodic solution; fails if the result is not positive (for
    constant potential the exact solution degenerates to n = 0).
    """
    metric = slc.metric
    grid = metric.grid
    ksq = pointwise_norm_squared(slc.curv_k, metric.field, metric.inverse)
    pot = TensorField(grid, 0, ksq)
    zero = TensorField.zeros(grid, 0)
    if grid.boundary == "asymptotic-dirichlet":
        if dirichlet_data is None:
            data = TensorField(grid, 0, np.full(tuple(grid.extents), float(boundary_value)))
        else:
            data = dirichlet_data
        n = solve_elliptic("laplace_plus_potential", zero, ("dirichlet", data),
                           metric, tol=tol, potential=pot, initial_guess=initial_guess)
    else:
        # Closed slice: multiplying Lap n = |k|^2 n by n and integrating forces
        # n = const and |k|^2 n^2 = 0, so a positive lapse exists only for k = 0.
        if np.max(ksq) > 1e-13:
            raise LapseError(
                "no positive maximal lapse on a closed slice with k != 0 "
                "(Fredholm obstruction)")
        n = TensorField(grid, 0, np.full(tuple(grid.extents), float(boundary_value)))
    if np.min(n.data) <= 1e-12:
        raise LapseError("lapse solve produced a nonpositive lapse")
    return n


def adm_rhs(slc):
    """Right-hand sides (d_t g, d_t k) of the maximal ADM system."""
    metric = slc.metric
    n = slc.lapse
    k = slc.curv_k
    dg = -2.0 * n.data[..., None, None] * k.data
    bundle = riemann_ricci_scalar(metric)
    dn = covariant_derivative(n, metric)
    hess = covariant_derivative(dn, metric).data
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    kmix = np.einsum("...ab,...bc->...ac", metric.inverse, k.data, optimize=True)
    kk = np.einsum("...ab,...bc->...ac", k.data, kmix, optimize=True)
    dk = -hess + n.data[..., None, None] * (bundle.ricci.data - 2.0 * kk)
    return (
        TensorField(metric.grid, 2, dg, "symmetric"),
        TensorField(metric.grid, 2, dk, "symmetric"),
    )


def _project_maximal(gdata, kdata):
    ginv = np.linalg.inv(gdata)
    trk = np.einsum("...ij,...ij->...", ginv, kdata, optimize=True)
    return kdata - (trk / 3.0)[..., None, None] * gdata


def _freeze_faces(data, frozen, depth=2):
    """Re-impose exterior data on a shell of the given depth.

    Depth 2 keeps every evolved cell on full centered stencils (the one-sided
    face stencils then only ever read frozen data).
    """
    for axis in range(3):
        for side in (slice(0, depth), slice(-depth, None)):
            sl = [slice(None)] * 3
            sl[axis] = side
            data[tuple(sl)] = frozen[tuple(sl)]
    return data


def step(slc, dt, cfl=0.25, lapse_tol=1e-10, frozen_exterior=None,
         boundary_provider=None, lapse_dirichlet=None, freeze_depth=2):
    """One classical RK4 step; the lapse is re-solved at every stage.

    frozen_exterior: optional SliceData whose face values of (g, k) are
    re-imposed after the step (asymptotic-dirichlet grids only).
    boundary_provider: optional callable t -> SliceData giving time-dependent
    analytic exterior data (overrides frozen_exterior).
    lapse_dirichlet: optional full lapse field used as Dirichlet data/lift.
    """
    grid = slc.metric.grid
    if dt > cfl * grid.spacing + 1e-15:
        raise ValueError(f"dt {dt} exceeds CFL limit {cfl * grid.spacing}")

    guess = {"n": slc.lapse}

    def rhs_of(gdata, kdata):
        metric = Metric3(TensorField(grid, 2, gdata, "symmetric"))
        stage = SliceData(metric, TensorField(grid, 2, kdata, "symmetric"),
                          slc.lapse, slc.time)
        n = lapse_solve(stage, tol=lapse_tol, dirichlet_data=lapse_dirichlet,
                        initial_guess=guess["n"])
        guess["n"] = n
        stage = replace(stage, lapse=n)
        dg, dk = adm_rhs(stage)
        return dg.data, dk.data, n

    g0, k0 = slc.metric.field.data, slc.curv_k.data
    dg1, dk1, n1 = rhs_of(g0, k0)
    dg2, dk2, _ = rhs_of(g0 + 0.5 * dt * dg1, k0 + 0.5 * dt * dk1)
    dg3, dk3, _ = rhs_of(g0 + 0.5 * dt * dg2, k0 + 0.5 * dt * dk2)
    dg4, dk4, _ = rhs_of(g0 + dt * dg3, k0 + dt * dk3)
    g1 = g0 + dt / 6.0 * (dg1 + 2 * dg2 + 2 * dg3 + dg4)
    k1 = k0 + dt / 6.0 * (dk1 + 2 * dk2 + 2 * dk3 + dk4)

    exterior = frozen_exterior
    if boundary_provider is not None:
        exterior = boundary_provider(slc.time + dt)
    if exterior is not None and grid.boundary == "asymptotic-dirichlet":
        g1 = _freeze_faces(g1, exterior.metric.field.data, depth=freeze_depth)
        k1 = _freeze_faces(k1, exterior.curv_k.data, depth=freeze_depth)
    k1 = _project_maximal(g1, k1)

    metric1 = Metric3(TensorField(grid, 2, g1, "symmetric"))
    out = SliceData(metric1, TensorField(grid, 2, k1, "symmetric"), n1,
                    slc.time + dt)
    n_final = lapse_solve(out, tol=lapse_tol, dirichlet_data=lapse_dirichlet,
                          initial_guess=guess["n"])
    return replace(out, lapse=n_final)


def deformation_tensor(slc):
    """pi_00 = 0, pi_0i = grad_i log n, pi_ij = -2 k_ij."""
    grid = slc.metric.grid
    n = slc.lapse
    logn = TensorField(grid, 0, np.log(n.data))
    dlogn = covariant_derivative(logn, slc.metric)
    return DeformationTensor(
        TensorField.zeros(grid, 0),
        dlogn,
        TensorField(grid, 2, -2.0 * slc.curv_k.data, "symmetric"),
    )


def monitor_integrand(slc):
    """(|k|_inf + |grad log n|_inf)^2 * max(n): the breakdown-integral density."""
    metric = slc.metric
    k_inf = float(np.sqrt(np.max(pointwise_norm_squared(
        slc.curv_k, metric.field, metric.inverse))))
    pi = deformation_tensor(slc)
    gl_inf = float(np.sqrt(np.max(pointwise_norm_squared(
        pi.pi_0i, metric.field, metric.inverse))))
    n_max = float(np.max(slc.lapse.data))
    return (k_inf + gl_inf) ** 2 * n_max


def nk_sup(slc):
    """|n k|_inf over the slice (Frobenius norm w.r.t. g)."""
    metric = slc.metric
    nk = slc.lapse.data[..., None, None] * slc.curv_k.data
    f = TensorField(metric.grid, 2, nk, "symmetric")
    return float(np.sqrt(np.max(pointwise_norm_squared(f, metric.field, metric.inverse))))


def update_monitors(monitors, slc, dt, next_slc=None):
    """Accumulate the breakdown functionals over [t, t+dt].

    With only the left slice the rule is a left-endpoint rectangle; passing
    the post-step slice upgrades the comparability integral to the endpoint
    maximum, keeping the Gronwall envelope a rigorous upper bound.
    """
    if dt < 0:
        raise ValueError("monitors require monotone time")
    nk = nk_sup(slc)
    integrand = monitor_integrand(slc)
    if next_slc is not None:
        nk = max(nk, nk_sup(next_slc))
    return BreakdownMonitors(
        delta0=monitors.delta0,
        sup_inv_lapse=max(monitors.sup_inv_lapse, float(np.max(1.0 / slc.lapse.data))),
        sup_lapse=max(monitors.sup_lapse, float(np.max(slc.lapse.data))),
        delta2_accum=monitors.delta2_accum + integrand * dt,
        nk_integral=monitors.nk_integral + nk * dt,
        time=monitors.time + dt,
    )


def initial_monitors(slc):
    """Monitors seeded with the initial curvature energy delta0."""
    from .weyl import electric_magnetic, q_energy_density

    eb = electric_magnetic(slc)
    q = q_energy_density(eb, slc.metric)
    d0 = float(np.sum(q * slc.metric.volume_element) * slc.metric.grid.cell_volume)
    m = BreakdownMonitors(delta0=d0, time=slc.time)
    return update_monitors(m, slc, 0.0)


def gronwall_check(slices, monitors_seq, rng=None, nsamples=16):
    """Measured |X|_g(t)^2 / |X|_g(0)^2 against the comparability envelope.

    Returns the worst envelope violation (<= 0 when the bound holds).
    """
    rng = rng or np.random.default_rng(0)
    g0 = slices[0].metric.field.data
    shape = tuple(slices[0].metric.grid.extents)
    idx = tuple(rng.integers(0, s, size=nsamples) for s in shape)
    X = rng.normal(size=(nsamples, 3))
    base = np.einsum("pij,pi,pj->p", g0[idx], X, X)
    worst = -np.inf
    for slc, mon in zip(slices[1:], monitors_seq[1:]):
        cur = np.einsum("pij,pi,pj->p", slc.metric.field.data[idx], X, X)
        ratio = cur / base
        lo, hi = mon.comparability_envelope
        worst = max(worst, float(np.max(ratio / hi - 1.0)), float(np.max(lo / ratio - 1.0)))
    return worst


def energy_report(slc, weighted_orders=((2, 1.0), (3, 1.0)), basepoint=None):
    """Curvature energy and weighted Sobolev norms of curvature and k.

    Returns dict with the Bel-Robinson energy int (|E|^2+|H|^2) dmu, the
    weighted norm of the electric/magnetic pair at (n, s) = weighted_orders[0],
    and of k at weighted_orders[1].
    """
    from .fields import WeightedNormSpec, weighted_sobolev_norm
    from .weyl import electric_magnetic, q_energy_density

    metric = slc.metric
    eb = electric_magnetic(slc)
    q = q_energy_density(eb, metric)
    l2_curv = float(np.sum(q * metric.volume_element) * metric.grid.cell_volume)
    if basepoint is None:
        g = metric.grid
        basepoint = tuple(g.origin[a] + 0.5 * g.spacing * (g.extents[a] - 1) for a in range(3))
    (n_c, s_c), (n_k, s_k) = weighted_orders
    spec_c = WeightedNormSpec(n_c, s_c, basepoint)
    spec_k = WeightedNormSpec(n_k, s_k, basepoint)
    return {
        "l2_curvature": l2_curv,
        "weighted_E": weighted_sobolev_norm(eb.E, spec_c, metric),
        "weighted_H": weighted_sobolev_norm(eb.H, spec_c, metric),
        "weighted_k": weighted_sobolev_norm(slc.curv_k, spec_k, metric),
    }
