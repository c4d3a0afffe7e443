"""Weyl-tensor algebra from 3+1 data.

Electric/magnetic decomposition on a slice, pointwise reconstruction of the
full vacuum Weyl tensor from (E, H), the Bel-Robinson tensor and its
contractions, null decomposition relative to a null pair with <e3, e4> = -2,
the closed-form energy flux density, and a slab form of the divergence
identity with the deformation-tensor source.

Conventions (orthonormal frame T = e0, eta = diag(-1,1,1,1), eps_{0123} = +1):
    W_{0i0j} = E_ij
    W_{ijkl} = d_ik E_jl - d_il E_jk - d_jk E_il + d_jl E_ik
    H_ij     = 1/2 eps_i^{kl} W_{kl0j}
Null pair e4 = b(T+N), e3 = (1/b)(T-N); components follow the definitions
alpha(X,Y) = W(X,e4,Y,e4), beta = 1/2 W(.,e4,e3,e4), rho = 1/4 W(e3,e4,e3,e4),
sigma = 1/4 *W(e3,e4,e3,e4), bbar = 1/2 W(.,e3,e3,e4), abar = W(.,e3,.,e3).
With these, the exact flux density is

    Q(T,T,T,e4) = 1/4 b^-3 |alpha|^2 + 3/2 b^-1 |beta|^2
                  + 3/2 b (rho^2 + sigma^2) + 1/2 b^3 |bbar|^2.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .fields import TensorField, pointwise_norm_squared
from .geometry3 import div_curl_symmetric, riemann_ricci_scalar

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
ETA_INV = ETA  # self-inverse

EPS3 = np.zeros((3, 3, 3))
EPS3[0, 1, 2] = EPS3[1, 2, 0] = EPS3[2, 0, 1] = 1.0
EPS3[0, 2, 1] = EPS3[2, 1, 0] = EPS3[1, 0, 2] = -1.0


def _eps4():
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        sgn, visited = 1, [False] * 4
        for i in range(4):
            if visited[i]:
                continue
            j, clen = i, 0
            while not visited[j]:
                visited[j] = True
                j = perm[j]
                clen += 1
            if clen % 2 == 0:
                sgn = -sgn
        eps[perm] = sgn
    return eps


EPS4 = _eps4()
EPS4_UP2 = np.einsum("abmn,mp,nq->abpq", EPS4, ETA_INV, ETA_INV)


# ---------------------------------------------------------------------------
# pointwise algebra (batched over leading axes)


def weyl_from_eh(E, H):
    """Vacuum Weyl tensor W_{abcd} (..., 4,4,4,4) from sym-traceless E, H (..., 3,3)."""
    E = np.asarray(E, dtype=float)
    H = np.asarray(H, dtype=float)
    lead = E.shape[:-2]
    W = np.zeros(lead + (4, 4, 4, 4))
    d = np.eye(3)
    W[..., 0, 1:, 0, 1:] = E
    W[..., 1:, 0, 1:, 0] = E
    W[..., 0, 1:, 1:, 0] = -E
    W[..., 1:, 0, 0, 1:] = -E
    Wsp = (
        np.einsum("ik,...jl->...ijkl", d, E) - np.einsum("il,...jk->...ijkl", d, E)
        - np.einsum("jk,...il->...ijkl", d, E) + np.einsum("jl,...ik->...ijkl", d, E)
    )
    W[..., 1:, 1:, 1:, 1:] = Wsp
    # W_{0ijk} = -eps_{jkm} H_i^m and its symmetry images
    M = -np.einsum("jkm,...im->...ijk", EPS3, H)
    W[..., 0, 1:, 1:, 1:] = M
    W[..., 1:, 0, 1:, 1:] = -M
    Wt = np.einsum("...ijk->...jki", M)  # pair-symmetry image, indexed (j, k, i)
    W[..., 1:, 1:, 0, 1:] = Wt
    W[..., 1:, 1:, 1:, 0] = -Wt
    return W


def eh_from_weyl(W):
    """Inverse of weyl_from_eh for tensors with Weyl symmetries."""
    E = W[..., 0, 1:, 0, 1:]
    # W_{kl0j} = -eps_{klm} H_jm, so contracting with eps and halving gives -H
    H = -0.5 * np.einsum("ikl,...klj->...ij", EPS3, W[..., 1:, 1:, 0, 1:])
    return E, H


def weyl_dual(W):
    """Left Hodge dual (1/2) eps_{ab}^{mn} W_{mncd}."""
    return 0.5 * np.einsum("abmn,...mncd->...abcd", EPS4_UP2, W, optimize=True)


def bel_robinson(W):
    """Q_{abcd} = W_{arcs} W_b^r_d^s + *W_{arcs} *W_b^r_d^s."""
    Wd = weyl_dual(W)
    Wup = np.einsum("rm,sn,...bmdn->...brds", ETA_INV, ETA_INV, W, optimize=True)
    Wdup = np.einsum("rm,sn,...bmdn->...brds", ETA_INV, ETA_INV, Wd, optimize=True)
    return (
        np.einsum("...arcs,...brds->...abcd", W, Wup, optimize=True)
        + np.einsum("...arcs,...brds->...abcd", Wd, Wdup, optimize=True)
    )


def contract4(T, X1, X2, X3, X4):
    return np.einsum("...abcd,...a,...b,...c,...d->...", T, X1, X2, X3, X4, optimize=True)


def bel_robinson_contract(W, X1, X2, X3, X4):
    """Full contraction of the Bel-Robinson tensor of W with four vectors."""
    return contract4(bel_robinson(W), X1, X2, X3, X4)


def reduced_flux(cone, nc=None, st=None, s_range=None):
    """Cone integral of |alpha|^2 + |beta|^2 + |bbar|^2 + rho^2 + sigma^2.

    The bad component alpha_bar is excluded by definition. nc are
    NullComponents sampled on the bundle (computed from the catalog when
    omitted); the measure is the affine one, |det J| domega ds, optionally
    restricted to s_range = (s_lo, s_hi) (vertex-singular synthetic data).
    """
    if nc is None:
        from .nullcone import null_curvature_components

        nc = null_curvature_components(cone, st)
    a2, b2, r2, s2, bb2, _ = nc.invariants()
    density = a2 + b2 + bb2 + r2 + s2
    area_el = np.abs(cone.det_jacobian()) * cone.dir_weights[:, None]
    integrand = np.sum(density * area_el, axis=0)
    svals = cone.s
    if s_range is not None:
        keep = (svals >= s_range[0]) & (svals <= s_range[1])
        svals, integrand = svals[keep], integrand[keep]
    from scipy.integrate import simpson

    return float(simpson(integrand, x=svals))


@dataclass
class WeylAtPoint:
    """Ten Weyl degrees of freedom at a point, stored as (E, H) in the slice
    orthonormal frame; the reconstructed 4-tensor carries the full symmetries.
    """

    E: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        for M in (self.E, self.H):
            if np.max(np.abs(M - M.T)) > 1e-10 or abs(np.trace(M)) > 1e-10:
                raise ValueError("E and H must be symmetric traceless")

    @property
    def tensor(self):
        return weyl_from_eh(self.E, self.H)

    def bel_robinson_contract(self, X1, X2, X3, X4):
        return float(contract4(bel_robinson(self.tensor), X1, X2, X3, X4))

    def null_decompose(self, frame):
        return null_decompose(self.tensor, frame)


@dataclass
class NullComponents:
    """The ten curvature degrees of freedom split by a null pair."""

    alpha: np.ndarray   # (..., 2, 2) symmetric traceless
    beta: np.ndarray    # (..., 2)
    rho: np.ndarray     # (...,)
    sigma: np.ndarray   # (...,)
    beta_bar: np.ndarray
    alpha_bar: np.ndarray

    def invariants(self):
        """Squared norms (|alpha|^2, |beta|^2, rho^2, sigma^2, |bbar|^2, |abar|^2)."""
        return (
            np.sum(self.alpha ** 2, axis=(-2, -1)),
            np.sum(self.beta ** 2, axis=-1),
            self.rho ** 2,
            self.sigma ** 2,
            np.sum(self.beta_bar ** 2, axis=-1),
            np.sum(self.alpha_bar ** 2, axis=(-2, -1)),
        )

    def as_vector(self):
        """Pack the 10 independent real degrees of freedom."""
        return np.stack([
            self.alpha[..., 0, 0], self.alpha[..., 0, 1],
            self.beta[..., 0], self.beta[..., 1],
            self.rho, self.sigma,
            self.beta_bar[..., 0], self.beta_bar[..., 1],
            self.alpha_bar[..., 0, 0], self.alpha_bar[..., 0, 1],
        ], axis=-1)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        lead = v.shape[:-1]
        al = np.zeros(lead + (2, 2))
        ab = np.zeros(lead + (2, 2))
        al[..., 0, 0], al[..., 1, 1] = v[..., 0], -v[..., 0]
        al[..., 0, 1] = al[..., 1, 0] = v[..., 1]
        ab[..., 0, 0], ab[..., 1, 1] = v[..., 8], -v[..., 8]
        ab[..., 0, 1] = ab[..., 1, 0] = v[..., 9]
        return cls(al, np.stack([v[..., 2], v[..., 3]], -1), v[..., 4], v[..., 5],
                   np.stack([v[..., 6], v[..., 7]], -1), ab)


@dataclass
class NullFrame:
    """e1, e2 spanning the section, e3 = Lbar, e4 = L, <e3,e4> = -2."""

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray

    @classmethod
    def from_boost(cls, b, N3, e13, e23):
        """Adapted frame from a spatial unit triple (N, e1, e2) and boost b."""
        b = np.asarray(b, dtype=float)
        T = np.zeros(b.shape + (4,))
        T[..., 0] = 1.0
        emb = lambda v: np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
        N4, e1, e2 = emb(np.asarray(N3, float)), emb(np.asarray(e13, float)), emb(np.asarray(e23, float))
        e4 = b[..., None] * (T + N4)
        e3 = (T - N4) / b[..., None]
        return cls(e1, e2, e3, e4)

    def validate(self, tol=1e-10):
        dot = lambda u, v: np.einsum("ab,...a,...b->...", ETA, u, v)
        checks = [
            np.max(np.abs(dot(self.e3, self.e4) + 2.0)),
            np.max(np.abs(dot(self.e3, self.e3))),
            np.max(np.abs(dot(self.e4, self.e4))),
            np.max(np.abs(dot(self.e1, self.e1) - 1.0)),
            np.max(np.abs(dot(self.e2, self.e2) - 1.0)),
            np.max(np.abs(dot(self.e1, self.e2))),
            np.max(np.abs(dot(self.e1, self.e3))),
            np.max(np.abs(dot(self.e1, self.e4))),
            np.max(np.abs(dot(self.e2, self.e3))),
            np.max(np.abs(dot(self.e2, self.e4))),
        ]
        if max(checks) > tol:
            raise ValueError(f"null frame normalization violated by {max(checks):.3e}")


def null_decompose(W, frame, validate=True):
    """Null components of a Weyl tensor (batched)."""
    if validate:
        frame.validate()
    Wd = weyl_dual(W)
    ee = (frame.e1, frame.e2)
    al = np.stack([
        np.stack([contract4(W, a, frame.e4, bb, frame.e4) for bb in ee], -1) for a in ee
    ], -2)
    ab = np.stack([
        np.stack([contract4(W, a, frame.e3, bb, frame.e3) for bb in ee], -1) for a in ee
    ], -2)
    be = np.stack([0.5 * contract4(W, a, frame.e4, frame.e3, frame.e4) for a in ee], -1)
    bb = np.stack([0.5 * contract4(W, a, frame.e3, frame.e3, frame.e4) for a in ee], -1)
    rho = 0.25 * contract4(W, frame.e3, frame.e4, frame.e3, frame.e4)
    sig = 0.25 * contract4(Wd, frame.e3, frame.e4, frame.e3, frame.e4)
    return NullComponents(al, be, rho, sig, bb, ab)


def weyl_from_null_components(nc, frame):
    """Reconstruct W from null components by inverting the linear map (E,H) -> nc."""
    vec = nc.as_vector()
    lead = vec.shape[:-1]
    basis = np.zeros((10,) + lead + (10,))
    for idx in range(10):
        Eb, Hb = _basis_eh(idx, lead)
        Wb = weyl_from_eh(Eb, Hb)
        basis[idx] = null_decompose(Wb, frame, validate=False).as_vector()
    # rows: basis index, cols: component; solve M^T c = vec per point
    M = np.moveaxis(basis, 0, -1)             # (..., comp, basis)
    c = np.linalg.solve(M, vec[..., None])[..., 0]
    E = np.zeros(lead + (3, 3))
    H = np.zeros(lead + (3, 3))
    for idx in range(10):
        Eb, Hb = _basis_eh(idx, ())
        E += c[..., idx, None, None] * Eb
        H += c[..., idx, None, None] * Hb
    return weyl_from_eh(E, H)


_SYM_BASIS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2)]


def _basis_eh(idx, lead):
    E = np.zeros(lead + (3, 3))
    H = np.zeros(lead + (3, 3))
    target = E if idx < 5 else H
    i, j = _SYM_BASIS[idx % 5]
    if i == j:
        target[..., i, i] = 1.0
        target[..., 2, 2] = -1.0
    else:
        target[..., i, j] = 1.0
        target[..., j, i] = 1.0
    return E, H


def null_flux_density(nc, b):
    """Closed-form Q(T,T,T,e4) for e4 = b(T+N); equals the brute-force contraction."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ValueError("boost factor b must be positive")
    a2, b2, r2, s2, bb2, _ = nc.invariants()
    return (
        0.25 * b ** -3 * a2 + 1.5 * b ** -1 * b2
        + 1.5 * b * (r2 + s2) + 0.5 * b ** 3 * bb2
    )


def curvature_prime_norm_squared(nc, variant="printed"):
    """|R|'^2 accessor: printed set {alpha, beta, abar, rho, sigma} or the
    flux set {alpha, beta, rho, sigma, bbar}."""
    a2, b2, r2, s2, bb2, ab2 = nc.invariants()
    if variant == "printed":
        return a2 + b2 + ab2 + r2 + s2
    if variant == "flux":
        return a2 + b2 + r2 + s2 + bb2
    raise ValueError("variant must be 'printed' or 'flux'")


def star_product_weyl(W1, W2):
    """Symmetric bilinear product of Weyl fields, projected back to Weyl type.

    Used to sample the signature structure of quadratic curvature terms: the
    output's null components carry no alpha_bar x alpha_bar contributions.
    """
    B = np.einsum("rm,sn,...arcs,...bmdn->...abcd", ETA_INV, ETA_INV, W1, W2, optimize=True)
    B = B + np.einsum("rm,sn,...arcs,...bmdn->...abcd", ETA_INV, ETA_INV, W2, W1, optimize=True)
    # enforce Riemann symmetries
    B = 0.25 * (B - np.einsum("...abcd->...bacd", B)
                - np.einsum("...abcd->...abdc", B) + np.einsum("...abcd->...badc", B))
    B = 0.5 * (B + np.einsum("...abcd->...cdab", B))
    # remove traces (make Weyl): subtract the Ricci part of the curvature-type tensor
    ric = np.einsum("mn,...ambn->...ab", ETA_INV, B, optimize=True)
    scal = np.einsum("ab,...ab->...", ETA_INV, ric, optimize=True)
    g = ETA
    gg = lambda A, Bt: np.einsum("...ac,...bd->...abcd", A, Bt)
    ric_t = ric - 0.25 * scal[..., None, None] * g
    lead = B.shape[:-4]
    gE = np.broadcast_to(g, lead + (4, 4))
    swap = lambda X: np.einsum("...abcd->...abdc", X)
    corr = (
        gg(gE, ric_t) - swap(gg(gE, ric_t))
        + gg(ric_t, gE) - swap(gg(ric_t, gE))
    ) / 2.0
    scal_part = scal[..., None, None, None, None] / 12.0 * (
        gg(gE, gE) - swap(gg(gE, gE))
    )
    return B - corr - scal_part


# ---------------------------------------------------------------------------
# slice-level operations


@dataclass
class EBPair:
    """Electric and magnetic curvature parts on a slice."""

    E: TensorField
    H: TensorField
    trace_residual: float = 0.0

    def validate(self, metric, tol=1e-10):
        trE = np.einsum("...ij,...ij->...", metric.inverse, self.E.data)
        trH = np.einsum("...ij,...ij->...", metric.inverse, self.H.data)
        worst = max(np.max(np.abs(trE)), np.max(np.abs(trH)))
        if worst > tol:
            raise ValueError(f"EB pair trace exceeds tolerance: {worst:.3e}")


def electric_magnetic(slc):
    """E from the Gauss-type constraint, H from the symmetrized curl of k."""
    metric = slc.metric
    bundle = riemann_ricci_scalar(metric)
    k = slc.curv_k
    kmix = np.einsum("...ab,...bc->...ac", metric.inverse, k.data, optimize=True)
    kk = np.einsum("...ab,...bc->...ac", k.data, kmix, optimize=True)
    trk = np.einsum("...ij,...ij->...", metric.inverse, k.data, optimize=True)
    Edata = bundle.ricci.data - kk + trk[..., None, None] * k.data
    _, H = div_curl_symmetric(k, metric)
    trE = np.einsum("...ij,...ij->...", metric.inverse, Edata, optimize=True)
    E = TensorField(metric.grid, 2, Edata, "symmetric")
    return EBPair(E, H, trace_residual=float(np.max(np.abs(trE))))


def slice_frame_components(field, metric):
    """Orthonormal-frame components of a covariant rank-2 slice tensor."""
    L = np.linalg.cholesky(metric.field.data)
    Linv = np.linalg.inv(L)
    return np.einsum("...ai,...bj,...ij->...ab", Linv, Linv, field.data, optimize=True)


def q_energy_density(eb, metric):
    """Q(T,T,T,T) = |E|^2 + |H|^2 pointwise."""
    return (
        pointwise_norm_squared(eb.E, metric.field, metric.inverse)
        + pointwise_norm_squared(eb.H, metric.field, metric.inverse)
    )


def _chunked_q_contractions(Ef, Hf, pi0, piS, chunk=16384):
    """Q_{abcd} T^c T^d contracted with the raised deformation tensor.

    Ef, Hf, piS: (n, 3, 3) frame components; pi0: (n, 3). Returns (n,) source
    density Q_{ab00} pi^{ab} and the super-Poynting Q_{i000} as (n, 3).
    """
    n = Ef.shape[0]
    src = np.empty(n)
    poy = np.empty((n, 3))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        W = weyl_from_eh(Ef[lo:hi], Hf[lo:hi])
        Q = bel_robinson(W)
        Q00 = Q[..., 0, 0]              # (m, 4, 4)
        poy[lo:hi] = Q00[:, 1:, 0]
        # raised pi: pi^{00} = 0, pi^{0i} = -pi_{0i}, pi^{ij} = pi_{ij}
        src[lo:hi] = (
            -2.0 * np.einsum("mi,mi->m", Q00[:, 0, 1:], pi0[lo:hi])
            + np.einsum("mij,mij->m", Q00[:, 1:, 1:], piS[lo:hi])
        )
    return src, poy


def divergence_identity_residual(slices, dts=None):
    """Slab balance of the Bel-Robinson energy with the deformation source.

    slices: >= 3 consecutive SliceData (uniform dt inferred from .time).
    Returns the normalized residual of

        E(t1) - E(t0) + int dt [ int (3/2) Q_{ab00} pi^{ab} n dmu
                                 - surface super-Poynting flux ] = 0.
    """
    if len(slices) < 3:
        raise ValueError("need at least 3 consecutive slices")
    from .evolution import deformation_tensor

    energies, sources = [], []
    times = [s.time for s in slices]
    for slc in slices:
        metric = slc.metric
        eb = electric_magnetic(slc)
        q = q_energy_density(eb, metric)
        h3 = metric.grid.cell_volume
        vol = metric.volume_element
        energies.append(float(np.sum(q * vol) * h3))

        Ef = slice_frame_components(eb.E, metric).reshape(-1, 3, 3)
        Hf = slice_frame_components(eb.H, metric).reshape(-1, 3, 3)
        pi = deformation_tensor(slc)
        Linv = np.linalg.inv(np.linalg.cholesky(metric.field.data))
        pi0f = np.einsum("...ai,...i->...a", Linv, pi.pi_0i.data, optimize=True).reshape(-1, 3)
        piSf = slice_frame_components(pi.pi_ij, metric).reshape(-1, 3, 3)
        src, poy = _chunked_q_contractions(Ef, Hf, pi0f, piSf)
        n_arr = slc.lapse.data.reshape(-1)
        w = (vol.reshape(-1)) * h3
        bulk = float(np.sum(1.5 * src * n_arr * w))
        surf = _surface_poynting_flux(slc, poy.reshape(tuple(metric.grid.extents) + (3,)), Linv)
        sources.append(bulk - surf)

    dE = energies[-1] - energies[0]
    total_src = float(np.trapezoid(sources, times))
    scale = abs(energies[0]) + abs(energies[-1]) + float(np.trapezoid(np.abs(sources), times)) + 1e-300
    return abs(dE + total_src) / scale


def _surface_poynting_flux(slc, poy_frame, Linv):
    """Outward super-Poynting flux through the box faces (dirichlet grids only)."""
    grid = slc.metric.grid
    if grid.boundary == "periodic":
        return 0.0
    g = slc.metric.field.data
    n_l = slc.lapse.data
    # frame vector -> coordinate vector: v^i = (L^-T)^i_a v^a
    LinvT = np.swapaxes(Linv, -1, -2)
    poy_coord = np.einsum("...ia,...a->...i", LinvT, poy_frame, optimize=True)
    total = 0.0
    h = grid.spacing
    for axis in range(3):
        for side, sign in ((0, -1.0), (-1, 1.0)):
            sl = [slice(None)] * 3
            sl[axis] = side
            gf = g[tuple(sl)]
            others = [a for a in range(3) if a != axis]
            g2 = gf[..., others, :][..., :, others]
            area = np.sqrt(np.linalg.det(g2)) * h * h
            # unit outward conormal ~ dx^axis / |dx^axis|_g
            ginvf = slc.metric.inverse[tuple(sl)]
            nrm = np.sqrt(ginvf[..., axis, axis])
            flux = sign * poy_coord[tuple(sl)][..., axis] / np.maximum(nrm, 1e-300)
            total += float(np.sum(flux * n_l[tuple(sl)] * area))
    return total


# convenience: fuzz-friendly wrappers ---------------------------------------


def random_weyl(rng, n=1):
    def sym_traceless(m):
        A = rng.normal(size=(m, 3, 3))
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        tr = np.einsum("...ii->...", A)
        A -= tr[..., None, None] * np.eye(3) / 3.0
        return A
    return weyl_from_eh(sym_traceless(n), sym_traceless(n))


def random_null_frame(rng, n=1, b=None):
    v = rng.normal(size=(n, 3))
    N = v / np.linalg.norm(v, axis=-1, keepdims=True)
    u = rng.normal(size=(n, 3))
    u -= np.sum(u * N, axis=-1, keepdims=True) * N
    e1 = u / np.linalg.norm(u, axis=-1, keepdims=True)
    e2 = np.cross(N, e1)
    if b is None:
        b = np.exp(rng.uniform(-1.0, 1.0, size=n))
    else:
        b = np.full(n, float(b))
    return NullFrame.from_boost(b, N, e1, e2), b
