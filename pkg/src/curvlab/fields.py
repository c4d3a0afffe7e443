"""Uniform-grid tensor fields, finite differences, quadrature, and norms.

Fields live on a structured 3D grid with uniform spacing. A rank-r tensor
field stores its components densely as an array of shape (*extents, 3, ..., 3)
with r trailing axes. Declared symmetry is validated, not used to compress
storage; the packed layout (point, component) only appears in serialization.

All functions here are pure; fields are treated as immutable values.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

BOUNDARY_KINDS = ("periodic", "asymptotic-dirichlet")
SYMMETRY_KINDS = ("none", "symmetric", "symmetric-traceless")

# packed component index maps for rank-2 symmetric storage
SYM2_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass(frozen=True)
class Grid3:
    """Uniform structured grid on a rectangular box.

    Periodic grids identify index n with index 0, so the box is [o, o + n*h)
    per axis. Asymptotic-dirichlet grids include both faces and use one-sided
    stencils there.
    """

    extents: tuple
    spacing: float
    origin: tuple = (0.0, 0.0, 0.0)
    boundary: str = "periodic"

    def __post_init__(self):
        ext = tuple(int(n) for n in self.extents)
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if len(ext) != 3 or any(n < 8 for n in ext):
            raise ValueError("extents must be 3 integers >= 8")
        if not self.spacing > 0:
            raise ValueError("spacing must be > 0")
        if self.boundary not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.boundary!r}")

    @property
    def npoints(self):
        nx, ny, nz = self.extents
        return nx * ny * nz

    @property
    def cell_volume(self):
        return self.spacing ** 3

    def axis_coords(self, axis):
        n = self.extents[axis]
        return self.origin[axis] + self.spacing * np.arange(n)

    def meshgrid(self):
        xs = [self.axis_coords(a) for a in range(3)]
        return np.meshgrid(*xs, indexing="ij")

    def distance_to(self, basepoint):
        """Euclidean distance field to a point in grid coordinates."""
        X, Y, Z = self.meshgrid()
        bx, by, bz = basepoint
        return np.sqrt((X - bx) ** 2 + (Y - by) ** 2 + (Z - bz) ** 2)


class TensorField:
    """Dense tensor field on a Grid3.

    data has shape (*grid.extents, 3, ..., 3) with `rank` trailing axes.
    """

    def __init__(self, grid, rank, data, symmetry="none", check=False):
        self.grid = grid
        self.rank = int(rank)
        self.symmetry = symmetry
        exp_shape = tuple(grid.extents) + (3,) * self.rank
        data = np.asarray(data, dtype=float)
        if data.shape != exp_shape:
            raise ValueError(f"data shape {data.shape} != expected {exp_shape}")
        if symmetry not in SYMMETRY_KINDS:
            raise ValueError(f"unknown symmetry {symmetry!r}")
        if symmetry != "none" and self.rank != 2:
            raise ValueError("symmetry declarations only apply to rank-2 fields")
        self.data = data
        if check:
            self.validate_symmetry()

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, grid, rank=0, symmetry="none"):
        return cls(grid, rank, np.zeros(tuple(grid.extents) + (3,) * rank), symmetry)

    @classmethod
    def from_function(cls, grid, fn, rank=0, symmetry="none"):
        """Sample fn(X, Y, Z) -> array broadcast over the grid."""
        X, Y, Z = grid.meshgrid()
        vals = np.asarray(fn(X, Y, Z), dtype=float)
        if rank > 0 and vals.shape[: 3] != tuple(grid.extents):
            # allow fn returning (..., nx, ny, nz) component-major
            vals = np.moveaxis(vals, list(range(rank)), list(range(-rank, 0)))
        return cls(grid, rank, vals, symmetry)

    def copy(self):
        return TensorField(self.grid, self.rank, self.data.copy(), self.symmetry)

    # -- algebra ------------------------------------------------------------
    def _like(self, data):
        return TensorField(self.grid, self.rank, data, self.symmetry)

    def __add__(self, other):
        self._compat(other)
        sym = self.symmetry if self.symmetry == other.symmetry else "none"
        return TensorField(self.grid, self.rank, self.data + other.data, sym)

    def __sub__(self, other):
        self._compat(other)
        sym = self.symmetry if self.symmetry == other.symmetry else "none"
        return TensorField(self.grid, self.rank, self.data - other.data, sym)

    def __mul__(self, c):
        return self._like(self.data * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.data)

    def _compat(self, other):
        if self.grid is not other.grid and self.grid != other.grid:
            raise ValueError("fields live on different grids")
        if self.rank != other.rank:
            raise ValueError("rank mismatch")

    # -- symmetry -----------------------------------------------------------
    def symmetry_defect(self):
        if self.rank != 2 or self.symmetry == "none":
            return 0.0
        return float(np.max(np.abs(self.data - np.swapaxes(self.data, -1, -2))))

    def validate_symmetry(self, tol=1e-12):
        d = self.symmetry_defect()
        if d > tol:
            raise ValueError(f"declared symmetry violated by {d:.3e}")

    @property
    def num_components(self):
        if self.rank == 2 and self.symmetry in ("symmetric", "symmetric-traceless"):
            return 6
        return 3 ** self.rank

    def packed_components(self):
        """(npoints, num_components) view used by serialization."""
        flat = self.data.reshape(self.grid.npoints, *(3,) * self.rank)
        if self.rank == 2 and self.symmetry != "none":
            cols = [flat[:, i, j] for i, j in SYM2_PAIRS]
            return np.stack(cols, axis=1)
        return flat.reshape(self.grid.npoints, -1)

    @classmethod
    def from_packed(cls, grid, rank, symmetry, packed):
        packed = np.asarray(packed, dtype=float)
        if rank == 2 and symmetry != "none":
            full = np.zeros((grid.npoints, 3, 3))
            for c, (i, j) in enumerate(SYM2_PAIRS):
                full[:, i, j] = packed[:, c]
                full[:, j, i] = packed[:, c]
            data = full.reshape(tuple(grid.extents) + (3, 3))
        else:
            data = packed.reshape(tuple(grid.extents) + (3,) * rank)
        return cls(grid, rank, data, symmetry)

    # -- serialization ------------------------------------------------------
    _MAGIC = b"TF3\x00"

    def to_bytes(self):
        g = self.grid
        hdr = struct.pack(
            "<4s3i d 3d i i i",
            self._MAGIC, *g.extents, g.spacing, *g.origin,
            BOUNDARY_KINDS.index(g.boundary), self.rank,
            SYMMETRY_KINDS.index(self.symmetry),
        )
        payload = np.ascontiguousarray(self.packed_components()).tobytes()
        return hdr + payload

    @classmethod
    def from_bytes(cls, buf):
        hsz = struct.calcsize("<4s3i d 3d i i i")
        magic, nx, ny, nz, h, ox, oy, oz, bcode, rank, scode = struct.unpack(
            "<4s3i d 3d i i i", buf[:hsz]
        )
        if magic != cls._MAGIC:
            raise ValueError("bad field header")
        grid = Grid3((nx, ny, nz), h, (ox, oy, oz), BOUNDARY_KINDS[bcode])
        sym = SYMMETRY_KINDS[scode]
        ncomp = 6 if (rank == 2 and sym != "none") else 3 ** rank
        packed = np.frombuffer(buf[hsz:], dtype=float).reshape(grid.npoints, ncomp)
        return cls.from_packed(grid, rank, sym, packed)

    def to_json(self):
        g = self.grid
        return json.dumps({
            "extents": list(g.extents), "spacing": g.spacing,
            "origin": list(g.origin), "boundary": g.boundary,
            "rank": self.rank, "symmetry": self.symmetry,
            "components": self.packed_components().tolist(),
        })

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        grid = Grid3(tuple(d["extents"]), d["spacing"], tuple(d["origin"]), d["boundary"])
        return cls.from_packed(grid, d["rank"], d["symmetry"], np.asarray(d["components"]))

    def __eq__(self, other):
        return (
            isinstance(other, TensorField)
            and self.grid == other.grid
            and self.rank == other.rank
            and self.symmetry == other.symmetry
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class WeightedNormSpec:
    """Weighted Sobolev norm parameters: order n, weight exponent s, basepoint."""

    n: int
    s: float
    basepoint: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0 <= self.n <= 3):
            raise ValueError("derivative order must be in [0, 3]")


# ---------------------------------------------------------------------------
# finite differences


def _roll_stencil(arr, axis, h, order):
    if order == 2:
        return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2 * h)
    return (
        -np.roll(arr, -2, axis) + 8 * np.roll(arr, -1, axis)
        - 8 * np.roll(arr, 1, axis) + np.roll(arr, 2, axis)
    ) / (12 * h)


def _bounded_derivative(arr, axis, h, order):
    """Central interior, one-sided second order at the two faces."""
    n = arr.shape[axis]
    out = np.empty_like(arr)
    sl = [slice(None)] * arr.ndim

    def take(i):
        s = sl.copy()
        s[axis] = i
        return arr[tuple(s)]

    def put(i, val):
        s = sl.copy()
        s[axis] = i
        out[tuple(s)] = val

    if order == 4:
        inner = slice(2, n - 2)
        s = sl.copy(); s[axis] = inner
        shifted = [np.take(arr, range(2 + k, n - 2 + k), axis=axis) for k in (-2, -1, 1, 2)]
        out[tuple(s)] = (-shifted[3] + 8 * shifted[2] - 8 * shifted[1] + shifted[0]) / (12 * h)
        # second-order central at the subinterface ring
        put(1, (take(2) - take(0)) / (2 * h))
        put(n - 2, (take(n - 1) - take(n - 3)) / (2 * h))
    else:
        inner = slice(1, n - 1)
        s = sl.copy(); s[axis] = inner
        hi = np.take(arr, range(2, n), axis=axis)
        lo = np.take(arr, range(0, n - 2), axis=axis)
        out[tuple(s)] = (hi - lo) / (2 * h)
    # one-sided second order at the faces
    put(0, (-3 * take(0) + 4 * take(1) - take(2)) / (2 * h))
    put(n - 1, (3 * take(n - 1) - 4 * take(n - 2) + take(n - 3)) / (2 * h))
    return out


def fd_derivative(field, direction, order=4):
    """Partial derivative of every component along one grid axis."""
    if direction not in (0, 1, 2):
        raise ValueError("direction must be 0, 1 or 2")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    g = field.grid
    need = order + 1
    if g.extents[direction] < need:
        raise ValueError("grid too small")
    if g.boundary == "periodic":
        out = _roll_stencil(field.data, direction, g.spacing, order)
    else:
        out = _bounded_derivative(field.data, direction, g.spacing, order)
    return TensorField(g, field.rank, out, field.symmetry)


def gradient(field, order=4):
    """All three partials, stacked as the first tensor axis (rank+1 field)."""
    parts = [fd_derivative(field, a, order).data for a in range(3)]
    data = np.stack(parts, axis=3)
    return TensorField(field.grid, field.rank + 1, data)


def fd_second_derivative(field, direction, order=2):
    """Compact second derivative along one axis (no odd-even decoupling)."""
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    g = field.grid
    h2 = g.spacing ** 2
    arr = field.data
    if g.boundary == "periodic":
        if order == 2:
            out = (np.roll(arr, -1, direction) - 2 * arr + np.roll(arr, 1, direction)) / h2
        else:
            out = (
                -np.roll(arr, -2, direction) + 16 * np.roll(arr, -1, direction)
                - 30 * arr + 16 * np.roll(arr, 1, direction) - np.roll(arr, 2, direction)
            ) / (12 * h2)
    else:
        n = arr.shape[direction]
        if n < 4:
            raise ValueError("grid too small")
        out = np.empty_like(arr)
        sl = [slice(None)] * arr.ndim

        def take(i):
            s = sl.copy(); s[direction] = i
            return arr[tuple(s)]

        def put(i, val):
            s = sl.copy(); s[direction] = i
            out[tuple(s)] = val

        s = sl.copy(); s[direction] = slice(1, n - 1)
        hi = np.take(arr, range(2, n), axis=direction)
        mid = np.take(arr, range(1, n - 1), axis=direction)
        lo = np.take(arr, range(0, n - 2), axis=direction)
        out[tuple(s)] = (hi - 2 * mid + lo) / h2
        put(0, (2 * take(0) - 5 * take(1) + 4 * take(2) - take(3)) / h2)
        put(n - 1, (2 * take(n - 1) - 5 * take(n - 2) + 4 * take(n - 3) - take(n - 4)) / h2)
    return TensorField(g, field.rank, out, field.symmetry)


# ---------------------------------------------------------------------------
# quadrature and norms


def integrate_scalar(field, volume_element):
    """Midpoint-rule integral of a scalar against a volume element (sqrt det g)."""
    if field.rank != 0 or volume_element.rank != 0:
        raise ValueError("integrate_scalar expects scalar fields")
    field._compat(volume_element)
    if np.any(volume_element.data < 0):
        raise ValueError("metric not Riemannian")
    return float(np.sum(field.data * volume_element.data) * field.grid.cell_volume)


def metric_inverse(metric):
    """Pointwise inverse of a rank-2 SPD field; raises if not SPD."""
    g = metric.data
    try:
        np.linalg.cholesky(g.reshape(-1, 3, 3))
    except np.linalg.LinAlgError:
        raise ValueError("metric is not symmetric positive definite") from None
    return np.linalg.inv(g)


def metric_volume_element(metric):
    return np.sqrt(np.linalg.det(metric.data))


def pointwise_norm_squared(field, metric, ginv=None):
    """|F|_g^2 at each grid point for a fully covariant tensor."""
    if field.rank == 0:
        return field.data ** 2
    if ginv is None:
        ginv = metric_inverse(metric)
    idx = "abcdef"[: field.rank]
    jdx = "uvwxyz"[: field.rank]
    ops = ",".join(f"...{i}{j}" for i, j in zip(idx, jdx))
    expr = f"...{idx},{ops},...{jdx}->..."
    args = [field.data] + [ginv] * field.rank + [field.data]
    return np.einsum(expr, *args, optimize=True)


def lebesgue_norm(field, p, metric):
    """L^p norm of |F|_g against the metric volume; p = inf is the grid max."""
    if p not in (2, 4, 6, np.inf, "inf"):
        raise ValueError("p must be 2, 4, 6 or inf")
    ginv = metric_inverse(metric)
    nrm2 = pointwise_norm_squared(field, metric, ginv)
    if p in (np.inf, "inf"):
        return float(np.sqrt(np.max(nrm2)))
    vol = metric_volume_element(metric)
    integrand = nrm2 ** (p / 2.0) * vol
    return float((np.sum(integrand) * field.grid.cell_volume) ** (1.0 / p))


def weighted_sobolev_norm(field, spec, metric, order=4):
    """( sum_{i<=n} int (1+d0^2)^(s+i) |grad^i F|^2 dmu )^(1/2).

    d0 is the Euclidean distance in grid coordinates to the basepoint;
    derivatives are metric-covariant.
    """
    from .geometry3 import Metric3, covariant_derivative

    m3 = metric if isinstance(metric, Metric3) else Metric3(metric)
    ginv = m3.inverse
    vol = m3.volume_element
    d0sq = field.grid.distance_to(spec.basepoint) ** 2
    h3 = field.grid.cell_volume
    total = 0.0
    cur = field
    for i in range(spec.n + 1):
        w = (1.0 + d0sq) ** (spec.s + i)
        nrm2 = pointwise_norm_squared(cur, m3.field, ginv)
        total += np.sum(w * nrm2 * vol) * h3
        if i < spec.n:
            cur = covariant_derivative(cur, m3, order=order)
    return float(np.sqrt(total))
