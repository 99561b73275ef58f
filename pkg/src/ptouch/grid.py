"""Uniform Cartesian grids, grid functions, masks and simple domains.

A node-centered convention is used throughout: the node with multi-index
``i`` sits at ``origin + i*h`` and represents the cell of volume ``h**n``
centered on it, so the measure of a mask is ``h**n`` times the number of
true flags and refinement keeps measures additive.  Boundary nodes of the
bounding cube belong to its closure; membership in an *open* region is
decided by strict inequalities at node coordinates.

All objects are immutable values; every operation is pure.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ParameterError, SamplingError

__all__ = [
    "GridSpec",
    "GridFunction",
    "GridMask",
    "DomainSpec",
    "grid_over_cube",
    "sample",
    "mask_of_domain",
    "measure",
    "write_pgrid",
    "read_pgrid",
]


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform, axis-aligned, isotropic grid.

    Attributes:
        shape: number of nodes per axis (each entry >= 3).
        origin: coordinates of the node with multi-index (0, ..., 0).
        spacing: common node distance h > 0 on every axis.
    """

    shape: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", float(self.spacing))
        if len(self.shape) < 2:
            raise ParameterError(f"grids must have dim >= 2, got {len(self.shape)}")
        if len(self.origin) != len(self.shape):
            raise ParameterError("origin and shape dimensions differ")
        if any(s < 3 for s in self.shape):
            raise ParameterError(f"every axis needs >= 3 nodes, got shape {self.shape}")
        if not (self.spacing > 0) or not math.isfinite(self.spacing):
            raise ParameterError(f"spacing must be positive and finite, got {self.spacing}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis."""
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    def coords(self) -> np.ndarray:
        """All node coordinates, shape ``(*shape, dim)``."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_coords(self) -> np.ndarray:
        """Node coordinates as a ``(node_count, dim)`` array in row-major order."""
        return self.coords().reshape(-1, self.dim)

    def extent(self) -> list[tuple[float, float]]:
        """Per-axis ``(min, max)`` of the node coordinates."""
        return [
            (self.origin[a], self.origin[a] + self.spacing * (self.shape[a] - 1))
            for a in range(self.dim)
        ]

    def translate(self, offset) -> "GridSpec":
        """Same grid with the origin shifted by ``offset`` (a pure relabeling)."""
        off = np.asarray(offset, dtype=float)
        if off.shape != (self.dim,):
            raise ParameterError("offset dimension mismatch")
        return replace(self, origin=tuple(self.origin[a] + off[a] for a in range(self.dim)))


@dataclass(frozen=True)
class GridFunction:
    """Real values on the nodes of a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.spec.shape:
            raise ParameterError(
                f"values shape {vals.shape} does not match grid shape {self.spec.shape}"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def assert_finite(self, what: str = "grid function") -> "GridFunction":
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise SamplingError(f"{what} is non-finite at node {tuple(int(b) for b in bad)}")
        return self

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.spec, c * self.values)

    def plus(self, other: "GridFunction") -> "GridFunction":
        if other.spec != self.spec:
            raise ParameterError("grid mismatch in addition")
        return GridFunction(self.spec, self.values + other.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class GridMask:
    """Boolean flags on the nodes of a :class:`GridSpec`.

    Carries Lebesgue-measure semantics through cell counting: the measure
    of the flagged set is ``spacing**dim`` times the number of true flags.
    """

    spec: GridSpec
    flags: np.ndarray = field(repr=False)

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=bool)
        if flags.shape != self.spec.shape:
            raise ParameterError(
                f"flags shape {flags.shape} does not match grid shape {self.spec.shape}"
            )
        flags = flags.copy()
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    def count(self) -> int:
        return int(np.count_nonzero(self.flags))

    def intersect(self, other: "GridMask") -> "GridMask":
        if other.spec != self.spec:
            raise ParameterError("grid mismatch in mask intersection")
        return GridMask(self.spec, self.flags & other.flags)

    def union(self, other: "GridMask") -> "GridMask":
        if other.spec != self.spec:
            raise ParameterError("grid mismatch in mask union")
        return GridMask(self.spec, self.flags | other.flags)

    def complement_within(self, region: "GridMask") -> "GridMask":
        """Nodes of ``region`` not in this mask."""
        if region.spec != self.spec:
            raise ParameterError("grid mismatch in mask complement")
        return GridMask(self.spec, region.flags & ~self.flags)


@dataclass(frozen=True)
class DomainSpec:
    """A cube, ball or (spherical) annulus inside a bounding cube.

    ``cube`` of side ``outer`` centered at ``center`` is the open set
    ``{y : |y_i - c_i| < outer/2}``; ``ball`` is ``{y : |y - c| < outer}``;
    ``annulus`` is ``{y : inner < |y - c| < outer}``.
    """

    kind: str
    center: tuple[float, ...]
    outer: float
    inner: float = 0.0
    bounding_side: float | None = None
    bounding_center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("cube", "ball", "annulus"):
            raise ParameterError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "outer", float(self.outer))
        object.__setattr__(self, "inner", float(self.inner))
        if not self.outer > 0:
            raise ParameterError("outer extent must be positive")
        if self.kind == "annulus":
            if not (0 <= self.inner < self.outer):
                raise ParameterError("annulus needs 0 <= inner < outer")
        elif self.inner != 0.0:
            raise ParameterError("inner radius only makes sense for annulus domains")
        # Tight default bounding cube.
        side = self.outer if self.kind == "cube" else 2.0 * self.outer
        if self.bounding_side is None:
            object.__setattr__(self, "bounding_side", float(side))
        if self.bounding_center is None:
            object.__setattr__(self, "bounding_center", self.center)
        if self.bounding_side + 1e-12 < side:
            raise DomainError("region is not contained in its bounding cube")
        half = self.bounding_side / 2.0
        for c, bc in zip(self.center, self.bounding_center):
            if abs(c - bc) > half + 1e-12:
                raise DomainError("region center outside bounding cube")

    @property
    def dim(self) -> int:
        return len(self.center)

    @classmethod
    def cube(cls, side: float, center=None, dim: int = 2, **kw) -> "DomainSpec":
        center = (0.0,) * dim if center is None else tuple(center)
        return cls("cube", center, side, **kw)

    @classmethod
    def ball(cls, radius: float, center=None, dim: int = 2, **kw) -> "DomainSpec":
        center = (0.0,) * dim if center is None else tuple(center)
        return cls("ball", center, radius, **kw)

    @classmethod
    def annulus(cls, inner: float, outer: float, center=None, dim: int = 2, **kw) -> "DomainSpec":
        center = (0.0,) * dim if center is None else tuple(center)
        return cls("annulus", center, outer, inner=inner, **kw)

    def contains(self, points: np.ndarray, closed: bool = False) -> np.ndarray:
        """Membership of ``points`` (shape ``(..., dim)``) in the open region.

        ``closed=True`` switches to the closure (non-strict inequalities).
        """
        pts = np.asarray(points, dtype=float)
        c = np.asarray(self.center)
        le = np.less_equal if closed else np.less
        ge = np.greater_equal if closed else np.greater
        if self.kind == "cube":
            return np.all(le(np.abs(pts - c), self.outer / 2.0), axis=-1)
        r2 = np.sum((pts - c) ** 2, axis=-1)
        if self.kind == "ball":
            return le(r2, self.outer**2)
        return le(r2, self.outer**2) & ge(r2, self.inner**2)

    def perimeter(self) -> float:
        """Surface measure of the region boundary (used by h-slack models)."""
        n = self.dim
        if self.kind == "cube":
            return 2.0 * n * self.outer ** (n - 1)
        sphere = lambda r: 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0) * r ** (n - 1)
        if self.kind == "ball":
            return sphere(self.outer)
        return sphere(self.outer) + sphere(self.inner)

    def shrink(self, factor: float) -> "DomainSpec":
        """Same-kind region scaled about its center (factor in (0, 1])."""
        if not 0 < factor <= 1:
            raise ParameterError("shrink factor must lie in (0, 1]")
        return replace(
            self, outer=self.outer * factor, inner=self.inner * factor,
            bounding_side=None if self.kind == "cube" else self.bounding_side,
        )


def grid_over_cube(side: float, nodes_per_axis: int, center=None, dim: int = 2) -> GridSpec:
    """Grid whose nodes span the closed cube of the given side length.

    ``spacing = side / (nodes_per_axis - 1)`` so the extreme nodes land on
    the cube faces.
    """
    if nodes_per_axis < 3:
        raise ParameterError("need at least 3 nodes per axis")
    center = (0.0,) * dim if center is None else tuple(float(c) for c in center)
    h = side / (nodes_per_axis - 1)
    origin = tuple(c - side / 2.0 for c in center)
    return GridSpec(shape=(nodes_per_axis,) * dim, origin=origin, spacing=h)


def sample(f, spec: GridSpec) -> GridFunction:
    """Evaluate a callable ``f(points) -> values`` at every grid node.

    ``f`` receives a ``(N, dim)`` array and must return ``(N,)`` finite
    values; a non-finite result raises :class:`SamplingError` naming the
    offending node.
    """
    pts = spec.flat_coords()
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape != (pts.shape[0],):
        raise SamplingError(f"descriptor returned shape {vals.shape}, expected ({pts.shape[0]},)")
    out = GridFunction(spec, vals.reshape(spec.shape))
    return out.assert_finite("sampled function")


def _check_compatible(d: DomainSpec, spec: GridSpec) -> None:
    if d.dim != spec.dim:
        raise DomainError(f"domain dim {d.dim} != grid dim {spec.dim}")
    half = d.bounding_side / 2.0
    tol = 1e-9 * max(1.0, spec.spacing)
    for a, (lo, hi) in enumerate(spec.extent()):
        if d.bounding_center[a] - half < lo - tol or d.bounding_center[a] + half > hi + tol:
            raise DomainError(
                f"bounding cube exceeds grid extent on axis {a}: "
                f"[{d.bounding_center[a] - half}, {d.bounding_center[a] + half}] vs [{lo}, {hi}]"
            )


def mask_of_domain(d: DomainSpec, spec: GridSpec, closed: bool = False) -> GridMask:
    """Mask of grid nodes lying in the (open, by default) region of ``d``."""
    _check_compatible(d, spec)
    return GridMask(spec, d.contains(spec.coords(), closed=closed))


def measure(m: GridMask) -> float:
    """Lebesgue measure of the flagged set: ``h**n * count(true flags)``."""
    return m.spec.spacing**m.spec.dim * m.count()


# ---------------------------------------------------------------------------
# PGRID serialization: one ASCII header line, then little-endian payload in
# row-major order (last axis fastest).  Functions use float64, masks bytes 0/1.
# ---------------------------------------------------------------------------

_MAGIC = "PGRID v1"


def _header(spec: GridSpec) -> str:
    shape = ",".join(str(s) for s in spec.shape)
    origin = ",".join(repr(o) for o in spec.origin)
    return f"{_MAGIC} dim={spec.dim} shape={shape} origin={origin} spacing={spec.spacing!r}\n"


def write_pgrid(obj: GridFunction | GridMask, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_header(obj.spec).encode("ascii"))
        if isinstance(obj, GridFunction):
            fh.write(obj.values.astype("<f8").tobytes(order="C"))
        else:
            fh.write(obj.flags.astype(np.uint8).tobytes(order="C"))


def read_pgrid(path) -> GridFunction | GridMask:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    if not header.startswith(_MAGIC):
        raise ParameterError(f"not a PGRID file: header {header!r}")
    fields = dict(tok.split("=", 1) for tok in header[len(_MAGIC):].split())
    dim = int(fields["dim"])
    shape = tuple(int(s) for s in fields["shape"].split(","))
    origin = tuple(float(o) for o in fields["origin"].split(","))
    spacing = float(fields["spacing"])
    if len(shape) != dim:
        raise ParameterError("PGRID header dim/shape mismatch")
    spec = GridSpec(shape=shape, origin=origin, spacing=spacing)
    n = spec.node_count
    if len(payload) == 8 * n:
        values = np.frombuffer(payload, dtype="<f8").reshape(shape)
        return GridFunction(spec, values)
    if len(payload) == n:
        flags = np.frombuffer(payload, dtype=np.uint8).reshape(shape) != 0
        return GridMask(spec, flags)
    raise ParameterError(
        f"PGRID payload has {len(payload)} bytes; expected {8 * n} (function) or {n} (mask)"
    )
