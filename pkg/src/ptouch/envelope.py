"""Paraboloid-touching machinery on grids.

The central objects are the lower Moreau envelope

    S_K v(y) = min_{x in D} [ v(x) + (K/2)|x - y|^2 ],

its double form, the proximal hull

    hull_K v(x) = max_y [ S_K v(y) - (K/2)|x - y|^2 ],

which is the pointwise supremum of all opening-K paraboloids lying below
v on the region D, and the masks of nodes where the hull actually meets
v (the points touchable from below by an opening-K paraboloid).

Minimizations over the region D restrict to in-region nodes (out-of-region
nodes carry +inf logically, never stored); paraboloid vertices range over
all nodes of the bounding grid.  Both convolutions run as per-axis
lower-envelope-of-parabolas passes in time linear in the node count per
axis and agree with the O(N^2) double loop up to reordering of the same
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import envelope_lines
from .errors import DomainError, ParameterError
from .grid import DomainSpec, GridFunction, GridMask, GridSpec, mask_of_domain

__all__ = [
    "Paraboloid",
    "TouchReport",
    "default_touch_tol",
    "moreau_lower",
    "proximal_hull",
    "touchable_mask",
    "touchable_masks",
    "bad_set_mask",
    "contact_set",
    "min_touch_opening",
    "infconv_regularize",
]


@dataclass(frozen=True)
class Paraboloid:
    """The function ``z -> height - (opening/2)|z - vertex|^2``."""

    vertex: tuple[float, ...]
    opening: float
    height: float

    def __post_init__(self):
        if self.opening < 0:
            raise ParameterError("paraboloid opening must be >= 0")

    @classmethod
    def from_slope(cls, x, p, opening: float, value: float) -> "Paraboloid":
        """Vertex form of ``value + p.(z-x) - (opening/2)|z-x|^2``.

        Completing the square gives vertex ``x + p/opening`` and height
        ``value + |p|^2 / (2 opening)``.
        """
        if opening <= 0:
            raise ParameterError("slope form needs opening > 0")
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        vertex = x + p / opening
        height = float(value + np.dot(p, p) / (2.0 * opening))
        return cls(tuple(vertex), float(opening), height)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        d2 = np.sum((pts - np.asarray(self.vertex)) ** 2, axis=-1)
        return self.height - 0.5 * self.opening * d2


@dataclass(frozen=True)
class TouchReport:
    """Result of a touchability computation at one opening.

    Attributes:
        mask: nodes of the query region touchable from below (slack <= tol).
        contact_points: flat node indices of the mask, row-major order.
        vertex_map: per contact point, the vertex of the touching paraboloid
            (the minimizing vertex of the double envelope), shape ``(m, dim)``.
        slack: per-node gap ``v - hull >= 0`` (clamped at tiny fp negatives).
        opening: the opening K the report was computed at.
        tol: the touching tolerance actually used.
    """

    mask: GridMask
    contact_points: np.ndarray = field(repr=False)
    vertex_map: np.ndarray = field(repr=False)
    slack: GridFunction = field(repr=False)
    opening: float = 0.0
    tol: float = 0.0

    def is_empty(self) -> bool:
        return self.contact_points.size == 0


def default_touch_tol(v: GridFunction, K: float) -> float:
    """Discretization slack for touching: ``4*K*h**2 + 1e-12*max|v|``.

    A paraboloid tangent between nodes misses the nodes by O(K h^2); the
    second term absorbs rounding relative to the function scale.
    """
    h = v.spec.spacing
    return 4.0 * K * h * h + 1e-12 * v.sup_norm()


def _pass_axis(work: np.ndarray, spec: GridSpec, axis: int, c: float):
    x = spec.axis_coords(axis).astype(float)
    moved = np.moveaxis(work, axis, -1)
    shp = moved.shape
    flat = np.ascontiguousarray(moved.reshape(-1, shp[-1]))
    out2, arg2 = envelope_lines(flat, x, c)
    out = np.moveaxis(out2.reshape(shp), -1, axis)
    arg = np.moveaxis(arg2.reshape(shp), -1, axis)
    return out, arg


def _min_convolution(values: np.ndarray, spec: GridSpec, c: float):
    """Separable min over x of ``values(x) + c|x - y|^2`` for every node y.

    Returns the envelope and, per axis, the index of the minimizing source
    node (composed through the passes, -1 where no source exists).
    """
    work = values
    args: list[np.ndarray] = []
    for a in range(spec.dim):
        work, arg = _pass_axis(work, spec, a, c)
        gather = np.maximum(arg, 0)
        for b in range(len(args)):
            prev = np.take_along_axis(args[b], gather, axis=a)
            args[b] = np.where(arg >= 0, prev, -1)
        args.append(arg)
    return work, args


def _region_values(v: GridFunction, d: DomainSpec) -> tuple[np.ndarray, GridMask]:
    dmask = mask_of_domain(d, v.spec)
    if dmask.count() == 0:
        raise DomainError("domain region contains no grid nodes")
    vals = np.where(dmask.flags, v.values, np.inf)
    return vals, dmask


def moreau_lower(v: GridFunction, K: float, d: DomainSpec) -> GridFunction:
    """Lower Moreau envelope ``S_K v`` over the region of ``d``, on every node."""
    if not K > 0:
        raise ParameterError(f"opening K must be positive, got {K}")
    vals, _ = _region_values(v, d)
    env, _ = _min_convolution(vals, v.spec, K / 2.0)
    return GridFunction(v.spec, env)


def _hull_with_vertices(v: GridFunction, K: float, d: DomainSpec):
    if not K > 0:
        raise ParameterError(f"opening K must be positive, got {K}")
    vals, dmask = _region_values(v, d)
    c = K / 2.0
    env, _ = _min_convolution(vals, v.spec, c)
    # hull(x) = max_y [S(y) - c|x-y|^2] = -min_y [(-S)(y) + c|x-y|^2];
    # vertices range over every node, so the inner array is finite.
    neg, args = _min_convolution(-env, v.spec, c)
    hull = -neg
    vertex_idx = np.stack(args, axis=-1)
    return hull, vertex_idx, dmask


def proximal_hull(v: GridFunction, K: float, d: DomainSpec) -> GridFunction:
    """Supremum of all opening-K paraboloids lying below ``v`` on ``d``.

    Satisfies ``hull <= v`` on the region, equality exactly at touchable
    nodes, and is idempotent.
    """
    hull, _, _ = _hull_with_vertices(v, K, d)
    return GridFunction(v.spec, hull)


def _vertex_coords(spec: GridSpec, vertex_idx: np.ndarray, flat_points: np.ndarray) -> np.ndarray:
    idx = vertex_idx.reshape(-1, spec.dim)[flat_points]
    coords = np.empty_like(idx, dtype=float)
    for a in range(spec.dim):
        coords[:, a] = spec.origin[a] + spec.spacing * idx[:, a]
    return coords


def touchable_mask(
    v: GridFunction,
    K: float,
    d: DomainSpec,
    query: DomainSpec | None = None,
    tol: float | None = None,
) -> TouchReport:
    """Nodes of ``query`` touchable from below on ``d`` by opening-K paraboloids.

    The mask is true at x iff ``v(x) - hull(x) <= tol``; the bad set at
    opening K is its complement within the query region.  The query region
    must be contained in the region of ``d``.
    """
    if query is None:
        query = d
    if tol is None:
        tol = default_touch_tol(v, K)
    if tol < 0:
        raise ParameterError("touch tolerance must be >= 0")
    hull, vertex_idx, dmask = _hull_with_vertices(v, K, d)
    qmask = mask_of_domain(query, v.spec)
    if np.any(qmask.flags & ~dmask.flags):
        raise DomainError("query region exceeds the envelope domain")
    slack = v.values - hull
    neg = slack < 0
    if np.any(slack[neg] < -1e-9 * max(1.0, v.sup_norm())):
        raise AssertionError("hull exceeded the function by more than rounding")
    slack = np.where(neg, 0.0, slack)
    flags = qmask.flags & (slack <= tol)
    mask = GridMask(v.spec, flags)
    contact = np.flatnonzero(flags.reshape(-1))
    vertices = _vertex_coords(v.spec, vertex_idx, contact)
    return TouchReport(
        mask=mask,
        contact_points=contact,
        vertex_map=vertices,
        slack=GridFunction(v.spec, slack),
        opening=float(K),
        tol=float(tol),
    )


def bad_set_mask(report: TouchReport, query_mask: GridMask) -> GridMask:
    """Complement of the touchable set within the query region."""
    return report.mask.complement_within(query_mask)


def touchable_masks(
    v: GridFunction,
    Ks,
    d: DomainSpec,
    query: DomainSpec | None = None,
    tols=None,
) -> list[GridMask]:
    """Touchable masks along an increasing opening ladder, nested by construction.

    The continuum sets are nested in K; the per-K computations are combined
    with a running union so that discretization can never produce a
    non-monotone family.
    """
    Ks = [float(K) for K in Ks]
    if not Ks:
        raise ParameterError("opening ladder is empty")
    if any(k2 <= k1 for k1, k2 in zip(Ks, Ks[1:])) or Ks[0] <= 0:
        raise ParameterError("opening ladder must be strictly increasing and positive")
    masks: list[GridMask] = []
    acc = None
    for i, K in enumerate(Ks):
        tol = None if tols is None else tols[i]
        rep = touchable_mask(v, K, d, query, tol)
        acc = rep.mask if acc is None else acc.union(rep.mask)
        masks.append(acc)
    return masks


def contact_set(v: GridFunction, V: GridMask, Q: DomainSpec, K: float) -> TouchReport:
    """Sliding contact set: touch points in the closure of Q per vertex of V.

    For each vertex node y flagged in ``V``, paraboloids of opening K are
    slid up until they meet ``v`` over the nodes of the closed region of Q;
    the minimizing node is recorded (ties broken by the lexicographically
    smallest node index) and contact points are deduplicated.  The vertex
    map keeps, per contact point, the first vertex that selected it.
    """
    if not K > 0:
        raise ParameterError(f"opening K must be positive, got {K}")
    if V.count() == 0:
        raise ParameterError("vertex set is empty")
    if V.spec != v.spec:
        raise ParameterError("vertex mask grid differs from function grid")
    qmask = mask_of_domain(Q, v.spec, closed=True)
    qidx = np.flatnonzero(qmask.flags.reshape(-1))
    if qidx.size == 0:
        raise DomainError("closed query region contains no grid nodes")
    pts = v.spec.flat_coords()
    qpts = pts[qidx]
    qvals = v.values.reshape(-1)[qidx]
    vidx = np.flatnonzero(V.flags.reshape(-1))
    vpts = pts[vidx]

    contact_of_vertex = np.empty(vidx.size, dtype=np.int64)
    chunk = max(1, int(2e6 // max(qidx.size, 1)))
    for start in range(0, vidx.size, chunk):
        block = vpts[start : start + chunk]
        d2 = np.sum((qpts[None, :, :] - block[:, None, :]) ** 2, axis=-1)
        scores = qvals[None, :] + 0.5 * K * d2
        # np.argmin returns the first minimizer, i.e. the smallest flat index.
        contact_of_vertex[start : start + chunk] = qidx[np.argmin(scores, axis=1)]

    order = np.argsort(contact_of_vertex, kind="stable")
    uniq, first_pos = np.unique(contact_of_vertex[order], return_index=True)
    first_vertex = vidx[order[first_pos]]

    flags = np.zeros(v.spec.node_count, dtype=bool)
    flags[uniq] = True
    mask = GridMask(v.spec, flags.reshape(v.spec.shape))
    vertices = pts[first_vertex]
    slack = GridFunction(v.spec, np.zeros(v.spec.shape))
    return TouchReport(
        mask=mask,
        contact_points=uniq,
        vertex_map=vertices,
        slack=slack,
        opening=float(K),
        tol=0.0,
    )


def min_touch_opening(
    v: GridFunction,
    d: DomainSpec,
    Ks,
    query: DomainSpec | None = None,
) -> GridFunction:
    """Pointwise smallest ladder opening whose paraboloids touch from below.

    Nodes touchable at no ladder opening carry the sentinel ``2 * max(Ks)``
    (kept finite so the result remains a valid grid function); refining the
    ladder never increases any value, and the strict superlevel set at a
    ladder value t is exactly the bad set at opening t.
    """
    masks = touchable_masks(v, Ks, d, query)
    Ks = [float(K) for K in Ks]
    sentinel = 2.0 * Ks[-1]
    out = np.full(v.spec.shape, sentinel)
    for K, mask in zip(reversed(Ks), reversed(masks)):
        out = np.where(mask.flags, K, out)
    qmask = mask_of_domain(query if query is not None else d, v.spec)
    out = np.where(qmask.flags, out, sentinel)
    return GridFunction(v.spec, out)


def infconv_regularize(v: GridFunction, delta: float, d: DomainSpec) -> GridFunction:
    """Inf-convolution regularization: the Moreau envelope at opening 2/delta.

    The result lies below ``v`` on the region, is (2/delta)-semiconcave in
    the discrete sense (axis second differences at most 2/delta plus grid
    rounding), and converges to ``v`` pointwise as delta -> 0 on a fixed
    grid.
    """
    if not delta > 0:
        raise ParameterError(f"regularization parameter must be positive, got {delta}")
    return moreau_lower(v, 2.0 / delta, d)
