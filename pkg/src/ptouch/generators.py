"""Certified test functions: barriers, radial powers, quadratics and solved
strong supersolutions with rough coefficient fields.

Every generator is pure given its parameters and seed; random recipes are
reproducible and record their seed in the returned objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, ParameterError, SolverError
from .grid import GridFunction, GridSpec, sample
from .pucci import CoefficientField, EllipticityParams

__all__ = [
    "BarrierParams",
    "barrier",
    "radial_power",
    "quadratic",
    "cone",
    "CoefficientRecipe",
    "StrongSolveResult",
    "strong_supersolution",
]


@dataclass(frozen=True)
class BarrierParams:
    """Parameters of the annulus barrier ``w = C (u^-m - (2n)^-m)``, u = |x|^2/2.

    The exponent m is the smallest one making the barrier a subsolution of
    the minimal Pucci operator on the annulus, and C is fixed so the barrier
    equals its ceiling bound on the inner sphere of radius ``alpha3``.
    """

    p: EllipticityParams
    m: float
    C: float
    alpha3: float
    ceiling: float  # the bound the barrier meets on the inner sphere

    @classmethod
    def from_ellipticity(cls, p: EllipticityParams) -> "BarrierParams":
        n, lam, Lam = p.n, p.lam, p.Lam
        m = max((n - 1) * Lam / (2.0 * lam) - 0.5, 0.5)
        ceiling = 8.0 * (36.0 * n) ** max(1.0, (n - 1) * Lam / lam - 1.0)
        alpha3 = 1.0 / (24.0 * math.sqrt(n))
        C = ceiling * (alpha3**2 / 2.0) ** m
        return cls(p=p, m=m, C=C, alpha3=alpha3, ceiling=ceiling)

    def value(self, r) -> np.ndarray:
        """Barrier profile at radius r (clamped below alpha3/2 for finiteness)."""
        rr = np.maximum(np.asarray(r, dtype=float), self.alpha3 / 2.0)
        u = 0.5 * rr * rr
        return self.C * (u ** (-self.m) - (2.0 * self.p.n) ** (-self.m))


def barrier(bp: BarrierParams, spec: GridSpec) -> GridFunction:
    """Sample the annulus barrier on a grid.

    Radii below ``alpha3/2`` are clamped before evaluation (a constant
    continuation across the singularity guard), so the sample is total even
    on origin-centered grids; all certified properties live on the annulus
    outside ``alpha3``.
    """
    if spec.dim != bp.p.n:
        raise DomainError("grid dimension differs from barrier dimension")
    return sample(lambda pts: bp.value(np.linalg.norm(pts, axis=-1)), spec)


def radial_power(
    beta: float,
    sign: int,
    excluded_ball: float,
    spec: GridSpec,
    center=None,
) -> GridFunction:
    """Sample ``sign * |x - center|**beta``.

    Profiles with beta < 2 have singular second derivatives at the center,
    so a positive ``excluded_ball`` guard radius is required; certification
    is expected to run on a domain excluding that ball.  Negative powers
    are additionally clamped to the guard radius so the sample stays finite.
    """
    if beta == 0:
        raise ParameterError("beta must be nonzero")
    if sign not in (-1, 1):
        raise ParameterError("sign must be +1 or -1")
    if beta < 2 and not excluded_ball > 0:
        raise DomainError("profiles with beta < 2 require a positive excluded ball")
    center = np.zeros(spec.dim) if center is None else np.asarray(center, dtype=float)

    def f(pts):
        r = np.linalg.norm(pts - center, axis=-1)
        if beta < 0:
            r = np.maximum(r, excluded_ball)
        return sign * r**beta

    return sample(f, spec)


def cone(spec: GridSpec, apex=None) -> GridFunction:
    """The cone ``-|x - apex|`` (a supersolution for any ellipticity)."""
    return radial_power(1.0, -1, spec.spacing / 4.0, spec, center=apex)


def quadratic(A: np.ndarray, spec: GridSpec, center=None) -> GridFunction:
    """Sample ``(1/2) (x-c)^T A (x-c)`` for a symmetric matrix A."""
    A = np.asarray(A, dtype=float)
    if A.shape != (spec.dim, spec.dim):
        raise ParameterError(f"matrix shape {A.shape} does not match dim {spec.dim}")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise ParameterError("quadratic matrix must be symmetric")
    center = np.zeros(spec.dim) if center is None else np.asarray(center, dtype=float)

    def f(pts):
        d = pts - center
        return 0.5 * np.einsum("...i,ij,...j->...", d, A, d)

    return sample(f, spec)


@dataclass(frozen=True)
class CoefficientRecipe:
    """Seeded construction of a coefficient field with spectrum in [lam, Lam].

    Kinds:
        constant          : diag(lam, Lam, lam, ...), the same at every node
        checkerboard      : axis eigenvalues swap parity cell by cell
        random-rotation   : per-node random rotation of random eigenvalues
        radial-anisotropic: eigenvalue lam radially, Lam tangentially
    """

    kind: str
    p: EllipticityParams
    seed: int = 0

    _KINDS = ("constant", "checkerboard", "random-rotation", "radial-anisotropic")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ParameterError(f"unknown coefficient recipe {self.kind!r}")

    def build(self, spec: GridSpec) -> CoefficientField:
        n = self.p.n
        if spec.dim != n:
            raise DomainError("grid dimension differs from recipe dimension")
        lam, Lam = self.p.lam, self.p.Lam
        shape = spec.shape
        if self.kind == "constant":
            diag = np.array([lam if i % 2 == 0 else Lam for i in range(n)])
            vals = np.zeros(shape + (n, n))
            for i in range(n):
                vals[..., i, i] = diag[i]
        elif self.kind == "checkerboard":
            idx = np.indices(shape).sum(axis=0) % 2
            vals = np.zeros(shape + (n, n))
            for i in range(n):
                even = lam if i % 2 == 0 else Lam
                odd = Lam if i % 2 == 0 else lam
                vals[..., i, i] = np.where(idx == 0, even, odd)
        elif self.kind == "random-rotation":
            rng = np.random.default_rng(self.seed)
            count = spec.node_count
            gauss = rng.standard_normal((count, n, n))
            q, r = np.linalg.qr(gauss)
            q = q * np.sign(np.einsum("...ii->...i", r))[:, None, :]
            mu = rng.uniform(lam, Lam, size=(count, n))
            vals = np.einsum("...ij,...j,...kj->...ik", q, mu, q).reshape(shape + (n, n))
            vals = 0.5 * (vals + np.swapaxes(vals, -1, -2))
        else:  # radial-anisotropic
            pts = spec.coords()
            r = np.linalg.norm(pts, axis=-1)
            safe = np.maximum(r, spec.spacing / 2.0)
            e = pts / safe[..., None]
            proj = np.einsum("...i,...j->...ij", e, e)
            eye = np.eye(n)
            vals = lam * proj + Lam * (eye - proj)
            # At the center the radial direction is undefined; fall back to
            # the isotropic midpoint there.
            degenerate = r < spec.spacing / 2.0
            vals[degenerate] = 0.5 * (lam + Lam) * eye
        return CoefficientField(spec, vals, params=self.p)


@dataclass(frozen=True)
class StrongSolveResult:
    v: GridFunction
    a: CoefficientField
    residual: float
    seed: int


def _assemble(a: CoefficientField, g: np.ndarray, boundary: np.ndarray):
    """Collocated nondivergence-form system trace(a D2_h v) = -g, Dirichlet data."""
    spec = a.spec
    n = spec.dim
    shape = spec.shape
    h2 = spec.spacing**2
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(n)], dtype=np.int64)

    inner_axes = [np.arange(1, s - 1) for s in shape]
    inner_idx = np.stack(np.meshgrid(*inner_axes, indexing="ij"), axis=-1).reshape(-1, n)
    flat_inner = inner_idx @ strides
    n_inner = flat_inner.size
    row_of_flat = -np.ones(spec.node_count, dtype=np.int64)
    row_of_flat[flat_inner] = np.arange(n_inner)

    rows, cols, data = [], [], []
    rhs = -g.reshape(-1)[flat_inner].astype(float)
    avals = a.values.reshape(-1, n, n)
    bvals = boundary.reshape(-1)

    def add(offsets, coeff):
        nb = flat_inner + np.asarray(offsets, dtype=np.int64) @ strides
        nb_row = row_of_flat[nb]
        inside = nb_row >= 0
        rows.append(np.arange(n_inner)[inside])
        cols.append(nb_row[inside])
        data.append(coeff[inside])
        # Known boundary neighbors move to the right-hand side.
        if np.any(~inside):
            np.add.at(rhs, np.arange(n_inner)[~inside], -coeff[~inside] * bvals[nb[~inside]])

    diag = np.zeros(n_inner)
    for i in range(n):
        aii = avals[flat_inner, i, i]
        diag -= 2.0 * aii / h2
        off = [0] * n
        off[i] = 1
        add(off, aii / h2)
        off[i] = -1
        add(off, aii / h2)
        for j in range(i + 1, n):
            aij = avals[flat_inner, i, j]
            for si, sj in ((1, 1), (-1, -1)):
                off = [0] * n
                off[i], off[j] = si, sj
                add(off, aij / (2.0 * h2))
            for si, sj in ((1, -1), (-1, 1)):
                off = [0] * n
                off[i], off[j] = si, sj
                add(off, -aij / (2.0 * h2))
    rows.append(np.arange(n_inner))
    cols.append(np.arange(n_inner))
    data.append(diag)

    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_inner, n_inner),
    ).tocsr()
    return A, rhs, flat_inner


def strong_supersolution(
    recipe: CoefficientRecipe,
    boundary_data,
    spec: GridSpec,
    g=None,
    residual_tol: float = 1e-8,
) -> StrongSolveResult:
    """Solve ``trace(a(x) D2_h v) = -g`` with Dirichlet data and g >= 0.

    With the default g = 0 the output is an exact discrete solution of the
    nondivergence-form equation, hence a (discrete) strong supersolution;
    a nonzero g makes it strict.  The sparse system is solved directly and
    the relative residual must come out below ``residual_tol``.
    """
    a = recipe.build(spec)
    bvals = np.asarray(boundary_data(spec.flat_coords()), dtype=float).reshape(spec.shape)
    if g is None:
        gvals = np.zeros(spec.shape)
    else:
        gvals = np.asarray(g(spec.flat_coords()), dtype=float).reshape(spec.shape)
        if np.any(gvals < -1e-12):
            raise ParameterError("forcing g must be nonnegative")

    A, rhs, flat_inner = _assemble(a, gvals, bvals)
    x = spla.spsolve(A.tocsc(), rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("direct sparse solve produced non-finite values")
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(x))))
    residual = float(np.max(np.abs(A @ x - rhs))) / scale
    if residual > residual_tol:
        raise SolverError(
            f"solve residual {residual:.3e} above tolerance {residual_tol:.3e}",
            residual=residual,
        )

    values = bvals.reshape(-1).copy()
    values[flat_inner] = x
    v = GridFunction(spec, values.reshape(spec.shape))
    return StrongSolveResult(v=v, a=a, residual=residual, seed=recipe.seed)


def boundary_descriptor(name: str, seed: int = 0, dim: int = 2):
    """Named closed-form boundary data for CLI-driven runs."""
    rng = np.random.default_rng(seed)
    if name == "zero":
        return lambda pts: np.zeros(pts.shape[0])
    if name == "bowl":
        return lambda pts: np.sum(pts**2, axis=-1)
    if name == "saddle":
        return lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2
    if name == "ripple":
        freq = rng.uniform(0.5, 1.5, size=dim)
        phase = rng.uniform(0, 2 * math.pi, size=dim)

        def f(pts):
            out = np.zeros(pts.shape[0])
            for k in range(dim):
                out += np.sin(freq[k] * pts[:, k] + phase[k])
            return out

        return f
    if name == "randquad":
        B = rng.standard_normal((dim, dim))
        A = 0.5 * (B + B.T)
        b = rng.standard_normal(dim)

        def f(pts):
            return 0.5 * np.einsum("...i,ij,...j->...", pts, A, pts) + pts @ b

        return f
    raise ParameterError(f"unknown boundary descriptor {name!r}")
