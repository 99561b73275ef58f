"""Discrete Hessians, Pucci extremal operators and supersolution certification.

The extremal operators act on a symmetric matrix M through its spectrum:

    pucci_minus(M) = lam * sum(e+) + Lam * sum(e-)
    pucci_plus(M)  = Lam * sum(e+) + lam * sum(e-)

where e+/e- are the positive/negative eigenvalues of M.  These are the
pointwise extremes of trace(A M) over symmetric A with spectrum in
[lam, Lam].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DomainError, ParameterError
from .grid import DomainSpec, GridFunction, GridSpec, mask_of_domain

__all__ = [
    "EllipticityParams",
    "SymmetricMatrixField",
    "CoefficientField",
    "discrete_hessian",
    "pucci_minus",
    "pucci_plus",
    "pucci_minus_field",
    "pucci_plus_field",
    "verify_supersolution",
    "CertificationReport",
    "linear_apply",
    "radial_spectrum",
    "trace_det_check",
]

_SYM_TOL = 1e-9


@dataclass(frozen=True)
class EllipticityParams:
    """Dimension and ellipticity constants ``0 < lam <= Lam``."""

    n: int
    lam: float
    Lam: float

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "Lam", float(self.Lam))
        if self.n < 2:
            raise ParameterError("dimension must be >= 2")
        if not (0 < self.lam <= self.Lam):
            raise ParameterError(f"need 0 < lam <= Lam, got ({self.lam}, {self.Lam})")

    @property
    def ratio(self) -> float:
        return self.Lam / self.lam


@dataclass(frozen=True)
class SymmetricMatrixField:
    """Per-interior-node symmetric matrices, stored as upper triangles.

    ``entries`` has shape ``interior_shape + (n*(n+1)//2,)`` listing the
    upper triangle row by row; symmetry is exact by storage.  Interior
    nodes are those offset by one from every grid face.
    """

    spec: GridSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.spec.dim
        interior = tuple(s - 2 for s in self.spec.shape)
        want = interior + (n * (n + 1) // 2,)
        ent = np.asarray(self.entries, dtype=float)
        if ent.shape != want:
            raise ParameterError(f"entries shape {ent.shape}, expected {want}")
        ent = ent.copy()
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(s - 2 for s in self.spec.shape)

    def matrices(self) -> np.ndarray:
        """Full ``interior_shape + (n, n)`` symmetric matrices."""
        n = self.spec.dim
        out = np.zeros(self.interior_shape + (n, n))
        k = 0
        for i in range(n):
            for j in range(i, n):
                out[..., i, j] = self.entries[..., k]
                out[..., j, i] = self.entries[..., k]
                k += 1
        return out

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues per interior node, ascending, shape ``interior + (n,)``."""
        return np.linalg.eigvalsh(self.matrices())

    def interior_points(self) -> np.ndarray:
        """Coordinates of the interior nodes, shape ``interior_shape + (n,)``."""
        axes = [self.spec.axis_coords(a)[1:-1] for a in range(self.spec.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class CoefficientField:
    """Per-node symmetric coefficient matrices with spectrum in [lam, Lam]."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)
    params: EllipticityParams | None = None

    def __post_init__(self):
        n = self.spec.dim
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.spec.shape + (n, n):
            raise ParameterError(
                f"coefficient shape {vals.shape}, expected {self.spec.shape + (n, n)}"
            )
        if not np.allclose(vals, np.swapaxes(vals, -1, -2), atol=_SYM_TOL):
            raise ContractViolation("coefficient matrices must be symmetric")
        if self.params is not None:
            eigs = np.linalg.eigvalsh(vals)
            lo, hi = float(np.min(eigs)), float(np.max(eigs))
            tol = _SYM_TOL * max(1.0, self.params.Lam)
            if lo < self.params.lam - tol or hi > self.params.Lam + tol:
                raise ContractViolation(
                    f"coefficient spectrum [{lo}, {hi}] outside "
                    f"[{self.params.lam}, {self.params.Lam}]"
                )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def discrete_hessian(v: GridFunction) -> SymmetricMatrixField:
    """Central second differences on interior nodes.

    Diagonal entries use the three-point stencil, off-diagonals the
    four-point cross stencil; both are exact for quadratic polynomials.
    """
    spec = v.spec
    if any(s < 3 for s in spec.shape):
        raise DomainError("grid too small for interior Hessians")
    n = spec.dim
    h2 = spec.spacing**2
    u = v.values
    core = tuple(slice(1, -1) for _ in range(n))
    entries = np.empty(tuple(s - 2 for s in spec.shape) + (n * (n + 1) // 2,))

    def shifted(offsets):
        sl = tuple(slice(1 + o, (s - 1 + o) if (s - 1 + o) != 0 else None)
                   for o, s in zip(offsets, spec.shape))
        return u[sl]

    k = 0
    for i in range(n):
        for j in range(i, n):
            if i == j:
                off = [0] * n
                off[i] = 1
                plus = shifted(off)
                off[i] = -1
                minus = shifted(off)
                entries[..., k] = (plus - 2.0 * u[core] + minus) / h2
            else:
                off = [0] * n
                off[i], off[j] = 1, 1
                pp = shifted(off)
                off[i], off[j] = -1, -1
                mm = shifted(off)
                off[i], off[j] = 1, -1
                pm = shifted(off)
                off[i], off[j] = -1, 1
                mp = shifted(off)
                entries[..., k] = (pp + mm - pm - mp) / (4.0 * h2)
            k += 1
    return SymmetricMatrixField(spec, entries)


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ContractViolation(f"expected square matrices, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if not np.allclose(M, np.swapaxes(M, -1, -2), atol=_SYM_TOL * scale):
        raise ContractViolation("matrix is not symmetric")
    return M


def pucci_minus(M: np.ndarray, p: EllipticityParams) -> float | np.ndarray:
    """Minimal value of trace(A M) over symmetric ``lam I <= A <= Lam I``."""
    M = _check_symmetric(M)
    e = np.linalg.eigvalsh(M)
    val = p.lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + p.Lam * np.sum(
        np.where(e < 0, e, 0.0), axis=-1
    )
    return float(val) if val.ndim == 0 else val


def pucci_plus(M: np.ndarray, p: EllipticityParams) -> float | np.ndarray:
    """Maximal value of trace(A M) over symmetric ``lam I <= A <= Lam I``."""
    M = _check_symmetric(M)
    e = np.linalg.eigvalsh(M)
    val = p.Lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + p.lam * np.sum(
        np.where(e < 0, e, 0.0), axis=-1
    )
    return float(val) if val.ndim == 0 else val


def pucci_minus_field(H: SymmetricMatrixField, p: EllipticityParams) -> np.ndarray:
    e = H.eigenvalues()
    return p.lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + p.Lam * np.sum(
        np.where(e < 0, e, 0.0), axis=-1
    )


def pucci_plus_field(H: SymmetricMatrixField, p: EllipticityParams) -> np.ndarray:
    e = H.eigenvalues()
    return p.Lam * np.sum(np.where(e > 0, e, 0.0), axis=-1) + p.lam * np.sum(
        np.where(e < 0, e, 0.0), axis=-1
    )


@dataclass(frozen=True)
class CertificationReport:
    """Node-wise supersolution check: ``pucci_minus(D2 v) <= tol`` inside."""

    max_violation: float
    worst_node: tuple[int, ...]
    tol: float
    passed: bool
    tested_nodes: int


def default_certification_tol(v: GridFunction, p: EllipticityParams) -> float:
    """First-order slack ``10 * n * max|v| * h``.

    Generated supersolutions are only piecewise smooth (cones, barriers),
    so the certification tolerance scales linearly in h.
    """
    return 10.0 * p.n * v.sup_norm() * v.spec.spacing


def verify_supersolution(
    v: GridFunction,
    d: DomainSpec,
    p: EllipticityParams,
    tol: float | None = None,
) -> CertificationReport:
    """Certify ``pucci_minus(discrete_hessian(v)) <= tol`` on interior region nodes.

    Interior means all 2n axis neighbors exist on the grid; boundary nodes
    are never tested.
    """
    if tol is None:
        tol = default_certification_tol(v, p)
    H = discrete_hessian(v)
    vals = pucci_minus_field(H, p)
    inner = tuple(slice(1, -1) for _ in range(v.spec.dim))
    region = mask_of_domain(d, v.spec).flags[inner]
    if not np.any(region):
        raise DomainError("domain has no interior grid nodes")
    masked = np.where(region, vals, -np.inf)
    flat = int(np.argmax(masked))
    worst = np.unravel_index(flat, masked.shape)
    max_violation = float(masked[worst])
    worst_node = tuple(int(w) + 1 for w in worst)
    return CertificationReport(
        max_violation=max_violation,
        worst_node=worst_node,
        tol=float(tol),
        passed=bool(max_violation <= tol),
        tested_nodes=int(np.count_nonzero(region)),
    )


def linear_apply(a: CoefficientField, v: GridFunction) -> GridFunction:
    """Node-wise ``trace(a(x) D2_h v(x))`` on interior nodes, zero on the rim.

    Sandwiched between ``pucci_minus`` and ``pucci_plus`` of the discrete
    Hessian whenever the coefficients are admissible.
    """
    if a.spec != v.spec:
        raise ParameterError("coefficient grid differs from function grid")
    H = discrete_hessian(v)
    inner = tuple(slice(1, -1) for _ in range(v.spec.dim))
    out = np.zeros(v.spec.shape)
    out[inner] = np.einsum("...ij,...ji->...", a.values[inner], H.matrices())
    return GridFunction(v.spec, out)


def radial_spectrum(profile: dict, r: float) -> tuple[float, float]:
    """Hessian eigenvalues of a radial function at radius r.

    For ``g(|x|)`` the Hessian has eigenvalue ``g''(r)`` (radial direction,
    multiplicity 1) and ``g'(r)/r`` (tangential, multiplicity n-1).
    Profiles:
        {"kind": "power", "beta": b, "scale": s}       -> s * r**b
        {"kind": "inverse_power", "m": m, "C": C}      -> C*((r^2/2)^-m - const)
    """
    if not r > 0:
        raise ParameterError("radial spectrum is singular at r = 0")
    kind = profile.get("kind", "power")
    if kind == "power":
        beta = float(profile["beta"])
        s = float(profile.get("scale", 1.0))
        radial = s * beta * (beta - 1.0) * r ** (beta - 2.0)
        tangential = s * beta * r ** (beta - 2.0)
        return radial, tangential
    if kind == "inverse_power":
        m = float(profile["m"])
        C = float(profile["C"])
        u = 0.5 * r * r
        base = C * m * u ** (-m - 2.0)
        radial = base * (m + 0.5) * r * r
        tangential = -base * 0.5 * r * r
        return radial, tangential
    raise ParameterError(f"unknown radial profile kind {kind!r}")


def trace_det_check(A: np.ndarray, B: np.ndarray) -> dict:
    """Check ``trace(A B) >= n (det A)^(1/n) (det B)^(1/n)`` for PSD A, B."""
    A = _check_symmetric(A)
    B = _check_symmetric(B)
    if A.shape != B.shape:
        raise ContractViolation("matrix shapes differ")
    n = A.shape[-1]
    tol = 1e-9 * max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    if np.min(np.linalg.eigvalsh(A)) < -tol or np.min(np.linalg.eigvalsh(B)) < -tol:
        raise ContractViolation("inputs must be positive semidefinite")
    lhs = float(np.trace(A @ B))
    detA = max(float(np.linalg.det(A)), 0.0)
    detB = max(float(np.linalg.det(B)), 0.0)
    rhs = n * detA ** (1.0 / n) * detB ** (1.0 / n)
    scale = max(1.0, abs(lhs), abs(rhs))
    return {"lhs": lhs, "rhs": rhs, "pass": bool(lhs >= rhs - 1e-10 * scale)}
