"""Coefficient-space transforms: classical connections and Chebyshev I/O.

A CoeffVector carries its basis (family, parameters, association order) and
normalization alongside the values, so conversions can check compatibility
and never silently change normalization. Chebyshev analysis/synthesis uses
the second-kind (extrema) grid x_j = cos(pi j / (n-1)) and the type-I DCT.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .banded import UpperBanded
from .dc import SolveOptions, StructuredConnection, solve_gevp
from .errors import BasisMismatchError, DomainError
from .families import OPFamily, log_norm_h, recurrence
from .ladder import assemble_classical_connection

__all__ = [
    "Basis",
    "CoeffVector",
    "classical_connection",
    "convert",
    "chebyshev_points",
    "chebyshev_analyze",
    "chebyshev_synthesize",
    "chebyshev_to_jacobi",
    "jacobi_to_chebyshev",
    "kratio_vector",
]


@dataclass(frozen=True)
class Basis:
    """A named polynomial basis: classical family + association order.

    kind "chebyshev" denotes first-kind Chebyshev T_k normalization (used by
    the fast grid transforms), distinct from the standard Jacobi(-1/2,-1/2)
    normalization; the two are related by a diagonal scaling.
    """

    kind: str
    alpha: float | None = None
    beta: float | None = None
    c: int = 0

    def family(self) -> OPFamily:
        if self.kind == "chebyshev":
            return OPFamily("jacobi", -0.5, -0.5)
        return OPFamily(self.kind, self.alpha, self.beta)

    def label(self) -> str:
        if self.kind == "chebyshev":
            base = "chebyshev-T"
        else:
            base = self.family().label()
        return base if self.c == 0 else f"{base};c={self.c}"


@dataclass
class CoeffVector:
    """Expansion coefficients in a named basis."""

    basis: Basis
    values: np.ndarray
    normalization: str = "standard"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.normalization not in ("standard", "orthonormal"):
            raise DomainError("normalization must be standard or orthonormal")

    @property
    def n(self) -> int:
        return self.values.size

    def to_standard(self) -> "CoeffVector":
        if self.normalization == "standard":
            return self
        scale = _sqrt_norms(self.basis, self.n)
        return CoeffVector(self.basis, self.values / scale, "standard")

    def to_orthonormal(self) -> "CoeffVector":
        if self.normalization == "orthonormal":
            return self
        scale = _sqrt_norms(self.basis, self.n)
        return CoeffVector(self.basis, self.values * scale, "orthonormal")

    def to_dict(self) -> dict:
        b = self.basis
        return {
            "family": b.kind,
            "alpha": b.alpha,
            "beta": b.beta,
            "c": b.c,
            "normalization": self.normalization,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CoeffVector":
        basis = Basis(obj["family"], obj.get("alpha"), obj.get("beta"), obj.get("c", 0))
        return cls(basis, np.asarray(obj["values"], dtype=float), obj["normalization"])


def _sqrt_norms(basis: Basis, n: int) -> np.ndarray:
    if basis.kind == "chebyshev":
        raise DomainError("normalization scaling is defined for classical bases")
    fam = basis.family()
    logs = np.array([log_norm_h(fam, k + basis.c) for k in range(n)])
    return np.exp(0.5 * logs)


def kratio_vector(source: OPFamily, target: OPFamily, n: int) -> np.ndarray:
    """Leading-coefficient ratios k_j(source)/k_j(target) for j < n."""
    out = np.ones(n)
    acc = 0.0
    for j in range(1, n):
        acc += np.log(abs(recurrence(source, 0, j - 1).a)) - np.log(
            abs(recurrence(target, 0, j - 1).a)
        )
        out[j] = np.exp(acc)
    return out


def classical_connection(
    source: OPFamily,
    target: OPFamily,
    n: int,
    opts: SolveOptions | None = None,
) -> StructuredConnection:
    """Structured connection matrix from one classical family to another.

    Both families must be of the same kind (Jacobi<->Jacobi or
    Laguerre<->Laguerre); the pencil is assembled from the source family's
    second-order operator on the target basis. Large parameter differences
    make the problem ill-conditioned (the condition number grows like an
    algebraic power of n of order the parameter difference); a warning is
    attached when the estimate exceeds 1/tolerance.
    """
    import warnings

    opts = opts or SolveOptions()
    if source.kind != target.kind:
        raise DomainError("connection problems must stay within one family kind")
    if source == target:
        conn = StructuredConnection.identity(n)
        conn.meta.update(source=source.label(), target=target.label(), identity=True)
        return conn
    A, B, lam = assemble_classical_connection(source, target, n)
    diag_norm = kratio_vector(source, target, n)
    conn = solve_gevp(
        A, B, diag_norm, opts, lam=lam,
        meta={"source": source.label(), "target": target.label()},
    )
    # conditioning heuristic: kappa ~ O(n^gap) with gap the parameter distance
    if source.kind == "jacobi":
        gap = max(abs(source.alpha - target.alpha), abs(source.beta - target.beta))
    else:
        gap = abs(source.alpha - target.alpha)
    if gap * np.log(max(n, 2)) > np.log(1.0 / max(opts.eps_cauchy, 1e-15)):
        msg = (
            f"connection {source.label()} -> {target.label()} is ill-conditioned: "
            f"kappa grows like O(n^{gap:.3g}) ~ {float(n) ** gap:.2e} at n={n}"
        )
        warnings.warn(msg, stacklevel=2)
        conn.meta["condition_warning"] = msg
    return conn


def convert(coeffs: CoeffVector, V: StructuredConnection, inverse: bool = False) -> CoeffVector:
    """Apply a connection to an expansion: d = V c (or c = V^{-1} d).

    The coefficient basis must match the connection's source (target when
    ``inverse``); normalization is preserved by unscaling to standard around
    the matvec.
    """
    meta = V.meta
    src_label = meta.get("source")
    tgt_label = meta.get("target")
    if inverse:
        src_label, tgt_label = tgt_label, src_label
    if src_label is not None and coeffs.basis.label() != src_label:
        raise BasisMismatchError(
            f"coefficients are in {coeffs.basis.label()!r}; connection expects {src_label!r}"
        )
    std = coeffs.to_standard()
    out_vals = V.solve(std.values) if inverse else V.matvec(std.values)
    out_basis = _basis_from_label(tgt_label) if tgt_label else coeffs.basis
    out = CoeffVector(out_basis, out_vals, "standard")
    if coeffs.normalization == "orthonormal":
        out = out.to_orthonormal()
    return out


def _basis_from_label(label: str) -> Basis:
    """Parse labels of the form produced by OPFamily.label()/Basis.label()."""
    c = 0
    if ";c=" in label:
        label, cpart = label.split(";c=")
        c = int(cpart)
    if label == "hermite":
        return Basis("hermite", c=c)
    if label == "chebyshev-T":
        return Basis("chebyshev", c=c)
    kind, args = label.split("(")
    parts = args.rstrip(")").split(",")
    if kind == "jacobi":
        return Basis("jacobi", float(parts[0]), float(parts[1]), c)
    return Basis("laguerre", float(parts[0]), c=c)


# -- Chebyshev grid transforms ------------------------------------------------


def chebyshev_points(n: int) -> np.ndarray:
    """Second-kind (extrema) points cos(pi j/(n-1)), j = 0..n-1."""
    if n < 2:
        raise DomainError("need n >= 2")
    return np.cos(np.pi * np.arange(n) / (n - 1))


def chebyshev_analyze(samples) -> CoeffVector:
    """Chebyshev-T coefficients from samples on the extrema grid.

    Exact (up to roundoff) for polynomials of degree < n; O(n log n) via the
    type-I DCT.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise DomainError("need at least two samples")
    y = scipy.fft.dct(samples, type=1)
    coeffs = y / (n - 1.0)
    coeffs[0] *= 0.5
    coeffs[-1] *= 0.5
    return CoeffVector(Basis("chebyshev"), coeffs, "standard")


def chebyshev_synthesize(coeffs: CoeffVector, points=None) -> np.ndarray:
    """Values of a Chebyshev-T expansion.

    With ``points=None`` evaluates on the extrema grid through the DCT
    (the exact inverse of chebyshev_analyze); otherwise Clenshaw at the
    given points.
    """
    if coeffs.basis.kind != "chebyshev":
        raise BasisMismatchError("synthesis expects Chebyshev-T coefficients")
    c = coeffs.values
    n = c.size
    if points is None:
        y = scipy.fft.dct(c, type=1)
        return 0.5 * (y + c[0] + np.cos(np.pi * np.arange(n)) * c[-1])
    x = np.asarray(points, dtype=float)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for k in range(n - 1, 0, -1):
        b1, b2 = c[k] + 2.0 * x * b1 - b2, b1
    return c[0] + x * b1 - b2


def chebyshev_to_jacobi(coeffs: CoeffVector) -> CoeffVector:
    """Rescale T-coefficients to the standard Jacobi(-1/2,-1/2) basis."""
    if coeffs.basis.kind != "chebyshev":
        raise BasisMismatchError("expected Chebyshev-T coefficients")
    n = coeffs.n
    vals = coeffs.values / _t_to_jacobi_scale(n)
    return CoeffVector(Basis("jacobi", -0.5, -0.5), vals, coeffs.normalization)


def jacobi_to_chebyshev(coeffs: CoeffVector) -> CoeffVector:
    """Rescale standard Jacobi(-1/2,-1/2) coefficients to Chebyshev-T."""
    b = coeffs.basis
    if not (b.kind == "jacobi" and b.alpha == -0.5 and b.beta == -0.5 and b.c == 0):
        raise BasisMismatchError("expected Jacobi(-1/2,-1/2) coefficients")
    vals = coeffs.values * _t_to_jacobi_scale(coeffs.n)
    return CoeffVector(Basis("chebyshev"), vals, coeffs.normalization)


def _t_to_jacobi_scale(n: int) -> np.ndarray:
    """P_k^(-1/2,-1/2)(1) = C(k - 1/2, k): T_k = P_k / P_k(1)."""
    from scipy.special import gammaln

    k = np.arange(n, dtype=float)
    return np.exp(gammaln(k + 0.5) - gammaln(k + 1.0) - gammaln(0.5))
