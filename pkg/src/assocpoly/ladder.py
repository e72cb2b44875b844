"""Banded ladder operators and operator discretizations.

For each family the four ladder operators are realized as sparse matrices
acting on coefficient columns:

* D: differentiation, mapping into the parameter-raised family,
* M: multiplication by x within a family (tridiagonal),
* R: basis raising (expansion of a family in the raised family),
* L: multiplication by -sigma(x), mapping a raised family back down
     (1 - x^2 for Jacobi, x for Laguerre).

Hermite needs no raising: differentiation and multiplication stay in-family.
Compositions assemble the discretizations of the second-order classical
operator, the order-c quadratic eigenproblem (A, B, C), and the forced
first-association problem (A, B, Gamma, Lambda, Omega); all products are
formed at a padded dimension and truncated so the leading n x n block is
exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P

from .banded import UpperBanded
from .errors import DegeneracyError, DomainError
from .families import OPFamily, classical_eigenvalue, recurrence

__all__ = [
    "LadderOp",
    "QEPDiscretization",
    "ForcedSystem",
    "jacobi_derivative",
    "jacobi_multiplication",
    "jacobi_raise",
    "jacobi_lower",
    "laguerre_ops",
    "hermite_ops",
    "poly_of_M",
    "multiplication_op",
    "derivative_chain",
    "raise_chain",
    "lower_step",
    "assemble_qep",
    "assemble_forced",
    "assemble_classical_connection",
]

_PAD = 8  # 2 x the largest assembled bandwidth; keeps truncated products exact


@dataclass(frozen=True)
class LadderOp:
    """A ladder operator with its parameter bookkeeping.

    ``source`` and ``target`` are parameter tags (tuples); composing two
    operators requires the left factor's source to equal the right factor's
    target.
    """

    kind: str  # "D" | "M" | "R" | "L"
    source: tuple
    target: tuple
    matrix: sp.csr_matrix

    def compose(self, other: "LadderOp") -> "LadderOp":
        if self.source != other.target:
            raise DomainError(
                f"cannot compose {self.kind}{self.source} with {other.kind}{other.target}"
            )
        return LadderOp(
            self.kind + other.kind,
            other.source,
            self.target,
            (self.matrix @ other.matrix).tocsr(),
        )


def _sp_diags(diagonals, offsets, m):
    return sp.diags(diagonals, offsets, shape=(m, m), format="csr")


# -- Jacobi ----------------------------------------------------------------


def jacobi_derivative(alpha: float, beta: float, n: int) -> LadderOp:
    """d/dx: P^(a,b) -> P^(a+1,b+1); superdiagonal (g+1)/2, (g+2)/2, ...

    with g = a + b + 1.
    """
    if n < 2:
        raise DomainError("need n >= 2")
    g = alpha + beta + 1.0
    k = np.arange(n - 1, dtype=float)
    return LadderOp(
        "D",
        (alpha, beta),
        (alpha + 1, beta + 1),
        _sp_diags([(g + 1.0 + k) / 2.0], [1], n),
    )


def jacobi_multiplication(alpha: float, beta: float, n: int) -> LadderOp:
    """Multiplication by x on P^(a,b): tridiagonal from the recurrence."""
    if n < 2:
        raise DomainError("need n >= 2")
    fam = OPFamily("jacobi", alpha, beta)
    return LadderOp("M", (alpha, beta), (alpha, beta), _recurrence_mult(fam, n))


def jacobi_raise(alpha: float, beta: float, n: int) -> LadderOp:
    """Expansion of P^(a,b) in P^(a+1,b+1); upper with bandwidth 2."""
    if n < 2:
        raise DomainError("need n >= 2")
    g = alpha + beta + 1.0
    j = np.arange(n, dtype=float)
    d0 = np.empty(n)
    d0[0] = 1.0
    jj = j[1:]
    d0[1:] = (g + jj) * (g + jj + 1.0) / ((g + 2.0 * jj) * (g + 2.0 * jj + 1.0))
    j1 = j[: n - 1]
    d1 = (alpha - beta) * (g + j1 + 1.0) / ((g + 2.0 * j1 + 1.0) * (g + 2.0 * j1 + 3.0))
    j2 = j[: n - 2]
    d2 = -(alpha + j2 + 2.0) * (beta + j2 + 2.0) / (
        (g + 2.0 * j2 + 3.0) * (g + 2.0 * j2 + 4.0)
    )
    return LadderOp(
        "R", (alpha, beta), (alpha + 1, beta + 1), _sp_diags([d0, d1, d2], [0, 1, 2], n)
    )


def jacobi_lower(alpha: float, beta: float, n: int) -> LadderOp:
    """Multiplication by (1-x^2): P^(a+1,b+1) -> P^(a,b); lower bandwidth 2.

    The parameters name the *lower* family, matching the closed forms.
    """
    if n < 2:
        raise DomainError("need n >= 2")
    g = alpha + beta + 1.0
    j = np.arange(n, dtype=float)
    d0 = 4.0 * (alpha + j + 1.0) * (beta + j + 1.0) / (
        (g + 2.0 * j + 1.0) * (g + 2.0 * j + 2.0)
    )
    j1 = j[: n - 1]
    dm1 = 4.0 * (j1 + 1.0) * (alpha - beta) / ((g + 2.0 * j1 + 1.0) * (g + 2.0 * j1 + 3.0))
    j2 = j[: n - 2]
    dm2 = -4.0 * (j2 + 1.0) * (j2 + 2.0) / ((g + 2.0 * j2 + 2.0) * (g + 2.0 * j2 + 3.0))
    return LadderOp(
        "L",
        (alpha + 1, beta + 1),
        (alpha, beta),
        _sp_diags([d0, dm1, dm2], [0, -1, -2], n),
    )


# -- Laguerre ---------------------------------------------------------------


def laguerre_ops(alpha: float, n: int) -> dict[str, LadderOp]:
    """The four Laguerre ladder operators {D, M, R, L} at size n."""
    if n < 2:
        raise DomainError("need n >= 2")
    k = np.arange(n - 1, dtype=float)
    D = LadderOp(
        "D", (alpha,), (alpha + 1,), _sp_diags([-np.ones(n - 1)], [1], n)
    )
    M = LadderOp("M", (alpha,), (alpha,), _recurrence_mult(OPFamily("laguerre", alpha), n))
    R = LadderOp(
        "R", (alpha,), (alpha + 1,), _sp_diags([np.ones(n), -np.ones(n - 1)], [0, 1], n)
    )
    j = np.arange(n, dtype=float)
    L = LadderOp(
        "L", (alpha + 1,), (alpha,), _sp_diags([alpha + j + 1.0, -(k + 1.0)], [0, -1], n)
    )
    return {"D": D, "M": M, "R": R, "L": L}


# -- Hermite ----------------------------------------------------------------


def hermite_ops(n: int) -> dict[str, LadderOp]:
    """Hermite {D, M}: both stay in-family (no parameter to raise)."""
    if n < 2:
        raise DomainError("need n >= 2")
    k = np.arange(n - 1, dtype=float)
    D = LadderOp("D", (), (), _sp_diags([2.0 * (k + 1.0)], [1], n))
    M = LadderOp("M", (), (), _recurrence_mult(OPFamily("hermite"), n))
    return {"D": D, "M": M}


def _recurrence_mult(fam: OPFamily, n: int) -> sp.csr_matrix:
    """x p_k = (1/A_k) p_{k+1} - (B_k/A_k) p_k + (C_k/A_k) p_{k-1}."""
    sub = np.empty(n - 1)
    diag = np.empty(n)
    sup = np.empty(n - 1)
    for k in range(n):
        a, b, c = recurrence(fam, 0, k)
        diag[k] = -b / a
        if k < n - 1:
            sub[k] = 1.0 / a
        if 1 <= k:
            sup[k - 1] = c / a
    return _sp_diags([diag, sub, sup], [0, -1, 1], n)


def poly_of_M(poly, M: LadderOp) -> sp.csr_matrix:
    """Evaluate a degree <= 2 polynomial (ascending coeffs) at M by Horner."""
    coeffs = np.atleast_1d(np.asarray(poly, dtype=float))
    if coeffs.size > 3:
        raise DomainError("polynomial degree must be <= 2")
    m = M.matrix.shape[0]
    out = sp.identity(m, format="csr") * coeffs[-1]
    for ck in coeffs[-2::-1]:
        out = (out @ M.matrix + ck * sp.identity(m, format="csr")).tocsr()
    return out


# -- family-uniform ladder kit ----------------------------------------------


def multiplication_op(family: OPFamily, level: int, m: int) -> LadderOp:
    """M for the family with parameters raised by ``level``."""
    f = family.shifted(level)
    if family.kind == "jacobi":
        return jacobi_multiplication(f.alpha, f.beta, m)
    if family.kind == "laguerre":
        return laguerre_ops(f.alpha, m)["M"]
    return hermite_ops(m)["M"]


def _derivative_step(family: OPFamily, level: int, m: int) -> LadderOp:
    f = family.shifted(level)
    if family.kind == "jacobi":
        return jacobi_derivative(f.alpha, f.beta, m)
    if family.kind == "laguerre":
        return laguerre_ops(f.alpha, m)["D"]
    return hermite_ops(m)["D"]


def _raise_step(family: OPFamily, level: int, m: int) -> LadderOp:
    f = family.shifted(level)
    if family.kind == "jacobi":
        return jacobi_raise(f.alpha, f.beta, m)
    if family.kind == "laguerre":
        return laguerre_ops(f.alpha, m)["R"]
    return LadderOp("R", (), (), sp.identity(m, format="csr"))


def lower_step(family: OPFamily, level: int, m: int) -> LadderOp:
    """Multiplication by -sigma(x), mapping level -> level - 1."""
    f = family.shifted(level - 1)
    if family.kind == "jacobi":
        return jacobi_lower(f.alpha, f.beta, m)
    if family.kind == "laguerre":
        return laguerre_ops(f.alpha, m)["L"]
    raise DomainError("Hermite has no lowering operator")


def derivative_chain(family: OPFamily, order: int, m: int) -> sp.csr_matrix:
    """D^order mapping the base family into the level-``order`` family."""
    out = sp.identity(m, format="csr")
    for lv in range(order):
        out = (_derivative_step(family, lv, m).matrix @ out).tocsr()
    return out


def raise_chain(family: OPFamily, frm: int, to: int, m: int) -> sp.csr_matrix:
    """R mapping level ``frm`` up to level ``to``."""
    out = sp.identity(m, format="csr")
    for lv in range(frm, to):
        out = (_raise_step(family, lv, m).matrix @ out).tocsr()
    return out


def lower_chain(family: OPFamily, frm: int, to: int, m: int) -> sp.csr_matrix:
    """(-sigma)^(frm-to) mapping level ``frm`` down to level ``to``."""
    out = sp.identity(m, format="csr")
    for lv in range(frm, to, -1):
        out = (lower_step(family, lv, m).matrix @ out).tocsr()
    return out


# -- polynomial coefficient helpers (ascending order) ------------------------


def _sigma_tau_polys(family: OPFamily):
    sig = np.array(family.sigma_coeffs())
    tau = np.array(family.tau_coeffs())
    sig_d = P.polyder(sig)
    sdd = family.sigma_dd
    td = family.tau_d
    return sig, tau, sig_d, sdd, td


def _trim(c):
    return P.polytrim(c, tol=0.0)


# -- assemblies --------------------------------------------------------------


@dataclass
class QEPDiscretization:
    """Upper-triangular banded (A, B, C) of the order-c quadratic problem."""

    A: UpperBanded
    B: UpperBanded
    C: UpperBanded
    family: OPFamily
    c: int
    n: int


def _truncate_to_banded(S: sp.spmatrix, n: int) -> UpperBanded:
    T = S.tocsr()[:n, :n].tocoo()
    keep = np.abs(T.data) > 0
    lower = (T.col - T.row < 0) & keep
    if np.any(np.abs(T.data[lower]) > 1e-12 * max(1.0, np.abs(T.data).max())):
        raise AssertionError("assembled operator is not upper-triangular")
    offs = T.col - T.row
    mask = (offs >= 0) & keep
    b = int(offs[mask].max(initial=0))
    out = UpperBanded(n, max(b, 0))
    out.data[T.row[mask], offs[mask]] = T.data[mask]
    return out


def assemble_qep(family: OPFamily, c: int, n: int) -> QEPDiscretization:
    """Discretize the order-c quadratic eigenproblem on the shifted basis.

    Everything is expanded in the level-2 (parameters + 2) basis; Hermite
    stays in-family. Requires c >= 1 and rejects the degenerate Jacobi line
    c = 1, alpha + beta = -1 where the two eigenvalue ladders coincide.
    """
    if c < 1:
        raise DomainError("association order must be >= 1")
    if n < 8:
        raise DomainError("need n >= 8")
    if (
        family.kind == "jacobi"
        and c == 1
        and abs(family.alpha + family.beta + 1.0) <= 1e-12
    ):
        raise DegeneracyError(
            "c = 1 with alpha + beta = -1 degenerates the coupled problem; "
            "use the forced first-association solver"
        )
    m = n + _PAD
    sig, tau, sig_d, sdd, td = _sigma_tau_polys(family)
    lam = classical_eigenvalue(family, c - 1)

    # bracket polynomials of the quadratic pencil
    pi2 = _trim(
        P.polyadd(
            P.polyadd(P.polymul(tau, tau), 2.0 * td * sig),
            P.polyadd(
                P.polyadd(-2.0 * P.polymul(tau, sig_d), (-6.0 * sdd + 4.0 * lam) * sig),
                -3.0 * P.polymul(sig_d, sig_d),
            ),
        )
    )
    pi1 = _trim(
        P.polyadd(P.polyadd(td * tau, 2.0 * lam * sig_d), -sdd * P.polyadd(tau, sig_d))
    )
    pi0 = 2.0 * lam * sdd - td * (sdd - td)

    M2 = multiplication_op(family, 2, m)
    D1 = derivative_chain(family, 1, m)
    D2 = derivative_chain(family, 2, m)
    D3 = derivative_chain(family, 3, m)
    D4 = derivative_chain(family, 4, m)
    R02 = raise_chain(family, 0, 2, m)
    R12 = raise_chain(family, 1, 2, m)

    if family.kind == "hermite":
        A = (-D4 + poly_of_M(pi2, M2) @ D2 + 3.0 * poly_of_M(pi1, M2) @ D1).tocsr()
        A = A + pi0 * sp.identity(m, format="csr")
        B = (2.0 * poly_of_M(sig, M2) @ D2).tocsr()
        C = sp.identity(m, format="csr")
    else:
        L42 = lower_chain(family, 4, 2, m)
        L32 = lower_chain(family, 3, 2, m)
        A = (
            -(L42 @ D4)
            + 5.0 * poly_of_M(sig_d, M2) @ (L32 @ D3)
            + poly_of_M(pi2, M2) @ D2
            + 3.0 * poly_of_M(pi1, M2) @ (R12 @ D1)
            + pi0 * R02
        ).tocsr()
        B = (
            2.0 * poly_of_M(sig, M2) @ D2
            + 3.0 * poly_of_M(sig_d, M2) @ (R12 @ D1)
            + sdd * R02
        ).tocsr()
        C = R02
    return QEPDiscretization(
        _truncate_to_banded(A, n),
        _truncate_to_banded(B, n),
        _truncate_to_banded(C, n),
        family,
        c,
        n,
    )


@dataclass
class ForcedSystem:
    """The forced problem A V = B V Lambda + Gamma at association order 1.

    A and B are expansions in the once-raised basis; gamma, lam and omega are
    the diagonals of the forcing, eigenvalue and adjoint-spectrum matrices.
    """

    A: UpperBanded
    B: UpperBanded
    gamma: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    family: OPFamily
    n: int

    @property
    def is_homogeneous(self) -> bool:
        scale = max(1.0, float(np.abs(self.A.data).max()))
        return bool(np.all(np.abs(self.gamma) <= 1e-12 * scale))


def assemble_forced(family: OPFamily, n: int) -> ForcedSystem:
    """Discretize the inhomogeneous first-association equation.

    The adjoint-form operator sigma D^2 + (2 sigma' - tau) D + (sigma'' - tau')
    and the identity are expanded in the once-raised basis; the forcing is
    diagonal there with Gamma_k = (sigma'' - 2 tau')/A_0 times the derivative
    scaling of p_{k+1}.
    """
    if n < 4:
        raise DomainError("need n >= 4")
    m = n + _PAD
    sig, tau, sig_d, sdd, td = _sigma_tau_polys(family)
    poly1 = _trim(P.polyadd(2.0 * sig_d, -tau))  # 2 sigma' - tau
    c0 = sdd - td  # sigma'' - tau'

    M1 = multiplication_op(family, 1, m)
    D1 = derivative_chain(family, 1, m)
    D2 = derivative_chain(family, 2, m)
    R01 = raise_chain(family, 0, 1, m)

    if family.kind == "hermite":
        A = (poly_of_M(sig, M1) @ D2 + poly_of_M(poly1, M1) @ D1).tocsr()
        A = A + c0 * sp.identity(m, format="csr")
        B = sp.identity(m, format="csr")
    else:
        L21 = lower_chain(family, 2, 1, m)
        A = (
            -(L21 @ D2) + poly_of_M(poly1, M1) @ D1 + c0 * R01
        ).tocsr()
        B = R01

    k = np.arange(n, dtype=float)
    a0 = recurrence(family, 0, 0).a
    if family.kind == "jacobi":
        g = family.alpha + family.beta + 1.0
        dscale = (g + 1.0 + k) / 2.0  # coefficient of D p_{k+1} in the raised basis
    elif family.kind == "laguerre":
        dscale = -np.ones(n)
    else:
        dscale = 2.0 * (k + 1.0)
    gamma = (sdd - 2.0 * td) / a0 * dscale
    lam = np.array([classical_eigenvalue(family, int(j) + 1) for j in range(n)])
    omega = 0.5 * (k + 1.0) * ((k + 2.0) * sdd - 2.0 * td)
    return ForcedSystem(
        _truncate_to_banded(A, n), _truncate_to_banded(B, n), gamma, lam, omega, family, n
    )


def assemble_classical_connection(
    source: OPFamily, target: OPFamily, n: int
) -> tuple[UpperBanded, UpperBanded, np.ndarray]:
    """Pencil (A, B) whose generalized eigenvectors connect source to target.

    The source family's second-order operator is discretized on the target
    basis, expanded in the once-raised target basis: A V = B V Lambda with
    Lambda the source eigenvalues. Families must be of the same kind.
    """
    if source.kind != target.kind:
        raise DomainError("connection problems must stay within one family kind")
    if n < 4:
        raise DomainError("need n >= 4")
    m = n + _PAD
    tau_src = np.array(source.tau_coeffs())
    M1 = multiplication_op(target, 1, m)
    D1 = derivative_chain(target, 1, m)
    D2 = derivative_chain(target, 2, m)
    R01 = raise_chain(target, 0, 1, m)
    if target.kind == "hermite":
        sig = np.array(target.sigma_coeffs())
        A = (poly_of_M(sig, M1) @ D2 + poly_of_M(tau_src, M1) @ D1).tocsr()
        B = sp.identity(m, format="csr")
    else:
        L21 = lower_chain(target, 2, 1, m)
        A = (-(L21 @ D2) + poly_of_M(tau_src, M1) @ D1).tocsr()
        B = R01
    lam = np.array([classical_eigenvalue(source, int(j)) for j in range(n)])
    return _truncate_to_banded(A, n), _truncate_to_banded(B, n), lam
