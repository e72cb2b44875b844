"""End-to-end associated -> classical connection solvers.

The order-c quadratic eigenvalue problem A V + B V L = C V L^2 is linearized
into a 2x2-block pencil

    [[A, B], [0, I]] [[V-, V+], [W-, W+]] = [[0, C], [I, 0]] [V W] blockdiag(L-, L+)

with W = V L. A perfect shuffle turns both pencil matrices into scalar
banded matrices built from 2x2 cells; solving the n diagonal 2x2 problems
yields a chain of Givens rotations Q_V with bold-V = Q_V R_V upper
triangular, a second chain Q_B from the QR of (shuffled B) Q_V, and an
upper-triangular banded pencil (Q_B^T bold-A Q_V) R_V = R_B R_V bold-L
solved by the divide-and-conquer engine. The positive-family connection V+
sits in the even-row / odd-column entries of Q_V R_V.

Order c = 1 additionally admits the dedicated forced-pencil route
A V = B V Lambda + Gamma (better conditioned), and the degenerate Jacobi
line alpha + beta = -1 reduces to a plain pencil because the forcing
vanishes there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .banded import GivensChain, ShufflePerm, UpperBanded, block_qr_2x2, perfect_shuffle
from .dc import (
    EigenDiag,
    SolveOptions,
    StructuredConnection,
    solve_forced_gevp,
    solve_gevp,
)
from .errors import ConfigurationError, DegeneracyError, DomainError
from .families import (
    OPFamily,
    QuadSpectrum,
    leading_coeff_ratios,
    log_norm_h,
)
from .ladder import QEPDiscretization, assemble_forced, assemble_qep

__all__ = [
    "LinearizedPencil",
    "AssocConnection",
    "AssociatedConnection",
    "linearize",
    "triangularize",
    "solve_associated",
    "solve_coupled",
    "solve_direct_plus",
    "solve_first_association",
    "degenerate_connection",
    "kronecker_factor_identity_check",
    "spectral_gap_predicate",
]


@dataclass
class LinearizedPencil:
    """Shuffled 2x2-cell form of the linearized quadratic problem.

    cells_a[d][i] and cells_b[d][i] hold the 2x2 cell at block row i,
    block column i + d; the scalar matrices have one subdiagonal and upper
    bandwidth 2 b + 1, so they are stored cellwise rather than as
    UpperBanded. ``lam`` is the interleaved spectrum
    (lam_0^-, lam_0^+, lam_1^-, ...).
    """

    n: int
    b: int
    cells_a: list[np.ndarray]
    cells_b: list[np.ndarray]
    lam: np.ndarray
    shuffle: ShufflePerm
    family: OPFamily
    c: int
    col_scale: np.ndarray | None = None  # per-block column scaling (orthonormal mode)

    def dense_shuffled(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense shuffled (bold A, bold B) for tests and small problems."""
        N = 2 * self.n
        Ad = np.zeros((N, N))
        Bd = np.zeros((N, N))
        for d in range(self.b + 1):
            for i in range(self.n - d):
                j = i + d
                Ad[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = self.cells_a[d][i]
                Bd[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = self.cells_b[d][i]
        return Ad, Bd


def linearize(disc: QEPDiscretization, col_scale: np.ndarray | None = None) -> LinearizedPencil:
    """Build the shuffled cell pencil from an assembled (A, B, C).

    ``col_scale`` scales block column j of both pencil matrices by
    1/col_scale[j] (used by the orthonormal normalization).
    """
    n = disc.n
    b = max(disc.A.b, disc.B.b, disc.C.b)
    spec = QuadSpectrum(disc.family, disc.c)
    lam = spec.interleaved(n)
    cells_a = []
    cells_b = []
    for d in range(b + 1):
        m = n - d
        ca = np.zeros((m, 2, 2))
        cb = np.zeros((m, 2, 2))
        ca[:, 0, 0] = disc.A.data[:m, d] if d <= disc.A.b else 0.0
        ca[:, 0, 1] = disc.B.data[:m, d] if d <= disc.B.b else 0.0
        cb[:, 0, 1] = disc.C.data[:m, d] if d <= disc.C.b else 0.0
        if d == 0:
            ca[:, 1, 1] = 1.0
            cb[:, 1, 0] = 1.0
        if col_scale is not None:
            ca /= col_scale[d:, None, None]
            cb /= col_scale[d:, None, None]
        cells_a.append(ca)
        cells_b.append(cb)
    return LinearizedPencil(
        n, b, cells_a, cells_b, lam, perfect_shuffle(n), disc.family, disc.c, col_scale
    )


def _cells_to_banded(cells: list[np.ndarray], n: int, drop_tol: float) -> UpperBanded:
    """Flatten 2x2 cells into an UpperBanded matrix of dimension 2n.

    The cell subdiagonal (entry (1,0) of diagonal cells) must be below
    drop_tol in magnitude; it is zeroed exactly.
    """
    b_cells = len(cells) - 1
    bw = 2 * b_cells + 1
    out = UpperBanded(2 * n, bw)
    scale = max(1.0, max(float(np.abs(c).max(initial=0.0)) for c in cells))
    sub = float(np.abs(cells[0][:, 1, 0]).max(initial=0.0))
    if sub > drop_tol * scale:
        raise AssertionError(
            f"triangularized pencil has subdiagonal residue {sub:.2e} > tol"
        )
    for d in range(b_cells + 1):
        m = n - d
        cell = cells[d]
        # scalar positions: (2i + r, 2(i+d) + s) -> row 2i + r, offset 2d + s - r
        for r in (0, 1):
            for s in (0, 1):
                off = 2 * d + s - r
                if off < 0:
                    continue
                rows = 2 * np.arange(m) + r
                out.data[rows, off] = cell[:, r, s]
    return out


def triangularize(
    pencil: LinearizedPencil, cond_limit: float = 1e12
) -> tuple[UpperBanded, UpperBanded, GivensChain, GivensChain]:
    """Upper-triangularize the shuffled pencil with two Givens chains.

    Solves the n diagonal 2x2 generalized problems (eigenvectors (1, lam^-),
    (1, lam^+)), forms Q_V, takes the QR of (bold B) Q_V to get Q_B and R_B,
    and returns (T_A, R_B, Q_V, Q_B) where T_A = Q_B^T (bold A) Q_V.
    """
    n, b = pencil.n, pencil.b
    lam_m = pencil.lam[0::2]
    lam_p = pencil.lam[1::2]
    vblocks = np.empty((n, 2, 2))
    vblocks[:, 0, 0] = 1.0
    vblocks[:, 0, 1] = 1.0
    vblocks[:, 1, 0] = lam_m
    vblocks[:, 1, 1] = lam_p
    qv = block_qr_2x2(vblocks, cond_limit=cond_limit)

    def rot_right(cells_d, d):
        # cell (i, i+d) @ G_{i+d}
        c = qv.cos[d:, None]
        s = qv.sin[d:, None]
        out = np.empty_like(cells_d)
        out[:, :, 0] = cells_d[:, :, 0] * c + cells_d[:, :, 1] * s
        out[:, :, 1] = -cells_d[:, :, 0] * s + cells_d[:, :, 1] * c
        return out

    bq = [rot_right(pencil.cells_b[d], d) for d in range(b + 1)]
    aq = [rot_right(pencil.cells_a[d], d) for d in range(b + 1)]
    # Q_B zeroes the (1,0) entry of the diagonal cells of (bold B) Q_V
    qb = block_qr_2x2(bq[0], cond_limit=cond_limit)

    def rot_left(cells_d):
        # G_i^T @ cell (i, i+d)
        m = cells_d.shape[0]
        c = qb.cos[:m, None]
        s = qb.sin[:m, None]
        out = np.empty_like(cells_d)
        out[:, 0, :] = cells_d[:, 0, :] * c + cells_d[:, 1, :] * s
        out[:, 1, :] = -cells_d[:, 0, :] * s + cells_d[:, 1, :] * c
        return out

    rb_cells = [rot_left(bq[d]) for d in range(b + 1)]
    ta_cells = [rot_left(aq[d]) for d in range(b + 1)]
    scale_a = max(float(np.abs(c).max(initial=0.0)) for c in ta_cells)
    T_A = _cells_to_banded(ta_cells, n, drop_tol=1e-12)
    R_B = _cells_to_banded(rb_cells, n, drop_tol=1e-12)
    return T_A, R_B, qv, qb


class AssocConnection:
    """Structured connection from an associated family to its classical one.

    Wraps the triangularized coupled solve: everything derives from
    bold-V = Q_V R_V (in the chosen normalization scaling); the
    positive-family block V+ is addressed by fast matvec or reconstructed
    densely for moderate n.
    """

    def __init__(self, family, c, n, qv, rv, lam, row_scale, col_scale, meta):
        self.family = family
        self.c = c
        self.n = n
        self.qv = qv
        self.rv = rv  # StructuredConnection of dimension 2n
        self.lam = lam
        self.row_scale = row_scale  # None in standard normalization
        self.col_scale = col_scale
        self.meta = dict(meta)

    def _qv_apply(self, w):
        out = np.empty_like(w)
        a = w[0::2]
        bv = w[1::2]
        out[0::2] = self.qv.cos * a - self.qv.sin * bv
        out[1::2] = self.qv.sin * a + self.qv.cos * bv
        return out

    def vplus_matvec(self, coeffs: np.ndarray) -> np.ndarray:
        """y = V+ @ coeffs: associated coefficients to classical ones."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.n:
            raise DomainError("dimension mismatch")
        z = coeffs * self.col_scale if self.col_scale is not None else coeffs
        u = np.zeros(2 * self.n)
        u[1::2] = z
        w = self._qv_apply(self.rv.matvec(u))
        y = w[0::2]
        if self.row_scale is not None:
            y = y / self.row_scale
        return y

    def coupled_dense(self) -> np.ndarray:
        """Dense bold-V (shuffled, in the solve's own scaling)."""
        R = self.rv.todense()
        a = R[0::2, :]
        bv = R[1::2, :]
        out = np.empty_like(R)
        out[0::2, :] = self.qv.cos[:, None] * a - self.qv.sin[:, None] * bv
        out[1::2, :] = self.qv.sin[:, None] * a + self.qv.cos[:, None] * bv
        return out

    def blocks_dense(self) -> dict[str, np.ndarray]:
        """Dense V-, V+, W-, W+ in standard normalization."""
        V = self.coupled_dense()
        blocks = {
            "V-": V[0::2, 0::2].copy(),
            "V+": V[0::2, 1::2].copy(),
            "W-": V[1::2, 0::2].copy(),
            "W+": V[1::2, 1::2].copy(),
        }
        if self.row_scale is not None:
            for k in blocks:
                blocks[k] = blocks[k] / self.row_scale[:, None] * self.col_scale[None, :]
        return blocks

    def vplus_dense(self) -> np.ndarray:
        return self.blocks_dense()["V+"]

    def coupled_condition_estimate(self) -> float:
        """kappa_2 bound of the coupled eigenvector matrix (= that of R_V)."""
        return self.rv.condition_estimate()

    def condition_estimate(self) -> float:
        return self.coupled_condition_estimate()


def _sqrt_h_scales(family: OPFamily, c: int, n: int):
    """(row, col) scaling vectors sqrt(h_l), sqrt(h_{m+c}); None on overflow."""
    logs_row = np.array([log_norm_h(family, k) for k in range(n)])
    logs_col = np.array([log_norm_h(family, k + c) for k in range(n)])
    if max(np.abs(logs_row).max(), np.abs(logs_col).max()) > 1400.0:
        return None
    return np.exp(0.5 * logs_row), np.exp(0.5 * logs_col)


def solve_coupled(
    family: OPFamily,
    c: int,
    n: int,
    opts: SolveOptions | None = None,
    normalization: str = "auto",
) -> AssocConnection:
    """Coupled-linearization solve of the order-c connection problem.

    normalization: "standard" solves in standard scaling; "orthonormal"
    conjugates by sqrt(h) diagonal scalings (often better conditioned);
    "auto" picks orthonormal for Jacobi with |alpha|, |beta| <= 2 and
    standard otherwise.
    """
    opts = opts or SolveOptions()
    if c < 1:
        raise DomainError("association order must be >= 1")
    disc = assemble_qep(family, c, n)
    if normalization == "auto":
        use_ortho = (
            family.kind == "jacobi"
            and abs(family.alpha) <= 2.0
            and abs(family.beta) <= 2.0
        )
    elif normalization == "orthonormal":
        use_ortho = True
    elif normalization == "standard":
        use_ortho = False
    else:
        raise DomainError(f"unknown normalization {normalization!r}")

    row_scale = col_scale = None
    if use_ortho:
        scales = _sqrt_h_scales(family, c, n)
        if scales is None:
            warnings.warn(
                "orthonormal scaling overflows for this family/size; "
                "falling back to standard normalization",
                stacklevel=2,
            )
            use_ortho = False
        else:
            row_scale, col_scale = scales

    pencil = linearize(disc, col_scale=row_scale)
    T_A, R_B, qv, qb = triangularize(pencil)

    spec = QuadSpectrum(family, c)
    lam2n = spec.interleaved(n)
    lam_m, lam_p = lam2n[0::2], lam2n[1::2]
    ratios = leading_coeff_ratios(family, c, n)
    vplus = vminus = ratios
    if use_ortho:
        scale = row_scale / col_scale
        vplus = ratios * scale
        vminus = ratios * scale
    h1 = np.hypot(1.0, lam_m)
    diag_norm = np.empty(2 * n)
    diag_norm[0::2] = vminus * h1
    diag_norm[1::2] = vplus * (lam_p - lam_m) / h1

    rv = solve_gevp(T_A, R_B, diag_norm, opts, lam=lam2n)
    meta = {
        "family": family.label(),
        "c": c,
        "n": n,
        "normalization": "orthonormal" if use_ortho else "standard",
        "collisions_refined": rv.collision_count,
        "path": "coupled",
    }
    return AssocConnection(
        family, c, n, qv, rv, lam2n, row_scale if use_ortho else None,
        col_scale if use_ortho else None, meta,
    )


def solve_direct_plus(family: OPFamily, c: int, n: int) -> np.ndarray:
    """Positive-ladder connection by banded column back-substitution.

    Each column m solves (A + lam_m^+ B - (lam_m^+)^2 C) v = 0 directly on
    the assembled quadratic pencil in O(n b) per column. Positive-ladder
    diagonals never collide with earlier rows, so the solve is
    unconditionally well posed. O(n^2 b) total but free of the coupled
    problem's conditioning; the workhorse for Laguerre and Hermite.
    """
    disc = assemble_qep(family, c, n)
    spec = QuadSpectrum(family, c)
    ratios = leading_coeff_ratios(family, c, n)
    b = max(disc.A.b, disc.B.b, disc.C.b)
    band = np.zeros((n, b + 1))
    for d in range(disc.A.b + 1):
        band[: n - d, d] += disc.A.data[: n - d, d]
    V = np.zeros((n, n))
    lams = spec.interleaved(n)[1::2]
    for m in range(n):
        lam = lams[m]
        T = band.copy()
        for d in range(disc.B.b + 1):
            T[: n - d, d] += lam * disc.B.data[: n - d, d]
        for d in range(disc.C.b + 1):
            T[: n - d, d] -= lam * lam * disc.C.data[: n - d, d]
        V[m, m] = ratios[m]
        for i in range(m - 1, -1, -1):
            hi = min(i + b, m)
            acc = -(T[i, 1 : hi - i + 1] @ V[i + 1 : hi + 1, m])
            V[i, m] = acc / T[i, 0]
    return V


class AssociatedConnection:
    """Uniform facade over the associated -> classical solver paths.

    ``matvec`` maps associated-expansion coefficients to classical ones
    (the positive-family connection V+); ``solve`` inverts it where the
    underlying path supports inversion (forced, degenerate and direct
    paths; the coupled path only extracts V+ and cannot invert it).
    """

    def __init__(self, impl, path: str, family, c, n, meta):
        self.impl = impl
        self.path = path
        self.family = family
        self.c = c
        self.n = n
        self.meta = dict(meta)

    def matvec(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if self.path == "coupled":
            return self.impl.vplus_matvec(coeffs)
        if self.path == "direct":
            return self.impl @ coeffs
        return self.impl.matvec(coeffs)

    def solve(self, d):
        d = np.asarray(d, dtype=float)
        if self.path == "coupled":
            raise ConfigurationError(
                "the coupled path extracts V+ without a structured inverse; "
                "use the forced/degenerate/direct paths for solves"
            )
        if self.path == "direct":
            from scipy.linalg import solve_triangular

            return solve_triangular(self.impl, d, lower=False)
        return self.impl.solve(d)

    def tmatvec(self, d):
        d = np.asarray(d, dtype=float)
        if self.path == "coupled":
            raise ConfigurationError("transpose action unavailable on the coupled path")
        if self.path == "direct":
            return self.impl.T @ d
        return self.impl.tmatvec(d)

    def tsolve(self, d):
        d = np.asarray(d, dtype=float)
        if self.path == "coupled":
            raise ConfigurationError("transpose solve unavailable on the coupled path")
        if self.path == "direct":
            from scipy.linalg import solve_triangular

            return solve_triangular(self.impl, d, lower=False, trans="T")
        return self.impl.tsolve(d)

    def todense(self):
        if self.path == "coupled":
            return self.impl.vplus_dense()
        if self.path == "direct":
            return self.impl.copy()
        return self.impl.todense()

    def condition_estimate(self):
        if self.path == "coupled":
            return self.impl.coupled_condition_estimate()
        if self.path == "direct":
            return float(np.linalg.cond(self.impl))
        return self.impl.condition_estimate()

    def to_dict(self):
        out = {"path": self.path, "n": self.n, "meta": self.meta}
        if self.path == "coupled":
            out["qv"] = [self.impl.qv.cos.tolist(), self.impl.qv.sin.tolist()]
            out["rv"] = self.impl.rv.to_dict()
            out["row_scale"] = (
                None if self.impl.row_scale is None else self.impl.row_scale.tolist()
            )
            out["col_scale"] = (
                None if self.impl.col_scale is None else self.impl.col_scale.tolist()
            )
        elif self.path == "direct":
            out["dense"] = self.impl.tolist()
        else:
            out["tree"] = self.impl.to_dict()
        return out


def solve_associated(
    family: OPFamily,
    c: int,
    n: int,
    opts: SolveOptions | None = None,
    normalization: str = "auto",
    path: str = "auto",
) -> AssociatedConnection:
    """Associated -> classical connection with automatic path selection.

    Paths: "forced" (order 1, divide-and-conquer on the inhomogeneous
    pencil), "degenerate" (order 1 on the Jacobi line alpha + beta = -1),
    "coupled" (linearized quadratic pencil, divide-and-conquer), "direct"
    (positive-ladder column back-substitution, O(n^2 b)). "auto" picks:
    Jacobi order 1 -> forced (or degenerate on the line), higher Jacobi
    orders -> coupled, Laguerre/Hermite -> direct, since their coupled
    problems are catastrophically conditioned.
    """
    if c < 1:
        raise DomainError("association order must be >= 1")
    opts = opts or SolveOptions()
    if path == "auto":
        if family.kind == "jacobi":
            if c == 1 and abs(family.alpha + family.beta + 1.0) <= 1e-12:
                path = "degenerate"
            elif c == 1:
                path = "forced"
            else:
                path = "coupled"
        else:
            path = "direct"
    meta = {"family": family.label(), "c": c, "n": n}
    if path == "forced":
        if c != 1:
            raise DomainError("the forced path applies to association order 1 only")
        impl = solve_first_association(family, n, opts)
        meta.update(impl.meta)
        if impl.meta.get("path") == "degenerate":
            path = "degenerate"
    elif path == "degenerate":
        if c != 1 or family.kind != "jacobi":
            raise DomainError("the degenerate path is the Jacobi order-1 line")
        impl = degenerate_connection(family.alpha, family.beta, n, opts)
        meta.update(impl.meta)
    elif path == "coupled":
        impl = solve_coupled(family, c, n, opts, normalization)
        meta.update(impl.meta)
    elif path == "direct":
        impl = solve_direct_plus(family, c, n)
        meta.update({"normalization": "standard", "path": "direct"})
    else:
        raise DomainError(f"unknown path {path!r}")
    meta["path"] = path
    return AssociatedConnection(impl, path, family, c, n, meta)


def solve_first_association(
    family: OPFamily, n: int, opts: SolveOptions | None = None
) -> StructuredConnection:
    """Forced-pencil solve of the order-1 connection problem.

    On the degenerate Jacobi line (alpha + beta = -1) the forcing vanishes
    and the plain-pencil path is taken automatically. For Jacobi with
    max(alpha, beta) >> 1 the auxiliary adjoint diagonalization is
    ill-conditioned; a warning is emitted.
    """
    opts = opts or SolveOptions()
    fs = assemble_forced(family, n)
    if fs.is_homogeneous:
        return degenerate_connection(family.alpha, family.beta, n, opts)
    aux_warning = None
    if family.kind == "jacobi" and max(family.alpha, family.beta) > 4.0:
        aux_warning = (
            "auxiliary adjoint diagonalization is ill-conditioned for "
            f"max(alpha, beta) = {max(family.alpha, family.beta):g} >> 1"
        )
    conn = solve_forced_gevp(
        fs.A,
        fs.B,
        fs.gamma,
        fs.lam,
        fs.omega,
        opts,
        meta={
            "family": family.label(),
            "c": 1,
            "n": n,
            "normalization": "standard",
            "path": "forced",
        },
        aux_warning=aux_warning,
    )
    return conn


def degenerate_connection(
    alpha: float, beta: float, n: int, opts: SolveOptions | None = None
) -> StructuredConnection:
    """Order-1 Jacobi connection on the degenerate line alpha + beta = -1.

    The forcing term vanishes identically there, so the connection solves a
    plain upper-triangular banded pencil with Lambda_k = lambda_{k+1} and
    the leading-coefficient-ratio diagonal.
    """
    opts = opts or SolveOptions()
    if abs(alpha + beta + 1.0) > 1e-12:
        raise DomainError(
            f"(alpha, beta) = ({alpha}, {beta}) is not on the degeneracy line "
            "alpha + beta = -1"
        )
    family = OPFamily("jacobi", alpha, beta)
    fs = assemble_forced(family, n)
    scale = max(1.0, float(np.abs(fs.A.data).max()))
    if np.abs(fs.gamma).max(initial=0.0) > 1e-10 * scale:
        raise DomainError("forcing did not vanish on the degeneracy line")
    diag_norm = leading_coeff_ratios(family, 1, n)
    conn = solve_gevp(
        fs.A,
        fs.B,
        diag_norm,
        opts,
        lam=fs.lam,
        meta={
            "family": family.label(),
            "c": 1,
            "n": n,
            "normalization": "standard",
            "path": "degenerate",
        },
    )
    return conn


def kronecker_factor_identity_check(A, B, Z) -> float:
    """Residual of A^2 Z - Z B^2 = A (A Z - Z B) + (A Z - Z B) B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Z = np.asarray(Z, dtype=float)
    AZ_ZB = A @ Z - Z @ B
    lhs = A @ A @ Z - Z @ B @ B
    rhs = A @ AZ_ZB + AZ_ZB @ B
    return float(np.abs(lhs - rhs).max())


def spectral_gap_predicate(family: OPFamily, c: int, s: int) -> bool:
    """True when the two-step uncoupling split has a spectral gap.

    For Jacobi the sufficient condition reduces to (2s+1)(alpha+beta+2c) > 0;
    Laguerre and Hermite always have a gap (their bracket spectra are {0}
    and the eigenvalue ladders are sign-separated).
    """
    if c < 1 or s < 1:
        raise DomainError("need c >= 1 and s >= 1")
    if family.kind == "jacobi":
        return (2.0 * s + 1.0) * (family.alpha + family.beta + 2.0 * c) > 0.0
    return True
