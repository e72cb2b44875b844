"""Divide-and-conquer solver for upper-triangular banded pencils A V = B V L.

The eigenvector matrix V is never formed densely. It is represented by a
binary tree: dense upper-triangular leaves, and at every internal node the
factored form

    V = [[V11, 0], [0, V22]] @ [[I, V12], [0, I]],

where the off-diagonal block V12 solves a diagonal Sylvester equation whose
right-hand side has rank at most the pencil bandwidth. Component-wise,

    (V12)_{l,m} = (X Y^T)_{l,m} / (L1_l - L2_m),

a Hadamard product of a low-rank matrix with a Cauchy matrix. Entries where
the two spectra (nearly) collide are zeroed and repaired afterwards by a
sparse correction S obtained from shift-and-invert eigenvectors of the full
pencil. Large off-diagonal blocks apply the Cauchy kernel hierarchically
(Chebyshev interpolation on well-separated spectral intervals), giving
matvec, solve and transpose in O(b n log^2 n).

The same machinery solves the inhomogeneous ("forced") problem
A V = B V L + Gamma with diagonal forcing: the diagonal blocks recurse, and
the off-diagonal step diagonalizes B11^{-1} A11 through an auxiliary plain
pencil A11 R11 = B11 R11 Omega1 before the Sylvester solve.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .banded import UpperBanded, back_substitute, band_matvec, last_cols_inverse
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    RefinementError,
    SingularityError,
)

__all__ = [
    "SolveOptions",
    "EigenDiag",
    "StructuredConnection",
    "CauchyOperator",
    "solve_gevp",
    "solve_forced_gevp",
    "offdiag_rhs",
    "cauchy_solve",
    "hierarchical_cauchy_matvec",
    "structured_matvec",
    "structured_solve",
    "structured_transpose_matvec",
    "norm_estimate",
    "condition_estimate",
    "refine_collisions",
]


@dataclass
class SolveOptions:
    """Tuning knobs for the divide-and-conquer solver."""

    leaf_size: int = 64
    eps_gap: float = 1e-10          # relative collision threshold
    eps_cauchy: float = 1e-12       # hierarchical Cauchy matvec accuracy
    mode: str = "auto"              # "dense" | "hier" | "auto"
    hier_threshold: int = 128      # auto: nodes larger than this go hierarchical
    cauchy_leaf: int = 96           # dense block size inside the Cauchy tree
    eta: float = 2.0                # admissibility: dist >= eta * diameter
    max_degree: int = 64            # cap on Chebyshev interpolation degree
    refine: bool = True
    refine_tol: float = 1e-8
    refine_maxiter: int = 5


@dataclass(frozen=True)
class EigenDiag:
    """Diagonal of the eigenvalue matrix of a pencil."""

    values: np.ndarray

    @classmethod
    def from_pencil(cls, A: UpperBanded, B: UpperBanded) -> "EigenDiag":
        diagB = B.diagonal()
        zero = np.flatnonzero(diagB == 0.0)
        if zero.size:
            raise SingularityError(int(zero[0]), "B has a zero diagonal entry")
        return cls(A.diagonal() / diagB)


# ---------------------------------------------------------------------------
# hierarchical Cauchy kernel
# ---------------------------------------------------------------------------


def _chebyshev_degree(eps: float, eta: float, max_degree: int) -> int:
    """Interpolation degree so the separated-block error is below eps.

    For targets at distance >= eta * diameter from the interpolation
    interval, the Chebyshev error of 1/(x-y) decays like rho^-p with
    rho = 1 + 2 eta + 2 sqrt(eta (eta+1)).
    """
    rho = 1.0 + 2.0 * eta + 2.0 * np.sqrt(eta * (eta + 1.0))
    p = int(np.ceil(np.log(max(4.0 / eps, 4.0)) / np.log(rho))) + 1
    if p > max_degree:
        raise ConfigurationError(
            f"requested Cauchy accuracy {eps:g} needs interpolation degree {p} "
            f"> max_degree {max_degree}"
        )
    return p


class CauchyOperator:
    """Fast matvec with C_{ij} = 1 / (x_i - y_j), collisions masked to zero.

    Rows and columns are clustered on value-sorted orderings; well-separated
    cluster pairs are compressed by barycentric Chebyshev interpolation in x,
    remaining pairs are stored densely with the collision mask applied.
    """

    def __init__(self, x, y, eps=1e-12, eps_gap=1e-10, eta=2.0, leaf=96, max_degree=64):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.eps_gap = eps_gap
        self.xo = np.argsort(self.x, kind="stable")
        self.yo = np.argsort(self.y, kind="stable")
        self.xs = self.x[self.xo]
        self.ys = self.y[self.yo]
        self.p = _chebyshev_degree(eps, eta, max_degree)
        self.eta = eta
        self.leaf = leaf
        scale = max(1.0, np.abs(self.x).max(initial=0.0), np.abs(self.y).max(initial=0.0))
        self.floor = 8.0 * eps_gap * scale
        # low-rank blocks store the interpolation basis U and the Chebyshev
        # nodes; the p x cols kernel against the nodes is tiny and rebuilt on
        # the fly at apply time (it would otherwise dominate the footprint)
        self.lowrank: list[tuple[int, int, int, int, np.ndarray, np.ndarray]] = []
        self.dense: list[tuple[int, int, int, int, np.ndarray]] = []
        self._build(0, self.xs.size, 0, self.ys.size)

    # -- construction -------------------------------------------------------

    def _mask_dense(self, r0, r1, c0, c1) -> np.ndarray:
        xb = self.xs[r0:r1, None]
        yb = self.ys[None, c0:c1]
        gap = xb - yb
        tol = self.eps_gap * np.maximum(np.abs(xb), np.abs(yb))
        mask = np.abs(gap) <= tol
        with np.errstate(divide="ignore", invalid="ignore"):
            K = np.where(mask, 0.0, 1.0 / np.where(mask, 1.0, gap))
        return K

    def _build(self, r0, r1, c0, c1):
        if r0 >= r1 or c0 >= c1:
            return
        xa, xb = self.xs[r0], self.xs[r1 - 1]
        ya, yb = self.ys[c0], self.ys[c1 - 1]
        diam = xb - xa
        dist = max(ya - xb, xa - yb, 0.0)
        if dist >= max(self.eta * diam, self.floor) and dist > 0.0:
            nodes, U = self._interp_rows(r0, r1)
            K = 1.0 / (nodes[:, None] - self.ys[None, c0:c1])
            self.lowrank.append((r0, r1, c0, c1, U, K))
            return
        if (r1 - r0) <= self.leaf and (c1 - c0) <= self.leaf:
            self.dense.append((r0, r1, c0, c1, self._mask_dense(r0, r1, c0, c1)))
            return
        if (r1 - r0) >= (c1 - c0):
            rm = (r0 + r1) // 2
            self._build(r0, rm, c0, c1)
            self._build(rm, r1, c0, c1)
        else:
            cm = (c0 + c1) // 2
            self._build(r0, r1, c0, cm)
            self._build(r0, r1, cm, c1)

    def _interp_rows(self, r0, r1):
        """Chebyshev nodes on the row interval and the barycentric basis."""
        a, b = self.xs[r0], self.xs[r1 - 1]
        if b - a <= 0:
            nodes = np.array([a])
            return nodes, np.ones((r1 - r0, 1))
        k = np.arange(self.p)
        nodes = 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * k + 1) * np.pi / (2 * self.p))
        wts = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * self.p))
        xv = self.xs[r0:r1]
        diff = xv[:, None] - nodes[None, :]
        exact = diff == 0.0
        with np.errstate(divide="ignore"):
            terms = wts[None, :] / diff
        terms = np.where(exact, 0.0, terms)
        denom = terms.sum(axis=1)
        U = terms / denom[:, None]
        hit = exact.any(axis=1)
        if np.any(hit):
            U[hit] = exact[hit].astype(float)
        return nodes, U

    # -- application --------------------------------------------------------

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """C @ v; v may also carry extra trailing axes (multi-vector apply)."""
        vs = np.asarray(v)[self.yo]
        out_s = np.zeros((self.xs.size,) + vs.shape[1:], dtype=vs.dtype)
        for r0, r1, c0, c1, U, K in self.lowrank:
            out_s[r0:r1] += U @ (K @ vs[c0:c1])
        for r0, r1, c0, c1, W in self.dense:
            out_s[r0:r1] += W @ vs[c0:c1]
        out = np.empty_like(out_s)
        out[self.xo] = out_s
        return out

    def tmatvec(self, u: np.ndarray) -> np.ndarray:
        us = np.asarray(u)[self.xo]
        out_s = np.zeros((self.ys.size,) + us.shape[1:], dtype=us.dtype)
        for r0, r1, c0, c1, U, K in self.lowrank:
            out_s[c0:c1] += K.T @ (U.T @ us[r0:r1])
        for r0, r1, c0, c1, W in self.dense:
            out_s[c0:c1] += W.T @ us[r0:r1]
        out = np.empty_like(out_s)
        out[self.yo] = out_s
        return out

    def cast(self, dtype):
        self.lowrank = [
            (r0, r1, c0, c1, U.astype(dtype), K.astype(dtype))
            for r0, r1, c0, c1, U, K in self.lowrank
        ]
        self.dense = [
            (r0, r1, c0, c1, W.astype(dtype)) for r0, r1, c0, c1, W in self.dense
        ]


def hierarchical_cauchy_matvec(lam1, lam2, X, Y, v, eps=1e-12, eps_gap=1e-10):
    """Apply (X Y^T) o Cauchy(lam1, lam2) to v through the hierarchical kernel."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    op = CauchyOperator(lam1, lam2, eps=eps, eps_gap=eps_gap)
    v = np.asarray(v, dtype=float)
    out = np.zeros(np.asarray(lam1).size)
    for r in range(X.shape[1]):
        out += X[:, r] * op.matvec(Y[:, r] * v)
    return out


# ---------------------------------------------------------------------------
# off-diagonal block operator
# ---------------------------------------------------------------------------


def _collision_pairs(lam1, lam2, eps_gap):
    """Index pairs (l, m) with |lam1_l - lam2_m| below the relative threshold."""
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    order = np.argsort(lam1, kind="stable")
    s1 = lam1[order]
    pairs = []
    scale = max(1.0, np.abs(lam1).max(initial=0.0), np.abs(lam2).max(initial=0.0))
    for m, mu in enumerate(lam2):
        tol = eps_gap * max(abs(mu), 1e-300)
        window = max(tol, eps_gap * scale)
        lo = np.searchsorted(s1, mu - 2 * window, side="left")
        hi = np.searchsorted(s1, mu + 2 * window, side="right")
        for k in range(lo, hi):
            lam = s1[k]
            if abs(lam - mu) <= eps_gap * max(abs(lam), abs(mu)):
                pairs.append((int(order[k]), int(m)))
    return pairs


class _OffDiag:
    """V12 = (X Y^T) o Cauchy(lam1, lam2) + S, dense or hierarchical."""

    def __init__(self, lam1, lam2, X, Y, opts: SolveOptions, mode: str):
        self.lam1 = np.asarray(lam1, dtype=float)
        self.lam2 = np.asarray(lam2, dtype=float)
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.mode = mode
        self.eps_gap = opts.eps_gap
        self.collisions = _collision_pairs(self.lam1, self.lam2, opts.eps_gap)
        self.s_rows = np.empty(0, dtype=np.intp)
        self.s_cols = np.empty(0, dtype=np.intp)
        self.s_vals = np.empty(0)
        if mode == "dense":
            gap = self.lam1[:, None] - self.lam2[None, :]
            tol = opts.eps_gap * np.maximum(
                np.abs(self.lam1)[:, None], np.abs(self.lam2)[None, :]
            )
            mask = np.abs(gap) <= tol
            num = self.X @ self.Y.T if self.X.size else np.zeros(gap.shape)
            with np.errstate(divide="ignore", invalid="ignore"):
                self.W = np.where(mask, 0.0, num / np.where(mask, 1.0, gap))
            self.op = None
        else:
            self.W = None
            self.op = CauchyOperator(
                self.lam1,
                self.lam2,
                eps=opts.eps_cauchy,
                eps_gap=opts.eps_gap,
                eta=opts.eta,
                leaf=opts.cauchy_leaf,
                max_degree=opts.max_degree,
            )

    @property
    def shape(self):
        return (self.lam1.size, self.lam2.size)

    def add_correction(self, row: int, col: int, val: float):
        self.s_rows = np.append(self.s_rows, row)
        self.s_cols = np.append(self.s_cols, col)
        self.s_vals = np.append(self.s_vals, val)

    def _apply_s(self, w, out):
        if self.s_vals.size:
            np.add.at(out, self.s_rows, self.s_vals * w[self.s_cols])

    def _tapply_s(self, u, out):
        if self.s_vals.size:
            np.add.at(out, self.s_cols, self.s_vals * u[self.s_rows])

    def apply(self, w: np.ndarray) -> np.ndarray:
        if self.W is not None:
            out = self.W @ w
        elif self.X.size == 0:
            out = np.zeros(self.lam1.size, dtype=w.dtype)
        else:
            # all rank-b Hadamard components through one multi-vector pass
            out = np.einsum(
                "ir,ir->i", self.X, self.op.matvec(self.Y * w[:, None])
            )
        self._apply_s(w, out)
        return out

    def tapply(self, u: np.ndarray) -> np.ndarray:
        if self.W is not None:
            out = self.W.T @ u
        elif self.X.size == 0:
            out = np.zeros(self.lam2.size, dtype=u.dtype)
        else:
            out = np.einsum(
                "ir,ir->i", self.Y, self.op.tmatvec(self.X * u[:, None])
            )
        self._tapply_s(u, out)
        return out

    def column(self, m: int) -> np.ndarray:
        """Exact column m (entry formula, no interpolation), with S."""
        gap = self.lam1 - self.lam2[m]
        tol_vec = self.eps_gap * np.maximum(np.abs(self.lam1), abs(self.lam2[m]))
        mask = np.abs(gap) <= tol_vec
        num = self.X @ self.Y[m] if self.X.size else np.zeros(self.lam1.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            col = np.where(mask, 0.0, num / np.where(mask, 1.0, gap))
        if self.s_vals.size:
            sel = self.s_cols == m
            np.add.at(col, self.s_rows[sel], self.s_vals[sel])
        return col

    def todense(self) -> np.ndarray:
        if self.W is not None:
            W = self.W.copy()
        else:
            gap = self.lam1[:, None] - self.lam2[None, :]
            tol = self.eps_gap * np.maximum(
                np.abs(self.lam1)[:, None], np.abs(self.lam2)[None, :]
            )
            mask = np.abs(gap) <= tol
            num = self.X @ self.Y.T if self.X.size else np.zeros(gap.shape)
            with np.errstate(divide="ignore", invalid="ignore"):
                W = np.where(mask, 0.0, num / np.where(mask, 1.0, gap))
        if self.s_vals.size:
            np.add.at(W, (self.s_rows, self.s_cols), self.s_vals)
        return W

    def frob_bound(self) -> float:
        """Upper bound on ||V12||_2 through the Frobenius norm."""
        s_norm = float(np.sqrt((self.s_vals**2).sum())) if self.s_vals.size else 0.0
        if self.W is not None:
            return float(np.linalg.norm(self.W)) + s_norm
        cells = self.lam1.size * self.lam2.size
        if cells <= 4_000_000:
            return float(np.linalg.norm(self.todense()))
        # cheap bound: |entry| <= |num| / min unmasked gap
        min_gap = _min_unmasked_gap(self.lam1, self.lam2, self.eps_gap)
        num_f = float(np.linalg.norm(self.X, 2) * np.linalg.norm(self.Y, "fro"))
        return num_f / min_gap + s_norm

    def cast(self, dtype):
        self.X = self.X.astype(dtype)
        self.Y = self.Y.astype(dtype)
        self.s_vals = self.s_vals.astype(dtype)
        if self.W is not None:
            self.W = self.W.astype(dtype)
        else:
            self.op.cast(dtype)


def _min_unmasked_gap(lam1, lam2, eps_gap):
    xs = np.sort(np.asarray(lam1, dtype=float))
    best = np.inf
    lam2 = np.asarray(lam2, dtype=float)
    idx = np.searchsorted(xs, lam2)
    for m, mu in enumerate(lam2):
        for k in (idx[m] - 1, idx[m], idx[m] + 1):
            if 0 <= k < xs.size:
                g = abs(xs[k] - mu)
                if g > eps_gap * max(abs(xs[k]), abs(mu), 1.0) and g < best:
                    best = g
    return best if np.isfinite(best) else 1.0


# ---------------------------------------------------------------------------
# tree nodes
# ---------------------------------------------------------------------------


class _Leaf:
    __slots__ = ("i0", "V")

    def __init__(self, i0: int, V: np.ndarray):
        self.i0 = i0
        self.V = V

    @property
    def n(self):
        return self.V.shape[0]

    def matvec(self, v):
        return self.V @ v

    def tmatvec(self, v):
        return self.V.T @ v

    def solve(self, d):
        return solve_triangular(self.V, d, lower=False)

    def tsolve(self, d):
        return solve_triangular(self.V, d, lower=False, trans="T")

    def todense(self):
        return self.V.copy()

    def bounds(self):
        nb = float(np.linalg.norm(self.V))
        inv = solve_triangular(self.V, np.eye(self.n), lower=False)
        return nb, float(np.linalg.norm(inv))

    def diag(self):
        return np.diagonal(self.V).copy()

    def cast(self, dtype):
        self.V = self.V.astype(dtype)


class _Branch:
    """Internal node of a plain pencil solve."""

    __slots__ = ("i0", "s", "m", "left", "right", "off")

    def __init__(self, i0, left, right, off):
        self.i0 = i0
        self.left = left
        self.right = right
        self.off = off
        self.s = left.n
        self.m = right.n

    @property
    def n(self):
        return self.s + self.m

    def matvec(self, v):
        c1, c2 = v[: self.s], v[self.s :]
        top = c1 + self.off.apply(c2) if self.off else c1
        return np.concatenate([self.left.matvec(top), self.right.matvec(c2)])

    def tmatvec(self, v):
        t1 = self.left.tmatvec(v[: self.s])
        bot = self.right.tmatvec(v[self.s :])
        if self.off:
            bot = bot + self.off.tapply(t1)
        return np.concatenate([t1, bot])

    def solve(self, d):
        x2 = self.right.solve(d[self.s :])
        x1 = self.left.solve(d[: self.s])
        if self.off:
            x1 = x1 - self.off.apply(x2)
        return np.concatenate([x1, x2])

    def tsolve(self, d):
        x1 = self.left.tsolve(d[: self.s])
        w2 = d[self.s :]
        if self.off:
            w2 = w2 - self.off.tapply(d[: self.s])
        return np.concatenate([x1, self.right.tsolve(w2)])

    def todense(self):
        n = self.n
        out = np.zeros((n, n))
        out[: self.s, : self.s] = self.left.todense()
        out[self.s :, self.s :] = self.right.todense()
        if self.off:
            out[: self.s, self.s :] = out[: self.s, : self.s] @ self.off.todense()
        return out

    def bounds(self):
        n1, i1 = self.left.bounds()
        n2, i2 = self.right.bounds()
        off = self.off.frob_bound() if self.off else 0.0
        return max(n1, n2) * (1.0 + off), max(i1, i2) * (1.0 + off)

    def diag(self):
        return np.concatenate([self.left.diag(), self.right.diag()])

    def cast(self, dtype):
        self.left.cast(dtype)
        self.right.cast(dtype)
        if self.off:
            self.off.cast(dtype)


class _ForcedBranch:
    """Internal node of the forced solve; off holds Z12 = R11^{-1} V11 V12."""

    __slots__ = ("i0", "s", "m", "left", "right", "off", "r11")

    def __init__(self, i0, left, right, off, r11):
        self.i0 = i0
        self.left = left
        self.right = right
        self.off = off
        self.r11 = r11  # StructuredConnection or None (identity)
        self.s = left.n
        self.m = right.n

    @property
    def n(self):
        return self.s + self.m

    def _r_mv(self, u):
        return self.r11.matvec(u) if self.r11 is not None else u

    def _r_tmv(self, u):
        return self.r11.tmatvec(u) if self.r11 is not None else u

    def matvec(self, v):
        c1, c2 = v[: self.s], v[self.s :]
        y1 = self.left.matvec(c1)
        if self.off:
            y1 = y1 + self._r_mv(self.off.apply(c2))
        return np.concatenate([y1, self.right.matvec(c2)])

    def tmatvec(self, v):
        t1 = self.left.tmatvec(v[: self.s])
        bot = self.right.tmatvec(v[self.s :])
        if self.off:
            bot = bot + self.off.tapply(self._r_tmv(v[: self.s]))
        return np.concatenate([t1, bot])

    def solve(self, d):
        x2 = self.right.solve(d[self.s :])
        d1 = d[: self.s]
        if self.off:
            d1 = d1 - self._r_mv(self.off.apply(x2))
        return np.concatenate([self.left.solve(d1), x2])

    def tsolve(self, d):
        x1 = self.left.tsolve(d[: self.s])
        w2 = d[self.s :]
        if self.off:
            w2 = w2 - self.off.tapply(self._r_tmv(x1))
        return np.concatenate([x1, self.right.tsolve(w2)])

    def todense(self):
        n = self.n
        out = np.zeros((n, n))
        out[: self.s, : self.s] = self.left.todense()
        out[self.s :, self.s :] = self.right.todense()
        if self.off:
            Z = self.off.todense()
            out[: self.s, self.s :] = self.r11.todense() @ Z if self.r11 is not None else Z
        return out

    def bounds(self):
        n1, i1 = self.left.bounds()
        n2, i2 = self.right.bounds()
        off = 0.0
        if self.off:
            z = self.off.frob_bound()
            rn = norm_estimate(self.r11) if self.r11 is not None else 1.0
            off = i1 * rn * z  # ||V12|| <= ||V11^{-1}|| ||R11|| ||Z12||
        return max(n1, n2) * (1.0 + off), max(i1, i2) * (1.0 + off)

    def diag(self):
        return np.concatenate([self.left.diag(), self.right.diag()])

    def cast(self, dtype):
        self.left.cast(dtype)
        self.right.cast(dtype)
        if self.off:
            self.off.cast(dtype)
        if self.r11 is not None:
            self.r11.cast(dtype)


# ---------------------------------------------------------------------------
# public structured connection
# ---------------------------------------------------------------------------


class StructuredConnection:
    """Hierarchical factored form of an upper-triangular connection matrix.

    Fast paths run off a flattened execution plan: with U_node the unit
    upper-triangular factor carrying V12, the tree factors as

        V = blockdiag(leaves) * U_deepest * ... * U_top,

    so a matvec is one in-place slice update per internal node (top-down)
    followed by one dense multiply per leaf; solves and transposes reverse
    and/or transpose the same plan.
    """

    def __init__(self, root, n: int, lam: EigenDiag, meta: dict | None = None):
        self.root = root
        self.n = n
        self.lam = lam
        self.meta = dict(meta or {})
        self.collision_count = 0
        self._plan_cache = None

    @classmethod
    def identity(cls, n: int, meta=None) -> "StructuredConnection":
        return cls(_Leaf(0, np.eye(n)), n, EigenDiag(np.zeros(n)), meta)

    def _plan(self):
        if self._plan_cache is None:
            offs, leaves = [], []
            stack = [self.root]
            forced = isinstance(self.root, _ForcedBranch)
            while stack:
                node = stack.pop()
                if isinstance(node, _Leaf):
                    leaves.append((node.i0, node.i0 + node.n, node))
                    continue
                r11 = node.r11 if isinstance(node, _ForcedBranch) else None
                if node.off is not None:
                    offs.append((node.i0, node.i0 + node.s, node.i0 + node.n, node, r11))
                stack.append(node.left)
                stack.append(node.right)
            # 'offs' is in top-down order (parents recorded before children)
            self._consolidate(offs, leaves)
            self._plan_cache = (offs, leaves, forced)
        return self._plan_cache

    def _consolidate(self, offs, leaves):
        """Pack all matvec-path arrays into one arena in execution order.

        Scattered block storage becomes latency-bound once the structure
        outgrows the cache; a single contiguous buffer traversed in plan
        order streams at memory bandwidth instead.
        """
        arrays = []  # execution-ordered float64 arrays

        def collect(arr):
            if isinstance(arr, np.ndarray) and arr.dtype == np.float64 and arr.size:
                arrays.append(arr)

        for lo, mid, hi, node, r11 in offs:
            off = node.off
            collect(off.X)
            collect(off.Y)
            if off.W is not None:
                collect(off.W)
            elif off.op is not None:
                for r0, r1, c0, c1, U, K in off.op.lowrank:
                    collect(U)
                    collect(K)
                for r0, r1, c0, c1, W in off.op.dense:
                    collect(W)
        for lo, hi, leaf in leaves:
            collect(leaf.V)
        total = sum(a.size for a in arrays)
        if total == 0:
            return
        arena = np.empty(total)
        view_of = {}
        pos = 0
        for arr in arrays:
            view = arena[pos : pos + arr.size].reshape(arr.shape)
            view[...] = arr
            view_of[id(arr)] = view
            pos += arr.size

        def swap(arr):
            return view_of.get(id(arr), arr)

        for lo, mid, hi, node, r11 in offs:
            off = node.off
            off.X = swap(off.X)
            off.Y = swap(off.Y)
            if off.W is not None:
                off.W = swap(off.W)
            elif off.op is not None:
                off.op.lowrank = [
                    (r0, r1, c0, c1, swap(U), swap(K))
                    for r0, r1, c0, c1, U, K in off.op.lowrank
                ]
                off.op.dense = [
                    (r0, r1, c0, c1, swap(W)) for r0, r1, c0, c1, W in off.op.dense
                ]
        for lo, hi, leaf in leaves:
            leaf.V = swap(leaf.V)

    def matvec(self, c):
        c = np.asarray(c)
        if c.shape[0] != self.n:
            raise DomainError("dimension mismatch")
        dtype = c.dtype if c.dtype in (np.float32, np.float64) else np.float64
        w = c.astype(dtype, copy=True)
        c = w.copy() if isinstance(self.root, _ForcedBranch) else w
        offs, leaves, forced = self._plan()
        if forced:
            # every off-diagonal term reads the original input and lands in
            # the output untouched by the diagonal blocks: V11 V12 = R11 Z12
            contrib = np.zeros_like(w)
            for lo, mid, hi, node, r11 in offs:
                u = node.off.apply(c[mid:hi])
                contrib[lo:mid] += r11.matvec(u) if r11 is not None else u
            for lo, hi, leaf in leaves:
                w[lo:hi] = leaf.V @ w[lo:hi]
            return w + contrib
        for lo, mid, hi, node, r11 in offs:
            w[lo:mid] += node.off.apply(w[mid:hi])
        for lo, hi, leaf in leaves:
            w[lo:hi] = leaf.V @ w[lo:hi]
        return w

    def tmatvec(self, c):
        c = np.asarray(c)
        if c.shape[0] != self.n:
            raise DomainError("dimension mismatch")
        dtype = c.dtype if c.dtype in (np.float32, np.float64) else np.float64
        w = c.astype(dtype, copy=True)
        c = w.copy() if isinstance(self.root, _ForcedBranch) else w
        offs, leaves, forced = self._plan()
        if forced:
            contrib = np.zeros_like(w)
            for lo, mid, hi, node, r11 in offs:
                u = r11.tmatvec(c[lo:mid]) if r11 is not None else c[lo:mid]
                contrib[mid:hi] += node.off.tapply(u)
            for lo, hi, leaf in leaves:
                w[lo:hi] = leaf.V.T @ w[lo:hi]
            return w + contrib
        for lo, hi, leaf in leaves:
            w[lo:hi] = leaf.V.T @ w[lo:hi]
        for lo, mid, hi, node, r11 in reversed(offs):
            w[mid:hi] += node.off.tapply(w[lo:mid])
        return w

    def solve(self, d):
        d = np.asarray(d)
        if d.shape[0] != self.n:
            raise DomainError("dimension mismatch")
        return self.root.solve(np.asarray(d, dtype=float))

    def tsolve(self, d):
        d = np.asarray(d)
        if d.shape[0] != self.n:
            raise DomainError("dimension mismatch")
        return self.root.tsolve(np.asarray(d, dtype=float))

    def todense(self):
        return self.root.todense()

    def diag(self):
        return self.root.diag()

    def norm_estimate(self):
        return self.root.bounds()[0]

    def condition_estimate(self):
        nb, ib = self.root.bounds()
        return nb * ib

    def cast(self, dtype):
        self.root.cast(dtype)
        self._plan_cache = None  # arena must be rebuilt for the new dtype
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lam": self.lam.values.tolist(),
            "meta": self.meta,
            "tree": _node_to_dict(self.root),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict, opts: SolveOptions | None = None) -> "StructuredConnection":
        opts = opts or SolveOptions()
        root = _node_from_dict(obj["tree"], opts)
        return cls(root, obj["n"], EigenDiag(np.asarray(obj["lam"])), obj.get("meta"))

    @classmethod
    def from_json(cls, text: str, opts: SolveOptions | None = None) -> "StructuredConnection":
        return cls.from_dict(json.loads(text), opts)


def _offdiag_to_dict(off: _OffDiag) -> dict:
    return {
        "lam1": off.lam1.tolist(),
        "lam2": off.lam2.tolist(),
        "x": off.X.tolist(),
        "y": off.Y.tolist(),
        "mode": "dense" if off.W is not None else "hier",
        "s": [off.s_rows.tolist(), off.s_cols.tolist(), off.s_vals.tolist()],
    }


def _offdiag_from_dict(obj: dict, opts: SolveOptions) -> _OffDiag:
    off = _OffDiag(
        np.asarray(obj["lam1"]),
        np.asarray(obj["lam2"]),
        np.asarray(obj["x"]),
        np.asarray(obj["y"]),
        opts,
        obj["mode"],
    )
    rows, cols, vals = obj["s"]
    off.s_rows = np.asarray(rows, dtype=np.intp)
    off.s_cols = np.asarray(cols, dtype=np.intp)
    off.s_vals = np.asarray(vals, dtype=float)
    return off


def _node_to_dict(node) -> dict:
    if isinstance(node, _Leaf):
        return {"type": "leaf", "i0": node.i0, "v": node.V.tolist()}
    if isinstance(node, _ForcedBranch):
        return {
            "type": "forced",
            "i0": node.i0,
            "left": _node_to_dict(node.left),
            "right": _node_to_dict(node.right),
            "off": _offdiag_to_dict(node.off) if node.off else None,
            "r11": node.r11.to_dict() if node.r11 is not None else None,
        }
    return {
        "type": "branch",
        "i0": node.i0,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
        "off": _offdiag_to_dict(node.off) if node.off else None,
    }


def _node_from_dict(obj: dict, opts: SolveOptions):
    if obj["type"] == "leaf":
        return _Leaf(obj["i0"], np.asarray(obj["v"], dtype=float))
    left = _node_from_dict(obj["left"], opts)
    right = _node_from_dict(obj["right"], opts)
    off = _offdiag_from_dict(obj["off"], opts) if obj["off"] else None
    if obj["type"] == "forced":
        r11 = (
            StructuredConnection.from_dict(obj["r11"], opts)
            if obj["r11"] is not None
            else None
        )
        return _ForcedBranch(obj["i0"], left, right, off, r11)
    return _Branch(obj["i0"], left, right, off)


# ---------------------------------------------------------------------------
# leaf and off-diagonal construction
# ---------------------------------------------------------------------------


def _solve_leaf_gevp(Ad, Bd, lam_loc, diag_loc, eps_gap):
    """Dense column-by-column back-substitution eigenvector solve."""
    L = lam_loc.size
    V = np.zeros((L, L))
    for j in range(L):
        lamj = lam_loc[j]
        V[j, j] = diag_loc[j]
        if j == 0:
            continue
        T = Ad[: j + 1, : j + 1] - lamj * Bd[: j + 1, : j + 1]
        gaps = np.abs(lam_loc[:j] - lamj)
        tols = eps_gap * np.maximum(np.abs(lam_loc[:j]), abs(lamj))
        coll = gaps <= tols
        rhs = -T[:j, j] * V[j, j]
        if not np.any(coll):
            V[:j, j] = solve_triangular(T[:j, :j], rhs, lower=False)
        else:
            v = np.zeros(j)
            for i in range(j - 1, -1, -1):
                if coll[i]:
                    v[i] = 0.0
                    continue
                acc = rhs[i] - T[i, i + 1 : j] @ v[i + 1 :]
                v[i] = acc / T[i, i]
            V[:j, j] = v
    return V


def _solve_leaf_forced(Ad, Bd, lam_loc, gam_loc, omega_loc):
    """Dense forced solve: (A - lam_j B) v = gam_j e_j fixes every entry."""
    L = lam_loc.size
    V = np.zeros((L, L))
    for j in range(L):
        lamj = lam_loc[j]
        denom = Ad[j, j] - lamj * Bd[j, j]
        if denom == 0.0:
            raise SingularityError(j, "forced diagonal is singular (degenerate line?)")
        V[j, j] = gam_loc[j] / denom
        if j == 0:
            continue
        T = Ad[: j + 1, : j + 1] - lamj * Bd[: j + 1, : j + 1]
        rhs = -T[:j, j] * V[j, j]
        V[:j, j] = solve_triangular(T[:j, :j], rhs, lower=False)
    return V


def offdiag_rhs(A12, B12, V22, lam2, B11: UpperBanded, V11) -> tuple[np.ndarray, np.ndarray]:
    """Rank-b factors with X Y^T = V11^{-1} B11^{-1} (B12 V22 L2 - A12 V22).

    A12 and B12 are the dense corner blocks (w x w) of the off-diagonal part
    of the banded pencil; V11/V22 are structured (or objects with
    solve/tmatvec); lam2 is the right spectrum.
    """
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    B12 = np.atleast_2d(np.asarray(B12, dtype=float))
    w = A12.shape[0]
    lam2 = np.asarray(lam2, dtype=float)
    m = lam2.size
    if w == 0:
        return np.zeros((B11.n, 0)), np.zeros((m, 0))
    Wrows = np.zeros((w, m))
    for ccol in range(w):
        if not (np.any(A12[:, ccol]) or np.any(B12[:, ccol])):
            continue
        e = np.zeros(m)
        e[ccol] = 1.0
        rowv = V22.tmatvec(e)
        Wrows += np.outer(A12[:, ccol], rowv) - np.outer(B12[:, ccol], rowv * lam2)
    cols = last_cols_inverse(B11, w)
    X = np.column_stack([V11.solve(cols[:, r]) for r in range(w)])
    Y = -Wrows.T
    return X, Y


def cauchy_solve(lam1, lam2, X, Y, eps_gap=1e-10, opts: SolveOptions | None = None):
    """Off-diagonal operator (X Y^T) o Cauchy with collisions zeroed.

    Returns (operator, collisions); collisions is a list of local (l, m)
    pairs where the spectra (nearly) coincide and the entry was set to zero.
    """
    opts = opts or SolveOptions(eps_gap=eps_gap)
    opts.eps_gap = eps_gap
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    size = max(lam1.size, lam2.size)
    if opts.mode == "hier" or (opts.mode == "auto" and size > opts.hier_threshold):
        mode = "hier"
    else:
        mode = "dense"
    off = _OffDiag(lam1, lam2, np.atleast_2d(X), np.atleast_2d(Y), opts, mode)
    return off, off.collisions


# ---------------------------------------------------------------------------
# eigenvector refinement for collided eigenvalues
# ---------------------------------------------------------------------------


def _protected_pencil_column(A, B, lam_all, j, value, eps_gap):
    """Eigenvector of the banded pencil for column j by back substitution.

    Rows whose own eigenvalue collides with lam_all[j] are free; the
    convention fixes them to zero.
    """
    n = A.n
    lamj = lam_all[j]
    v = np.zeros(n)
    v[j] = value
    b = max(A.b, B.b)
    for i in range(j - 1, -1, -1):
        if abs(lam_all[i] - lamj) <= eps_gap * max(abs(lam_all[i]), abs(lamj)):
            continue
        hi = min(i + b, j)
        acc = 0.0
        for k in range(i + 1, hi + 1):
            t = A.entry(i, k) - lamj * B.entry(i, k)
            if t != 0.0:
                acc -= t * v[k]
        v[i] = acc / (A.entry(i, i) - lamj * B.entry(i, i))
    return v


def _pencil_residual(A, B, lam, v):
    r = band_matvec(A, v) - lam * band_matvec(B, v)
    scale = (A.norm_inf() + abs(lam) * B.norm_inf()) * max(
        1e-300, float(np.abs(v).max())
    )
    return float(np.abs(r).max()) / max(scale, 1e-300)


def _refined_column(A, B, lam_all, j, value, opts: SolveOptions):
    v = _protected_pencil_column(A, B, lam_all, j, value, opts.eps_gap)
    lamj = lam_all[j]
    for _ in range(opts.refine_maxiter):
        if _pencil_residual(A, B, lamj, v) <= opts.refine_tol:
            return v
        # one inverse-iteration pass on the shifted pencil
        rhs = band_matvec(B, v)
        w = np.zeros_like(v)
        b = max(A.b, B.b)
        for i in range(j, -1, -1):
            if abs(lam_all[i] - lamj) <= opts.eps_gap * max(abs(lam_all[i]), abs(lamj)):
                w[i] = v[i]
                continue
            hi = min(i + b, j)
            acc = rhs[i]
            for k in range(i + 1, hi + 1):
                t = A.entry(i, k) - lamj * B.entry(i, k)
                if t != 0.0:
                    acc -= t * w[k]
            w[i] = acc / (A.entry(i, i) - lamj * B.entry(i, i))
        if w[j] == 0.0:
            break
        v = w * (value / w[j])
    if _pencil_residual(A, B, lam_all[j], v) <= opts.refine_tol:
        return v
    raise RefinementError(lam_all[j])


def _refine_records(A, B, lam_all, diag_all, collisions, opts):
    """Shared refinement core; collisions are (node, l_local, m_local)."""
    entries = []
    by_col: dict[tuple[int, int], list] = {}
    for node, l_loc, m_loc in collisions:
        key = (id(node), node.i0 + node.s + m_loc)
        by_col.setdefault(key, []).append((node, l_loc, m_loc))
    for (_, j_global), recs in sorted(by_col.items(), key=lambda kv: kv[0][1]):
        node = recs[0][0]
        v_true = _refined_column(A, B, lam_all, j_global, diag_all[j_global], opts)
        top = v_true[node.i0 : node.i0 + node.s]
        w = node.left.solve(top)
        for nd, l_loc, m_loc in recs:
            val = float(w[l_loc])
            nd.off.add_correction(l_loc, m_loc, val)
            entries.append((nd.i0 + l_loc, nd.i0 + nd.s + m_loc, val))
    return entries


def refine_collisions(A, B, conn: StructuredConnection, collisions, opts=None):
    """Fill the sparse corrections S for collided eigenvalue pairs.

    ``collisions`` is a list of (node, l_local, m_local) records; for each
    affected column the true eigenvector is recovered from the full pencil
    and the correction is the difference in the node's local coordinates,
    restricted to the collision rows. Returns (row, col, value) triplets in
    global coordinates.
    """
    opts = opts or SolveOptions()
    entries = _refine_records(A, B, conn.lam.values, conn.diag(), collisions, opts)
    conn.collision_count += len(entries)
    return entries


# ---------------------------------------------------------------------------
# top-level builders
# ---------------------------------------------------------------------------


def _check_spectrum(A, B, lam, what):
    diagB = B.diagonal()
    zero = np.flatnonzero(diagB == 0.0)
    if zero.size:
        raise SingularityError(int(zero[0]), "B has a zero diagonal entry")
    ratios = A.diagonal() / diagB
    err = np.abs(ratios - lam) / np.maximum(1.0, np.abs(lam))
    if err.max(initial=0.0) > 1e-8:
        raise NumericalError(
            f"{what}: pencil diagonal ratios disagree with the given spectrum "
            f"(max rel err {err.max():.2e})"
        )


def solve_gevp(
    A: UpperBanded,
    B: UpperBanded,
    diag_norm,
    opts: SolveOptions | None = None,
    lam=None,
    meta=None,
) -> StructuredConnection:
    """Structured solve of A V = B V Lambda with prescribed diagonal of V.

    The spectrum defaults to the diagonal ratios; an explicit ``lam`` (e.g.
    exact eigenvalues) overrides them after a consistency check.
    """
    opts = opts or SolveOptions()
    if A.n != B.n:
        raise DomainError("pencil dimensions differ")
    n = A.n
    diag_norm = np.asarray(diag_norm, dtype=float)
    if diag_norm.shape != (n,):
        raise DomainError("diag_norm must have length n")
    if lam is None:
        lam = EigenDiag.from_pencil(A, B).values
    else:
        lam = np.asarray(lam, dtype=float)
        _check_spectrum(A, B, lam, "solve_gevp")
    collisions_found = []

    def build(lo, hi):
        if hi - lo <= opts.leaf_size:
            Ad = A.principal_block(lo, hi).to_dense()
            Bd = B.principal_block(lo, hi).to_dense()
            V = _solve_leaf_gevp(Ad, Bd, lam[lo:hi], diag_norm[lo:hi], opts.eps_gap)
            return _Leaf(lo, V)
        mid = lo + (hi - lo) // 2
        left = build(lo, mid)
        right = build(mid, hi)
        off = _build_offdiag(A, B, lo, mid, hi, left, right, lam, opts, r11=None)
        node = _Branch(lo, left, right, off)
        if off is not None and off.collisions and opts.refine:
            # repair immediately so parents see corrected children
            recs = [(node, l, m) for (l, m) in off.collisions]
            collisions_found.extend(recs)
            _refine_records(A, B, lam, diag_norm, recs, opts)
        return node

    root = build(0, n)
    conn = StructuredConnection(root, n, EigenDiag(lam), meta)
    conn.collision_count = len(collisions_found)
    return conn


def _build_offdiag(A, B, lo, mid, hi, left, right, lam, opts, r11):
    """Off-diagonal operator for the split [lo, mid) | [mid, hi)."""
    bw = max(A.b, B.b)
    w = min(bw, mid - lo, hi - mid)
    lam2 = lam[mid:hi]
    if w == 0:
        return None
    A12 = np.zeros((w, w))
    B12 = np.zeros((w, w))
    for r in range(w):
        i = mid - w + r
        for cidx in range(w):
            j = mid + cidx
            A12[r, cidx] = A.entry(i, j)
            B12[r, cidx] = B.entry(i, j)
    if not (np.any(A12) or np.any(B12)):
        return None
    Bblk = B.principal_block(lo, mid)
    m = hi - mid
    Wrows = np.zeros((w, m))
    for ccol in range(w):
        if not (np.any(A12[:, ccol]) or np.any(B12[:, ccol])):
            continue
        e = np.zeros(m)
        e[ccol] = 1.0
        rowv = right.tmatvec(e)
        Wrows += np.outer(A12[:, ccol], rowv) - np.outer(B12[:, ccol], rowv * lam2)
    cols = last_cols_inverse(Bblk, w)
    if r11 is None:
        X = np.column_stack([left.solve(cols[:, r]) for r in range(w)])
        lam1 = lam[lo:mid]
    else:
        solver, omega1 = r11
        X = np.column_stack([solver(cols[:, r]) for r in range(w)])
        lam1 = omega1
    Y = -Wrows.T
    size = max(mid - lo, hi - mid)
    if opts.mode == "hier" or (opts.mode == "auto" and size > opts.hier_threshold):
        mode = "hier"
    else:
        mode = "dense"
    return _OffDiag(lam1, lam2, X, Y, opts, mode)


def solve_forced_gevp(
    A: UpperBanded,
    B: UpperBanded,
    gamma,
    lam,
    omega,
    opts: SolveOptions | None = None,
    meta=None,
    aux_warning: str | None = None,
) -> StructuredConnection:
    """Structured solve of the forced problem A V = B V Lambda + Gamma.

    Diagonal blocks recurse on the same forced structure; each off-diagonal
    step diagonalizes B11^{-1} A11 via the auxiliary pencil
    A11 R11 = B11 R11 Omega1 (skipped when A = B Omega holds entrywise, in
    which case R11 is the identity), then solves the diagonal Sylvester
    equation in Z12 = R11^{-1} V11 V12. The spectral-gap condition
    max(omega_lo, omega_{mid-1}) < lam_mid is asserted at every split.
    """
    opts = opts or SolveOptions()
    n = A.n
    gamma = np.asarray(gamma, dtype=float)
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(omega, dtype=float)
    _check_spectrum(A, B, omega, "solve_forced_gevp (adjoint spectrum)")
    identity_r = _is_b_omega(A, B, omega)
    if aux_warning and not identity_r:
        warnings.warn(aux_warning, stacklevel=2)

    def build(lo, hi):
        if hi - lo <= opts.leaf_size:
            Ad = A.principal_block(lo, hi).to_dense()
            Bd = B.principal_block(lo, hi).to_dense()
            V = _solve_leaf_forced(Ad, Bd, lam[lo:hi], gamma[lo:hi], omega[lo:hi])
            return _Leaf(lo, V)
        mid = lo + (hi - lo) // 2
        left = build(lo, mid)
        right = build(mid, hi)
        gap_max = max(omega[lo], omega[mid - 1])
        if not gap_max < lam[mid]:
            raise NumericalError(
                f"adjoint/eigenvalue spectral gap violated at split {mid}: "
                f"max(omega)={gap_max} !< lambda={lam[mid]}"
            )
        if identity_r:
            r11_conn = None
            solver = lambda col: col  # R11 is the identity when A = B Omega
        else:
            Ablk = A.principal_block(lo, mid)
            Bblk = B.principal_block(lo, mid)
            r11_conn = solve_gevp(
                Ablk, Bblk, np.ones(mid - lo), opts, lam=omega[lo:mid]
            )
            solver = r11_conn.solve
        off = _build_offdiag(
            A, B, lo, mid, hi, left, right, lam, opts, r11=(solver, omega[lo:mid])
        )
        return _ForcedBranch(lo, left, right, off, r11_conn)

    root = build(0, n)
    conn = StructuredConnection(root, n, EigenDiag(lam), meta)
    return conn


def _is_b_omega(A, B, omega):
    """Entrywise check of the structural identity A == B diag(omega)."""
    if A.b != B.b:
        return False
    scale = max(1.0, float(np.abs(A.data).max()))
    for d in range(A.b + 1):
        m = A.n - d
        if np.any(
            np.abs(A.data[:m, d] - B.data[:m, d] * omega[d:]) > 1e-13 * scale
        ):
            return False
    return True


# -- thin functional wrappers (operation-style API) ---------------------------


def structured_matvec(V: StructuredConnection, c):
    return V.matvec(c)


def structured_solve(V: StructuredConnection, d):
    return V.solve(d)


def structured_transpose_matvec(V: StructuredConnection, c):
    return V.tmatvec(c)


def norm_estimate(V: StructuredConnection) -> float:
    return V.norm_estimate()


def condition_estimate(V: StructuredConnection) -> float:
    return V.condition_estimate()
