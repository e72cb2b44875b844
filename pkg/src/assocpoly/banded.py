"""Upper-triangular banded matrices, the perfect shuffle, and Givens chains.

Storage is dense-in-band, row major: entry (i, j) with 0 <= j - i <= b lives
at data[i, j - i]. Everything below the diagonal or beyond offset b is zero
by construction. The JSON form used by the CLI is
``{"n": n, "b": b, "rows": [[...b+1 floats...], ...]}`` with entries past the
matrix edge padded by zeros.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import solve_banded

from .errors import DegeneracyError, DomainError, SingularityError

__all__ = [
    "UpperBanded",
    "ShufflePerm",
    "GivensChain",
    "band_matvec",
    "back_substitute",
    "last_cols_inverse",
    "perfect_shuffle",
    "block_qr_2x2",
    "apply_chain",
]


class UpperBanded:
    """Upper-triangular matrix with fixed upper bandwidth b."""

    __slots__ = ("n", "b", "data")

    def __init__(self, n: int, b: int, data: np.ndarray | None = None):
        if n < 1 or b < 0:
            raise DomainError("need n >= 1 and b >= 0")
        self.n = n
        self.b = b
        if data is None:
            data = np.zeros((n, b + 1))
        data = np.asarray(data, dtype=float)
        if data.shape != (n, b + 1):
            raise DomainError(f"band data must have shape {(n, b + 1)}")
        self.data = data

    @classmethod
    def from_dense(cls, M: np.ndarray, b: int | None = None) -> "UpperBanded":
        M = np.asarray(M, dtype=float)
        n = M.shape[0]
        if M.shape != (n, n):
            raise DomainError("matrix must be square")
        if b is None:
            b = 0
            for d in range(n - 1, 0, -1):
                if np.any(np.diagonal(M, d) != 0.0):
                    b = d
                    break
        out = cls(n, b)
        for d in range(b + 1):
            out.data[: n - d, d] = np.diagonal(M, d)
        return out

    @classmethod
    def from_sparse(cls, S) -> "UpperBanded":
        """Build from a scipy sparse matrix that is upper-triangular banded."""
        S = S.tocoo()
        n = S.shape[0]
        offs = S.col - S.row
        if np.any(offs < 0):
            bad = np.flatnonzero(offs < 0)
            if np.any(np.abs(S.data[bad]) > 0):
                raise DomainError("matrix has entries below the diagonal")
        b = int(offs.max(initial=0))
        out = cls(n, max(b, 0))
        mask = (offs >= 0) & (S.data != 0.0)
        out.data[S.row[mask], offs[mask]] = S.data[mask]
        return out

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        for d in range(self.b + 1):
            idx = np.arange(self.n - d)
            M[idx, idx + d] = self.data[: self.n - d, d]
        return M

    def diagonal(self) -> np.ndarray:
        return self.data[:, 0]

    def entry(self, i: int, j: int) -> float:
        d = j - i
        if d < 0 or d > self.b or j >= self.n:
            return 0.0
        return float(self.data[i, d])

    def principal_block(self, lo: int, hi: int) -> "UpperBanded":
        """The (contiguous) diagonal block rows/cols [lo, hi)."""
        m = hi - lo
        out = UpperBanded(m, min(self.b, m - 1) if m > 1 else 0)
        for d in range(out.b + 1):
            avail = min(m - d, self.n - d - lo)
            if avail > 0:
                out.data[:avail, d] = self.data[lo : lo + avail, d]
        return out

    def corner_block(self, split: int, width: int | None = None) -> np.ndarray:
        """Dense copy of rows [split-w, split) x cols [split, split+w).

        This is the only part of the off-diagonal block A[0:split, split:n]
        that a bandwidth-b matrix can populate (w = min(b, ...)).
        """
        w = self.b if width is None else width
        w = min(w, split, self.n - split)
        out = np.zeros((w, w))
        for r in range(w):
            i = split - w + r
            for cidx in range(w):
                j = split + cidx
                out[r, cidx] = self.entry(i, j)
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return band_matvec(self, v)

    def scale_columns(self, s: np.ndarray) -> "UpperBanded":
        """Return a copy with column j multiplied by s[j]."""
        s = np.asarray(s, dtype=float)
        if s.shape != (self.n,):
            raise DomainError("scale vector length mismatch")
        out = UpperBanded(self.n, self.b)
        for d in range(self.b + 1):
            out.data[: self.n - d, d] = self.data[: self.n - d, d] * s[d:]
        return out

    def norm_inf(self) -> float:
        return float(np.abs(self.data).sum(axis=1).max(initial=0.0))

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "b": self.b, "rows": self.data.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "UpperBanded":
        obj = json.loads(text)
        return cls(obj["n"], obj["b"], np.asarray(obj["rows"], dtype=float))

    def _lapack_ab(self) -> np.ndarray:
        ab = np.zeros((self.b + 1, self.n))
        for d in range(self.b + 1):
            ab[self.b - d, d:] = self.data[: self.n - d, d]
        return ab


def band_matvec(M: UpperBanded, v: np.ndarray) -> np.ndarray:
    """Banded product M @ v in O(n b)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != M.n:
        raise DomainError("dimension mismatch")
    y = np.zeros_like(v)
    for d in range(M.b + 1):
        m = M.n - d
        if v.ndim == 1:
            y[:m] += M.data[:m, d] * v[d:]
        else:
            y[:m] += M.data[:m, d, None] * v[d:]
    return y


def back_substitute(M: UpperBanded, rhs: np.ndarray) -> np.ndarray:
    """Solve M x = rhs by back substitution; raises on a zero diagonal."""
    rhs = np.asarray(rhs, dtype=float)
    diag = M.data[:, 0]
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularityError(int(zero[0]))
    return solve_banded((0, M.b), M._lapack_ab(), rhs)


def last_cols_inverse(M: UpperBanded, k: int) -> np.ndarray:
    """The last k columns of M^{-1}, as a dense (n, k) block."""
    if k < 0 or k > M.n:
        raise DomainError("k out of range")
    if k == 0:
        return np.zeros((M.n, 0))
    E = np.zeros((M.n, k))
    E[M.n - k :, :] = np.eye(k)
    return back_substitute(M, E)


class ShufflePerm:
    """The perfect shuffle of two stacked length-n blocks.

    ``apply(z)`` interleaves: (u; w) -> (u_0, w_0, u_1, w_1, ...). The
    stored ``mapping`` is the gather map, out[i] = z[mapping[i]].
    """

    __slots__ = ("n", "mapping")

    def __init__(self, n: int):
        if n < 1:
            raise DomainError("n must be >= 1")
        self.n = n
        m = np.empty(2 * n, dtype=np.intp)
        m[0::2] = np.arange(n)
        m[1::2] = np.arange(n) + n
        self.mapping = m

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        return z[self.mapping]

    def unapply(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        out = np.empty_like(y)
        out[self.mapping] = y
        return out

    def conjugate_dense(self, M: np.ndarray) -> np.ndarray:
        """P M P^T for a dense (2n, 2n) matrix."""
        M = np.asarray(M)
        return M[np.ix_(self.mapping, self.mapping)]


def perfect_shuffle(n: int) -> ShufflePerm:
    return ShufflePerm(n)


class GivensChain:
    """Ordered rotations (k, c, s): G_k = [[c, -s], [s, c]] on rows (k, k+1)."""

    __slots__ = ("idx", "cos", "sin")

    def __init__(self, idx, cos, sin):
        self.idx = np.asarray(idx, dtype=np.intp)
        self.cos = np.asarray(cos, dtype=float)
        self.sin = np.asarray(sin, dtype=float)
        if not (self.idx.shape == self.cos.shape == self.sin.shape):
            raise DomainError("chain arrays must have equal length")

    def __len__(self):
        return self.idx.size

    def apply_vec(self, v: np.ndarray, transposed: bool = False) -> np.ndarray:
        """G v (or G^T v); rotations act on disjoint index pairs."""
        v = np.array(v, dtype=float, copy=True)
        s = -self.sin if transposed else self.sin
        a = v[self.idx]
        bju = v[self.idx + 1]
        v[self.idx] = self.cos * a - s * bju
        v[self.idx + 1] = s * a + self.cos * bju
        return v


def block_qr_2x2(blocks: np.ndarray, cond_limit: float = 1e12) -> GivensChain:
    """Rotations upper-triangularizing a stack of 2x2 diagonal blocks.

    blocks has shape (m, 2, 2); rotation i zeroes entry (1, 0) of block i and
    acts on coordinates (2i, 2i+1). A block whose condition estimate exceeds
    ``cond_limit`` signals a degenerate linearization.
    """
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim != 3 or blocks.shape[1:] != (2, 2):
        raise DomainError("blocks must have shape (m, 2, 2)")
    conds = np.linalg.cond(blocks)
    if np.any(~np.isfinite(conds)) or np.any(conds > cond_limit):
        i = int(np.argmax(np.where(np.isfinite(conds), conds, np.inf)))
        raise DegeneracyError(
            f"2x2 block {i} is numerically degenerate (cond ~ {conds[i]:.2e}); "
            "the two eigenvector families are parallel -- use the forced "
            "first-association solver instead"
        )
    a = blocks[:, 0, 0]
    bnd = blocks[:, 1, 0]
    h = np.hypot(a, bnd)
    safe = h > 0
    cos = np.where(safe, np.divide(a, h, where=safe, out=np.ones_like(h)), 1.0)
    sin = np.where(safe, np.divide(bnd, h, where=safe, out=np.zeros_like(h)), 0.0)
    return GivensChain(2 * np.arange(blocks.shape[0]), cos, sin)


def apply_chain(Q: GivensChain, M, side: str = "left", transposed: bool = False):
    """Apply a Givens chain to a dense matrix or UpperBanded.

    side="left" computes Q M (rows mix), side="right" computes M Q (columns
    mix); transposed=True uses Q^T instead of Q. Returns a dense array.
    """
    dense = M.to_dense() if isinstance(M, UpperBanded) else np.array(M, dtype=float)
    s = -Q.sin if transposed else Q.sin
    if side == "left":
        a = dense[Q.idx, :].copy()
        bju = dense[Q.idx + 1, :].copy()
        dense[Q.idx, :] = Q.cos[:, None] * a - s[:, None] * bju
        dense[Q.idx + 1, :] = s[:, None] * a + Q.cos[:, None] * bju
    elif side == "right":
        a = dense[:, Q.idx].copy()
        bju = dense[:, Q.idx + 1].copy()
        dense[:, Q.idx] = a * Q.cos[None, :] + bju * s[None, :]
        dense[:, Q.idx + 1] = -a * s[None, :] + bju * Q.cos[None, :]
    else:
        raise DomainError("side must be 'left' or 'right'")
    return dense
