"""Classical and associated orthogonal polynomial data.

Three families are supported:

* Jacobi(alpha, beta): L^2([-1, 1], (1-x)^alpha (1+x)^beta dx), alpha, beta > -1
* Laguerre(alpha):     L^2([0, inf), x^alpha e^{-x} dx), alpha > -1
* Hermite:             L^2(R, e^{-x^2} dx)

Every family satisfies the three-term recurrence

    p_{n+1}(x) = (A_n x + B_n) p_n(x) - C_n p_{n-1}(x),  p_0 = 1, p_{-1} = 0,

and the degree-preserving second-order equation

    (sigma D^2 + tau D) p_n = lambda_n p_n,

with deg(sigma) <= 2, deg(tau) <= 1 and lambda_n = (n/2)[(n-1)sigma'' + 2tau'].
The associated polynomials of order c >= 0 run the same recurrence with all
coefficient indices offset by c:

    p_{n+1}(x; c) = (A_{n+c} x + B_{n+c}) p_n(x; c) - C_{n+c} p_{n-1}(x; c).

The order-c quadratic eigenvalue problem attached to each family has two
eigenvalue ladders lambda_n^+- with lambda_n^+ = lambda_{n+c} - lambda_{c-1};
the positive ladder indexes the associated polynomials themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

__all__ = [
    "OPFamily",
    "RecurrenceCoeffs",
    "QuadSpectrum",
    "jacobi",
    "laguerre",
    "hermite",
    "recurrence",
    "classical_eigenvalue",
    "norm_h",
    "log_norm_h",
    "quad_spectrum",
    "eval_sequence",
    "clenshaw_eval",
    "leading_coeff_ratios",
]


@dataclass(frozen=True)
class OPFamily:
    """A classical orthogonal polynomial family tag.

    ``kind`` is one of ``"jacobi"``, ``"laguerre"``, ``"hermite"``; the
    parameters that do not apply to a family are ``None``.
    """

    kind: str
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind == "jacobi":
            if self.alpha is None or self.beta is None:
                raise DomainError("Jacobi requires alpha and beta")
            if self.alpha <= -1 or self.beta <= -1:
                raise DomainError(
                    f"Jacobi parameters must exceed -1, got ({self.alpha}, {self.beta})"
                )
        elif self.kind == "laguerre":
            if self.alpha is None:
                raise DomainError("Laguerre requires alpha")
            if self.alpha <= -1:
                raise DomainError(f"Laguerre parameter must exceed -1, got {self.alpha}")
            if self.beta is not None:
                raise DomainError("Laguerre has no beta parameter")
        elif self.kind == "hermite":
            if self.alpha is not None or self.beta is not None:
                raise DomainError("Hermite has no parameters")
        else:
            raise DomainError(f"unknown family kind {self.kind!r}")

    # -- ODE data -----------------------------------------------------------

    def sigma_coeffs(self) -> tuple[float, float, float]:
        """Coefficients (c0, c1, c2) of sigma(x) = c0 + c1 x + c2 x^2."""
        if self.kind == "jacobi":
            return (-1.0, 0.0, 1.0)
        if self.kind == "laguerre":
            return (0.0, -1.0, 0.0)
        return (-1.0, 0.0, 0.0)

    def tau_coeffs(self) -> tuple[float, float]:
        """Coefficients (c0, c1) of tau(x) = c0 + c1 x."""
        if self.kind == "jacobi":
            return (self.alpha - self.beta, self.alpha + self.beta + 2.0)
        if self.kind == "laguerre":
            return (-self.alpha - 1.0, 1.0)
        return (0.0, 2.0)

    @property
    def sigma_dd(self) -> float:
        """sigma''(x), a constant."""
        return 2.0 * self.sigma_coeffs()[2]

    @property
    def tau_d(self) -> float:
        """tau'(x), a constant."""
        return self.tau_coeffs()[1]

    def shifted(self, k: int) -> "OPFamily":
        """The family with both parameters raised by k (derivative target)."""
        if self.kind == "jacobi":
            return OPFamily("jacobi", self.alpha + k, self.beta + k)
        if self.kind == "laguerre":
            return OPFamily("laguerre", self.alpha + k)
        return self

    def label(self) -> str:
        if self.kind == "jacobi":
            return f"jacobi({self.alpha:g},{self.beta:g})"
        if self.kind == "laguerre":
            return f"laguerre({self.alpha:g})"
        return "hermite"


def jacobi(alpha: float, beta: float) -> OPFamily:
    return OPFamily("jacobi", float(alpha), float(beta))


def laguerre(alpha: float) -> OPFamily:
    return OPFamily("laguerre", float(alpha))


def hermite() -> OPFamily:
    return OPFamily("hermite")


class RecurrenceCoeffs(NamedTuple):
    """Coefficients of p_{k+1} = (a x + b) p_k - c p_{k-1} at one index."""

    a: float
    b: float
    c: float


def recurrence(family: OPFamily, c: int, n: int) -> RecurrenceCoeffs:
    """Recurrence coefficients (A, B, C) at index n + c.

    With c = 0 this is the classical recurrence; c > 0 gives the associated
    recurrence with all indices offset by c.
    """
    if n < 0 or c < 0:
        raise DomainError("indices must be nonnegative")
    k = n + c
    if family.kind == "jacobi":
        a, b = family.alpha, family.beta
        s = a + b
        if k == 0:
            # The generic formulas are 0/0 at k = 0 when s in {-1, 0}; the
            # algebraic simplification below is exact for every admissible s.
            return RecurrenceCoeffs((s + 2.0) / 2.0, (a - b) / 2.0, 0.0)
        den = 2.0 * (k + 1.0) * (k + s + 1.0)
        A = (2.0 * k + s + 1.0) * (2.0 * k + s + 2.0) / den
        B = (a * a - b * b) * (2.0 * k + s + 1.0) / (den * (2.0 * k + s))
        C = (
            (k + a)
            * (k + b)
            * (2.0 * k + s + 2.0)
            / ((k + 1.0) * (k + s + 1.0) * (2.0 * k + s))
        )
        return RecurrenceCoeffs(A, B, C)
    if family.kind == "laguerre":
        a = family.alpha
        A = -1.0 / (k + 1.0)
        B = (2.0 * k + a + 1.0) / (k + 1.0)
        C = (k + a) / (k + 1.0) if k > 0 else 0.0
        return RecurrenceCoeffs(A, B, C)
    return RecurrenceCoeffs(2.0, 0.0, 2.0 * k)


def classical_eigenvalue(family: OPFamily, n: int) -> float:
    """lambda_n = (n/2)[(n-1) sigma'' + 2 tau']."""
    if n < 0:
        raise DomainError("index must be nonnegative")
    return 0.5 * n * ((n - 1) * family.sigma_dd + 2.0 * family.tau_d)


def log_norm_h(family: OPFamily, n: int) -> float:
    """log of the squared norm h_n = <p_n, p_n>; safe for n up to ~1e5."""
    if n < 0:
        raise DomainError("index must be nonnegative")
    if family.kind == "jacobi":
        a, b = family.alpha, family.beta
        s = a + b
        # h_n = 2^{s+1} G(n+a+1) G(n+b+1) (n+s+1) /
        #       ((2n+s+1) G(n+s+2) n!); all gamma arguments are positive.
        # At n = 0 the ratio (n+s+1)/(2n+s+1) is identically 1 (also in the
        # limit s -> -1, where it would read 0/0).
        ratio = 0.0 if n == 0 else math.log((n + s + 1.0) / (2.0 * n + s + 1.0))
        return (
            (s + 1.0) * math.log(2.0)
            + gammaln(n + a + 1.0)
            + gammaln(n + b + 1.0)
            + ratio
            - gammaln(n + s + 2.0)
            - gammaln(n + 1.0)
        )
    if family.kind == "laguerre":
        return gammaln(n + family.alpha + 1.0) - gammaln(n + 1.0)
    return 0.5 * math.log(math.pi) + n * math.log(2.0) + gammaln(n + 1.0)


def norm_h(family: OPFamily, n: int) -> float:
    """Squared norm h_n = <p_n, p_n> (always positive)."""
    return math.exp(log_norm_h(family, n))


@dataclass(frozen=True)
class QuadSpectrum:
    """The two eigenvalue ladders of the order-c quadratic eigenproblem."""

    family: OPFamily
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise DomainError("association order must be >= 1 for the quadratic problem")

    @property
    def gamma(self) -> float | None:
        """alpha + beta + 2c - 1 for Jacobi; None for the other families."""
        if self.family.kind == "jacobi":
            return self.family.alpha + self.family.beta + 2.0 * self.c - 1.0
        return None

    @property
    def degenerate(self) -> bool:
        """True when the two ladders coincide (c = 1, alpha + beta = -1)."""
        g = self.gamma
        return g is not None and abs(g) <= 1e-12

    def value(self, n: int, sign: int) -> float:
        """lambda_n^{sign} from the factored form of the ladder."""
        if n < 0:
            raise DomainError("index must be nonnegative")
        if sign not in (+1, -1):
            raise DomainError("sign must be +1 or -1")
        sdd = self.family.sigma_dd
        td = self.family.tau_d
        return 0.5 * sign * (n + 1.0) * (
            (2.0 * self.c - 3.0 + sign * (n + 1.0)) * sdd + 2.0 * td
        )

    def value_quadratic(self, n: int, sign: int) -> float:
        """lambda_n^{sign} from the quadratic formula (discriminant route)."""
        if n < 0:
            raise DomainError("index must be nonnegative")
        sdd = self.family.sigma_dd
        td = self.family.tau_d
        lam_cm1 = classical_eigenvalue(self.family, self.c - 1)
        disc = (sdd - 2.0 * td) ** 2 + 8.0 * lam_cm1 * sdd
        return 0.5 * (sdd * (n + 1.0) ** 2 + sign * (n + 1.0) * math.sqrt(disc))

    def interleaved(self, n: int) -> np.ndarray:
        """(lambda_0^-, lambda_0^+, ..., lambda_{n-1}^-, lambda_{n-1}^+)."""
        k = np.arange(n, dtype=float)
        sdd = self.family.sigma_dd
        td = self.family.tau_d
        minus = -0.5 * (k + 1.0) * ((2.0 * self.c - 3.0 - (k + 1.0)) * sdd + 2.0 * td)
        plus = 0.5 * (k + 1.0) * ((2.0 * self.c - 3.0 + (k + 1.0)) * sdd + 2.0 * td)
        out = np.empty(2 * n)
        out[0::2] = minus
        out[1::2] = plus
        return out


def quad_spectrum(spec: QuadSpectrum, n: int, sign: int) -> float:
    """lambda_n^{+-} of the order-c quadratic eigenproblem (sign = +1 or -1)."""
    return spec.value(n, sign)


def eval_sequence(family: OPFamily, c: int, x, N: int) -> np.ndarray:
    """Values p_0(x; c), ..., p_{N-1}(x; c) by forward recurrence.

    ``x`` may be a scalar or an array; the result has shape (N,) + x.shape.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    x = np.asarray(x, dtype=float)
    out = np.empty((N,) + x.shape)
    out[0] = 1.0
    if N == 1:
        return out
    a, b, _ = recurrence(family, c, 0)
    out[1] = a * x + b
    for k in range(1, N - 1):
        a, b, cc = recurrence(family, c, k)
        out[k + 1] = (a * x + b) * out[k] - cc * out[k - 1]
    return out


def clenshaw_eval(family: OPFamily, coeffs, x, c: int = 0):
    """Backward-recurrence (Clenshaw) evaluation of sum_k coeffs[k] p_k(x; c).

    coeffs are in standard normalization. Returns 0 for an empty vector.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    if coeffs.size == 0:
        return np.zeros(x.shape) if x.shape else 0.0
    n = coeffs.size
    u_next = np.zeros(x.shape)
    u_next2 = np.zeros(x.shape)
    for k in range(n - 1, 0, -1):
        a, b, _ = recurrence(family, c, k)
        _, _, c_next = recurrence(family, c, k + 1)
        u = coeffs[k] + (a * x + b) * u_next - c_next * u_next2
        u_next2 = u_next
        u_next = u
    a0, b0, _ = recurrence(family, c, 0)
    _, _, c1 = recurrence(family, c, 1)
    u0 = coeffs[0] + (a0 * x + b0) * u_next - c1 * u_next2
    return float(u0) if u0.shape == () else u0


def leading_coeff_ratios(family: OPFamily, c: int, N: int) -> np.ndarray:
    """Ratios k_n(c)/k_n of leading coefficients for n = 0..N-1.

    k_n is the leading coefficient of p_n and k_n(c) that of the associated
    p_n(.; c); the ratio is prod_{j<n} A_{j+c}/A_j, accumulated in log domain
    (the ratio is positive for every family).
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    j = np.arange(N - 1, dtype=float)

    def log_abs_a(idx):
        if family.kind == "jacobi":
            s = family.alpha + family.beta
            out = np.empty(idx.shape)
            m0 = idx == 0
            out[m0] = math.log((s + 2.0) / 2.0)
            i = idx[~m0]
            out[~m0] = (
                np.log(2.0 * i + s + 1.0)
                + np.log(2.0 * i + s + 2.0)
                - np.log(2.0 * (i + 1.0))
                - np.log(i + s + 1.0)
            )
            return out
        if family.kind == "laguerre":
            return -np.log(idx + 1.0)
        return np.full(idx.shape, math.log(2.0))

    if N == 1:
        return np.ones(1)
    logs = log_abs_a(j + c) - log_abs_a(j)
    out = np.empty(N)
    out[0] = 1.0
    out[1:] = np.exp(np.cumsum(logs))
    return out
