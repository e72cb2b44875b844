"""Weighted Hilbert transforms of polynomial expansions on [-1, 1].

The principal-value integral is cleaved into a smooth divided-difference
part and the Hilbert transform of the measure itself:

    H{f}(x) = (1/pi) int (f(t) - f(x))/(t - x) dmu(t)
            + f(x) * (1/pi) pv-int dmu(t)/(t - x),

and for an expansion f = sum_k c_k p_k the divided differences synthesize
through the first associated polynomials:

    H{f}(x) = (A_0 mu(D)/pi) sum_{k=0}^{n-2} c_{k+1} p_k(x; 1)
            + f(x) * H{mu}(x).

For the uniform measure on [-1, 1] (Legendre route) A_0 mu(D) = 2 and
H{mu}(x) = (1/pi) ln((1-x)/(1+x)). The alternative route expands f in
Chebyshev T and folds the divided-difference kernel into an
upper-triangular Toeplitz convolution against the second-kind moments
w_j = int U_j w dt. An adaptive principal-value quadrature is included as
the (slow) reference oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .errors import DomainError
from .families import eval_sequence, jacobi
from .series import Basis, CoeffVector, chebyshev_synthesize

__all__ = [
    "MeasureHilbert",
    "hilbert_uniform_measure",
    "uniform_measure",
    "uniform_chebU_moments",
    "hilbert_legendre",
    "hasegawa_torii",
    "elliott_kernel_check",
    "pv_hilbert_oracle",
]

_EDGE = 1e-8  # points this close to +-1 sit on the log singularity


def hilbert_uniform_measure(x):
    """(1/pi) pv-int_{-1}^{1} dt/(t - x) = (1/pi) ln((1-x)/(1+x)), |x| < 1."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= 1.0 - _EDGE):
        raise DomainError("evaluation points must satisfy |x| < 1 - 1e-8")
    out = (np.log1p(-x) - np.log1p(x)) / math.pi
    return float(out) if out.shape == () else out


@dataclass
class MeasureHilbert:
    """A measure's principal-value transform and second-kind moments."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    moments: np.ndarray


def uniform_chebU_moments(n: int) -> np.ndarray:
    """Moments int_{-1}^1 U_j(t) dt = 2/(j+1) for even j, else 0; j < n."""
    j = np.arange(n, dtype=float)
    return np.where(j % 2 == 0, 2.0 / (j + 1.0), 0.0)


def uniform_measure(n_moments: int) -> MeasureHilbert:
    return MeasureHilbert(hilbert_uniform_measure, uniform_chebU_moments(n_moments))


def hilbert_legendre(coeffs: CoeffVector, V1, points) -> np.ndarray:
    """Hilbert transform of a Legendre expansion through the associated route.

    ``V1`` is a first-associated-Legendre connection handle (or any object
    with a matvec mapping associated coefficients to Legendre ones) built
    for size >= len(coeffs) - 1. Points must lie strictly inside (-1, 1).
    """
    b = coeffs.basis
    if not (b.kind == "jacobi" and b.alpha == 0.0 and b.beta == 0.0 and b.c == 0):
        raise DomainError("the associated route expects Legendre coefficients")
    c = coeffs.to_standard().values
    x = np.asarray(points, dtype=float)
    n = c.size
    fx = _legendre_synth(c, x)
    out = fx * hilbert_uniform_measure(x)
    if n >= 2:
        shifted = c[1:]
        sz = getattr(V1, "n", shifted.size)
        if sz < shifted.size:
            raise DomainError("V1 is smaller than the shifted coefficient vector")
        if sz > shifted.size:
            shifted = np.concatenate([shifted, np.zeros(sz - shifted.size)])
        d = V1.matvec(shifted)[: n - 1]
        out = out + (2.0 / math.pi) * _legendre_synth(d, x)
    return out


def _legendre_synth(c, x):
    leg = jacobi(0.0, 0.0)
    vals = eval_sequence(leg, 0, x, c.size)
    return np.tensordot(c, vals, axes=(0, 0))


def hasegawa_torii(cheb: CoeffVector, w_moments, points, measure_pv=None) -> np.ndarray:
    """Hilbert transform via the Chebyshev/Toeplitz route.

    g_j = sum_{k >= j} c_{k+1} w_{k-j} is an upper-triangular Toeplitz
    product evaluated by FFT correlation; the result is the Chebyshev series
    (g_0 + 2 sum_{j>=1} g_j T_j)/pi plus the cleaved f(x) * H{mu}(x) term.
    ``w_moments`` must cover indices 0..n-2.
    """
    if cheb.basis.kind != "chebyshev":
        raise DomainError("the Toeplitz route expects Chebyshev-T coefficients")
    c = cheb.to_standard().values if cheb.normalization != "standard" else cheb.values
    n = c.size
    w = np.asarray(w_moments, dtype=float)
    if n >= 2 and w.size < n - 1:
        raise DomainError(f"moment vector too short: need {n - 1}, got {w.size}")
    x = np.asarray(points, dtype=float)
    pv = measure_pv if measure_pv is not None else hilbert_uniform_measure
    fx = chebyshev_synthesize(cheb, x)
    out = fx * pv(x)
    if n >= 2:
        cp = c[1:]
        w = w[: n - 1]
        # g_j = sum_m w_m cp_{j+m}: correlation via FFT convolution
        g = fftconvolve(cp, w[::-1])[n - 2 : 2 * n - 3]
        series = np.concatenate([[g[0]], 2.0 * g[1:]]) / math.pi
        out = out + chebyshev_synthesize(
            CoeffVector(Basis("chebyshev"), series, "standard"), x
        )
    return out


def elliott_kernel_check(k: int, t: float, x: float) -> float:
    """Residual of the divided-difference kernel identity for T_{k+1}.

    (T_{k+1}(x) - T_{k+1}(t))/(x - t) = U_k(t) + 2 sum_{j=1}^k U_{k-j}(t) T_j(x);
    at x == t the left side is the derivative (k+1) U_k(x).
    """
    if abs(t) > 1.0 or abs(x) > 1.0:
        raise DomainError("|t|, |x| must be <= 1")
    U = _chebU_values(t, k + 1)
    T = _chebT_values(x, k + 2)
    rhs = U[k] + 2.0 * sum(U[k - j] * T[j] for j in range(1, k + 1))
    if x == t:
        lhs = (k + 1.0) * _chebU_values(x, k + 1)[k]
    else:
        Tt = _chebT_values(t, k + 2)
        lhs = (T[k + 1] - Tt[k + 1]) / (x - t)
    return float(abs(lhs - rhs))


def _chebT_values(x, count):
    vals = [1.0, x]
    while len(vals) < count:
        vals.append(2.0 * x * vals[-1] - vals[-2])
    return vals[:count]


def _chebU_values(x, count):
    vals = [1.0, 2.0 * x]
    while len(vals) < count:
        vals.append(2.0 * x * vals[-1] - vals[-2])
    return vals[:count]


def pv_hilbert_oracle(f: Callable, x: float, tol: float = 1e-10, fprime=None) -> float:
    """Adaptive principal-value quadrature reference for the uniform measure.

    Subtracts the singularity: integrates (f(t) - f(x))/(t - x) adaptively
    (the integrand is smooth; near t = x it evaluates f' by a symmetric
    difference unless ``fprime`` is supplied) and adds f(x) H{mu}(x).
    """
    if abs(x) >= 1.0 - _EDGE:
        raise DomainError("oracle points must satisfy |x| < 1 - 1e-8")
    fx = f(x)

    def integrand(t):
        d = t - x
        if abs(d) < 1e-7:
            if fprime is not None:
                return fprime(x + 0.5 * d)
            h = 1e-5
            return (f(x + d + h) - f(x + d - h)) / (2.0 * h)
        return (f(t) - fx) / d

    val, _ = quad(
        integrand, -1.0, 1.0, points=[x], limit=800, epsabs=tol, epsrel=tol
    )
    return val / math.pi + fx * hilbert_uniform_measure(x)
