"""Command-line front end.

Subcommands: connect, convert, oracle, hilbert, table2, bench, condition,
dump-ops. Outputs are CSV for tabular data and JSON for matrices, reports
and coefficient vectors. Exit codes: 0 success, 2 usage/domain error,
3 degeneracy, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field


def _cap_threads(argv):
    """Honor --threads before numpy spins up its thread pools."""
    for i, a in enumerate(argv):
        n = None
        if a == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif a.startswith("--threads="):
            n = a.split("=", 1)[1]
        if n is not None:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, str(n))
            break


@dataclass
class RunReport:
    """Summary of one CLI invocation; every number is reproducible from
    the serialized inputs referenced in ``outputs``."""

    command: str
    arguments: dict
    metadata: dict = field(default_factory=dict)
    residual: float | None = None
    condition_estimate: float | None = None
    collisions_refined: int | None = None
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


def _family_from_args(args):
    from .families import hermite, jacobi, laguerre

    if args.family == "jacobi":
        if args.alpha is None or args.beta is None:
            raise SystemExit2("jacobi requires --alpha and --beta")
        return jacobi(args.alpha, args.beta)
    if args.family == "laguerre":
        if args.alpha is None:
            raise SystemExit2("laguerre requires --alpha")
        return laguerre(args.alpha)
    return hermite()


class SystemExit2(Exception):
    pass


def _opts_from_args(args):
    from .dc import SolveOptions

    opts = SolveOptions()
    if getattr(args, "mode", None):
        opts.mode = args.mode
    if getattr(args, "tol", None):
        opts.eps_cauchy = args.tol
    return opts


def _residual_probe(handle, family, c, n, seed=0):
    """Relative quadratic-pencil residual on random probe vectors."""
    import numpy as np

    from .banded import band_matvec
    from .families import QuadSpectrum
    from .ladder import assemble_forced, assemble_qep

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    v = handle.matvec(x)
    if handle.path in ("forced", "degenerate"):
        fs = assemble_forced(family, n)
        lamx = fs.lam * x
        r = band_matvec(fs.A, v) - band_matvec(fs.B, handle.matvec(lamx)) - fs.gamma * x
        scale = fs.A.norm_inf() * np.abs(v).max() + np.abs(fs.gamma * x).max()
    else:
        disc = assemble_qep(family, c, n)
        spec = QuadSpectrum(family, c)
        lam = np.array([spec.value(k, +1) for k in range(n)])
        r = (
            band_matvec(disc.A, v)
            + band_matvec(disc.B, handle.matvec(lam * x))
            - band_matvec(disc.C, handle.matvec(lam * lam * x))
        )
        scale = (disc.A.norm_inf() + disc.C.norm_inf() * lam[-1] ** 2) * max(
            np.abs(v).max(), 1e-300
        )
    return float(np.abs(r).max() / max(scale, 1e-300))


def cmd_connect(args):
    import warnings as _w

    import numpy as np

    from .qep import solve_associated

    family = _family_from_args(args)
    opts = _opts_from_args(args)
    t0 = time.perf_counter()
    caught = []
    with _w.catch_warnings(record=True) as rec:
        _w.simplefilter("always")
        handle = solve_associated(
            family, args.c, args.n, opts,
            normalization=args.normalization, path=args.path,
        )
        caught = [str(w.message) for w in rec]
    build_s = time.perf_counter() - t0
    residual = _residual_probe(handle, family, args.c, args.n, seed=args.seed)
    kappa = handle.condition_estimate()
    report = RunReport(
        command="connect",
        arguments={k: v for k, v in vars(args).items() if k != "func"},
        metadata=handle.meta,
        residual=residual,
        condition_estimate=kappa,
        collisions_refined=handle.meta.get("collisions_refined", 0),
        timings={"build_s": build_s},
        warnings=caught,
    )
    if handle.path == "degenerate":
        report.metadata["note"] = (
            "degenerate parameter line: forcing vanishes, plain pencil path taken"
        )
    if handle.path == "coupled" and kappa > 1e8:
        report.warnings.append(
            f"coupled eigenvector matrix condition estimate {kappa:.2e} > 1e8; "
            "results may be unusable (consider the forced or direct path)"
        )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(handle.to_dict(), fh)
        report.outputs.append(args.out)
    if args.report:
        report.write(args.report)
        report.outputs.append(args.report)
    print(
        f"connect {handle.meta['family']} c={args.c} n={args.n} path={handle.path}: "
        f"residual {residual:.2e}, condition estimate {kappa:.2e}"
    )
    for w in report.warnings:
        print(f"  warning: {w}")
    return 0


def _read_coeffs(path, args):
    import numpy as np

    from .series import Basis, CoeffVector

    if path.endswith(".json"):
        with open(path) as fh:
            return CoeffVector.from_dict(json.load(fh))
    values = np.loadtxt(path, ndmin=1)
    basis = Basis(args.family, args.alpha, args.beta, args.c)
    return CoeffVector(basis, values, args.normalization)


def _write_coeffs(path, cv):
    import numpy as np

    if path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump(cv.to_dict(), fh)
    else:
        np.savetxt(path, cv.values)


def cmd_convert(args):
    from .families import OPFamily
    from .qep import solve_associated
    from .series import (
        Basis,
        CoeffVector,
        chebyshev_to_jacobi,
        classical_connection,
        convert,
    )

    cv = _read_coeffs(args.infile, args)
    if cv.basis.kind == "chebyshev":
        cv = chebyshev_to_jacobi(cv)
    src = cv.basis
    if src.c > 0:
        handle = solve_associated(src.family(), src.c, cv.n, _opts_from_args(args))
        out_vals = handle.matvec(cv.to_standard().values)
        out = CoeffVector(Basis(src.kind, src.alpha, src.beta, 0), out_vals, "standard")
        if cv.normalization == "orthonormal":
            out = out.to_orthonormal()
    else:
        target = OPFamily(
            args.to_family,
            args.to_alpha,
            args.to_beta if args.to_family == "jacobi" else None,
        )
        V = classical_connection(src.family(), target, cv.n, _opts_from_args(args))
        out = convert(cv, V)
    _write_coeffs(args.out, out)
    print(f"convert: {src.label()} -> {out.basis.label()} ({cv.n} coefficients)")
    return 0


def cmd_oracle(args):
    import numpy as np

    from .oracles import (
        first_assoc_legendre_matrix,
        hermite_connection_matrix,
        jacobi_half_connection_matrix,
        ultraspherical_connection_matrix,
    )

    N = args.n
    if args.which == "first-legendre":
        M = first_assoc_legendre_matrix(N)
    elif args.which == "hermite":
        M = hermite_connection_matrix(args.c, N)
    elif args.which == "ultraspherical":
        M = ultraspherical_connection_matrix(args.alpha, args.c, N)
    else:
        M = jacobi_half_connection_matrix(args.alpha, args.c, N)
    np.savetxt(args.out if args.out else sys.stdout, M, delimiter=",")
    if args.out:
        print(f"oracle {args.which}: wrote {N}x{N} grid to {args.out}")
    return 0


def cmd_hilbert(args):
    import numpy as np

    from .hilbert import hasegawa_torii, hilbert_legendre, pv_hilbert_oracle, uniform_chebU_moments
    from .families import clenshaw_eval, jacobi
    from .qep import solve_associated
    from .series import Basis, CoeffVector, chebyshev_to_jacobi, classical_connection, convert

    cv = _read_coeffs(args.infile, args)
    if args.points_file:
        pts = np.loadtxt(args.points_file, ndmin=1)
    else:
        pts = np.linspace(-1 + 1e-3, 1 - 1e-3, args.points)
    n = cv.n
    if args.route == "toeplitz":
        if cv.basis.kind != "chebyshev":
            raise SystemExit2("the toeplitz route expects chebyshev coefficients")
        vals = hasegawa_torii(cv, uniform_chebU_moments(max(n - 1, 1)), pts)
    else:
        if cv.basis.kind == "chebyshev":
            V = classical_connection(jacobi(-0.5, -0.5), jacobi(0.0, 0.0), n)
            cv = convert(chebyshev_to_jacobi(cv), V)
        b = cv.basis
        if not (b.kind == "jacobi" and b.alpha == 0.0 and b.beta == 0.0 and b.c == 0):
            raise SystemExit2("hilbert synthesis expects legendre or chebyshev input")
        if args.route == "oracle":
            c = cv.to_standard().values
            leg = jacobi(0.0, 0.0)
            vals = np.array(
                [pv_hilbert_oracle(lambda t: clenshaw_eval(leg, c, t), x) for x in pts]
            )
        else:
            V1 = solve_associated(jacobi(0.0, 0.0), 1, max(n - 1, 4), _opts_from_args(args))
            vals = hilbert_legendre(cv, V1, pts)
    out = np.column_stack([pts, vals])
    np.savetxt(args.out if args.out else sys.stdout, out, delimiter=",", header="x,hilbert")
    if args.out:
        print(f"hilbert route={args.route}: wrote {len(pts)} points to {args.out}")
    return 0


def sigma_min_inverse_iteration(V, tol=1e-13, maxiter=200, seed=7):
    """Smallest singular value by inverse power iteration on V^T V."""
    import numpy as np

    from .errors import NumericalError

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(V.n)
    x /= np.linalg.norm(x)
    theta_old = 0.0
    for it in range(maxiter):
        y = V.solve(V.tsolve(x))
        theta = float(np.linalg.norm(y))
        x = y / theta
        if abs(theta - theta_old) <= tol * theta:
            return 1.0 / np.sqrt(theta), it + 1
        theta_old = theta
    raise NumericalError(f"inverse iteration did not converge in {maxiter} steps")


def cmd_table2(args):
    import numpy as np

    from .families import jacobi
    from .qep import solve_associated

    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    for n in sizes:
        t0 = time.perf_counter()
        V = solve_associated(jacobi(0.0, 0.0), 1, n, _opts_from_args(args))
        s, iters = sigma_min_inverse_iteration(V, seed=args.seed)
        dt = time.perf_counter() - t0
        svd_check = ""
        if n <= 512:
            svd_check = f"{np.linalg.svd(V.todense(), compute_uv=False)[-1]:.16f}"
        rows.append((n, f"{s:.16f}", iters, f"{dt:.3f}", svd_check))
        print(f"table2 n={n}: sigma_min={s:.16f} ({iters} iterations, {dt:.2f}s)")
    _write_csv(args.out, "n,sigma_min,iterations,seconds,dense_svd_check", rows)
    return 0


def _write_csv(path, header, rows):
    lines = [header] + [",".join(str(x) for x in r) for r in rows]
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cold_matvec_time(V, c, scratch):
    import time as _t

    scratch += 1.0  # evict the structure so every size streams from memory
    best = None
    for _ in range(2):
        t0 = _t.perf_counter()
        V.matvec(c)
        dt = _t.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    return best


def cmd_bench(args):
    import numpy as np

    from .families import jacobi
    from .oracles import first_assoc_legendre_matrix
    from .qep import solve_associated

    sizes = [int(s) for s in args.sizes.split(",")]
    reps = args.reps
    scratch = np.empty(16 * 1024 * 1024)  # 128 MB eviction buffer
    rows = []
    for n in sizes:
        t0 = time.perf_counter()
        V = solve_associated(jacobi(0.0, 0.0), 1, n, _opts_from_args(args))
        build_s = time.perf_counter() - t0
        c = (1.0 + np.arange(n)) ** -1.0
        V.matvec(c)
        t_double = float(np.median([_cold_matvec_time(V, c, scratch) for _ in range(reps)]))
        y_double = V.matvec(c)
        # error relative to the closed-form connection, in chunks to cap memory
        err_double = _formula_matvec_error(y_double, c, n)
        V32 = solve_associated(jacobi(0.0, 0.0), 1, n, _opts_from_args(args))
        V32.impl.cast(np.float32) if hasattr(V32.impl, "cast") else None
        c32 = c.astype(np.float32)
        V32.matvec(c32)
        t_single = float(np.median([_cold_matvec_time(V32, c32, scratch) for _ in range(reps)]))
        err_single = _formula_matvec_error(V32.matvec(c32).astype(float), c, n)
        rows.append(
            (n, f"{build_s:.4f}", f"{t_double:.6f}", f"{t_single:.6f}",
             f"{err_double:.3e}", f"{err_single:.3e}")
        )
        print(
            f"bench n={n}: build {build_s:.2f}s, matvec {t_double*1e3:.2f}ms (double) "
            f"{t_single*1e3:.2f}ms (single), rel2 err {err_double:.1e}/{err_single:.1e}"
        )
    for i in range(1, len(rows)):
        if sizes[i] == 2 * sizes[i - 1]:
            r = float(rows[i][2]) / float(rows[i - 1][2])
            print(f"  ratio t({sizes[i]})/t({sizes[i-1]}) = {r:.2f}")
    _write_csv(
        args.out,
        "n,build_s,matvec_s_double,matvec_s_single,rel2_err_double,rel2_err_single",
        rows,
    )
    return 0


def _formula_matvec_error(y, c, n, chunk=2048):
    import numpy as np

    acc = np.zeros_like(y)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        ls = np.arange(lo, hi, dtype=float)[:, None]
        ms = np.arange(n, dtype=float)[None, :]
        mask = (ms >= ls) & ((ms - ls) % 2 == 0)
        den = np.where(mask, (ms - ls + 1.0) * (ms + ls + 2.0), 1.0)
        block = np.where(mask, 2.0 * (2.0 * ls + 1.0) / den, 0.0)
        acc[lo:hi] = block @ c
    return float(np.linalg.norm(y - acc) / np.linalg.norm(acc))


def cmd_condition(args):
    import numpy as np

    from .families import hermite, jacobi, laguerre
    from .qep import solve_associated, solve_coupled
    from .dc import SolveOptions

    sizes = [int(s) for s in args.sizes.split(",")]
    fams = []
    for tag in args.families.split(","):
        parts = tag.split(":")
        if parts[0] == "legendre":
            fams.append(("legendre", jacobi(0.0, 0.0)))
        elif parts[0] == "jacobi":
            fams.append((tag, jacobi(float(parts[1]), float(parts[2]))))
        elif parts[0] == "laguerre":
            fams.append((tag, laguerre(float(parts[1]))))
        else:
            fams.append(("hermite", hermite()))
    rows = []
    for label, fam in fams:
        for n in sizes:
            V = solve_associated(fam, 1, n, _opts_from_args(args))
            if n <= 1024:
                Vd = V.todense()
                sh = np.exp([0.5 * _lognorm(fam, k) for k in range(n)])
                sh1 = np.exp([0.5 * _lognorm(fam, k + 1) for k in range(n)])
                Vtilde = sh[:, None] * Vd / sh1[None, :]
                kappa_unc = float(np.linalg.cond(Vtilde))
                est_unc = (
                    kappa_unc if V.path == "direct" else V.condition_estimate()
                )
            else:
                kappa_unc = float("nan")
                est_unc = V.condition_estimate()
            try:
                C = solve_coupled(fam, 1, n, SolveOptions(mode="dense" if n <= 1024 else "auto"),
                                  normalization="orthonormal")
                kappa_cpl = (
                    float(np.linalg.cond(C.coupled_dense())) if n <= 1024 else float("nan")
                )
                est_cpl = C.coupled_condition_estimate()
            except Exception:
                kappa_cpl, est_cpl = float("nan"), float("nan")
            rows.append(
                (label, n, f"{kappa_unc:.6e}", f"{est_unc:.6e}", f"{kappa_cpl:.6e}",
                 f"{est_cpl:.6e}")
            )
            print(
                f"condition {label} n={n}: uncoupled {kappa_unc:.3e} (bound {est_unc:.3e}), "
                f"coupled {kappa_cpl:.3e} (bound {est_cpl:.3e})"
            )
    _write_csv(
        args.out,
        "family,n,kappa2_uncoupled_orthonormal,bound_uncoupled,kappa2_coupled_orthonormal,bound_coupled",
        rows,
    )
    return 0


def _lognorm(fam, k):
    from .families import log_norm_h

    return log_norm_h(fam, k)


def cmd_dump_ops(args):
    from .ladder import assemble_forced, assemble_qep

    family = _family_from_args(args)
    written = []
    if args.which == "qep":
        disc = assemble_qep(family, args.c, args.n)
        for name, M in (("A", disc.A), ("B", disc.B), ("C", disc.C)):
            path = f"{args.out}-{name}.json"
            with open(path, "w") as fh:
                fh.write(M.to_json())
            written.append(path)
    else:
        fs = assemble_forced(family, args.n)
        for name, M in (("A", fs.A), ("B", fs.B)):
            path = f"{args.out}-{name}.json"
            with open(path, "w") as fh:
                fh.write(M.to_json())
            written.append(path)
        path = f"{args.out}-diag.json"
        with open(path, "w") as fh:
            json.dump(
                {"gamma": fs.gamma.tolist(), "lambda": fs.lam.tolist(),
                 "omega": fs.omega.tolist()}, fh,
            )
        written.append(path)
    print("dump-ops wrote: " + ", ".join(written))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="assocpoly",
        description="Associated classical orthogonal polynomial connections, "
        "series transforms, and Hilbert transform synthesis.",
    )
    p.add_argument("--threads", type=int, default=None, help="cap BLAS thread count")
    sub = p.add_subparsers(dest="command", required=True)

    def add_family(sp):
        sp.add_argument("--family", choices=["jacobi", "laguerre", "hermite"], required=True)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--beta", type=float, default=None)

    def add_common(sp):
        sp.add_argument("--mode", choices=["dense", "hier", "auto"], default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("connect", help="build an associated->classical connection")
    add_family(sp)
    sp.add_argument("-c", type=int, required=True, dest="c")
    sp.add_argument("-n", type=int, required=True, dest="n")
    sp.add_argument("--normalization", choices=["auto", "standard", "orthonormal"], default="auto")
    sp.add_argument("--path", choices=["auto", "coupled", "forced", "degenerate", "direct"], default="auto")
    sp.add_argument("--report", default=None)
    add_common(sp)
    sp.set_defaults(func=cmd_connect)

    sp = sub.add_parser("convert", help="convert a coefficient file between bases")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--family", choices=["jacobi", "laguerre", "hermite", "chebyshev"], default="chebyshev")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("-c", type=int, default=0, dest="c")
    sp.add_argument("--normalization", choices=["standard", "orthonormal"], default="standard")
    sp.add_argument("--to-family", choices=["jacobi", "laguerre", "hermite"], default="jacobi")
    sp.add_argument("--to-alpha", type=float, default=0.0)
    sp.add_argument("--to-beta", type=float, default=0.0)
    add_common(sp)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("oracle", help="closed-form connection coefficient grids")
    sp.add_argument("--which", choices=["jacobi-half", "ultraspherical", "hermite", "first-legendre"], required=True)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("-c", type=int, default=1, dest="c")
    sp.add_argument("-n", type=int, required=True, dest="n")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("hilbert", help="Hilbert transform of an expansion")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--family", choices=["jacobi", "chebyshev"], default="chebyshev")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("-c", type=int, default=0, dest="c")
    sp.add_argument("--normalization", choices=["standard", "orthonormal"], default="standard")
    sp.add_argument("--points", type=int, default=100)
    sp.add_argument("--points-file", default=None)
    sp.add_argument("--route", choices=["assoc", "toeplitz", "oracle"], default="assoc")
    add_common(sp)
    sp.set_defaults(func=cmd_hilbert)

    sp = sub.add_parser("table2", help="least singular value of the first associated Legendre connection")
    sp.add_argument("--sizes", default="4,8,16,32,64,128,256,512")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--mode", choices=["dense", "hier", "auto"], default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_table2)

    sp = sub.add_parser("bench", help="build/matvec scaling benchmark")
    sp.add_argument("--sizes", default="4096,8192,16384")
    sp.add_argument("--reps", type=int, default=5)
    sp.add_argument("--mode", choices=["dense", "hier", "auto"], default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("condition", help="condition number telemetry")
    sp.add_argument("--families", default="legendre,jacobi:0.5:0.5,laguerre:0,hermite")
    sp.add_argument("--sizes", default="32,64,128,256")
    sp.add_argument("--mode", choices=["dense", "hier", "auto"], default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_condition)

    sp = sub.add_parser("dump-ops", help="write assembled operator band matrices")
    add_family(sp)
    sp.add_argument("-c", type=int, default=1, dest="c")
    sp.add_argument("-n", type=int, required=True, dest="n")
    sp.add_argument("--which", choices=["qep", "forced"], default="qep")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_dump_ops)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    _cap_threads(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    from .errors import (
        ConfigurationError,
        DegeneracyError,
        DomainError,
        NumericalError,
        RefinementError,
        SingularityError,
    )

    try:
        return args.func(args)
    except (DomainError, SystemExit2, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DegeneracyError as e:
        print(f"degeneracy: {e}", file=sys.stderr)
        print(
            "hint: on the degenerate parameter line the forcing vanishes; "
            "rerun with --path forced (or let --path auto pick the degenerate solver)",
            file=sys.stderr,
        )
        return 3
    except (NumericalError, RefinementError, SingularityError, ConfigurationError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
