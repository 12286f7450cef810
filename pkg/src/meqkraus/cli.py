"""Command-line entry point.

Exit codes: 0 success, 1 bad input, 2 property violation (CP or exactness
requested but not met), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_basis
from .fileio import (
    ChannelFile,
    InputError,
    encode_real,
    encode_complex,
    read_channel_file,
    report_dict,
    write_channel_file,
    write_json,
)
from .generators import generator_to_matrix
from .propagator import IntegrationError, TimeDependentGeneratorError, TimeGrid, Trajectory, propagate
from .recovery import (
    DIVERGENCE_CEILING,
    RANK_TOL,
    RES_TOL,
    PhiDotUndefined,
    admissible_family_basis,
    best_possible_diagnostics,
    generator_to_choi_R,
    recover_generator,
)
from .superop import (
    DEFAULT_TOL,
    choi_to_kraus,
    hs_norm,
    intermediate_map,
    is_completely_positive,
    kraus_to_transfer,
    transfer_to_choi,
)

log = logging.getLogger("meqkraus")

EXIT_OK, EXIT_INPUT, EXIT_PROPERTY, EXIT_NUMERIC = 0, 1, 2, 3


def _pmap(func, items):
    workers = int(os.environ.get("MEQKRAUS_THREADS", "1") or 1)
    if workers <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _grid_from(args, cf: ChannelFile) -> TimeGrid:
    tg = cf.time_grid
    t0 = tg[0] if tg else 0.0
    t_final = args.t_final if args.t_final is not None else (tg[-1] if len(tg) > 1 else None)
    steps = args.steps if args.steps is not None else (len(tg) - 1 if len(tg) > 1 else None)
    if t_final is None or steps is None:
        raise InputError("--t-final and --steps are required when the input has no time_grid")
    return TimeGrid(t0, t_final, steps)


def _trajectory_of(cf: ChannelFile, args) -> tuple[Trajectory, np.ndarray | None]:
    """Transfer matrices for any payload; also L(t) for generator payloads."""
    if cf.payload_kind == "F_sequence":
        return Trajectory(cf.time_grid, cf.transfer_matrices()), None
    if cf.payload_kind == "kraus_sequence":
        basis = build_basis(cf.n)
        F = _pmap(lambda K: kraus_to_transfer(K, basis), cf.kraus_decompositions())
        return Trajectory(cf.time_grid, F), None
    if cf.payload_kind == "choi_sequence":
        from .superop import choi_to_transfer

        basis = build_basis(cf.n)
        F = _pmap(lambda S: choi_to_transfer(S, basis), cf.choi_matrices())
        return Trajectory(cf.time_grid, F), None
    spec = cf.generator()
    grid = _grid_from(args, cf)
    basis = build_basis(cf.n)
    traj = propagate(spec, grid, args.method, basis)
    L = np.array([generator_to_matrix(spec, basis, t) for t in traj.times])
    return traj, L


def _choi_record(F, tol):
    S = transfer_to_choi(F)
    cp, lam_min = is_completely_positive(S, tol)
    K = choi_to_kraus(S, tol)
    return S, K, cp, lam_min


def cmd_meq2kraus(args) -> int:
    cf = read_channel_file(args.input)
    if cf.payload_kind != "generator_spec":
        raise InputError("meq2kraus expects a generator_spec payload")
    traj, L = _trajectory_of(cf, args)
    rows = _pmap(lambda F: _choi_record(F, args.tol), list(traj.F))
    times = traj.times.tolist()
    meta = {"method": traj.method, "tol": args.tol, "source": str(args.input), "version": __version__}

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    emit = {"kraus", "choi", "transfer"} if args.emit == "all" else {args.emit}
    if "transfer" in emit:
        write_channel_file(ChannelFile.from_transfer(times, traj.F, meta), out / "transfer.json")
    if "kraus" in emit:
        write_channel_file(ChannelFile.from_kraus(times, [r[1] for r in rows], meta), out / "kraus.json")
    if "choi" in emit:
        write_channel_file(ChannelFile.from_choi(times, [r[0] for r in rows], meta), out / "choi.json")

    records = []
    for t, F, Lt, (S, K, cp, lam_min) in zip(times, traj.F, L, rows):
        rank = np.linalg.matrix_rank(F, tol=RANK_TOL * max(np.linalg.norm(F, 2), 1e-300))
        records.append(
            {
                "t": t,
                "branch": "forward",
                "residual": None,
                "norm_L": _finite(hs_norm(Lt)),
                "kernel_dim": int(F.shape[0] - rank),
                "cp": bool(cp),
                "min_choi_eigenvalue": _finite(lam_min),
                "kraus_rank": len(K),
                "epsilon_signs": K.signs,
            }
        )
    all_cp = all(r["cp"] for r in records)
    first_bad = next((r["t"] for r in records if not r["cp"]), None)
    summary = {"exactness": True, "first_violation_time": first_bad, "max_residual": 0.0, "completely_positive": all_cp}
    write_json(report_dict(records, summary, meta), out / "report.json")
    for r in records:
        if not r["cp"]:
            log.warning("t=%g: map is not completely positive (min eigenvalue %.3e)", r["t"], r["min_choi_eigenvalue"])
    return EXIT_PROPERTY if args.require_cp and not all_cp else EXIT_OK


def cmd_map2meq(args) -> int:
    cf = read_channel_file(args.input)
    if cf.payload_kind not in ("F_sequence", "kraus_sequence", "choi_sequence"):
        raise InputError("map2meq expects an F_sequence or kraus_sequence payload")
    traj, _ = _trajectory_of(cf, args)
    if len(traj) < 3:
        raise InputError("need at least 3 time points to differentiate the map")
    result = recover_generator(traj, rank_tol=args.rank_tol, res_tol=args.res_tol)
    diag = best_possible_diagnostics(traj, result.Fdot, result, args.ceiling)
    basis = build_basis(cf.n)
    Rs = [generator_to_choi_R(L, basis)[0] for L in result.L]
    times = traj.times.tolist()
    meta = {
        "rank_tol": args.rank_tol,
        "res_tol": args.res_tol,
        "ceiling": args.ceiling,
        "source": str(args.input),
        "version": __version__,
    }

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    spec = {
        "type": "tabulated",
        "times": times,
        "L_sequence": [encode_real(L) for L in result.L],
        "R_sequence": [encode_complex(R) for R in Rs],
    }
    write_channel_file(ChannelFile(cf.n, times, "generator_spec", spec, meta), out / "generator.json")

    if args.emit_family:
        family = [
            {"t": t, "basis": [encode_real(M) for M in admissible_family_basis(F, args.rank_tol)]}
            for t, F in zip(times, traj.F)
        ]
        write_json({"format_version": "1", "admissible_M": family, "metadata": {k: str(v) for k, v in meta.items()}}, out / "family.json")

    records = []
    for i, t in enumerate(times):
        _, K, cp, lam_min = _choi_record(traj.F[i], DEFAULT_TOL)
        records.append(
            {
                "t": t,
                "branch": result.branch[i],
                "residual": _finite(result.residual[i]),
                "norm_L": _finite(diag[i].norm_L),
                "diverging": diag[i].diverging,
                "kernel_dim": int(result.report.kernel_dim[i]),
                "cp": bool(cp),
                "min_choi_eigenvalue": _finite(lam_min),
                "kraus_rank": len(K),
                "epsilon_signs": K.signs,
            }
        )
    summary = {
        "exactness": result.exact,
        "label": result.label,
        "first_violation_time": result.report.first_violation_time,
        "max_residual": _finite(np.max(result.residual)),
        "condition1_holds": result.report.condition1_holds,
        "condition2_holds": result.report.condition2_holds,
        "kernel_monotone": result.report.kernel_monotone,
    }
    write_json(report_dict(records, summary, meta), out / "report.json")
    if not result.exact:
        log.warning("no exact time-local master equation; wrote the best-possible generator")
    return EXIT_PROPERTY if args.require_exact and not result.exact else EXIT_OK


def cmd_check_cp(args) -> int:
    cf = read_channel_file(args.input)
    traj, _ = _trajectory_of(cf, args)
    F = traj.F
    times = traj.times
    if args.intermediate:
        F = np.array([intermediate_map(F[i + 1], F[i]).F for i in range(len(F) - 1)])
        times = times[1:]
    ok = True
    for t, Fi in zip(times, F):
        cp, lam_min = is_completely_positive(transfer_to_choi(Fi), args.tol)
        ok &= cp
        print(f"{t:.10g}\t{lam_min:.6e}\t{'CP' if cp else 'NOT-CP'}")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_propagate(args) -> int:
    cf = read_channel_file(args.input)
    if cf.payload_kind != "generator_spec":
        raise InputError("propagate expects a generator_spec payload")
    traj, _ = _trajectory_of(cf, args)
    meta = {"method": traj.method, "source": str(args.input), "version": __version__}
    write_channel_file(ChannelFile.from_transfer(traj.times.tolist(), traj.F, meta), args.output)
    return EXIT_OK


def _add_grid_flags(p):
    p.add_argument("--t-final", type=float, default=None, help="final time (default: from input time_grid)")
    p.add_argument("--steps", type=int, default=None, help="number of uniform steps")
    p.add_argument("--method", default="magnus2", choices=["exact-expm", "magnus2", "rk4", "exact_expm"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meqkraus", description="Convert between master equations, evolution maps and Kraus decompositions.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meq2kraus", help="master equation -> transfer/Choi/Kraus sequence")
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="Kraus truncation / CP tolerance")
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--emit", choices=["kraus", "choi", "transfer", "all"], default="all")
    p.add_argument("--require-cp", action="store_true", help="exit 2 if any map is not CP")
    p.set_defaults(func=cmd_meq2kraus)

    p = sub.add_parser("map2meq", help="evolution map sequence -> (best-possible) generator")
    p.add_argument("input")
    p.add_argument("--rank-tol", type=float, default=RANK_TOL)
    p.add_argument("--res-tol", type=float, default=RES_TOL)
    p.add_argument("--ceiling", type=float, default=DIVERGENCE_CEILING, help="||L|| above which a point is flagged diverging")
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--emit-family", action="store_true", help="also dump a basis of admissible M matrices")
    p.add_argument("--require-exact", action="store_true", help="exit 2 if no exact master equation exists")
    p.set_defaults(func=cmd_map2meq)

    p = sub.add_parser("check-cp", help="minimum Choi eigenvalue per time point")
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--intermediate", action="store_true", help="check maps between consecutive time points")
    p.set_defaults(func=cmd_check_cp)

    p = sub.add_parser("propagate", help="master equation -> transfer-matrix sequence")
    p.add_argument("input")
    _add_grid_flags(p)
    p.add_argument("--output", "-o", required=True, help="output file")
    p.set_defaults(func=cmd_propagate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except PhiDotUndefined as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IntegrationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, TimeDependentGeneratorError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
