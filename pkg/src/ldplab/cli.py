"""Batch command-line front end.

One entry point with subcommands: sample, density, rate, project, compare,
verify, dickey, clt.  Samples and clouds go to CSV (one row per draw,
row-major, full 17-digit precision) with a JSON sidecar echoing the
configuration and the build id; reports go to JSON.  Every command is
deterministic given its arguments and seed.

Exit codes: 0 ok, 2 usage or malformed input, 3 numerical failure,
4 infeasible experiment.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys

import numpy as np

from . import __version__
from .configurations import PointConfiguration
from .densities import (
    log_corner_density,
    log_inverted_t_density,
    log_p_gaussian_density,
    log_pth_power_density,
    log_wishart_density,
    sigma_p_squared,
)
from .errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleExperiment,
    LdpLabError,
    NumericalFailure,
)
from .linalg import ColumnList, SymmetricPSD, as_matrix
from .projections import (
    ProjectedLaw,
    RademacherLaw,
    _project_lp_ball_gen,
    _project_product_gen,
    compare_ball_vs_product,
    sample_projected_law,
)
from .rates import rate_truncated
from .samplers import (
    PGaussianParams,
    SeededRng,
    lp_ball_batch,
    p_gaussian_batch,
    stiefel_batch,
)
from .verify import LdpExperiment, run_clt_check, run_dickey_check, run_ldp_configuration, run_ldp_corner


def _build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except Exception:
        pass
    return f"ldplab-{__version__}"


def _write_csv(path: str, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def _read_csv(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)


def _write_sidecar(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("schema_version", 1)
    payload["build_id"] = _build_id()
    with open(path + ".json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "+inf" if value > 0 else "-inf"
    return value


def _parse_p(text: str) -> float:
    if text in ("inf", "Inf", "INF", "infinity"):
        return math.inf
    return float(text)


def _usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _cmd_sample(args) -> int:
    rng = SeededRng(args.seed, args.stream)
    gen = rng.generator()
    if args.count < 1:
        return _usage("count must be >= 1")
    if args.dist == "stiefel":
        if args.k is None or args.n is None:
            return _usage("stiefel requires --k and --n")
        if args.k > args.n:
            return _usage("k must be <= n")
        draws = stiefel_batch(gen, args.k, args.n, args.count)
        shape = [args.k, args.n]
    elif args.dist == "orthogonal":
        if args.n is None:
            return _usage("orthogonal requires --n")
        draws = stiefel_batch(gen, args.n, args.n, args.count)
        shape = [args.n, args.n]
    elif args.dist == "wishart":
        if args.k is None or args.n is None:
            return _usage("wishart requires --k and --n")
        if args.n < args.k:
            return _usage("wishart requires n >= k")
        g = gen.standard_normal((args.count, args.k, args.n))
        draws = np.einsum("bkn,bln->bkl", g, g)
        shape = [args.k, args.k]
    elif args.dist == "pgaussian":
        if args.p is None:
            return _usage("pgaussian requires --p")
        width = args.n or 1
        PGaussianParams(args.p)
        draws = p_gaussian_batch(gen, args.p, (args.count, 1, width))
        shape = [1, width]
    elif args.dist == "lpball":
        if args.p is None or args.n is None:
            return _usage("lpball requires --p and --n")
        if math.isinf(args.p):
            return _usage("lpball requires finite p")
        scale = args.scale if args.scale is not None else args.n ** (1.0 / args.p)
        draws = lp_ball_batch(gen, args.p, args.n, scale, args.count)[:, None, :]
        shape = [1, args.n]
    else:  # pragma: no cover - argparse restricts choices
        return _usage(f"unknown distribution {args.dist}")

    rows = draws.reshape(args.count, -1)
    _write_csv(args.out, rows)
    _write_sidecar(args.out, {
        "command": "sample",
        "dist": args.dist,
        "k": args.k,
        "n": args.n,
        "p": _json_safe(args.p) if args.p is not None else None,
        "scale": args.scale,
        "count": args.count,
        "seed": args.seed,
        "stream": args.stream,
        "row_shape": shape,
    })
    print(f"wrote {args.count} rows to {args.out}")
    return 0


def _load_matrix(args) -> np.ndarray:
    sources = [s for s in (args.matrix, args.csv, args.json_file) if s]
    if len(sources) != 1:
        raise DomainError("provide exactly one of --matrix, --csv, --json")
    if args.matrix:
        return as_matrix(json.loads(args.matrix))
    if args.json_file:
        with open(args.json_file) as fh:
            return as_matrix(json.load(fh))
    rows = _read_csv(args.csv)
    if rows.size == 0:
        raise DomainError("CSV file holds no rows")
    sidecar = args.csv + ".json"
    with open(sidecar) as fh:
        meta = json.load(fh)
    shape = meta.get("row_shape")
    if not shape:
        raise DomainError(f"sidecar {sidecar} lacks row_shape")
    if not 0 <= args.row < rows.shape[0]:
        raise DomainError(f"row {args.row} out of range")
    return rows[args.row].reshape(shape[0], shape[1])


def _cmd_rate(args) -> int:
    matrix = _load_matrix(args)
    columns = ColumnList.from_columns(matrix.shape[0], matrix)
    value, report = rate_truncated(columns)
    if math.isinf(value):
        print("rate: +inf (boundary)" if report.boundary else "rate: +inf")
    else:
        print(f"rate: {value:.17g}")
    doc = {
        "rate": _json_safe(value),
        "boundary": report.boundary,
        "truncation_level": report.truncation_level,
        "partial_rates": [_json_safe(v) for v in report.partial_rates],
        "converged": report.converged,
        "tail_bound": report.tail_bound,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_density(args) -> int:
    if args.which == "sigma2":
        if args.p is None:
            return _usage("sigma2 requires --p")
        print(json.dumps({"value": sigma_p_squared(args.p)}))
        return 0
    if args.which == "pgaussian":
        if args.p is None or args.x is None:
            return _usage("pgaussian requires --p and --x")
        print(json.dumps({"log_density": log_p_gaussian_density(args.x, args.p)}))
        return 0
    if args.which == "pth-power":
        if args.p is None or args.x is None:
            return _usage("pth-power requires --p and --x")
        print(json.dumps({"log_density": _json_safe(log_pth_power_density(args.x, args.p))}))
        return 0
    if args.at is None:
        return _usage(f"{args.which} requires --at with a JSON matrix")
    matrix = as_matrix(json.loads(args.at))
    if args.which == "corner":
        if args.n is None:
            return _usage("corner requires --n")
        k, ell = matrix.shape
        value = log_corner_density(matrix, k, ell, args.n)
    elif args.which == "inverted-t":
        if args.dof is None:
            return _usage("inverted-t requires --dof")
        value = log_inverted_t_density(matrix, args.dof)
    elif args.which == "wishart":
        if args.n is None:
            return _usage("wishart requires --n")
        value = log_wishart_density(SymmetricPSD.from_matrix(matrix),
                                    matrix.shape[0], args.n)
    else:  # pragma: no cover
        return _usage(f"unknown density {args.which}")
    print(json.dumps({"log_density": _json_safe(value)}))
    return 0


def _product_law_from_doc(doc):
    if doc == "rademacher":
        return RademacherLaw()
    if isinstance(doc, dict) and "p" in doc:
        return PGaussianParams(_parse_p(str(doc["p"])))
    raise DomainError("product law must be 'rademacher' or {'p': value}")


def _cmd_project(args) -> int:
    rng = SeededRng(args.seed, args.stream)
    if args.count < 1:
        return _usage("count must be >= 1")
    if args.mode in ("lpball", "product"):
        if args.k is None or args.n is None or args.p is None:
            return _usage(f"{args.mode} requires --k, --n and --p")
        if args.k > args.n:
            return _usage("k must be <= n")
        frame = stiefel_batch(rng.child(0), args.k, args.n, 1)[0]
        if args.mode == "lpball":
            if math.isinf(args.p):
                return _usage("lpball requires finite p")
            cloud = _project_lp_ball_gen(rng.child(1), frame, args.p, args.count)
        else:
            cloud = _project_product_gen(rng.child(1), frame,
                                         PGaussianParams(args.p), args.count)
        meta = {"k": args.k, "n": args.n, "p": _json_safe(args.p)}
    else:  # law
        if not args.law_json:
            return _usage("law mode requires --law-json")
        with open(args.law_json) as fh:
            doc = json.load(fh)
        columns = np.asarray(doc.get("columns", []), dtype=np.float64)
        dim = int(doc["dim"])
        law = ProjectedLaw(
            a=ColumnList.from_columns(dim, columns.reshape(dim, -1)
                                      if columns.size else np.zeros((dim, 0))),
            noise_variance=float(doc["noise_variance"]),
            product_law=_product_law_from_doc(doc["product"]),
        )
        cloud = sample_projected_law(rng, law, args.count)
        meta = {"law_json": args.law_json, "k": dim}
    _write_csv(args.out, cloud.points)
    _write_sidecar(args.out, {
        "command": "project",
        "mode": args.mode,
        "count": args.count,
        "seed": args.seed,
        "stream": args.stream,
        "row_shape": [1, cloud.dim],
        **meta,
    })
    print(f"wrote {args.count} rows to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
    if not n_list:
        return _usage("n-list must hold at least one value")
    rng = SeededRng(args.seed, args.stream)
    pairs = compare_ball_vs_product(rng, args.k, args.p, n_list, args.count,
                                    grid=args.grid)
    doc = [{"n": n, "lp_distance": d} for n, d in pairs]
    print(json.dumps(doc, indent=2))
    if args.out:
        _write_csv(args.out, [(float(n), d) for n, d in pairs])
        _write_sidecar(args.out, {
            "command": "compare", "k": args.k, "p": _json_safe(args.p),
            "n_list": n_list, "count": args.count, "grid": args.grid,
            "seed": args.seed, "stream": args.stream,
            "row_shape": [1, 2],
        })
    return 0


_CORNER_KEYS = {"schema_version", "seed", "stream", "experiment", "k", "ell",
                "target", "radius", "n_values", "samples_per_n", "method",
                "output_path"}
_CONFIG_KEYS = {"schema_version", "seed", "stream", "experiment", "k",
                "atoms", "r", "rho", "n_values", "samples_per_n",
                "output_path"}


def _cmd_verify(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != 1:
        return _usage("config schema_version must be 1")
    kind = doc.get("experiment")
    allowed = {"ldp_corner": _CORNER_KEYS, "ldp_configuration": _CONFIG_KEYS}.get(kind)
    if allowed is None:
        return _usage(f"unknown experiment {kind!r}")
    unknown = set(doc) - allowed
    if unknown:
        return _usage(f"unknown config fields: {sorted(unknown)}")
    if not doc.get("n_values"):
        return _usage("n_values must be non-empty")
    rng = SeededRng(int(doc["seed"]), int(doc.get("stream", 0)))
    if kind == "ldp_corner":
        exp = LdpExperiment(
            k=int(doc["k"]),
            ell=int(doc["ell"]),
            target=doc["target"],
            radius=float(doc["radius"]),
            n_values=doc["n_values"],
            samples_per_n=int(doc["samples_per_n"]),
            method=doc.get("method", "montecarlo"),
        )
        report = run_ldp_corner(rng, exp, threads=args.threads)
    else:
        target = PointConfiguration.from_atoms(
            int(doc["k"]),
            [(a["point"], a["multiplicity"]) for a in doc["atoms"]],
        )
        report = run_ldp_configuration(
            rng, int(doc["k"]), target, float(doc["r"]), float(doc["rho"]),
            doc["n_values"], int(doc["samples_per_n"]), threads=args.threads,
        )
    prefix = args.out_prefix or doc.get("output_path") or "slope_report"
    with open(prefix + ".json", "w") as fh:
        json.dump({"config": doc, "report": report.to_json_dict(),
                   "build_id": _build_id()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_csv(prefix + ".csv", report.to_csv_rows())
    print(f"fitted_slope: {report.fitted_slope:.6g}")
    print(f"rate_reference: {report.rate_reference:.6g}")
    print(f"relative_gap: {report.relative_gap:.6g}")
    return 0


def _cmd_dickey(args) -> int:
    report = run_dickey_check(SeededRng(args.seed, args.stream), args.k,
                              args.m, args.n, args.samples,
                              dof_offset=args.dof_offset)
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_clt(args) -> int:
    report = run_clt_check(SeededRng(args.seed, args.stream), args.k, args.p,
                           args.n, args.samples)
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldplab",
        description="Sample Haar frames and projected measures, evaluate "
                    "log-determinant rates, and run rare-event experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="draw samples to CSV")
    p_sample.add_argument("--dist", required=True,
                          choices=["stiefel", "orthogonal", "wishart",
                                   "pgaussian", "lpball"])
    p_sample.add_argument("--k", type=int)
    p_sample.add_argument("--n", type=int)
    p_sample.add_argument("--p", type=_parse_p)
    p_sample.add_argument("--scale", type=float)
    p_sample.add_argument("--count", type=int, required=True)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--stream", type=int, default=0)
    p_sample.add_argument("--out", default="samples.csv")
    p_sample.set_defaults(func=_cmd_sample)

    p_rate = sub.add_parser("rate", help="evaluate the truncation rate of a matrix")
    p_rate.add_argument("--matrix", help="inline JSON matrix")
    p_rate.add_argument("--csv", help="CSV written by the sample command")
    p_rate.add_argument("--row", type=int, default=0)
    p_rate.add_argument("--json", dest="json_file", help="JSON file with a matrix")
    p_rate.set_defaults(func=_cmd_rate)

    p_density = sub.add_parser("density", help="evaluate a closed-form log density")
    p_density.add_argument("--which", required=True,
                           choices=["corner", "inverted-t", "wishart",
                                    "pgaussian", "pth-power", "sigma2"])
    p_density.add_argument("--at", help="JSON matrix argument")
    p_density.add_argument("--x", type=float)
    p_density.add_argument("--p", type=_parse_p)
    p_density.add_argument("--n", type=int)
    p_density.add_argument("--dof", type=int)
    p_density.set_defaults(func=_cmd_density)

    p_project = sub.add_parser("project", help="sample a projected measure to CSV")
    p_project.add_argument("--mode", required=True,
                           choices=["lpball", "product", "law"])
    p_project.add_argument("--k", type=int)
    p_project.add_argument("--n", type=int)
    p_project.add_argument("--p", type=_parse_p)
    p_project.add_argument("--law-json")
    p_project.add_argument("--count", type=int, required=True)
    p_project.add_argument("--seed", type=int, required=True)
    p_project.add_argument("--stream", type=int, default=0)
    p_project.add_argument("--out", default="cloud.csv")
    p_project.set_defaults(func=_cmd_project)

    p_compare = sub.add_parser(
        "compare", help="LP distance between ball and product projections")
    p_compare.add_argument("--k", type=int, required=True)
    p_compare.add_argument("--p", type=_parse_p, required=True)
    p_compare.add_argument("--n-list", required=True)
    p_compare.add_argument("--count", type=int, required=True)
    p_compare.add_argument("--grid", type=int, default=200)
    p_compare.add_argument("--seed", type=int, required=True)
    p_compare.add_argument("--stream", type=int, default=0)
    p_compare.add_argument("--out")
    p_compare.set_defaults(func=_cmd_compare)

    p_verify = sub.add_parser("verify", help="run a slope experiment from a config")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--out-prefix")
    p_verify.add_argument("--threads", type=int)
    p_verify.set_defaults(func=_cmd_verify)

    p_dickey = sub.add_parser("dickey", help="two-sample check of the corner laws")
    p_dickey.add_argument("--k", type=int, required=True)
    p_dickey.add_argument("--m", type=int, required=True)
    p_dickey.add_argument("--n", type=int, required=True)
    p_dickey.add_argument("--samples", type=int, required=True)
    p_dickey.add_argument("--dof-offset", type=int, default=0)
    p_dickey.add_argument("--seed", type=int, required=True)
    p_dickey.add_argument("--stream", type=int, default=0)
    p_dickey.add_argument("--out")
    p_dickey.set_defaults(func=_cmd_dickey)

    p_clt = sub.add_parser("clt", help="KS check of projected marginals vs Gaussian")
    p_clt.add_argument("--k", type=int, required=True)
    p_clt.add_argument("--p", type=_parse_p, required=True)
    p_clt.add_argument("--n", type=int, required=True)
    p_clt.add_argument("--samples", type=int, required=True)
    p_clt.add_argument("--seed", type=int, required=True)
    p_clt.add_argument("--stream", type=int, default=0)
    p_clt.add_argument("--out")
    p_clt.set_defaults(func=_cmd_clt)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InfeasibleExperiment as exc:
        print(f"infeasible experiment: {exc}", file=sys.stderr)
        return 4
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DomainError, DimensionMismatch, LdpLabError, ValueError, KeyError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
