"""Command-line interface: ``latticeclt {constants,verify,clt,count,sample}``.

Exit codes: 0 success, 1 verification or experiment failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    """Comma-separated reals; raises ValueError so argparse reports a usage error."""
    return tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


# --- constants --------------------------------------------------------------------


def cmd_constants(args) -> int:
    from .constants import variance_constants

    try:
        vc = variance_constants(args.l, args.N)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    d = vc.to_dict()
    if args.format == "json":
        _emit(d)
    else:
        rows = [(k, v) for k, v in d["zeta_values"].items()]
        rows += [("sigma_u_sq", d["sigma_u_sq"])]
        if d["sigma_c_sq"] is not None:
            rows += [("sigma_c_sq", d["sigma_c_sq"]), ("sigma_c_sq_rogers", d["sigma_c_sq_rogers"])]
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            print(f"{k:<{width}}  {v:.12f}")
    return EXIT_OK


# --- verify -----------------------------------------------------------------------


def _suite_geometry(tol: float | None, seed: int) -> dict:
    from .geometry import (
        DomainParams,
        OmegaT,
        PairIntersection,
        ShellConvention,
        c0,
        contains_many,
        mc_volume,
        pair_intersection_volume,
        shell_index_many,
        volume_omega_T,
    )

    n_se = 3.0 if tol is None else tol
    rng = np.random.default_rng(seed)
    sets = [
        DomainParams(1, 4, (1.5,), (4.0,)),
        DomainParams(2, 3, (1.0, 0.5), (1.0, 2.0)),
        DomainParams(3, 2, (0.7, 1.2, 2.0), (0.5, 0.75, 0.75)),
    ]
    checks = []
    M = 6
    for p in sets:
        pts = np.hstack(
            [rng.uniform(-1, 1, (20000, p.m)) * p.c_array * 2, rng.normal(size=(20000, p.n)) * rng.uniform(0, 2**M, (20000, 1)) / math.sqrt(p.n)]
        )
        inside = contains_many(p, pts, 2.0**M, ShellConvention.HALF_OPEN)
        k = shell_index_many(p, pts, M)
        violations = int(np.sum(inside != (k >= 0)))
        checks.append({"name": f"cover m={p.m}", "violations": violations, "passed": violations == 0})
        det = float(np.linalg.det(c0(p)))
        checks.append({"name": f"det c0 m={p.m}", "value": det, "passed": abs(det - 1) < 1e-10})
        est, se = mc_volume(p, OmegaT(2.0), 200_000, seed)
        z = abs(est - volume_omega_T(p, 2.0)) / se
        checks.append({"name": f"mc volume m={p.m}", "z": z, "passed": z <= n_se})
        est, se = mc_volume(p, PairIntersection(1, 2), 200_000, seed + 1)
        z = abs(est - pair_intersection_volume(p, 1, 2)) / se
        checks.append({"name": f"mc pair m={p.m}", "z": z, "passed": z <= n_se})
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


def _suite_partitions(tol: float | None, seed: int) -> dict:
    from .partitions import beta_schedule, bell_number, enumerate_partitions, verify_cover

    checks = []
    for r in range(1, 9):
        ok = len(enumerate_partitions(r)) == bell_number(r)
        checks.append({"name": f"bell r={r}", "passed": ok})
    for r, M in ((3, 16), (4, 8)):
        for eta, dp in ((1.0, 1.0), (0.5, 1.0), (0.1, 1.0), (0.1, 1000.0), (0.01, 1e4)):
            rep = verify_cover(r, M, beta_schedule(r, eta, dp))
            checks.append(
                {
                    "name": f"cover r={r} M={M} eta={eta} delta'={dp}",
                    "uncovered": [list(t) for t in rep.uncovered],
                    "n_diagonal": rep.n_diagonal,
                    "passed": rep.covered,
                }
            )
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


def _suite_cumulants(tol: float | None, seed: int) -> dict:
    from .cumulants import conditional_cumulant, joint_cumulant
    from .partitions import enumerate_partitions

    tol = 1e-9 if tol is None else tol
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        r = int(rng.integers(2, 7))
        n = int(rng.integers(2, 40))
        data = list(rng.normal(size=(r, n)) * rng.exponential(size=(r, 1)) + rng.normal(size=(r, 1)))
        for Q in enumerate_partitions(r):
            if len(Q) >= 2:
                val, scale = conditional_cumulant(data, Q, return_scale=True)
                worst = max(worst, abs(val) / scale if scale else 0.0)
    X = rng.normal(size=(2, 500))
    cov_err = abs(joint_cumulant(list(X)) - float(np.mean(X[0] * X[1]) - X[0].mean() * X[1].mean()))
    checks = [
        {"name": "conditional cumulant vanishing", "max_relative": worst, "passed": worst < tol},
        {"name": "r=2 covariance", "error": cov_err, "passed": cov_err < 1e-12},
    ]
    return {"checks": checks, "max_conditional_relative": worst, "passed": all(c["passed"] for c in checks)}


def _suite_sampler(tol: float | None, seed: int, n_samples: int = 2000) -> dict:
    from .lattices import BallIndicator
    from .sampling import SamplerConfig, validate_sampler

    n_se = 3.0 if tol is None else tol
    checks = []
    for kind, cong in (("unimodular", None), ("affine", None), ("congruence", ((1, 0, 0, 0, 0), 2))):
        cfg = SamplerConfig(5, master_seed=seed, kind=kind, cong=cong)
        rep = validate_sampler(cfg, BallIndicator(1.2), n_samples, n_se=n_se)
        checks.append({"name": f"sampler {kind}", **rep.to_dict()})
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


SUITES = {
    "geometry": _suite_geometry,
    "partitions": _suite_partitions,
    "cumulants": _suite_cumulants,
    "sampler": _suite_sampler,
}


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if args.tol is not None and args.tol < 0:
        raise UsageError("--tol must be non-negative")
    out = {}
    for name in names:
        t0 = time.perf_counter()
        res = SUITES[name](args.tol, args.seed)
        res["seconds"] = time.perf_counter() - t0
        out[name] = res
    out["passed"] = all(out[n]["passed"] for n in names)
    _emit(out)
    return EXIT_OK if out["passed"] else EXIT_FAIL


# --- clt ----------------------------------------------------------------------------

_CLT_KEYS = {
    "kind": str,
    "m": int,
    "n": int,
    "c": _floats,
    "u": _floats,
    "M": int,
    "n_samples": int,
    "master_seed": int,
    "workers": int,
    "hecke_prime": int,
    "cong_v": _ints,
    "cong_N": int,
    "r_max": int,
    "output": str,
    "allow_small_l": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
    "twist_bits": int,
    "cap": int,
}


def _read_config(path: str) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep "M" distinct from "m"
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not cp.has_section("clt"):
        raise UsageError(f"config {path} has no [clt] section")
    out = {}
    for key, raw in cp.items("clt"):
        if key not in _CLT_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            out[key] = _CLT_KEYS[key](raw)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
    return out


def _default_workers() -> int:
    from .experiment import WORKERS_ENV

    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


def _resolve_clt(args) -> "ExperimentConfig":  # noqa: F821
    from .experiment import ExperimentConfig

    vals = {"workers": _default_workers()}
    if args.config:
        vals.update(_read_config(args.config))
    for key in _CLT_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    v, N = vals.pop("cong_v", None), vals.pop("cong_N", None)
    if (v is None) != (N is None):
        raise UsageError("congruence data needs both cong_v and cong_N")
    if v is not None:
        vals["cong"] = (v, N)
    try:
        return ExperimentConfig(**vals)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_clt(args) -> int:
    from .experiment import ExperimentAborted, clt_experiment

    cfg = _resolve_clt(args)
    out_path = Path(cfg.output) if cfg.output else None
    summary_path = Path(args.summary) if args.summary else (out_path.with_suffix(".summary.json") if out_path else None)
    jsonl = out_path.open("w") if out_path else None

    def write(rec):
        if jsonl is not None:
            jsonl.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            jsonl.flush()

    try:
        result = clt_experiment(cfg, on_record=write)
    except ExperimentAborted as exc:
        if jsonl is not None:
            jsonl.write(json.dumps({"truncated": True, "reason": str(exc), "completed": len(exc.records)}) + "\n")
            jsonl.close()
        print(f"latticeclt: experiment aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if jsonl is not None:
        jsonl.close()
    summary = result.summary()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "normalized_discrepancy"])
            for r in result.records:
                w.writerow([r.index, repr(r.normalized_discrepancy)])
    if summary_path is not None:
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    return EXIT_OK


# --- count / sample ------------------------------------------------------------------


def _load_lattice(source: str):
    from .lattices import Lattice, construct_lattice

    if source.startswith("identity:"):
        try:
            l = int(source.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad identity lattice {source!r}") from exc
        return construct_lattice("unimodular", np.eye(l))
    try:
        rec = json.loads(Path(source).read_text())
        return Lattice.from_record(rec)
    except OSError as exc:
        raise UsageError(f"cannot read lattice file {source}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed lattice JSON in {source}: {exc}") from exc


def cmd_count(args) -> int:
    from .geometry import DomainParams, ShellConvention
    from .lattices import EnumerationCapError, count_direct, shell_counts

    lat = _load_lattice(args.lattice)
    try:
        params = DomainParams(args.m, args.n, _floats(args.c), _floats(args.u))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.M < 1:
        raise UsageError("M must be positive")
    out = {}
    try:
        t0 = time.perf_counter()
        sc = shell_counts(lat, params, args.M, cap=args.cap, audit=args.audit)
        out["count"] = sc.total
        out["seconds"] = time.perf_counter() - t0
        if args.audit:
            out["boundary_sensitive"] = int(sc.sensitive.sum())
        if args.oracle:
            t0 = time.perf_counter()
            direct = count_direct(lat, params, 2.0**args.M, ShellConvention.HALF_OPEN, cap=args.cap)
            out["direct_count"] = direct
            out["direct_seconds"] = time.perf_counter() - t0
            out["equal"] = direct == sc.total
    except EnumerationCapError as exc:
        print(f"latticeclt: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(out)
    if args.oracle and not out["equal"]:
        return EXIT_FAIL
    return EXIT_OK


def cmd_sample(args) -> int:
    from .sampling import SamplerConfig, sample

    if (args.cong_v is None) != (args.cong_N is None):
        raise UsageError("congruence data needs both --cong-v and --cong-N")
    try:
        cong = (_ints(args.cong_v), args.cong_N) if args.cong_v is not None else None
        cfg = SamplerConfig(args.l, args.hecke_prime, args.master_seed, args.kind, cong, args.twist_bits)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for i in range(args.index, args.index + args.count):
        rec = sample(cfg, i).to_record()
        rec["index"] = i
        print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .sampling import DEFAULT_PRIME, DEFAULT_TWIST_BITS

    ap = argparse.ArgumentParser(prog="latticeclt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="zeta values and variance constants")
    p.add_argument("--l", type=int, required=True, help="dimension m + n")
    p.add_argument("--N", type=int, default=None, help="congruence modulus")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("verify", help="run deterministic identity suites")
    p.add_argument("suite", choices=(*SUITES, "all"))
    p.add_argument("--tol", type=float, default=None, help="override the suite tolerance (0 forces failure)")
    p.add_argument("--seed", type=int, default=20261014)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("clt", help="run a discrepancy experiment")
    p.add_argument("--config", help="INI file with a [clt] section; flags override it")
    p.add_argument("--kind", choices=("unimodular", "affine", "congruence"))
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=_floats)
    p.add_argument("--u", type=_floats)
    p.add_argument("--M", type=int)
    p.add_argument("--samples", dest="n_samples", type=int)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--prime", dest="hecke_prime", type=int)
    p.add_argument("--cong-v", dest="cong_v", type=_ints)
    p.add_argument("--cong-N", dest="cong_N", type=int)
    p.add_argument("--r-max", dest="r_max", type=int)
    p.add_argument("--twist-bits", dest="twist_bits", type=int)
    p.add_argument("--cap", type=int, help="enumeration node cap per shell")
    p.add_argument("--output", help="JSONL path for per-sample records")
    p.add_argument("--summary", help="summary JSON path (default: next to --output)")
    p.add_argument("--csv", help="optional CSV of index, normalized_discrepancy")
    p.add_argument("--allow-small-l", dest="allow_small_l", action="store_true", default=None)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("count", help="count lattice points in the domain of height 2^M")
    p.add_argument("lattice", help="lattice JSON file, or identity:<l>")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", required=True)
    p.add_argument("--u", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--oracle", action="store_true", help="also count by direct enumeration")
    p.add_argument("--audit", action="store_true", help="report boundary-sensitive points")
    p.add_argument("--cap", type=int, default=10**8)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("sample", help="emit sampled lattices as JSON records")
    p.add_argument("--kind", choices=("unimodular", "affine", "congruence"), default="unimodular")
    p.add_argument("--l", type=int, default=5)
    p.add_argument("--seed", dest="master_seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--prime", dest="hecke_prime", type=int, default=DEFAULT_PRIME)
    p.add_argument("--cong-v", dest="cong_v")
    p.add_argument("--cong-N", dest="cong_N", type=int)
    p.add_argument("--twist-bits", dest="twist_bits", type=int, default=DEFAULT_TWIST_BITS)
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"latticeclt: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
