"""Command-line entry point: ``orbitlab {validate,run,oracle,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import has_errors, load_config, validate
from .errors import BudgetExceeded, ConfigError, InvariantViolation
from .records import make_record, read_record, summarize, write_record

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_INVARIANT = 0, 2, 3, 4


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "budget", None) is not None:
        cfg["budget"] = args.budget
    if getattr(args, "out", None) is not None:
        cfg["output"] = str(args.out)
    return cfg


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def cmd_validate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    diags = validate(cfg)
    for d in diags:
        print(d)
    return EXIT_CONFIG if has_errors(diags) else EXIT_OK


def cmd_run(args) -> int:
    from .experiments import run
    cfg = _apply_overrides(load_config(args.config), args)
    diags = validate(cfg)
    if has_errors(diags):
        for d in diags:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    _set_threads(args.threads)
    out = Path(cfg.get("output") or "orbitlab-out")
    try:
        record, series = run(cfg)
    except BudgetExceeded as exc:
        write_record(out, make_record(cfg, {"error": str(exc)}, {}, {"requested": exc.requested},
                                      valid=False))
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    path = write_record(out, record, series)
    print(f"wrote {path}  payload {record['payload_hash'][:16]}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Run the brute-force reference computations matching a config's group."""
    import numpy as np

    from .experiments import _finite_setup
    from .matgroup import count_sl2z_ball
    from .oracles import brute_force_sl2z_ball, word_list_sphere_columns
    cfg = _apply_overrides(load_config(args.config), args)
    kind = cfg["kind"]
    report = {"kind": kind}
    if kind in ("free_quotient", "ratio") and cfg.get("group", {}).get("modulus"):
        q, action = _finite_setup(cfg)
        x = q.index[q.identity()]
        nmax = min(max(cfg.get("grid", {}).get("radii", [8])), 10)
        cols = word_list_sphere_columns(action, x, nmax)
        dp = action.sphere_operators(nmax)
        report["word_list_matches_transfer"] = bool(all(np.array_equal(dp[n][:, x], cols[n])
                                                        for n in range(nmax + 1)))
        report["radius_checked"] = nmax
    else:
        T = min(max(cfg.get("grid", {}).get("T", [20.0])), 20.0)
        brute = len(brute_force_sl2z_ball(T))
        report["entry_scan_count"] = brute
        report["fast_count"] = count_sl2z_ball(T)
        report["T"] = T
    print(json.dumps(report, sort_keys=True))
    ok = report.get("word_list_matches_transfer", report.get("entry_scan_count") == report.get("fast_count"))
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_report(args) -> int:
    root = Path(args.out)
    paths = [root] if (root / "record.json").exists() else sorted(p.parent for p in root.rglob("record.json"))
    if not paths:
        print(f"no records under {root}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(f"== {p}")
        for line in summarize(read_record(p)):
            print("  " + line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbitlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (("validate", cmd_validate, True), ("run", cmd_run, True),
                                   ("oracle", cmd_oracle, True), ("report", cmd_report, False)):
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", type=Path, required=needs_config)
        p.add_argument("--out", type=Path, required=not needs_config)
        p.add_argument("--seed", type=int)
        p.add_argument("--budget", type=int)
        p.add_argument("--threads", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InvariantViolation as exc:
        print(f"invariant violation: {exc} witness={exc.witness}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
