"""Command-line front end: ``ldpaths <command> [options]``.

Every command writes ``<command>.json`` (result plus run manifest) into
``--out`` and any dense data as CSV next to it.  Exit codes: 0 success,
1 input or solver error, 2 inconclusive.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .badpoints import BadPointReport, critical_time, locate_bad_points, report_dict, selection_limits
from .costs import build_profile, predict_conditional_limit, profile_report
from .errors import LdPathsError, NoSolutionError, UnderpoweredError
from .models import parse_model
from .montecarlo import THREADS_ENV, McConfig, condition_and_compare, default_threads, write_accepted_csv
from .rates import parse_rate
from .trajectories import el_closed_form, has_closed_form, shoot_bvp, write_csv

EXIT_OK, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2
# Keys that never enter the manifest config, so reruns hash identically.
_VOLATILE = {"func", "out", "json", "threads", "command"}
_NEGATIVE = re.compile(r"^-[0-9.]")


def _clean(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _grid(text: str, default: str) -> np.ndarray:
    text = text or default
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ValueError(f"grid must be LO:HI:N, got {text!r}") from exc


def _pair(text: str | None):
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"range must be LO:HI, got {text!r}") from exc
    return lo, hi


def _write_surface(path, names, X, Y, Z):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for x, y, z in zip(X.ravel(), Y.ravel(), Z.ravel()):
            fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r}\n")


def cmd_hamiltonian(args, out: Path):
    model = parse_model(args.model)
    x = _grid(args.x, "-1:1:21")
    p = _grid(args.p, "-2:2:41")
    X, P = np.meshgrid(x, p, indexing="ij")
    H = model.hamiltonian(X, P)
    _write_surface(out / "hamiltonian.csv", ("x", "p", "H"), X, P, H)
    return {"model": model.grammar(), "rows": int(H.size)}, ["hamiltonian.csv"], EXIT_OK


def cmd_lagrangian(args, out: Path):
    model = parse_model(args.model)
    lo, hi = model.state_space
    x = _grid(args.x, "-0.9:0.9:19" if math.isfinite(lo) or math.isfinite(hi) else "-1:1:21")
    v = _grid(args.v, "-2:2:41")
    X, V = np.meshgrid(x, v, indexing="ij")
    L = model.lagrangian(X, V)
    _write_surface(out / "lagrangian.csv", ("x", "v", "L"), X, V, L)
    return {"model": model.grammar(), "rows": int(L.size)}, ["lagrangian.csv"], EXIT_OK


def cmd_trajectory(args, out: Path):
    model, rate = parse_model(args.model), parse_rate(args.rate)
    prof = build_profile(model, rate, args.b, args.T, grid=_pair(args.range), grid_size=args.grid_size)
    items, files = [], []
    for k, A in enumerate(prof.global_minimizers):
        if has_closed_form(model):
            traj = el_closed_form(model, A, args.b, args.T, grid_size=args.points, rate=rate)
        else:
            traj = min(shoot_bvp(model, A, args.b, args.T, rate=rate), key=lambda tr: tr.action)
        name = f"trajectory_{k}.csv"
        write_csv(traj, model, out / name)
        files.append(name)
        items.append(
            {
                "start": traj.start,
                "terminal": traj.terminal,
                "p0": traj.p0,
                "energy": traj.energy,
                "action": traj.action,
                "total_cost": traj.total_cost,
                "provenance": traj.provenance,
                "csv": name,
            }
        )
    return {"model": model.grammar(), "rate": rate.grammar(), "b": args.b, "T": args.T, "trajectories": items}, files, EXIT_OK


def cmd_profile(args, out: Path):
    model, rate = parse_model(args.model), parse_rate(args.rate)
    prof = build_profile(model, rate, args.b, args.T, grid=_pair(args.range), grid_size=args.grid_size)
    with open(out / "profile.csv", "w", newline="") as fh:
        fh.write("A,E\n")
        for a, e in zip(prof.grid, prof.values):
            fh.write(f"{float(a)!r},{float(e)!r}\n")
    return profile_report(prof), ["profile.csv"], EXIT_OK


def cmd_critical(args, out: Path):
    model, rate = parse_model(args.model), parse_rate(args.rate)
    tc = critical_time(model, rate, method=args.method)
    result = {"model": model.grammar(), "rate": rate.grammar(), "critical_time": {"value": tc.value, "method": tc.method}}
    return result, [], EXIT_OK


def cmd_badscan(args, out: Path):
    model, rate = parse_model(args.model), parse_rate(args.rate)
    points, inconclusive = locate_bad_points(
        model, rate, args.T, _pair(args.range), n_points=args.points, grid_size=args.grid_size
    )
    try:
        tc = critical_time(model, rate)
    except LdPathsError:
        tc = None
    selection = {}
    if args.selection:
        selection = {p.b: selection_limits(model, rate, p.b, args.T, grid_size=args.grid_size) for p in points}
    report = BadPointReport(model, rate, args.T, tc, points, selection, inconclusive)
    code = EXIT_INCONCLUSIVE if inconclusive else EXIT_OK
    return report_dict(report), [], code


def cmd_mc(args, out: Path):
    model, rate = parse_model(args.model), parse_rate(args.rate)
    cfg = McConfig(
        model=model,
        rate=rate,
        n=args.n,
        T=args.T,
        b=args.b,
        paths=args.paths,
        half_width=args.half_width,
        time_step=args.time_step,
        seed=args.seed,
    )
    pred = predict_conditional_limit(build_profile(model, rate, args.b, args.T))
    try:
        emp, verdict = condition_and_compare(cfg, pred, radius=args.radius, threads=args.threads)
    except UnderpoweredError as exc:
        return {"verdict": "UNDERPOWERED", "message": str(exc), "seed": args.seed}, [], EXIT_INCONCLUSIVE
    write_accepted_csv(emp, out / "accepted.csv")
    return verdict, ["accepted.csv"], EXIT_OK


COMMANDS = {
    "hamiltonian": cmd_hamiltonian,
    "lagrangian": cmd_lagrangian,
    "trajectory": cmd_trajectory,
    "profile": cmd_profile,
    "critical": cmd_critical,
    "badscan": cmd_badscan,
    "mc": cmd_mc,
}


def _global_flags(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--out", default=default("."), help="output directory")
    parser.add_argument("--seed", type=int, default=default(0), help="64-bit seed")
    parser.add_argument("--json", action="store_true", default=default(False), help="print the JSON report")
    parser.add_argument(
        "--threads", type=int, default=default(None), help=f"worker threads (default ${THREADS_ENV} or 1)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpaths", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        p.add_argument("--model", required=True, help="process grammar, e.g. bm, ou:kappa=0.7")
        return p

    p = add("hamiltonian", "H(x, p) on a grid")
    p.add_argument("--x", help="LO:HI:N")
    p.add_argument("--p", help="LO:HI:N")
    p = add("lagrangian", "L(x, v) on a grid")
    p.add_argument("--x", help="LO:HI:N")
    p.add_argument("--v", help="LO:HI:N")
    for name, help_text in (("trajectory", "optimal trajectories from each global minimiser"),
                            ("profile", "cost profile E_{b,T}")):
        p = add(name, help_text)
        p.add_argument("--rate", required=True)
        p.add_argument("--b", type=float, required=True)
        p.add_argument("--T", type=float, required=True)
        p.add_argument("--range", help="A range LO:HI")
        p.add_argument("--grid-size", type=int, default=None)
        if name == "trajectory":
            p.add_argument("--points", type=int, default=201, help="samples per trajectory")
    p = add("critical", "critical time at the neutral terminal point")
    p.add_argument("--rate", required=True)
    p.add_argument("--method", choices=("auto", "closed_form", "bisection"), default="auto")
    p = add("badscan", "bad terminal points")
    p.add_argument("--rate", required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--range", help="b range LO:HI (closed form when omitted)")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--grid-size", type=int, default=None)
    p.add_argument("--selection", action="store_true", help="also compute one-sided selection limits")
    p = add("mc", "Monte Carlo check of the conditional limit")
    p.add_argument("--rate", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--paths", type=int, default=200_000)
    p.add_argument("--half-width", type=float, default=0.05)
    p.add_argument("--time-step", type=float, default=1e-3)
    p.add_argument("--radius", type=float, default=None)
    return parser


def manifest(args, files, wall_time) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}
    digest = hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest()
    return {
        "command": args.command,
        "config": config,
        "version": __version__,
        "seeds": [args.seed],
        "wall_time": wall_time,
        "input_hash": digest,
        "files": list(files),
    }


def argv_from_manifest(man: dict) -> list[str]:
    """Rebuild a command line from a report's manifest."""
    argv = [man["command"]]
    for key, value in sorted(man["config"].items()):
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        argv.append(flag) if value is True else argv.extend([flag, repr(value) if isinstance(value, float) else str(value)])
    return argv


def _attach_negative_values(argv):
    # argparse reads "-1:1" as an option; glue such values onto their flag.
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def run(argv=None) -> tuple[int, dict | None]:
    """Parse, execute and write outputs; returns ``(exit_code, report)``."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_negative_values(argv))
    if args.threads is None:
        args.threads = default_threads()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result, files, code = COMMANDS[args.command](args, out)
    except (LdPathsError, ValueError, TypeError) as exc:
        kind = "solver" if isinstance(exc, NoSolutionError) else "input"
        print(f"ldpaths {args.command}: {kind} error: {exc}", file=sys.stderr)
        return EXIT_INPUT, None
    report = {"manifest": manifest(args, files, time.perf_counter() - start), "result": result}
    text = dumps(report)
    (out / f"{args.command}.json").write_text(text)
    if args.json:
        sys.stdout.write(text)
    return code, report


def replay(path, out=None) -> tuple[int, dict | None]:
    """Re-run the command recorded in a JSON report."""
    man = json.loads(Path(path).read_text())["manifest"]
    argv = argv_from_manifest(man)
    if out is not None:
        argv += ["--out", str(out)]
    return run(argv)


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
