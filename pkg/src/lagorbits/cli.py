"""Command line front end.

Exit codes: 0 success (certificate PASS, agreement on re-verification),
1 a run that completed without the hoped-for outcome (no convergence, drift,
failed certificate, monotonicity alarm, tampered certificate), 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .critvals import estimate_cu
from .loopspace import Loop, LoopError
from .minimax import (
    BoxBallCover,
    MinimaxError,
    MonotonicityAlarm,
    MountainPassProblem,
    barrier,
    class_minimize,
    latitude_sweep,
    mountain_pass,
    struwe_scan,
    sweepout_minimax,
)
from .scenario import Scenario, ScenarioError
from .verify import certify

CSV_SCHEMA = {"scan": "scan/1", "loop": "loop/1", "ps": "ps/1"}
COMPARED = ("status", "action", "period", "length", "el_residual", "energy_dev", "closure_err", "class")


# -- io -----------------------------------------------------------------------------

def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv(schema: str, body: str) -> str:
    return f"# schema={CSV_SCHEMA[schema]} version={__version__}\n{body}"


def _stamp(sc: Scenario, seed: int, command: str) -> dict:
    return {"tool": "lagorbits", "version": __version__, "seed": seed, "command": command, "scenario": sc.to_dict()}


def _err(msg: str):
    print(msg, file=sys.stderr)


# -- commands -------------------------------------------------------------------------

def _mp_problem(sc, L, k, seed, shrink, st):
    return MountainPassProblem.search(
        L,
        k,
        sc.region(L.manifold),
        n_nodes=st["n_nodes"],
        N=st["N"],
        rng=seed,
        confinement=shrink,
        tau=st["tau"],
        gradient_tol=st["gradient_tol"],
        level_tol=st["level_tol"],
        D1=st["D1"],
        D2=st["D2"],
        sweep_time=st["sweep_time"],
        max_sweeps=st["max_sweeps"],
        N_polish=st["N_polish"],
        tolerances=st["tolerances"],
    )


def cmd_find_orbit(args) -> int:
    sc = Scenario.load(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    st = sc.settings()
    m = sc.build_manifold()
    L = sc.build_lagrangian(m)
    k = args.k if args.k is not None else float(sc.search.get("k", 0.5))
    out = Path(args.out or sc.output)
    stamp = _stamp(sc, seed, "find-orbit")
    try:
        if args.method == "mountain-pass":
            res = mountain_pass(_mp_problem(sc, L, k, seed, sc.build_shrink(m), st), jobs=args.jobs)
        elif args.method == "sweepout":
            sweep = latitude_sweep(m, k, n_nodes=st["n_nodes"] + 1, N=st["N"], perturb=0.2, rng=seed)
            res = sweepout_minimax(L, k, sweep, tau=st["tau"], N_polish=st["N_polish"], gradient_tol=st["gradient_tol"], D1=st["D1"], D2=st["D2"])
        else:
            alpha = args.cls if args.cls else sc.search.get("class")
            if not alpha:
                _err("class-min needs --class")
                return 2
            res = class_minimize(
                L, k, alpha, n_starts=st["n_starts"], N=st["N"], rng=seed, max_time=st["max_time"], drift_radius=st["drift_radius"],
                cu_estimate=float(sc.search.get("cu_estimate", 0.0)),
            )
    except MinimaxError as exc:
        write_atomic(out / "error.json", dump_json({**stamp, "error": str(exc), "node": exc.node}))
        if exc.record is not None:
            write_atomic(out / "ps.csv", _csv("ps", exc.record.to_csv()))
            print(exc.record.to_csv(), end="")
        _err(f"no orbit: {exc}")
        return 1
    write_atomic(out / "result.json", dump_json({**stamp, "result": res.to_dict()}))
    write_atomic(out / "ps.csv", _csv("ps", res.ps.to_csv()))
    write_atomic(out / "loop.csv", _csv("loop", res.loop.to_csv(L)))
    if res.certificate is not None:
        write_atomic(out / "certificate.json", dump_json({**stamp, "k": k, "certificate": res.certificate.to_dict()}))
    if res.certificate is None or not res.certificate.passed:
        if res.verdict == "drift":
            means = res.notes.get("free_means", [[]])
            tail = [m_[-1] for m_ in means if m_]
            print(f"drift: every start left the box (final means of open coordinates {tail})")
        else:
            print(f"FAIL verdict={res.verdict} failures={res.certificate.failures if res.certificate else None}")
            print(res.ps.to_csv(), end="")
        return 1
    c = res.certificate
    print(f"PASS k={k} action={c.action:.10g} period={res.loop.T:.10g} length={c.length:.10g}")
    return 0


def cmd_scan(args) -> int:
    sc = Scenario.load(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    st = sc.settings()
    m = sc.build_manifold()
    L = sc.build_lagrangian(m)
    shrink = sc.build_shrink(m)
    out = Path(args.out or sc.output)
    try:
        res = struwe_scan(
            L, args.kmin, args.kmax, args.steps, lambda k: _mp_problem(sc, L, k, seed, shrink, st), tau=st["tau"], jobs=args.jobs
        )
        code = 0
    except MonotonicityAlarm as exc:
        res, code = exc.result, 1
        _err(str(exc))
    except MinimaxError as exc:
        _err(f"scan aborted: {exc}")
        return 1
    write_atomic(out / "scan.csv", _csv("scan", res.to_csv()))
    write_atomic(out / "scan.json", dump_json({**_stamp(sc, seed, "scan"), "D": res.D, "tau": res.tau, "monotone": res.monotone, "quotients": res.quotients}))
    print(res.to_csv(), end="")
    if any(r.period_ok is False for r in res.rows):
        _err("refined period above D + 2 + tau")
        code = 1
    return code


def cmd_estimate_cu(args) -> int:
    sc = Scenario.load(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    L = sc.build_lagrangian()
    est = estimate_cu(L, sc.region(L.manifold), sc.k_bracket() if args.bracket is None else args.bracket, tol=args.tol, budget=args.budget, rng=seed)
    out = Path(args.out or sc.output)
    write_atomic(out / "cu.json", dump_json({**_stamp(sc, seed, "estimate-cu"), "estimate": est.to_dict()}))
    flag = " (unbounded suspected)" if est.unbounded_suspected else ""
    print(f"c_u in [{est.lo:.6g}, {est.hi:.6g}]{flag}")
    return 0


def cmd_barrier(args) -> int:
    sc = Scenario.load(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    L = sc.build_lagrangian()
    box = np.asarray(sc.region(L.manifold), dtype=float)
    cover = BoxBallCover(box, args.spacing, args.radius) if args.spacing else None
    try:
        b = barrier(L, args.k, box, cover, rng=seed)
    except MinimaxError as exc:
        _err(str(exc))
        return 2
    out = Path(args.out or sc.output)
    write_atomic(out / "barrier.json", dump_json({**_stamp(sc, seed, "barrier"), "barrier": b.to_dict()}))
    print(f"a={b.a:.10g} r={b.r:.10g} mu={b.mu:.10g} A1={b.A1:.10g} e0={b.e0:.10g} delta={b.lebesgue_delta:.10g}")
    return 0 if b.a > 0 else 1


def _diff(old: dict, new: dict, rel: float) -> list:
    lines = []
    for key in COMPARED:
        a, b = old.get(key), new.get(key)
        if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
            same = a == b or math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)
        else:
            same = a == b
        if not same:
            lines.append(f"{key}: recorded {a!r} recomputed {b!r}")
    return lines


def cmd_verify(args) -> int:
    path = Path(args.certificate)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        _err(f"cannot read {path}: {exc.strerror}")
        return 2
    except json.JSONDecodeError as exc:
        _err(f"{path} is not JSON: {exc}")
        return 2
    try:
        sc = Scenario.from_dict(data["scenario"])
        cert = data["certificate"]
        L = sc.build_lagrangian()
        loop = Loop.from_dict(L.manifold, cert["loop"])
        new = certify(L, float(data["k"]), loop, cert["method"], cert.get("tolerances"), cert.get("notes", {}).get("shoot_steps", 4096))
    except (KeyError, TypeError, LoopError) as exc:
        _err(f"malformed certificate: {exc}")
        return 2
    lines = _diff(cert, new.to_dict(), args.rtol)
    if lines:
        print("certificate does not re-verify:")
        for line in lines:
            print("  " + line)
        return 1
    print(f"{new.status}: certificate re-verified ({len(COMPARED)} fields agree)")
    return 0 if new.passed else 1


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagorbits", description="Periodic orbits of prescribed energy for Lagrangian systems.")
    p.add_argument("--version", action="version", version=f"lagorbits {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, seed=True):
        q.add_argument("scenario", help="scenario TOML file")
        q.add_argument("--out", help="output directory (default: the scenario's 'output')")
        if seed:
            q.add_argument("--seed", type=int, help="override the scenario seed")

    q = sub.add_parser("find-orbit", help="run one minimax or minimisation and certify the orbit")
    common(q)
    q.add_argument("--k", type=float, help="energy level (default: search.k or 0.5)")
    q.add_argument("--method", choices=("mountain-pass", "sweepout", "class-min"), default="mountain-pass")
    q.add_argument("--class", dest="cls", type=int, nargs="+", help="winding vector for class-min")
    q.add_argument("--jobs", type=int, default=1, help="threads for node evolution")
    q.set_defaults(func=cmd_find_orbit)

    q = sub.add_parser("scan", help="mountain-pass levels c(k) on an energy grid (CSV: k,c,refined,T,pass,D2,period_ok)")
    common(q)
    q.add_argument("--kmin", type=float, required=True)
    q.add_argument("--kmax", type=float, required=True)
    q.add_argument("--steps", type=int, default=9, help="grid size (>= 3)")
    q.add_argument("--jobs", type=int, default=1, help="threads over grid points")
    q.set_defaults(func=cmd_scan)

    q = sub.add_parser("estimate-cu", help="bracket the critical value c_u by bisection")
    common(q)
    q.add_argument("--bracket", type=float, nargs=2, help="initial k bracket (default: search.k_bracket or -1 10)")
    q.add_argument("--tol", type=float, default=1e-2)
    q.add_argument("--budget", type=int, default=8, help="random descents per trial energy")
    q.set_defaults(func=cmd_estimate_cu)

    q = sub.add_parser("barrier", help="mountain-pass barrier level a for a box")
    common(q)
    q.add_argument("--k", type=float, required=True)
    q.add_argument("--spacing", type=float, help="ball-centre spacing of the cover")
    q.add_argument("--radius", type=float, help="ball radius of the cover")
    q.set_defaults(func=cmd_barrier)

    q = sub.add_parser("verify", help="recompute a certificate from its loop and compare")
    q.add_argument("certificate", help="certificate.json written by find-orbit")
    q.add_argument("--rtol", type=float, default=1e-9, help="relative tolerance of the comparison")
    q.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "spacing", None) is not None and getattr(args, "radius", None) is None:
        parser.error("--spacing needs --radius")
    try:
        return args.func(args)
    except ScenarioError as exc:
        _err("invalid scenario:")
        for line in exc.diagnostics:
            _err(f"  {line}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
