"""Command-line harness.

Subcommands:

* ``gamma-range``: admissible stepsize interval for given constants.
* ``solve``: one run, optionally writing a per-iteration trajectory CSV.
* ``bench``: several algorithms over several seeded trials, one CSV row each
  plus mean rows per algorithm.
* ``sweep``: one parameter over a list of values, writing residual
  trajectories as CSV and an optional SVG log-log plot.

Settings resolve as command-line flags > ``--config`` file > problem
defaults. Exit codes: 0 success, 1 usage, 2 infeasible parameters,
3 every run diverged.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import GppaSplit, fbs, gppa, make_drs, make_drsr, make_dys, make_prs
from .core import GammaRestartConfig, SolveReport, SolverConfig, add_smooth
from .params import ProblemConstants, eta_upper_bound, gamma_range
from .problems import (
    RNG_NAME,
    Problem,
    build_cs,
    build_lrmc,
    build_slrme,
    build_toy,
    generate_cs,
    generate_lrmc,
    generate_slrme,
    save_instance,
)
from .solver import solve

__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_INFEASIBLE",
    "EXIT_DIVERGED",
    "UsageError",
    "BENCH_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "SWEEP_COLUMNS",
    "PROBLEMS",
    "ALGORITHMS",
    "make_problem",
    "run_algo",
    "render_loglog_svg",
    "main",
]

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3

BENCH_COLUMNS = ("problem", "algo", "trial", "seed", "iterations", "cpu_seconds", "re", "termination")
TRAJECTORY_COLUMNS = ("n", "F", "L", "y_step", "fixed_point_residual", "gamma")
SWEEP_COLUMNS = ("param", "value", "n", "y_step", "fixed_point_residual")

PROBLEMS = ("toy", "lrmc", "cs", "slrme")
ALGORITHMS = ("drfdr", "fbs", "gppa", "drs", "drsr", "dys", "prs")

# generator parameters accepted per problem (from --config)
_GEN_KEYS = {
    "toy": ("A", "rho", "ell", "y0"),
    "lrmc": ("m", "r", "R", "rho"),
    "cs": ("m", "d", "sparsity", "noise", "rho"),
    "slrme": ("blocks", "R", "sigma", "rho1", "rho2", "k"),
}
_SOLVER_KEYS = ("gamma", "gamma0", "k", "gamma_offset", "theta", "eta", "tol", "max_iters", "tikhonov")

logger = logging.getLogger(__name__)


class UsageError(ValueError):
    pass


# Problems and algorithms

def make_problem(name: str, seed: int = 0, params: Optional[dict] = None) -> Problem:
    """Build a problem instance; ``params`` holds generator settings plus
    ``alpha`` for SLRME."""
    params = dict(params or {})
    if name not in _GEN_KEYS:
        raise UsageError(f"unknown problem {name!r}")
    allowed = set(_GEN_KEYS[name]) | ({"alpha"} if name == "slrme" else set())
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise UsageError(f"unknown settings for {name}: {', '.join(unknown)}")
    gen = {k: params[k] for k in _GEN_KEYS[name] if k in params}
    if name == "toy":
        A = np.asarray(gen.pop("A", [[1.0, 0.0], [0.0, 0.0]]), dtype=float)
        return build_toy(A, **gen)
    if name == "lrmc":
        return build_lrmc(generate_lrmc(seed, **gen))
    if name == "cs":
        return build_cs(generate_cs(seed, **gen))
    if name == "slrme":
        return build_slrme(generate_slrme(seed, **gen), alpha=float(params.get("alpha", 1.0)))
    raise UsageError(f"unknown problem {name!r}")


def _drfdr_config(problem: Problem, s: dict, theta: float, eta: float, stopping, max_iters: int,
                  record: bool, record_steps: bool) -> SolverConfig:
    restart = None
    if s.get("gamma") is not None:
        gamma = float(s["gamma"])
    elif s.get("gamma_offset") is not None:
        alpha, kappa, ell = problem.constants
        rng = gamma_range(ProblemConstants(alpha, kappa, ell, theta, eta))
        if not (rng.feasible and math.isfinite(rng.upper)):
            raise UsageError(f"no finite admissible stepsize: {rng.reason or 'unbounded range'}")
        gamma = rng.upper - float(s["gamma_offset"])
    elif s.get("gamma0") is not None:
        restart = GammaRestartConfig(float(s["gamma0"]), k=float(s.get("k", 1.0)))
        gamma = restart.initial_gamma
    else:
        raise UsageError("no stepsize: set gamma")
    return SolverConfig(gamma=gamma, theta=theta, eta=eta, max_iters=max_iters,
                        stopping=stopping, restart=restart, record_trajectory=record,
                        record_steps=record_steps)


def run_algo(problem: Problem, algo: str, overrides: Optional[dict] = None,
             record: bool = False, record_steps: bool = False) -> SolveReport:
    """Run ``algo`` on ``problem`` with the problem's defaults for that
    algorithm, updated by non-``None`` entries of ``overrides``.

    Recognized settings: ``gamma`` (fixed stepsize), ``gamma0`` and ``k``
    (restart heuristic starting at ``k * gamma0``), ``gamma_offset`` (use the
    upper admissible bound minus the offset), ``theta``, ``eta``, ``tol``,
    ``max_iters`` and ``tikhonov`` (DRSR weight). ``record_steps`` asks the
    splitting methods for step norms only.
    """
    if algo not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {algo!r}")
    if algo not in problem.algo_defaults:
        offered = ", ".join(sorted(problem.algo_defaults))
        raise UsageError(f"algorithm {algo!r} is not offered for problem {problem.name!r} ({offered})")
    s = dict(problem.algo_defaults[algo])
    s.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if s.get("gamma") is not None:
        s.pop("gamma0", None)
        s.pop("gamma_offset", None)
    stopping = problem.stopping if s.get("tol") is None else replace(problem.stopping, tol=float(s["tol"]))
    max_iters = int(s.get("max_iters", problem.max_iters))
    if max_iters < 1:
        raise UsageError("max_iters must be >= 1")
    spec = problem.spec

    if algo in ("fbs", "gppa"):
        if s.get("gamma") is None:
            raise UsageError(f"{algo} needs gamma")
        smooth = add_smooth(spec.f, spec.hbar)
        if algo == "fbs":
            report = fbs(smooth, spec.g, problem.y0, float(s["gamma"]), max_iters, stopping,
                         problem.metric, record)
        else:
            split = GppaSplit(spec.g, smooth, spec.hunder, stepsize=float(s["gamma"]))
            report = gppa(split, problem.y0, max_iters, stopping, problem.metric, record)
    else:
        theta = float(s.get("theta", 1.0))
        eta = float(s.get("eta", 1.0))
        if algo == "drfdr":
            run_spec = spec
        elif algo == "dys":
            run_spec, _ = make_dys(spec.f, spec.g, spec.hbar, gamma=1.0)
            theta, eta = 1.0, 1.0
        elif algo == "drs":
            run_spec, _ = make_drs(spec.f, spec.g, gamma=1.0)
            theta, eta = 1.0, 1.0
        elif algo == "prs":
            run_spec, _ = make_prs(spec.f, spec.g, gamma=1.0)
            theta, eta = 1.0, 2.0
        else:  # drsr; the presets' configs are replaced below
            if s.get("tikhonov") is None:
                raise UsageError("drsr needs tikhonov")
            run_spec, _ = make_drsr(spec.f, spec.g, float(s["tikhonov"]), gamma=1.0)
            theta, eta = 1.0, 1.0
        config = _drfdr_config(problem, s, theta, eta, stopping, max_iters, record, record_steps)
        report = solve(run_spec, config, problem.y0, problem.z0, problem.metric)
    report.meta.update({"problem": problem.name, "algo": algo, "rng": RNG_NAME})
    return report


# Output helpers

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Optional[str], header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _nice_ticks(lo: float, hi: float) -> list:
    return [10.0 ** e for e in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)]


def render_loglog_svg(series: dict, title: str = "", xlabel: str = "iteration",
                      ylabel: str = "residual", width: int = 640, height: int = 420) -> str:
    """A log-log line chart as standalone SVG. ``series`` maps a label to
    ``(x, y)`` sequences; nonpositive or non-finite points are skipped."""
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(float(a), float(b)) for a, b in zip(xs, ys)
               if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)]
        if pts:
            clean[label] = pts
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if clean:
        xs = [p[0] for pts in clean.values() for p in pts]
        ys = [p[1] for pts in clean.values() for p in pts]
        xt, yt = _nice_ticks(min(xs), max(xs)), _nice_ticks(min(ys), max(ys))
        lx0, lx1 = math.log10(xt[0]), math.log10(xt[-1]) if xt[-1] > xt[0] else math.log10(xt[0]) + 1
        ly0, ly1 = math.log10(yt[0]), math.log10(yt[-1]) if yt[-1] > yt[0] else math.log10(yt[0]) + 1

        def px(v):
            return left + (math.log10(v) - lx0) / (lx1 - lx0) * pw

        def py(v):
            return top + ph - (math.log10(v) - ly0) / (ly1 - ly0) * ph

        for t in xt:
            out.append(f'<line x1="{px(t):.2f}" y1="{top}" x2="{px(t):.2f}" y2="{top + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{px(t):.2f}" y="{top + ph + 16}" text-anchor="middle">{t:.0e}</text>')
        for t in yt:
            out.append(f'<line x1="{left}" y1="{py(t):.2f}" x2="{left + pw}" y2="{py(t):.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{left - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.0e}</text>')
        palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
        for i, (label, pts) in enumerate(clean.items()):
            color = palette[i % len(palette)]
            path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
            ly = top + 14 + 16 * i
            out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw + 36}" y="{ly + 4}">{_escape(label)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2})">{_escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="22" text-anchor="middle" font-size="13">{_escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# Argument handling

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config(path: Optional[str]) -> dict:
    """JSON object, or ``key = value`` lines (values parsed as JSON when
    possible, ``#`` starts a comment)."""
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad JSON config: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be an object")
        return data
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    return data


def _resolve(args, config: dict) -> tuple[dict, dict]:
    """Merge flags over the config file. Returns generator params and
    solver overrides."""
    merged = dict(config)
    flag_map = {"gamma": args.gamma, "theta": args.theta, "eta": args.eta, "k": args.k_mult,
                "tol": args.tol, "max_iters": args.max_iters, "alpha": args.alpha}
    merged.update({k: v for k, v in flag_map.items() if v is not None})
    if "max_iters" in merged and int(merged["max_iters"]) < 1:
        raise UsageError("max_iters must be >= 1")
    solver = {k: merged[k] for k in _SOLVER_KEYS if k in merged}
    gen = {k: v for k, v in merged.items() if k not in _SOLVER_KEYS}
    return gen, solver


def _add_run_flags(p: argparse.ArgumentParser, trials: bool) -> None:
    p.add_argument("--problem", choices=PROBLEMS, default="toy")
    p.add_argument("--algo", default="drfdr",
                   help="algorithm" + (" or comma-separated list" if trials else "")
                   + f" from {{{','.join(ALGORITHMS)}}}")
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--alpha", type=float, help="convexity modulus declared for f (slrme)")
    p.add_argument("--k-mult", type=float, help="initial stepsize multiplier k of the restart heuristic")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON or key=value file with defaults")
    if trials:
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--dump", help="directory for final iterates and instances")
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--record", action="store_true", help="record per-iteration diagnostics")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drfdr", description="Doubly relaxed forward-Douglas-Rachford splitting toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gamma-range", help="admissible stepsize interval")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)

    _add_run_flags(sub.add_parser("solve", help="run one solver"), trials=False)
    _add_run_flags(sub.add_parser("bench", help="benchmark algorithms over trials"), trials=True)

    p = sub.add_parser("sweep", help="trajectories over a parameter grid")
    _add_run_flags(p, trials=False)
    p.add_argument("--param", default="eta", choices=("eta", "gamma", "theta"))
    p.add_argument("--values", default="1.0,1.1,1.2,1.3,1.4,1.5",
                   help="comma-separated parameter values")
    p.add_argument("--plot", help="SVG plot path")
    return parser


# Subcommands

def cmd_gamma_range(args) -> int:
    try:
        c = ProblemConstants(args.alpha, args.kappa, args.ell, args.theta, args.eta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rng = gamma_range(c)
    try:
        eta_max = f"{eta_upper_bound(c):.10g}"
    except ValueError:
        eta_max = "undefined"
    print(f"case: {rng.case_label or '-'}")
    print(f"feasible: {'yes' if rng.feasible else 'no'}")
    if rng.feasible:
        print(f"gamma_lower: {rng.lower:.10g}")
        print(f"gamma_upper: {rng.upper:.10g}")
    print(f"eta_upper_bound: {eta_max}")
    if rng.delta is not None:
        print(f"discriminant: {rng.delta:.10g}")
    if rng.reason:
        print(f"reason: {rng.reason}")
    return EXIT_OK if rng.feasible else EXIT_INFEASIBLE


def _final_summary(problem: Problem, report: SolveReport) -> dict:
    y = report.y
    out = {"termination": report.reason, "iterations": report.iterations,
           "objective": float(problem.spec.F_eval(y))}
    if report.x is not None:
        out["fixed_point_residual"] = float(np.linalg.norm(np.ravel(y - report.x)))
    for key in ("y_step", "opt_cond_residual"):
        if len(report.trajectory.get(key, ())):
            out[key] = float(report.trajectory[key][-1])
    if problem.stopping.kind == "observed_residual":
        out["observed_residual"] = problem.stopping.value(y, None)
    out["metric"] = report.relative_error
    out["gamma"] = report.gamma
    out["cpu_seconds"] = report.wall_time
    return out


def cmd_solve(args, config: dict) -> int:
    gen, overrides = _resolve(args, config)
    seed = args.seed if args.seed is not None else int(gen.pop("seed", 0))
    gen.pop("seed", None)
    problem = make_problem(args.problem, seed, gen)
    report = run_algo(problem, args.algo, overrides, record=args.record)
    for key, value in _final_summary(problem, report).items():
        if value is not None:
            print(f"{key}: {value:.6g}" if isinstance(value, float) else f"{key}: {value}")
    if args.record:
        traj = report.trajectory
        n = report.iterations
        cols = [traj.get(c, np.full(n, math.nan)) for c in TRAJECTORY_COLUMNS[1:]]
        rows = ([i + 1] + [float(c[i]) for c in cols] for i in range(n))
        _write_csv(args.out, TRAJECTORY_COLUMNS, rows)
    return EXIT_DIVERGED if report.reason == "diverged" else EXIT_OK


def cmd_bench(args, config: dict) -> int:
    gen, overrides = _resolve(args, config)
    trials = args.trials if args.trials is not None else int(gen.pop("trials", 1))
    base = args.seed if args.seed is not None else int(gen.pop("seed", 0))
    gen.pop("trials", None)
    gen.pop("seed", None)
    if trials < 1:
        raise UsageError("trials must be >= 1")
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    dump = Path(args.dump) if args.dump else None

    rows, per_algo = [], {a: [] for a in algos}
    for trial in range(trials):
        seed = base + trial
        problem = make_problem(args.problem, seed, gen)
        if dump is not None and problem.instance is not None:
            save_instance(problem.instance, dump / f"instance_{trial}")
        for algo in algos:
            report = run_algo(problem, algo, overrides, record=args.record)
            row = (args.problem, algo, trial, seed, report.iterations, report.wall_time,
                   report.relative_error, report.reason)
            rows.append(row)
            per_algo[algo].append(row)
            if dump is not None:
                np.save(dump / f"{algo}_{trial}.npy", np.asarray(report.y))
            logger.info("%s trial %d: %s after %d iterations", algo, trial, report.reason, report.iterations)

    for algo in algos:
        group = per_algo[algo]
        res = [r[6] for r in group if r[6] is not None]
        converged = sum(r[7] == "converged" for r in group)
        rows.append((args.problem, algo, "mean", "", float(np.mean([r[4] for r in group])),
                     float(np.mean([r[5] for r in group])),
                     float(np.mean(res)) if res else None, f"converged {converged}/{len(group)}"))
    _write_csv(args.out, BENCH_COLUMNS, rows)
    all_diverged = all(r[7] == "diverged" for group in per_algo.values() for r in group)
    return EXIT_DIVERGED if all_diverged else EXIT_OK


def cmd_sweep(args, config: dict) -> int:
    gen, overrides = _resolve(args, config)
    seed = args.seed if args.seed is not None else int(gen.pop("seed", 0))
    gen.pop("seed", None)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from exc
    if not values:
        raise UsageError("--values is empty")
    problem = make_problem(args.problem, seed, gen)
    rows, series, diverged = [], {}, 0
    for value in values:
        run = dict(overrides)
        run[args.param] = value
        report = run_algo(problem, args.algo, run, record=True)
        diverged += report.reason == "diverged"
        y_step = report.trajectory.get("y_step", np.full(report.iterations, math.nan))
        fpr = report.trajectory.get("fixed_point_residual", np.full(report.iterations, math.nan))
        for i in range(report.iterations):
            rows.append((args.param, value, i + 1, float(y_step[i]), float(fpr[i])))
        series[f"{args.param}={value:g}"] = (np.arange(1, report.iterations + 1), y_step)
        print(f"{args.param}={value:g}: {report.reason} after {report.iterations} iterations",
              file=sys.stderr)
    _write_csv(args.out, SWEEP_COLUMNS, rows)
    if args.plot:
        svg = render_loglog_svg(series, title=f"{args.problem}: {args.algo} over {args.param}",
                                ylabel="||y_{n+1} - y_n||")
        Path(args.plot).parent.mkdir(parents=True, exist_ok=True)
        with open(args.plot, "w", encoding="utf-8", newline="") as fh:
            fh.write(svg)
    return EXIT_DIVERGED if diverged == len(values) else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gamma-range":
            return cmd_gamma_range(args)
        config = _read_config(args.config)
        handler = {"solve": cmd_solve, "bench": cmd_bench, "sweep": cmd_sweep}[args.command]
        return handler(args, config)
    except (UsageError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
