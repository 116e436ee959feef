"""Command-line front end: ``resolve``, ``sample``, ``check`` and ``bound``.

Exit codes: 0 success (or a passing check), 1 failing check, 2 scene or
configuration error, 3 an unresolved impact in ``resolve``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import check_dissipation, check_nondegenerate, kinetic_energy
from .core import normalize
from .errors import NonTermination, SchemaError
from .inclusion import integrate, parse_strategy, safeguard_horizon, sample_outcomes
from .routh import norm_equivalence_constant, termination_bound_single
from .scenarios import load_scene

DEFAULT_STEP = 1e-3
PROPERTIES = ("dissipation", "homogeneity", "degeneracy", "termination")


@dataclass(frozen=True)
class RunConfig:
    command: str
    scene: str
    strategy: str = "simultaneous"
    step: Optional[float] = None
    s_max: Optional[float] = None
    n_samples: int = 100
    seed: int = 0
    out: Optional[str] = None
    format: str = "csv"
    property: str = "dissipation"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _setup(cfg: RunConfig):
    scene = load_scene(cfg.scene)
    problem = normalize(scene.problem)
    try:
        strategy = parse_strategy(cfg.strategy, problem.ids, cfg.seed)
    except ValueError as exc:
        raise SchemaError("--strategy", str(exc)) from None
    step = cfg.step if cfg.step is not None else (scene.step or DEFAULT_STEP)
    if not step > 0:
        raise SchemaError("--step", "must be positive")
    if cfg.s_max is not None and not cfg.s_max > 0:
        raise SchemaError("--s-max", "must be positive")
    w0 = problem.to_normalized(scene.v0)
    return scene, problem, strategy, step, w0


def _resolve(cfg: RunConfig) -> int:
    scene, problem, strategy, step, w0 = _setup(cfg)
    try:
        traj = integrate(problem, w0, strategy, step, cfg.s_max, tol=scene.effective_tol)
        code = 0
    except NonTermination as exc:
        traj = exc.trajectory
        print(f"error: {exc}", file=sys.stderr)
        code = 3
    v = problem.to_original(traj.v)
    energy = [kinetic_energy(w) for w in traj.v]
    ids = problem.ids
    if cfg.format == "json":
        _write(_json({
            "ids": ids, "terminated": traj.terminated, "s": [float(x) for x in traj.s],
            "v": v.tolist(), "lambda_n": traj.weights.tolist(), "K": energy,
        }), cfg.out)
    else:
        header = (["s"] + [f"v_{i}" for i in range(problem.dim)]
                  + [f"lambda_n_{c}" for c in ids] + ["K"])
        rows = ([_fmt(s)] + [_fmt(x) for x in vi] + [_fmt(x) for x in wi] + [_fmt(k)]
                for s, vi, wi, k in zip(traj.s, v, traj.weights, energy))
        _write(_csv(header, rows), cfg.out)
    return code


def _sample(cfg: RunConfig) -> int:
    scene, problem, _, step, w0 = _setup(cfg)
    if cfg.n_samples < 1:
        raise SchemaError("--n", "must be >= 1")
    dedupe_tol = None
    if scene.dedupe_tol is not None:
        dedupe_tol = scene.dedupe_tol * float(np.linalg.norm(w0))
    outcomes = sample_outcomes(problem, w0, cfg.n_samples, seed=cfg.seed, step=step,
                               dedupe_tol=dedupe_tol, s_max=cfg.s_max,
                               tol=scene.effective_tol)
    rows = [(problem.to_original(p.v_plus), p.multiplicity, p.terminated)
            for p in outcomes.points]
    if cfg.format == "json":
        _write(_json([{"v_plus": v.tolist(), "multiplicity": k, "terminated": t}
                      for v, k, t in rows]), cfg.out)
    else:
        header = [f"v_plus_{i}" for i in range(problem.dim)] + ["multiplicity", "terminated"]
        body = ([_fmt(x) for x in v] + [str(k), str(t).lower()] for v, k, t in rows)
        _write(_csv(header, body), cfg.out)
    return 0


def _check(cfg: RunConfig) -> int:
    scene, problem, strategy, step, w0 = _setup(cfg)
    tol = scene.effective_tol
    lines = []
    if cfg.property == "degeneracy":
        verdict = check_nondegenerate(problem, n_samples=cfg.n_samples, seed=cfg.seed, tol=tol)
        if verdict.degenerate:
            witness = problem.to_original(verdict.v)
            lines.append(f"degeneracy: FAIL zero net force admissible at v = "
                         f"[{', '.join(_fmt(x) for x in witness)}] "
                         f"(min norm {verdict.min_norm:.3e})")
            passed = False
        else:
            lines.append(f"degeneracy: PASS likely non-degenerate over {verdict.samples} samples "
                         f"(min norm {verdict.min_observed:.6g})")
            passed = True
    else:
        s_max = cfg.s_max if cfg.s_max is not None else safeguard_horizon(problem, w0)
        traj = integrate(problem, w0, strategy, step, s_max, tol=tol, raise_on_timeout=False)
        if cfg.property == "dissipation":
            report = check_dissipation(traj, problem=problem)
            passed = report.passed
            lines.append(f"dissipation: {'PASS' if passed else 'FAIL'} max increase "
                         f"{report.max_violation:.3e} over {report.steps} steps, "
                         f"strict={report.strict}")
        elif cfg.property == "termination":
            passed = traj.terminated
            ratio = traj.s_final / max(float(np.linalg.norm(w0)), 1e-300)
            lines.append(f"termination: {'PASS' if passed else 'FAIL'} s_final={traj.s_final:.6g} "
                         f"(s_final/|v0| = {ratio:.6g}, horizon {s_max:.6g})")
        else:
            worst = 0.0
            for k in (0.1, 10.0):
                other = integrate(problem, k * w0, strategy, k * step, k * s_max, tol=tol,
                                  raise_on_timeout=False)
                worst = max(worst, _homogeneity_error(traj, other, k))
            passed = worst <= 1e-8 * max(1.0, float(np.linalg.norm(w0)))
            lines.append(f"homogeneity: {'PASS' if passed else 'FAIL'} max deviation {worst:.3e}")
    print("\n".join(lines))
    return 0 if passed else 1


def _homogeneity_error(base, scaled, k: float) -> float:
    if len(base) != len(scaled):
        return float("inf")
    ds = np.max(np.abs(scaled.s - k * base.s))
    dv = np.max(np.abs(scaled.v - k * base.v))
    return float(max(ds, dv) / k)


def _bound(cfg: RunConfig) -> int:
    scene = load_scene(cfg.scene)
    problem = normalize(scene.problem)
    rows = [(c.id, norm_equivalence_constant(c), termination_bound_single(c))
            for c in problem.contacts]
    if cfg.format == "json":
        _write(_json([{"id": i, "epsilon": e, "S": s} for i, e, s in rows]), cfg.out)
    else:
        _write(_csv(["id", "epsilon", "S"], ([i, _fmt(e), _fmt(s)] for i, e, s in rows)),
               cfg.out)
    return 0


COMMANDS = {"resolve": _resolve, "sample": _sample, "check": _check, "bound": _bound}


def run(cfg: RunConfig) -> int:
    """Execute one command and return its exit status."""
    try:
        return COMMANDS[cfg.command](cfg)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impactset", description="Set-valued resolution of multi-contact frictional impacts.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("resolve", "integrate one strategy and write the trajectory"),
                        ("sample", "sample strategies and write the deduplicated outcomes"),
                        ("check", "run a property check"),
                        ("bound", "print single-contact exit bounds")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scene", required=True, help="scene JSON file")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "bound":
            continue
        p.add_argument("--strategy", default="simultaneous",
                       help="simultaneous | sequential:<id>,... | dirichlet:<alpha>:<resample> "
                            "| vertex:<dwell>, optionally +stick=hold|random")
        p.add_argument("--step", type=float, help=f"Euler step (default scene value or {DEFAULT_STEP})")
        p.add_argument("--s-max", type=float, dest="s_max",
                       help="simulation-time budget (default 10 * max_c S_c * |v0|)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n", type=int, default=100, dest="n_samples",
                       help="strategies to sample, or velocities to screen for degeneracy")
        if name == "check":
            p.add_argument("--property", choices=PROPERTIES, default="dissipation")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
