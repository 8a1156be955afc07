"""Command-line entry point ``nlap``.

Exit codes: 0 success, 1 internal or convergence failure, 2 configuration
or regime rejection.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .checks import SUITES, run_suites
from .config import ConfigError, RunConfig, load_config
from .constants import HypothesisError
from .io import dumps, write_field_csv, write_mesh_csv, write_report
from .mesh import build_mesh, build_space
from .pipeline import RegimeError, constants_for, problem_summary, run_solve, sweep_values
from .subsolution import DegenerateMinimizerError, solve_p5

log = logging.getLogger("nlap")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--lambda", dest="lam", type=float, help="override lambda")
    p.add_argument("--level", type=int, help="override the finest mesh level")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--output", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nlap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="alpha_N, embeddings, r, lambda*, n*")
    _common(p)

    p = sub.add_parser("solve", help="run the full scheme")
    _common(p)
    p.add_argument("--force", action="store_true", help="run even when lambda >= lambda*")
    p.add_argument("--sweep", metavar="LO:HI:STEPS", help="one run per lambda value")

    p = sub.add_parser("check", help="property suites")
    _common(p)
    p.add_argument("--suite", action="append", choices=SUITES,
                   help="run only this suite (repeatable)")

    p = sub.add_parser("subsolution", help="solve the sublinear auxiliary problem")
    _common(p)

    p = sub.add_parser("mesh-export", help="write vertices.csv and elements.csv")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    overrides = {"lam": args.lam, "level": args.level, "seed": args.seed,
                 "output": args.output}
    if getattr(args, "force", False):
        overrides["force"] = True
    return load_config(args.config, overrides)


def _emit(report: dict, out_dir: Path | None, name: str = "report.json"):
    text = dumps(report)
    sys.stdout.write(text)
    if out_dir is not None:
        write_report(out_dir / name, report)


def cmd_constants(cfg: RunConfig) -> int:
    space = build_space(cfg.domain, cfg.level)
    spec, consts = constants_for(cfg, space)
    report = {"command": "constants", "problem": problem_summary(spec), "level": cfg.level,
              "constants": consts.to_dict(), "certified": consts.certified}
    _emit(report, Path(cfg.output), "constants.json")
    if not consts.certified:
        sys.stderr.write(f"nlap: lambda = {spec.lam:.6g} is not below lambda* = "
                         f"{consts.lambda_star:.6g}\n")
        return EXIT_CONFIG
    return EXIT_OK


def _solve_one(cfg: RunConfig, out_dir: Path, lam=None) -> int:
    rep = run_solve(cfg, lam)
    report = {"command": "solve", "problem": problem_summary(cfg.problem(rep.lam)),
              "seed": cfg.seed, **rep.to_dict()}
    write_report(out_dir / "report.json", report)
    if rep.xi is not None:
        write_field_csv(out_dir / "solution.csv", rep.space, rep.xi)
    if rep.subsolution_xi is not None:
        write_field_csv(out_dir / "subsolution.csv", rep.space, rep.subsolution_xi)
    sys.stdout.write(dumps({k: report[k] for k in ("lam", "passed", "failure",
                                                   "weak_form_defect")}))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_solve(cfg: RunConfig, sweep: str | None = None) -> int:
    out = Path(cfg.output)
    if sweep is None:
        return _solve_one(cfg, out)
    try:
        values = sweep_values(sweep)
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from None
    code = EXIT_OK
    for i, lam in enumerate(values):
        try:
            c = _solve_one(cfg, out / f"sweep_{i:03d}", lam)
        except RegimeError as exc:
            sys.stderr.write(f"nlap: sweep value {lam:.6g}: {exc}\n")
            c = EXIT_CONFIG
        code = max(code, c)
    return code


def cmd_check(cfg: RunConfig, suites=None) -> int:
    summary = run_suites(cfg.problem(), cfg.level, tuple(suites or SUITES), cfg.seed)
    _emit({"command": "check", **summary}, Path(cfg.output), "check.json")
    return EXIT_OK if summary["failed"] == 0 else EXIT_FAIL


def cmd_subsolution(cfg: RunConfig) -> int:
    space = build_space(cfg.domain, cfg.level)
    spec = cfg.problem(cfg.lam) if cfg.lam is not None else constants_for(cfg, space)[0]
    v0 = solve_p5(spec, space)
    out = Path(cfg.output)
    write_field_csv(out / "subsolution.csv", space, v0.field.xi)
    _emit({"command": "subsolution", "problem": problem_summary(spec), **v0.to_dict()},
          out, "subsolution.json")
    return EXIT_OK


def cmd_mesh_export(cfg: RunConfig) -> int:
    mesh = build_mesh(cfg.domain, cfg.level)
    v, e = write_mesh_csv(Path(cfg.output), mesh)
    sys.stdout.write(json.dumps({"vertices": str(v), "elements": str(e),
                                 "num_vertices": mesh.num_vertices,
                                 "num_elements": mesh.num_elements}, sort_keys=True) + "\n")
    return EXIT_OK


def _threads():
    raw = os.environ.get("NLAP_THREADS")
    if raw is None:
        return nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"NLAP_THREADS: expected a positive integer, got {raw!r}") from None
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        with _threads():
            if args.command == "constants":
                return cmd_constants(cfg)
            if args.command == "solve":
                return cmd_solve(cfg, args.sweep)
            if args.command == "check":
                return cmd_check(cfg, args.suite)
            if args.command == "subsolution":
                return cmd_subsolution(cfg)
            return cmd_mesh_export(cfg)
    except (ConfigError, RegimeError, HypothesisError) as exc:
        sys.stderr.write(f"nlap: {exc}\n")
        return EXIT_CONFIG
    except DegenerateMinimizerError as exc:
        sys.stderr.write(f"nlap: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
