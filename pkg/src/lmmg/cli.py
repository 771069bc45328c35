"""Command line front end.

``lmmg run`` solves one preset or configured problem and writes ``log.csv``,
``steps.csv`` and the final solution into the output directory;
``lmmg report`` fits the convergence slope of a finished run and renders its
figures next to the CSV files.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import logging
import math
from pathlib import Path
import sys

from .driver import LmmgConfig, run_lmmg
from .errors import ConfigurationError, InvalidInputError, LmmgError
from .io import export_solution, read_solution, write_csv, write_steps_csv
from .problem import get_problem

log = logging.getLogger("lmmg")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

PRESETS = {
    "lane_emden": {"problem": "lane_emden", "epsilon": 1.0, "gamma": 0.25, "lambda": 0.5,
                   "theta": 0.5},
    "henon": {"problem": "henon", "epsilon": 1.0, "gamma": 0.25, "lambda": 0.5, "theta": 0.5},
    "henon_q1": {"problem": "henon_q1", "epsilon": 1.0, "gamma": 0.25, "lambda": 0.5,
                 "theta": 0.5},
    "henon_perturbed": {"problem": "henon_perturbed", "epsilon": 1e-3, "gamma": 0.125,
                        "lambda": 0.25, "theta": 0.5},
    "lane_emden_perturbed": {"problem": "lane_emden_perturbed", "epsilon": 1e-8, "gamma": 0.25,
                             "lambda": 0.5, "theta": 0.5},
}

PROBLEM_NAMES = ("lane_emden", "henon", "henon_q1", "henon_perturbed", "lane_emden_perturbed")


def _number(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not a finite number")
    return value


def _integer(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = _number(text)
        if not value.is_integer():
            raise ValueError("not an integer") from None
        return int(value)


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _domain(text: str) -> tuple:
    parts = [_number(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("expected x0,y0,x1,y1")
    x0, y0, x1, y1 = parts
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty rectangle")
    return ((x0, y0), (x1, y1))


def _paths(text: str) -> list:
    return [Path(p.strip()) for p in text.split(",") if p.strip()]


def _text(text: str) -> str:
    if not text:
        raise ValueError("empty value")
    return text


KEYS = {
    "problem": _choice(*PROBLEM_NAMES),
    "domain": _domain,
    "epsilon": _number,
    "gamma": _number,
    "lambda": _number,
    "theta": _number,
    "eps_tol": _number,
    "max_elements": _integer,
    "divisions": _integer,
    "max_steps": _integer,
    "scaled_threshold": _number,
    "refinement": _choice("adaptive", "uniform"),
    "initial_guess": _choice("sine", "bump"),
    "L_files": _paths,
    "output_dir": _text,
    "export": _choice("native", "vtk"),
}


def parse_value(key: str, text: str, where: str):
    if key not in KEYS:
        raise ConfigurationError(f"{where}: unknown key {key!r}")
    try:
        return KEYS[key](text.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {key}: invalid value {text.strip()!r} ({exc})") from None


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        if "=" not in line:
            raise ConfigurationError(f"{where}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value, where)
    return values


_FLAG_KEYS = {
    "gamma": "gamma", "lam": "lambda", "theta": "theta", "epsilon": "epsilon",
    "max_elements": "max_elements", "refinement": "refinement", "L": "L_files",
    "out": "output_dir", "export": "export",
}


def resolve_settings(args) -> dict:
    """Preset, then config file, then command line flags."""
    settings = {"max_elements": 50_000, "refinement": "adaptive", "output_dir": "lmmg-out",
                "export": "native"}
    if args.preset:
        settings.update(PRESETS[args.preset])
    if args.config:
        settings.update(read_config_file(args.config))
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            settings[key] = parse_value(key, value, f"--{attr.replace('_', '-')}")
    if "problem" not in settings:
        raise ConfigurationError("no problem given; use --preset or a config file with problem=")
    return settings


def build_config(settings: dict) -> LmmgConfig:
    problem = get_problem(settings["problem"])
    if "epsilon" in settings:
        problem = problem.with_eps(settings["epsilon"])
    if "domain" in settings:
        problem = replace(problem, domain=settings["domain"])
    subspace = []
    for path in settings.get("L_files", []):
        try:
            subspace.append(read_solution(path))
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"L_files: cannot read {path}: {exc}") from None
    kwargs = {
        "gamma": settings.get("gamma", 0.25),
        "lam": settings.get("lambda", 0.5),
        "theta": settings.get("theta", 0.5),
        "eps_tol": settings.get("eps_tol", 0.0),
        "max_elements": settings["max_elements"],
        "refinement": settings["refinement"],
        "initial_guess": settings.get("initial_guess", "sine"),
        "subspace": subspace,
    }
    for key in ("divisions", "max_steps", "scaled_threshold"):
        if key in settings:
            kwargs[key] = settings[key]
    config = LmmgConfig(problem, **kwargs)
    try:
        config.validate()
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc)) from None
    return config


def parse_config(argv) -> tuple[LmmgConfig, dict]:
    """Parse ``run`` arguments into a solver configuration and the resolved settings."""
    args = build_parser().parse_args(["run", *argv])
    settings = resolve_settings(args)
    return build_config(settings), settings


def _write_settings(settings: dict, path):
    lines = []
    for key in KEYS:
        if key not in settings:
            continue
        value = settings[key]
        if key == "domain":
            value = ",".join(repr(c) for p in value for c in p)
        elif key == "L_files":
            value = ",".join(str(p) for p in value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def _write_outputs(run, out: Path, export: str):
    write_csv(run, out / "log.csv", allow_empty=True)
    write_steps_csv(run, out / "steps.csv")
    if run.solution is not None:
        export_solution(run.solution, "native", out / "solution")
        if export == "vtk":
            export_solution(run.solution, "vtk", out / "solution.vtk")


def cmd_run(args) -> int:
    settings = resolve_settings(args)
    config = build_config(settings)
    out = Path(settings["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc.strerror}") from None
    if args.checkpoint:
        config.checkpoint_dir = str(out / "checkpoints")
    _write_settings(settings, out / "config.txt")
    try:
        run = run_lmmg(config)
    except LmmgError as exc:
        failed = getattr(exc, "log", None)
        if failed is not None:
            _write_outputs(failed, out, settings["export"])
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_outputs(run, out, settings["export"])
    last = run.records[-1] if run.records else None
    if last is not None:
        print(f"generations={len(run.records)} elements={last.elements} eta={last.eta:.6e} "
              f"res_norm={last.res_norm:.6e} energy={last.energy:.10g}")
    print(f"wrote {out}")
    if args.report:
        return _report(out, args.last_k, figures=True)
    return EXIT_OK


def _report(path: Path, last_k: int, figures: bool) -> int:
    from .report import render_figures, report_slope

    run_dir = path if path.is_dir() else path.parent
    csv_path = path if path.is_file() else run_dir / "log.csv"
    slope = report_slope(csv_path, last_k)
    print(f"slope_last_{last_k}={slope:.6f}")
    if figures:
        for p in render_figures(run_dir):
            print(f"wrote {p}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise ConfigurationError(f"{path} does not exist")
    try:
        return _report(path, args.last_k, figures=not args.no_figures)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmmg", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every generation")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one problem")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--config", help="file of key=value lines")
    run.add_argument("--gamma")
    run.add_argument("--lambda", dest="lam")
    run.add_argument("--theta")
    run.add_argument("--epsilon")
    run.add_argument("--max-elements")
    run.add_argument("--refinement")
    run.add_argument("--L", help="comma separated solution files spanning L")
    run.add_argument("--out", help="output directory")
    run.add_argument("--export", help="native (default) or vtk")
    run.add_argument("--checkpoint", action="store_true", help="write every generation")
    run.add_argument("--report", action="store_true", help="fit the slope and render figures")
    run.add_argument("--last-k", type=int, default=8)
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="slope and figures of a finished run")
    rep.add_argument("path", help="run directory or log.csv")
    rep.add_argument("--last-k", type=int, default=8)
    rep.add_argument("--no-figures", action="store_true")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    if args.verbose:
        log.setLevel(logging.INFO)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
