"""Command-line front end: ``minimize``, ``fractal`` and ``bench``.

Exit codes: 0 success, 1 bad arguments, 2 a run ended StepFailed, 3 a run hit
MaxIterations, 4 an output file could not be written, 5 a benchmark case
missed its band.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .fractal import FractalSpec, render, write_image
from .objectives import REGISTRY, get_objective
from .optimizers import OPTIMIZERS, OptimizerConfig, Termination, run_optimizer

EXIT_OK, EXIT_USAGE, EXIT_STEP_FAILED, EXIT_MAX_ITERS, EXIT_IO, EXIT_BAND = 0, 1, 2, 3, 4, 5

EXIT_FOR = {
    Termination.CONVERGED: EXIT_OK,
    Termination.STEP_FAILED: EXIT_STEP_FAILED,
    Termination.MAX_ITERATIONS: EXIT_MAX_ITERS,
}

REPORT_COLUMNS = ["objective", "optimizer", "x0", "iterations", "termination", "expected",
                  "within_band"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad input; this CLI reserves 2 for StepFailed."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str, sep: str = ",") -> Tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(sep))
    except ValueError:
        raise UsageError(f"not a list of numbers: {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"non-finite value in {text!r}")
    return vals


# ---------------------------------------------------------------- bench suites

BANDS = ("newton", "gd", "qfit")


def band_width(kind: str, expected: int) -> float:
    if kind == "newton":
        return 2.0
    if kind == "gd":
        return max(3.0, 0.15 * expected)
    if kind == "qfit":
        return 0.5 * expected
    raise ValueError(f"unknown band {kind!r}")


@dataclass(frozen=True)
class BenchCase:
    """One starting point of one table row.

    ``expected`` is a step count, or with ``at_least`` set the budget within
    which the run must not reach the global minimum.
    """

    objective: str
    optimizer: str
    x0: Tuple[float, ...]
    expected: int
    at_least: bool
    band: str
    config: OptimizerConfig
    minimum_tol: float = 1e-3

    @property
    def optimizer_label(self) -> str:
        if self.optimizer == "gd":
            return f"gd:{self.config.step_size:g}"
        return self.optimizer

    @property
    def expected_label(self) -> str:
        return f">={self.expected}" if self.at_least else str(self.expected)


@dataclass
class BenchOutcome:
    case: BenchCase
    iterations: int
    termination: Termination
    reached_minimum: bool
    within_band: bool


@dataclass
class BenchSuite:
    cases: List[BenchCase] = field(default_factory=list)

    @classmethod
    def from_config(cls, text: str, source: str = "<suite>") -> "BenchSuite":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise UsageError(f"cannot parse suite {source}: {exc}") from None
        defaults = cp["defaults"] if cp.has_section("defaults") else {}
        cases = []
        for name in cp.sections():
            if name == "defaults":
                continue
            sec = cp[name]

            def get(key, fallback=None):
                return sec.get(key, defaults.get(key, fallback))

            try:
                objective = sec["objective"]
                optimizer = sec["optimizer"]
                starts = [_floats(s) for s in sec["starts"].split(";")]
                expected = [e.strip() for e in sec["expected"].split(";")]
            except KeyError as exc:
                raise UsageError(f"suite section [{name}] lacks {exc}") from None
            if objective not in REGISTRY:
                raise UsageError(f"suite section [{name}]: unknown objective {objective!r}")
            if optimizer not in OPTIMIZERS:
                raise UsageError(f"suite section [{name}]: unknown optimizer {optimizer!r}")
            if len(starts) != len(expected):
                raise UsageError(f"suite section [{name}]: {len(starts)} starts but "
                                 f"{len(expected)} expected counts")
            band = get("band", "newton")
            if band not in BANDS:
                raise UsageError(f"suite section [{name}]: band must be one of {BANDS}")
            step = get("step")
            try:
                eps = float(get("eps", "1e-6"))
                max_iters = int(get("max_iters", "1000"))
                minimum_tol = float(get("minimum_tol", "1e-3"))
                shifts = _floats(get("shifts")) if get("shifts") else None
                step = float(step) if step is not None else None
            except ValueError as exc:
                raise UsageError(f"suite section [{name}]: {exc}") from None
            if optimizer == "gd" and step is None:
                raise UsageError(f"suite section [{name}]: gd needs a step")
            for x0, e in zip(starts, expected):
                at_least = e.startswith(">=")
                try:
                    count = int(e[2:] if at_least else e)
                except ValueError:
                    raise UsageError(f"suite section [{name}]: bad expected count {e!r}") from None
                budget = count if at_least else max(max_iters, 2 * count)
                kw = dict(eps=eps, max_iters=budget, step_size=step)
                if shifts is not None:
                    kw["shifts"] = shifts
                cases.append(BenchCase(objective, optimizer, x0, count, at_least, band,
                                       OptimizerConfig(**kw), minimum_tol))
        return cls(cases)

    @classmethod
    def load(cls, name_or_path: str) -> "BenchSuite":
        if name_or_path == "paper":
            text = resources.files("tonewton").joinpath("suites/paper.ini").read_text()
            return cls.from_config(text, "paper")
        try:
            with open(name_or_path) as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read suite {name_or_path}: {exc}") from None
        return cls.from_config(text, name_or_path)


def run_case(case: BenchCase) -> BenchOutcome:
    f = get_objective(case.objective)
    tr = run_optimizer(case.optimizer, f, case.x0, case.config)
    star = f.global_minimum
    reached = tr.converged and star is not None and \
        float(np.linalg.norm(tr.x_final - star)) <= case.minimum_tol
    if case.at_least:
        ok = not reached
    else:
        ok = reached and abs(tr.iterations - case.expected) <= band_width(case.band, case.expected)
    return BenchOutcome(case, tr.iterations, tr.termination, reached, ok)


def run_suite(suite: BenchSuite, jobs: int = 1) -> List[BenchOutcome]:
    """Run every case; results keep suite order whatever the completion order."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_case, suite.cases))
    return [run_case(c) for c in suite.cases]


def write_report(outcomes: Sequence[BenchOutcome], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for o in outcomes:
            c = o.case
            w.writerow([c.objective, c.optimizer_label, ",".join(f"{v:g}" for v in c.x0),
                        o.iterations, o.termination.value, c.expected_label,
                        "true" if o.within_band else "false"])


# ---------------------------------------------------------------- commands

def _fmt_point(x) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in x) + ")"


def cmd_minimize(args) -> int:
    try:
        f = get_objective(args.objective)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    x0 = _floats(args.x0)
    if len(x0) != f.dimension:
        raise UsageError(f"--x0 needs {f.dimension} values")
    if args.optimizer == "gd" and args.step is None:
        raise UsageError("--optimizer gd needs --step")
    kw = dict(eps=args.eps, max_iters=args.max_iters, step_size=args.step)
    if args.shifts is not None:
        kw["shifts"] = _floats(args.shifts)
    try:
        cfg = OptimizerConfig(**kw)
        tr = run_optimizer(args.optimizer, f, x0, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"point       {_fmt_point(tr.x_final)}")
    print(f"f           {tr.f_values[-1]:.12g}")
    print(f"grad_norm   {tr.grad_norm_final:.3e}")
    print(f"iterations  {tr.iterations}")
    print(f"termination {tr.termination.value}" + (f" ({tr.message})" if tr.message else ""))
    if args.trace:
        try:
            tr.write_csv(args.trace)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"RESULT {f.name} {args.optimizer} iters={tr.iterations} "
          f"grad={tr.grad_norm_final:.3e} status={tr.termination.value}")
    return EXIT_FOR[tr.termination]


def _parse_window(text):
    v = _floats(text)
    if len(v) != 4 or not (v[1] > v[0] and v[3] > v[2]):
        raise UsageError("--window needs x0,x1,y0,y1 with x0 < x1 and y0 < y1")
    return ((v[0], v[1]), (v[2], v[3]))


def _parse_res(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError("--res needs WIDTHxHEIGHT, e.g. 400x400") from None
    if w < 2 or h < 2:
        raise UsageError("--res must be at least 2x2")
    return w, h


def cmd_fractal(args) -> int:
    if args.objective not in REGISTRY:
        raise UsageError(f"unknown objective {args.objective!r}")
    try:
        spec = FractalSpec(args.objective, args.optimizer, shift=args.shift,
                           window=_parse_window(args.window) if args.window else None,
                           resolution=_parse_res(args.res), max_iters=args.max_iters,
                           workers=args.workers)
        spec.resolved_window()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out
    if os.path.isdir(out):
        out = os.path.join(out, spec.basename + ".ppm")
    img = render(spec)
    try:
        paths = write_image(img, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for lab, entry in enumerate(img.catalogue):
        count = int(np.sum(img.labels == lab))
        print(f"label {lab:3d} {_fmt_point(entry.point)} {entry.name or '-'} pixels={count}")
    print(f"label  -1 not converged pixels={int(np.sum(img.labels < 0))}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = BenchSuite.load(args.suite)
    outcomes = run_suite(suite, jobs=args.jobs)
    for o in outcomes:
        c = o.case
        print(f"{'ok  ' if o.within_band else 'MISS'} {c.objective:12s} {c.optimizer_label:9s} "
              f"x0={','.join(f'{v:g}' for v in c.x0):10s} iters={o.iterations:<5d} "
              f"expected={c.expected_label:6s} {o.termination.value}")
    if args.report:
        try:
            write_report(outcomes, args.report)
        except OSError as exc:
            print(f"error: cannot write report {args.report}: {exc}", file=sys.stderr)
            return EXIT_IO
    missed = sum(not o.within_band for o in outcomes)
    print(f"BENCH cases={len(outcomes)} within_band={len(outcomes) - missed} missed={missed}")
    return EXIT_BAND if missed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tonewton", description="Third-order Newton optimization tools.")
    p.add_argument("--backend-info", action="store_true",
                   help="print the active kernel backend and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    m = sub.add_parser("minimize", help="run one optimizer from one starting point")
    m.add_argument("--objective", required=True, help=f"one of {', '.join(REGISTRY)}")
    m.add_argument("--optimizer", required=True, choices=sorted(OPTIMIZERS))
    m.add_argument("--x0", required=True, help="comma-separated starting point")
    m.add_argument("--eps", type=float, default=1e-6, help="gradient-norm stop threshold")
    m.add_argument("--max-iters", type=int, default=1000)
    m.add_argument("--step", type=float, help="step size for gd")
    m.add_argument("--shifts", help="comma-separated shift ladder for ton, starting with 0")
    m.add_argument("--trace", help="write the iterate trace to this CSV file")
    m.set_defaults(func=cmd_minimize)

    fr = sub.add_parser("fractal", help="render a Newton fractal")
    fr.add_argument("--objective", required=True)
    fr.add_argument("--optimizer", default="ton", choices=["newton2", "ton"])
    fr.add_argument("--shift", type=float, default=0.0, help="identity shift tried after 0 (ton)")
    fr.add_argument("--window", help="x0,x1,y0,y1 (default: the objective's window)")
    fr.add_argument("--res", default="400x400", help="WIDTHxHEIGHT")
    fr.add_argument("--max-iters", type=int, default=50)
    fr.add_argument("--workers", type=int, default=1)
    fr.add_argument("--out", required=True, help="output .ppm path or existing directory")
    fr.set_defaults(func=cmd_fractal)

    b = sub.add_parser("bench", help="reproduce the iteration-count tables")
    b.add_argument("--suite", default="paper", help='"paper" or a suite file')
    b.add_argument("--report", help="write the per-case CSV report here")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    if args.backend_info:
        print(f"backend {_kernels.BACKEND}")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
