"""Command-line driver.

Every command writes a CSV (or, for ``cover``, a ball report) to
``--output`` or standard output, plus a JSON manifest with the configuration,
library versions, wall time and exit status.  The manifest goes to
``--manifest``, else next to ``--output`` as ``<output>.manifest.json``,
else to standard error.

Exit status: 0 success, 2 unreadable input, 3 violated precondition,
4 numerical degeneracy or a failed internal audit.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import (
    CoverageError,
    CoveringLogicError,
    DegenerateHeightError,
    InputError,
    ParameterError,
    ParseError,
    SingularPointError,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4

THREADS_ENV = "QVALUED_THREADS"


# ---------------------------------------------------------------------------
# argument types


def parse_range(text: str) -> list:
    """``start:stop:step`` (stop included within half a step), a comma list, or one number."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise argparse.ArgumentTypeError(f"range {text!r} needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 0.5 - 1e-9))
            return [round(start + i * step, 12) for i in range(n + 1)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot read {text!r} as start:stop:step or a comma list") from None


def parse_vector(text: str) -> tuple:
    try:
        return tuple(float(p) for p in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot read {text!r} as a comma-separated vector") from None


def _vec(v):
    if v is None or isinstance(v, tuple):
        return v
    if isinstance(v, (list, np.ndarray)):
        return tuple(float(t) for t in v)
    return parse_vector(v)


def _rng(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [float(t) for t in v]
    if isinstance(v, (int, float)):
        return [float(v)]
    return parse_range(v)


# ---------------------------------------------------------------------------
# parser


def _quad_args(p):
    g = p.add_argument_group("quadrature")
    g.add_argument("--radial-nodes", type=int, default=24, help="Gauss-Legendre nodes per radial panel")
    g.add_argument("--angular-nodes", type=int, default=64, help="angular nodes per panel")
    g.add_argument("--polar-nodes", type=int, default=16, help="out-of-plane nodes (m >= 3)")
    g.add_argument("--method", choices=("product", "qmc"), default="product", help="quadrature rule")


def _common(p):
    p.add_argument("--config", help="JSON file whose keys mirror these flags")
    p.add_argument("-o", "--output", help="output path (default: standard output)")
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json or standard error)")
    p.add_argument("--seed", type=int, default=0, help="random seed recorded in the manifest")
    p.add_argument("--threads", type=int, help=f"worker threads (overrides ${THREADS_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvalued",
        description="Frequency functionals, mean flatness and coverings for Q-valued maps.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freqscan", help="D, H, E and I at a center over a range of radii")
    p.add_argument("--field", help="field JSON file or built-in name")
    p.add_argument("--center", help="comma-separated center (default: the field's branch center)")
    p.add_argument("--radii", help="start:stop:step or comma list")
    _quad_args(p)
    _common(p)

    p = sub.add_parser("identities", help="relative residuals of the first-variation identities")
    p.add_argument("--field", help="field JSON file or built-in name")
    p.add_argument("--center", help="comma-separated center")
    p.add_argument("--radii", help="start:stop:step or comma list")
    p.add_argument("--step", type=float, default=1e-2, help="finite-difference step")
    _quad_args(p)
    _common(p)

    p = sub.add_parser("pinchmap", help="pinching I(x,r) - I(x,s) over a grid of centers")
    p.add_argument("--field", help="field JSON file or built-in name")
    p.add_argument("--lower", help="lower grid corner")
    p.add_argument("--upper", help="upper grid corner")
    p.add_argument("--shape", help="nodes per axis, comma list")
    p.add_argument("--s", type=float, help="inner radius")
    p.add_argument("--r", type=float, help="outer radius")
    _quad_args(p)
    _common(p)

    p = sub.add_parser("beta", help="k-th mean flatness of a measure file")
    p.add_argument("--measure", help="measure file (coordinates then weight per line)")
    p.add_argument("--x0", help="ball center")
    p.add_argument("--r", "--r0", dest="r", type=float, help="ball radius")
    p.add_argument("--k", type=int, help="plane dimension")
    _common(p)

    p = sub.add_parser("jones", help="dyadic Jones integral at a point")
    p.add_argument("--measure", help="measure file")
    p.add_argument("--x0", help="base point")
    p.add_argument("--k", type=int, help="plane dimension")
    p.add_argument("--top", type=float, default=1.0, help="largest scale")
    p.add_argument("--levels", type=int, default=8, help="number of dyadic scales")
    _common(p)

    p = sub.add_parser("cover", help="frequency-drop covering of a point file")
    p.add_argument("--points", help="point file (one point per line)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--oracle", help="synthetic oracle table (y..., r, I rows)")
    src.add_argument("--field", help="use frequencies of this field as the oracle")
    p.add_argument("--rho-target", type=float, help="final ball radius")
    p.add_argument("--delta", type=float, default=0.05, help="frequency drop per round")
    p.add_argument("--rho", type=float, default=0.01, help="spanning scale ratio (at most 1/100)")
    p.add_argument("--center", help="top ball center (default: bounding-box midpoint)")
    p.add_argument("--radius", type=float, help="top ball radius (default: smallest containing ball)")
    _common(p)

    p = sub.add_parser("reifcheck", help="integral hypothesis of the discrete Reifenberg theorem")
    p.add_argument("--measure", help="measure file of ball atoms (weight s_j^k)")
    p.add_argument("--k", type=int, help="dimension")
    p.add_argument("--delta0", type=float, default=0.01, help="threshold is delta0^2")
    p.add_argument("--grid-step", type=float, default=0.25, help="spacing of test centers")
    p.add_argument("--levels", type=int, default=6, help="number of dyadic test radii")
    _common(p)

    p = sub.add_parser("minkowski", help="tube volumes around detected Q-points")
    p.add_argument("--field", help="field JSON file or built-in name")
    p.add_argument("--rhos", help="tube radii, range or comma list")
    p.add_argument("--h", type=float, default=0.0025, help="grid spacing")
    p.add_argument("--center", help="ball center (default: the field's branch center)")
    p.add_argument("--radius", type=float, default=0.125, help="ball radius")
    p.add_argument("--tol", type=float, help="Q-point tolerance (default: from the grid spacing)")
    _common(p)
    return parser


REQUIRED = {
    "freqscan": ("field", "radii"),
    "identities": ("field", "radii"),
    "pinchmap": ("field", "lower", "upper", "shape", "s", "r"),
    "beta": ("measure", "x0", "r", "k"),
    "jones": ("measure", "x0", "k"),
    "cover": ("points", "rho_target"),
    "reifcheck": ("measure", "k"),
    "minkowski": ("field", "rhos"),
}


def _merge_config(parser, args, argv):
    if not args.config:
        return args
    from .io import read_config

    data = read_config(args.config)
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in data.items():
        if key == "command":
            continue
        if not hasattr(args, key):
            raise ParseError(f"unknown configuration key {key!r}", source=args.config)
        if key not in given:  # explicit flags win
            setattr(args, key, val)
    return args


# ---------------------------------------------------------------------------
# commands


def _scheme(args):
    from .quadrature import QuadratureScheme

    return QuadratureScheme(
        radial_nodes=int(args.radial_nodes),
        angular_nodes=int(args.angular_nodes),
        polar_nodes=int(args.polar_nodes),
        seed=int(args.seed),
        method=args.method,
    )


def _field(args):
    from .io import read_field

    return read_field(args.field)


def _center(f, args):
    c = _vec(args.center)
    if c is None:
        return tuple(float(v) for v in f.center)
    if len(c) != f.m:
        raise ParameterError(f"center has {len(c)} coordinates, the field lives in R^{f.m}")
    return c


def _cmd_freqscan(args, out):
    from .frequency import frequency_profile

    f = _field(args)
    x = _center(f, args)
    prof = frequency_profile(f, x, _rng(args.radii), None, _scheme(args), workers=_workers(args))
    header = [f"x{i + 1}" for i in range(f.m)] + ["r", "D", "H", "E", "I", "est_error"]
    return header, [rep.as_row() for rep in prof.reports], {"min_increment": prof.min_increment}


def _cmd_identities(args, out):
    from .frequency import doubling_residual, identity_residuals

    f = _field(args)
    x = _center(f, args)
    q = _scheme(args)
    rows = []
    for r in _rng(args.radii):
        res = identity_residuals(f, x, r, None, q, step=args.step)
        dbl = doubling_residual(f, x, r / 2, r, None, q)
        rows.append((*x, r, res.pairing, res.d_radial, res.h_radial, dbl, res.cauchy_schwarz))
    header = [f"x{i + 1}" for i in range(f.m)] + ["r", "pairing", "d_radial", "h_radial", "doubling",
                                                   "cauchy_schwarz"]
    return header, rows, {}


def _cmd_pinchmap(args, out):
    from .frequency import _pmap, frequency_I
    from .grids import RegularGrid

    f = _field(args)
    grid = RegularGrid(_vec(args.lower), _vec(args.upper), tuple(int(v) for v in _vec(args.shape)))
    if grid.m != f.m:
        raise ParameterError(f"grid lives in R^{grid.m}, the field in R^{f.m}")
    s, r = float(args.s), float(args.r)
    if not 0 < s < r:
        raise ParameterError(f"need 0 < s < r, got s={s}, r={r}")
    q = _scheme(args)

    def one(x):
        a = frequency_I(f, x, s, None, q, with_error=False).I
        b = frequency_I(f, x, r, None, q, with_error=False).I
        return (*x, s, r, a, b, b - a)

    rows = _pmap(one, [tuple(p) for p in grid.points()], _workers(args))
    header = [f"x{i + 1}" for i in range(f.m)] + ["s", "r", "I_s", "I_r", "W"]
    return header, rows, {}


def _cmd_beta(args, out):
    from .io import read_measure
    from .meanflat import beta_k

    mu = read_measure(args.measure)
    x0 = _vec(args.x0)
    if len(x0) != mu.m:
        raise ParameterError(f"x0 has {len(x0)} coordinates, the measure lives in R^{mu.m}")
    res = beta_k(mu, x0, float(args.r), int(args.k))
    lam = res.fit.eigenvalues if res.fit is not None else np.zeros(mu.m)
    header = [f"x0_{i + 1}" for i in range(mu.m)] + ["r0", "k"] + [f"lambda_{i + 1}" for i in range(mu.m)] + [
        "beta"]
    return header, [(*x0, float(args.r), int(args.k), *lam, res.value)], {"empty": res.empty}


def _cmd_jones(args, out):
    from .io import read_measure
    from .meanflat import dyadic_scales, jones_terms

    mu = read_measure(args.measure)
    x0 = _vec(args.x0)
    if len(x0) != mu.m:
        raise ParameterError(f"x0 has {len(x0)} coordinates, the measure lives in R^{mu.m}")
    if args.levels < 1:
        raise ParameterError("levels must be at least 1")
    scales = dyadic_scales(float(args.top), int(args.levels))
    terms = jones_terms(mu, x0, int(args.k), scales)
    cum = np.cumsum(terms)
    return ["scale", "term", "cumulative"], list(zip(scales, terms, cum)), {"jones_integral": float(cum[-1])}


def _cmd_cover(args, out):
    from .covering import FieldOracle, FunctionOracle, minkowski_cover_driver, packing_verify
    from .io import format_covering, read_oracle_table, read_points

    pts = read_points(args.points)
    if args.oracle:
        oracle = read_oracle_table(args.oracle)
    elif args.field:
        oracle = FieldOracle(_field(args), workers=_workers(args))
    else:
        oracle = FunctionOracle.constant(pts.shape[1], 0.0)
    if oracle.m != pts.shape[1]:
        raise ParameterError(f"oracle lives in R^{oracle.m}, points in R^{pts.shape[1]}")
    res = minkowski_cover_driver(pts, oracle, float(args.rho_target), delta=float(args.delta), rho=float(args.rho),
                                 x=_vec(args.center), r=args.radius)
    audit = packing_verify(res)
    extra = {"balls": len(res), "rounds": res.rounds, "kappa": res.kappa, "packing_sum": audit.packing_sum,
             "normalized_packing": audit.normalized, "raw_count": res.info.get("raw_count")}
    return None, format_covering(res, audit), extra


def _cmd_reifcheck(args, out):
    from .covering import reifenberg_hypothesis_check
    from .io import read_measure

    mu = read_measure(args.measure)
    rec = reifenberg_hypothesis_check(mu, int(args.k), float(args.delta0), grid_step=float(args.grid_step),
                                      levels=int(args.levels))
    m = mu.m
    header = ["max_ratio"] + [f"x{i + 1}" for i in range(m)] + ["r", "threshold", "passes", "evaluations"]
    x = rec.argmax_x if len(rec.argmax_x) == m else (0.0,) * m
    return header, [(rec.max_ratio, *x, rec.argmax_r, rec.threshold, rec.passes, rec.evaluations)], {
        "passes": rec.passes}


def _cmd_minkowski(args, out):
    from .covering import minkowski_content_estimate
    from .grids import RegularGrid

    f = _field(args)
    rhos = _rng(args.rhos)
    if not rhos or min(rhos) <= 0:
        raise ParameterError("tube radii must be positive")
    if args.h <= 0:
        raise ParameterError("grid spacing must be positive")
    c = np.asarray(_center(f, args))
    reach = float(args.radius) + max(rhos) + 2 * args.h
    grid = RegularGrid.with_spacing(c - reach, c + reach, float(args.h))
    rec = minkowski_content_estimate(f, grid, rhos, center=c, radius=float(args.radius), tol=args.tol)
    rows = [(rho, vol, rec.slope) for rho, vol in zip(rec.rhos, rec.volumes)]
    return ["rho", "volume", "slope"], rows, {"slope": rec.slope, "qpoints": rec.qpoints}


COMMANDS = {
    "freqscan": _cmd_freqscan,
    "identities": _cmd_identities,
    "pinchmap": _cmd_pinchmap,
    "beta": _cmd_beta,
    "jones": _cmd_jones,
    "cover": _cmd_cover,
    "reifcheck": _cmd_reifcheck,
    "minkowski": _cmd_minkowski,
}


# ---------------------------------------------------------------------------
# driver


def _workers(args):
    if args.threads:
        return max(1, int(args.threads))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(t) for t in v]
    if isinstance(v, dict):
        return {k: _jsonable(t) for k, t in v.items()}
    return v


def _emit_manifest(args, manifest):
    text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    path = getattr(args, "manifest", None)
    if path is None and getattr(args, "output", None):
        path = str(args.output) + ".manifest.json"
    if path:
        Path(path).write_text(text)
    else:
        sys.stderr.write(text)


def _exit_code(exc):
    if isinstance(exc, (ParseError, InputError, argparse.ArgumentTypeError, FileNotFoundError, IsADirectoryError,
                        PermissionError)):
        return EXIT_INPUT
    if isinstance(exc, (ParameterError, SingularPointError)):
        return EXIT_PRECONDITION
    if isinstance(exc, (DegenerateHeightError, CoveringLogicError, CoverageError, ArithmeticError)):
        return EXIT_NUMERICAL
    return None


def run(args) -> int:
    """Execute a parsed command; returns the exit status."""
    start = time.perf_counter()
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in vars(args).items() if k not in ("manifest",)},
        "versions": {
            "qvalued": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seed": args.seed,
    }
    status = EXIT_OK
    try:
        missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) is None]
        if missing:
            raise ParameterError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
        if args.threads:
            os.environ[THREADS_ENV] = str(int(args.threads))
        header, rows, extra = COMMANDS[args.command](args, None)
        if header is None:
            text = rows
            if args.output:
                Path(args.output).write_text(text)
            else:
                sys.stdout.write(text)
        else:
            from .io import write_csv

            write_csv(args.output if args.output else sys.stdout, header, rows)
        manifest["results"] = extra
    except Exception as exc:  # mapped to documented statuses
        status = _exit_code(exc)
        if status is None:
            raise
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "column"):
            if getattr(exc, attr, None) is not None:
                manifest["error"][attr] = getattr(exc, attr)
        sys.stderr.write(f"qvalued {args.command}: error: {exc}\n")
    manifest["status"] = status
    manifest["wall_time"] = time.perf_counter() - start
    _emit_manifest(args, manifest)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    try:
        args = _merge_config(parser, args, argv)
    except (ParseError, InputError, FileNotFoundError) as exc:
        sys.stderr.write(f"qvalued {args.command}: error: {exc}\n")
        manifest = {"command": args.command, "status": EXIT_INPUT,
                    "error": {"type": type(exc).__name__, "message": str(exc)}}
        _emit_manifest(args, manifest)
        return EXIT_INPUT
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
