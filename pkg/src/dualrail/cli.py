"""Command line front door: ``compile``, ``analyze``, ``simulate`` and ``repro``.

Exit codes: 0 success (a diverging simulation is a result, not a failure),
1 usage errors, 2 invalid design document, 3 undecided stability verdict,
4 solver failure.  Outputs go under ``--out`` or, when it is absent, under
the directory named by ``DUALRAIL_OUT`` (default ``./dualrail-out``).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis.equilibria import descartes_condition, equilibrium_full, equilibrium_q
from .analysis.report import stability_report
from .crn import apply_perturbation, compile_dual_rail, extract_structure, is_cascaded, mass_action_field
from .dsd import C_MAX, translate, simulate_dsd
from .errors import DualRailError, MissingRate, NoConvergence, SchemaError, StepUnderflow, UnknownRate, ValidationError
from .frontend import load, open_loop, parse_spec
from .repro import ARTIFACTS, reproduce
from .sim import STEP_PROFILE, ReferenceProfile, integrate, integrate_decoupled, save

log = logging.getLogger("dualrail")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_UNDECIDED, EXIT_SOLVER = 0, 1, 2, 3, 4
SHIPPED = ("example1_nominal", "example1_asymmetric")
OUT_ENV = "DUALRAIL_OUT"
DEFAULT_PERTURB = 0.01


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers -----------------------------------------------------------------


def load_design(spec: str, no_feedback: bool = False):
    """Read a design file, or a shipped design by name."""
    try:
        if not os.path.exists(spec) and spec in SHIPPED:
            text = resources.files("dualrail").joinpath("data", f"{spec}.json").read_text(encoding="utf-8")
            diagram = parse_spec(text)
        else:
            diagram = load(spec)
    except OSError as exc:
        raise CliError(f"cannot read {spec}: {exc.strerror or exc}", EXIT_INVALID) from exc
    except (SchemaError, ValidationError, MissingRate) as exc:
        raise CliError(f"{spec}: invalid design: {exc}", EXIT_INVALID) from exc
    return open_loop(diagram) if no_feedback else diagram


def parse_factors(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise CliError(f"--scale expects NAME=FACTOR, got {item!r}", EXIT_USAGE)
        try:
            out[key] = float(val)
        except ValueError as exc:
            raise CliError(f"--scale {item!r}: factor is not a number", EXIT_USAGE) from exc
    return out


def build_crn(args):
    crn = compile_dual_rail(load_design(args.spec, getattr(args, "no_feedback", False)))
    factors = parse_factors(getattr(args, "scale", None))
    eta_scale = getattr(args, "eta_scale", None)
    if eta_scale is not None:
        factors["eta"] = factors.get("eta", 1.0) * eta_scale
    if factors:
        try:
            crn = apply_perturbation(crn, factors)
        except (UnknownRate, ValueError) as exc:
            raise CliError(str(exc), EXIT_USAGE) from exc
    return crn


def output_dir(args) -> Path:
    root = Path(args.out) if getattr(args, "out", None) else Path(os.environ.get(OUT_ENV, "dualrail-out"))
    root.mkdir(parents=True, exist_ok=True)
    return root


def write_json(path: Path, doc) -> None:
    payload = {"generator": f"dualrail {__version__}", **doc}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def parse_profile(text: str | None) -> ReferenceProfile:
    """``steps``, ``zero``, a JSON file, or inline ``t:r,t:r`` with signed r."""
    if text is None or text == "steps":
        return STEP_PROFILE
    if text == "zero":
        return ReferenceProfile()
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return ReferenceProfile.from_dict(json.load(fh))
    try:
        pairs = [tuple(float(v) for v in item.split(":")) for item in text.split(",")]
        return ReferenceProfile.from_signed(pairs)
    except ValueError as exc:
        raise CliError(f"cannot parse profile {text!r}: {exc}", EXIT_USAGE) from exc


# -- subcommands -------------------------------------------------------------


def cmd_compile(args) -> int:
    crn = build_crn(args)
    S = extract_structure(crn)
    out = output_dir(args)
    stem = crn.name or "design"
    (out / f"{stem}.crn.txt").write_text(crn.to_text(), encoding="utf-8")
    doc = S.to_dict()
    doc["cascaded"] = is_cascaded(crn)
    doc["name"] = crn.name
    write_json(out / f"{stem}.structure.json", doc)
    print(f"{stem}: {crn.n} signals, {len(crn.reactions)} reactions, cascaded={doc['cascaded']}, symmetric={doc['symmetric']}")
    print(f"wrote {out / (stem + '.crn.txt')} and {out / (stem + '.structure.json')}")
    return EXIT_OK


def _sweep_point(args):
    d1, d2, c1, c2, k = args
    M = np.array([[-d1, c2], [c1, -d2]])
    res = equilibrium_q(M, k)
    return [d1, d2, c1, c2, descartes_condition(d1, d2, c1, c2), res.classification, *res.x_star.tolist()]


def example2_sweep(d1, d2, c1s, c2s, k=1.0, jobs=1) -> list[list]:
    points = [(d1, d2, c1, c2, k) for c1 in c1s for c2 in c2s]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_sweep_point, points))
    return [_sweep_point(p) for p in points]


def _write_sweep(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d1", "d2", "c1", "c2", "descartes", "classification", "q1", "q2"])
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_analyze(args) -> int:
    out = output_dir(args)
    if args.example2:
        d1, d2, c1 = args.example2
        start, stop, num = args.c2_range
        c2s = np.linspace(start, stop, int(num))
        rows = example2_sweep(d1, d2, [c1], c2s, jobs=args.jobs)
        path = out / "example2_sweep.csv"
        _write_sweep(path, rows)
        boundary = d1 * d2 / c1
        print(f"c2 boundary d1*d2/c1 = {boundary:.6g}")
        for row in rows:
            print(f"c2={row[3]:.6g}  descartes={row[4]!s:5}  equilibrium={row[5]}")
        print(f"wrote {path}")
        return EXIT_OK
    if args.spec is None:
        raise CliError("analyze needs a design (or --example2)", EXIT_USAGE)
    crn = build_crn(args)
    rep = stability_report(crn)
    stem = crn.name or "design"
    write_json(out / f"{stem}.report.json", rep.to_dict())
    (out / f"{stem}.table.txt").write_text(rep.table(), encoding="utf-8")
    sys.stdout.write(rep.table())
    for note in rep.notes:
        print(f"note: {note}")
    if rep.undecided:
        for u in rep.undecided:
            print(f"undecided: {u}", file=sys.stderr)
        return EXIT_UNDECIDED
    return EXIT_OK


def perturbed_equilibrium(crn, frac: float) -> tuple[np.ndarray, dict]:
    """Equilibrium with ``x1+`` raised by ``frac`` of its value."""
    eq = equilibrium_full(crn)
    x0 = eq.x_star.copy()
    x0[0] *= 1.0 + frac
    return x0, {"equilibrium": eq.to_dict(), "perturbation": {"species": crn.species_names[0], "fraction": frac}}


def cmd_simulate(args) -> int:
    crn = build_crn(args)
    out = output_dir(args)
    profile = parse_profile(args.profile)
    extra: dict = {"profile": profile.to_dict(), "design": crn.name}
    x0 = None
    if args.perturb is not None:
        if args.profile is None:
            profile = ReferenceProfile()
            extra["profile"] = profile.to_dict()
        x0, info = perturbed_equilibrium(crn, args.perturb)
        extra.update(info)
        log.info("starting from equilibrium with %s raised by %g", crn.species_names[0], args.perturb)
    grid = np.linspace(0.0, args.t_end, args.points)
    suffix = "_dsd" if args.dsd else "_decoupled" if args.decoupled else ""
    stem = out / f"{crn.name or 'design'}{suffix}"
    if args.dsd:
        prog = translate(crn, args.c_max)
        traj, fuel = simulate_dsd(prog, x0, profile, args.t_end, t_eval=grid)
        (out / f"{stem.name}.program.txt").write_text(prog.to_text(), encoding="utf-8")
        write_json(out / f"{stem.name}.fuel.json", fuel.to_dict())
    elif args.decoupled:
        traj = integrate_decoupled(extract_structure(crn), x0, profile, args.t_end, t_eval=grid, method=args.method)
    else:
        traj = integrate(
            mass_action_field(crn), x0, profile, args.t_end, t_eval=grid, method=args.method, species=crn.species_names
        )
    extra["generator"] = f"dualrail {__version__}"
    csv_path, json_path = save(traj, stem, extra)
    status = f"diverged at t={traj.t[-1]:.6g} s" if traj.diverged else f"completed to t={traj.t[-1]:.6g} s"
    print(f"{status}; wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_repro(args) -> int:
    root = output_dir(args)
    day = args.date or _dt.date.today().isoformat()
    target = root / f"repro-{day}"
    target.mkdir(parents=True, exist_ok=True)
    manifest = reproduce(target, jobs=args.jobs, quick=args.quick, only=args.only)
    print(f"wrote {len(manifest['files'])} files to {target}")
    return EXIT_UNDECIDED if manifest.get("undecided") else EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualrail", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dualrail {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec_required=True):
        if spec_required:
            sp.add_argument("spec", help="design file or shipped design name")
        else:
            sp.add_argument("spec", nargs="?", help="design file or shipped design name")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./dualrail-out)")
        sp.add_argument("--no-feedback", action="store_true", help="drop feedback wires")
        sp.add_argument("--scale", action="append", metavar="NAME=FACTOR", help="multiply a rate (repeatable)")
        sp.add_argument("--eta-scale", type=float, help="multiply the annihilation rate")

    c = sub.add_parser("compile", help="write the reaction list and structured matrices")
    common(c)
    c.set_defaults(func=cmd_compile)

    a = sub.add_parser("analyze", help="stability report with a table of dominant poles")
    common(a, spec_required=False)
    a.add_argument("--example2", nargs=3, type=float, metavar=("D1", "D2", "C1"), help="sweep the two-state loop")
    a.add_argument("--c2-range", nargs=3, type=float, default=(0.1, 3.0, 30), metavar=("START", "STOP", "NUM"))
    a.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="integrate the CRN, its decoupled form or its DSD program")
    common(s)
    s.add_argument("--profile", help="steps (default), zero, a JSON file, or t:r,t:r")
    s.add_argument("--t-end", type=float, default=3e6)
    s.add_argument("--points", type=int, default=3001, help="output samples")
    s.add_argument("--method", default="LSODA", help="solve_ivp method (RK45, DOP853, LSODA, BDF, Radau)")
    s.add_argument(
        "--perturb",
        nargs="?",
        type=float,
        const=DEFAULT_PERTURB,
        help=f"start at the equilibrium with x1+ raised by this fraction (default {DEFAULT_PERTURB})",
    )
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--dsd", action="store_true", help="simulate the strand-displacement program")
    mode.add_argument("--decoupled", action="store_true", help="zero the rotated cross blocks")
    s.add_argument("--c-max", type=float, default=C_MAX, help="fuel concentration for --dsd (nM)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("repro", help="regenerate every table and figure dataset")
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./dualrail-out)")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--date", help="override the date in the directory name")
    r.add_argument("--quick", action="store_true", help="shorter horizons")
    r.add_argument("--only", nargs="+", choices=sorted(ARTIFACTS), help="regenerate a subset")
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"dualrail: {exc}", file=sys.stderr)
        return exc.code
    except (StepUnderflow, NoConvergence) as exc:
        print(f"dualrail: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DualRailError as exc:
        print(f"dualrail: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
