"""Regenerate every table and figure dataset in one directory.

Each artifact is an independent job, so ``jobs > 1`` runs them in worker
processes.  Outputs carry no timestamps: the same inputs give the same bytes
apart from the ``generator`` version header.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis.equilibria import equilibrium_full
from .analysis.report import stability_report
from .crn import compile_dual_rail, extract_structure, mass_action_field
from .dsd import translate, simulate_dsd
from .frontend import parse_spec
from .sim import STEP_PROFILE, ReferenceProfile, integrate, integrate_decoupled, save

PERTURB = 0.01
HORIZONS = {
    "full": {"tracking": 2e6, "instability": 3e6, "dsd_tracking": 8e6, "dsd_instability": 3e6},
    "quick": {"tracking": 3e5, "instability": 3e6, "dsd_tracking": 1e6, "dsd_instability": 3e6},
}
POINTS = 2001


def shipped(name: str):
    text = resources.files("dualrail").joinpath("data", f"{name}.json").read_text(encoding="utf-8")
    return compile_dual_rail(parse_spec(text))


def _perturbed(crn):
    eq = equilibrium_full(crn)
    x0 = eq.x_star.copy()
    x0[0] *= 1.0 + PERTURB
    return x0


def _extra(**kw) -> dict:
    return {"generator": f"dualrail {__version__}", **kw}


def _poles(out: Path, horizon) -> list[str]:
    rows, docs = [], {}
    for name in ("example1_nominal", "example1_asymmetric"):
        rep = stability_report(shipped(name))
        docs[name] = rep.to_dict()
        rows.append(f"# {name}\n{rep.table()}")
    (out / "poles.txt").write_text("\n".join(rows), encoding="utf-8")
    (out / "poles.json").write_text(json.dumps(_extra(reports=docs), indent=2) + "\n", encoding="utf-8")
    return ["poles.txt", "poles.json"]


def _example2(out: Path, horizon) -> list[str]:
    from .cli import _write_sweep, example2_sweep

    grid = np.linspace(0.15, 3.0, 20)
    _write_sweep(out / "example2_sweep.csv", example2_sweep(1.0, 1.0, grid, grid))
    return ["example2_sweep.csv"]


def _tracking(out: Path, horizon) -> list[str]:
    crn = shipped("example1_nominal")
    t_end = horizon["tracking"]
    traj = integrate(
        mass_action_field(crn), None, STEP_PROFILE, t_end,
        method="LSODA", t_eval=np.linspace(0, t_end, POINTS), species=crn.species_names,
    )
    save(traj, out / "tracking_nominal", _extra(profile=STEP_PROFILE.to_dict()))
    return ["tracking_nominal.csv", "tracking_nominal.json"]


def _instability(out: Path, horizon) -> list[str]:
    crn = shipped("example1_asymmetric")
    t_end = horizon["instability"]
    traj = integrate(
        mass_action_field(crn), _perturbed(crn), ReferenceProfile(), t_end,
        method="LSODA", t_eval=np.linspace(0, t_end, POINTS), species=crn.species_names,
    )
    save(traj, out / "unstable_asymmetric", _extra(perturbation=PERTURB))
    return ["unstable_asymmetric.csv", "unstable_asymmetric.json"]


def _decoupled(out: Path, horizon) -> list[str]:
    crn = shipped("example1_asymmetric")
    t_end = horizon["instability"]
    traj = integrate_decoupled(
        extract_structure(crn), _perturbed(crn), ReferenceProfile(), t_end,
        method="LSODA", t_eval=np.linspace(0, t_end, POINTS),
    )
    save(traj, out / "decoupled_asymmetric", _extra(perturbation=PERTURB))
    return ["decoupled_asymmetric.csv", "decoupled_asymmetric.json"]


def _dsd_tracking(out: Path, horizon) -> list[str]:
    crn = shipped("example1_nominal")
    prog = translate(crn)
    t_end = horizon["dsd_tracking"]
    traj, fuel = simulate_dsd(prog, None, STEP_PROFILE, t_end, t_eval=np.linspace(0, t_end, POINTS))
    save(traj, out / "dsd_tracking_nominal", _extra(profile=STEP_PROFILE.to_dict(), c_max_nM=prog.c_max))
    (out / "dsd_fuel_nominal.json").write_text(json.dumps(_extra(**fuel.to_dict()), indent=2) + "\n", encoding="utf-8")
    return ["dsd_tracking_nominal.csv", "dsd_tracking_nominal.json", "dsd_fuel_nominal.json"]


def _dsd_instability(out: Path, horizon) -> list[str]:
    crn = shipped("example1_asymmetric")
    prog = translate(crn)
    t_end = horizon["dsd_instability"]
    traj, fuel = simulate_dsd(prog, _perturbed(crn), ReferenceProfile(), t_end, t_eval=np.linspace(0, t_end, POINTS))
    save(traj, out / "dsd_unstable_asymmetric", _extra(perturbation=PERTURB, fuel=fuel.to_dict()))
    return ["dsd_unstable_asymmetric.csv", "dsd_unstable_asymmetric.json"]


ARTIFACTS = {
    "poles": _poles,
    "example2": _example2,
    "tracking": _tracking,
    "instability": _instability,
    "decoupled": _decoupled,
    "dsd_tracking": _dsd_tracking,
    "dsd_instability": _dsd_instability,
}


def _run(job):
    name, out, horizon = job
    return ARTIFACTS[name](Path(out), horizon)


def reproduce(out, *, jobs: int = 1, quick: bool = False, only=None) -> dict:
    """Write every artifact under ``out`` plus ``manifest.json``.

    Returns the manifest: file names with SHA-256 digests and the horizons
    used.  ``only`` restricts the run to a subset of :data:`ARTIFACTS`.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    horizon = HORIZONS["quick" if quick else "full"]
    names = list(only) if only else list(ARTIFACTS)
    work = [(n, str(out), horizon) for n in names]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            produced = list(pool.map(_run, work))
    else:
        produced = [_run(w) for w in work]
    files = {}
    for group in produced:
        for f in group:
            files[f] = hashlib.sha256((out / f).read_bytes()).hexdigest()
    manifest = {
        "generator": f"dualrail {__version__}",
        "command": "repro",
        "artifacts": names,
        "horizons_s": horizon,
        "perturbation": PERTURB,
        "note": "deterministic: no random seeds are used",
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
