"""Stability decision procedure and its serializable report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..crn import Crn, extract_structure, is_cascaded
from ..errors import NoConvergence, NotIrreducible
from .equilibria import POSITIVE, EquilibriumResult, equilibrium_full, linearize
from .spectra import Spectrum, diagonal_lyapunov, eigenvalues, frobenius_perron, is_irreducible, is_metzler


def boundedness_bound(R22, eta: float, N: int | None = None, v=None) -> float:
    """Radius that bounds ``|q|_2`` for ``q' = R22 q - (eta/2) q o q + v``.

    The unforced value is ``2 sqrt(N) sigma_max(R22) / eta``.  With an input
    ``v >= 0`` the implicit bound ``b = (sqrt(N) |M| + |v|_1 / b) / k`` is
    solved for its positive fixed point, with ``k = eta / 2``; that value is
    an estimate since the bound holds only outside the corresponding ball.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    R22 = np.asarray(R22, dtype=float)
    N = R22.shape[0] if N is None else N
    k = eta / 2
    sigma = float(np.linalg.norm(R22, 2)) if R22.size else 0.0
    a = np.sqrt(N) * sigma
    if v is None:
        return a / k
    v1 = float(np.abs(np.asarray(v, dtype=float)).sum())
    return (a + np.sqrt(a * a + 4 * k * v1)) / (2 * k)


@dataclass
class Verdict:
    """A claim with the predicate values it rests on.

    ``holds`` is ``None`` when the premises fail or could not be decided.
    """

    name: str
    claim: str
    holds: bool | None
    basis: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "claim": self.claim, "holds": self.holds, "basis": self.basis}


@dataclass
class StabilityReport:
    name: str
    symmetric: bool
    flags: dict
    spectra: dict[str, Spectrum]
    labels: dict[str, str]
    equilibrium: EquilibriumResult | None
    perron: tuple[float, np.ndarray] | None
    bound: float | None
    verdicts: list[Verdict]
    overall: str
    notes: list[str] = field(default_factory=list)
    undecided: list[str] = field(default_factory=list)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "symmetric": self.symmetric,
            "flags": self.flags,
            "spectra": {k: {"matrix": self.labels[k], **s.to_dict()} for k, s in self.spectra.items()},
            "equilibrium": None if self.equilibrium is None else self.equilibrium.to_dict(),
            "perron": None
            if self.perron is None
            else {"lambda_F": self.perron[0], "w_F": [float(x) for x in self.perron[1]]},
            "boundedness_bound_nM": self.bound,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "overall": self.overall,
            "notes": self.notes,
            "undecided": self.undecided,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        """Rows of matrix, dominant poles and Hurwitz verdict."""
        rows = [("matrix", "poles with maximum real part", "Hurwitz")]
        for key in ("io", "q", "A", "A_s"):
            if key not in self.spectra:
                continue
            s = self.spectra[key]
            poles = ", ".join(_fmt(z) for z in _one_per_pair(s.dominant()))
            mark = {"hurwitz": "H", "marginal": "marginal", "unstable": "not H"}[s.verdict]
            rows.append((self.labels[key], poles, mark))
        w = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(w[i]) for i, c in enumerate(r)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * x for x in w))
        lines.append("")
        lines.append(f"overall: {self.overall}")
        return "\n".join(lines) + "\n"


def _one_per_pair(zs):
    out = []
    for z in zs:
        if z.imag < 0 and any(np.isclose(z.conjugate(), u) for u in out):
            continue
        out.append(z)
    return out


def _fmt(z: complex) -> str:
    if z.imag == 0:
        return f"{z.real:.6g}"
    return f"{z.real:.6g} ± {abs(z.imag):.6g}i"


def stability_report(crn: Crn, r=(0.0, 0.0), *, tail_time: float = 2e6) -> StabilityReport:
    """Run the full decision tree on a compiled CRN.

    Spectra are taken of the I/O matrix (``R11`` or its nominal reduction),
    the internal matrix (``R22`` or its reduction), ``A`` and ``A_s`` at the
    equilibrium from :func:`equilibrium_full`.  Any sub-computation that
    fails to converge leaves its verdicts undecided rather than guessing.
    """
    S = extract_structure(crn)
    sym = S.symmetric
    bar = "̄" if sym else ""
    labels = {
        "io": f"R{bar}11",
        "q": f"R{bar}22",
        "A": "A",
        "A_s": f"A{bar}_s",
    }
    io_M, q_M = S.io_matrix(), S.q_matrix()
    undecided: list[str] = []
    notes: list[str] = []
    spectra: dict[str, Spectrum] = {}
    for key, M in (("io", io_M), ("q", q_M), ("A", S.A)):
        try:
            spectra[key] = eigenvalues(M)
        except NoConvergence as exc:
            undecided.append(f"{labels[key]} spectrum: {exc}")

    metzler_A = is_metzler(S.A)
    metzler_q = is_metzler(q_M)
    irreducible_q = bool(metzler_q and is_irreducible(q_M))
    cascaded = is_cascaded(crn)
    flags = {
        "metzler_A": metzler_A,
        "metzler_R22": metzler_q,
        "irreducible_R22": irreducible_q,
        "cascaded": cascaded,
        "symmetric": sym,
    }

    perron = None
    if irreducible_q:
        try:
            perron = frobenius_perron(q_M)
        except (NotIrreducible, NoConvergence) as exc:
            undecided.append(f"Perron pair: {exc}")

    eq = None
    try:
        eq = equilibrium_full(crn, r, tail_time=tail_time)
    except NoConvergence as exc:
        undecided.append(f"equilibrium: {exc}")
    if eq is not None:
        A_s, _ = linearize(crn, eq.x_star)
        try:
            spectra["A_s"] = eigenvalues(A_s)
        except NoConvergence as exc:
            undecided.append(f"A_s spectrum: {exc}")

    def alpha(key):
        return spectra[key].alpha if key in spectra else None

    def hurwitz(key):
        return spectra[key].is_hurwitz if key in spectra else None

    verdicts = []
    # the nonlinear matrix A being Metzler Hurwitz settles everything
    lyap = diagonal_lyapunov(S.A) if metzler_A and hurwitz("A") else None
    verdicts.append(
        Verdict(
            "gas_origin_from_A",
            "A Metzler and Hurwitz, so the unforced CRN is GAS at the origin",
            (metzler_A and hurwitz("A")) if "A" in spectra else None,
            {"metzler_A": metzler_A, "alpha_A": alpha("A"), "lyapunov_d": None if lyap is None else lyap.tolist()},
        )
    )
    io_h = hurwitz("io")
    verdicts.append(
        Verdict(
            "gas_cascade",
            "cascaded, symmetric and stable I/O dynamics, so the unforced CRN is GAS",
            (cascaded and sym and io_h) if io_h is not None else None,
            {"cascaded": cascaded, "symmetric": sym, "alpha_io": alpha("io")},
        )
    )
    q_h = hurwitz("q")
    origin_unstable = None
    if q_h is not None:
        origin_unstable = bool(irreducible_q and not q_h)
    verdicts.append(
        Verdict(
            "origin_unstable",
            f"{labels['q']} irreducible Metzler and not Hurwitz, so the origin is unstable",
            origin_unstable,
            {
                "irreducible": irreducible_q,
                "alpha_q": alpha("q"),
                "lambda_F": None if perron is None else perron[0],
            },
        )
    )
    verdicts.append(
        Verdict(
            "positive_equilibrium",
            "a positive equilibrium exists",
            None if eq is None else eq.classification == POSITIVE,
            {
                "classification": None if eq is None else eq.classification,
                "residual": None if eq is None else eq.residual,
                "seed": None if eq is None else eq.seed,
            },
        )
    )
    bound = None
    if sym:
        bound = boundedness_bound(q_M, S.eta)
        verdicts.append(
            Verdict(
                "bounded_symmetric",
                "symmetric rates and stable I/O dynamics, so all concentrations stay bounded",
                io_h,
                {"alpha_io": alpha("io"), "q_bound_nM": bound, "eta": S.eta},
            )
        )
    else:
        notes.append(
            "rail rates differ, so stable I/O dynamics no longer guarantee stability of the CRN; "
            "the verdict rests on the linearization only"
        )
    # a marginal linearization decides nothing either way
    local = None
    if "A_s" in spectra and not spectra["A_s"].is_marginal:
        local = spectra["A_s"].is_hurwitz
    verdicts.append(
        Verdict(
            "locally_stable",
            f"{labels['A_s']} Hurwitz at the equilibrium, so it is locally asymptotically stable",
            local,
            {
                "alpha_As": alpha("A_s"),
                "equilibrium": None if eq is None else eq.classification,
            },
        )
    )
    if eq is not None and eq.classification == POSITIVE and "A" in spectra and "A_s" in spectra:
        notes.append(
            f"linearization at the origin (A) has alpha {alpha('A'):.6g}; "
            f"at the positive equilibrium alpha {alpha('A_s'):.6g}"
        )

    overall = _overall(verdicts, spectra, undecided)
    return StabilityReport(
        name=crn.name,
        symmetric=sym,
        flags=flags,
        spectra=spectra,
        labels=labels,
        equilibrium=eq,
        perron=perron,
        bound=bound,
        verdicts=verdicts,
        overall=overall,
        notes=notes,
        undecided=undecided,
    )


def _overall(verdicts: list[Verdict], spectra: dict, undecided: list[str]) -> str:
    v = {x.name: x.holds for x in verdicts}
    if v.get("gas_origin_from_A") or v.get("gas_cascade"):
        return "GAS"
    if v.get("locally_stable") is False:
        return "unstable"
    if v.get("bounded_symmetric") and v.get("locally_stable"):
        return "bounded, locally stable positive equilibrium" if v.get("positive_equilibrium") else "bounded"
    if v.get("locally_stable"):
        return "locally stable"
    if "io" in spectra and spectra["io"].is_marginal:
        return "marginal"
    return "undecided"
