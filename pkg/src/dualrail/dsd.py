"""Lowering of dual-rail CRNs to strand-displacement reaction programs.

Every chain starts with a reversible toehold-mediated binding against a
buffer strand held at ``C_max``, followed by an irreversible release driven
by a translator fuel.  The release competes with the unbinding on equal
terms, so half of the bound complexes proceed; this is where the factor 2
of the rate mapping comes from.

Unimolecular source ``X -> X + Y`` (or ``X -> 0``) at rate ``k``::

    X + G  <=> O + Bf      forward 2k/C_max, reverse q_max
    O + T   -> X + Y + W   q_max              (degradation releases nothing)

Annihilation ``X+ + X- -> 0`` at rate ``eta`` uses two mirror-image gates,
one binding each rail first::

    X+ + L <=> H + B       forward q_max/4, reverse q_max
    H  + X- -> W           q_max

with ``q_max = 2 eta``.  Each gate holds a quarter of its first rail in the
bound complex and contributes ``eta/2``.  With fuels and buffers at ``C_max`` and the
intermediates at quasi-steady state, each chain reproduces its source rate:
exactly for unimolecular chains and to first order in ``x / C_max`` for
annihilation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .crn import ANNIHILATION, CATALYSIS, DEGRADATION, Crn, Species, mass_action_field
from .errors import UnsupportedReaction
from .sim import (
    DEFAULT_X0,
    DIVERGENCE_THRESHOLD,
    ReferenceProfile,
    Trajectory,
    _solve,
    integrate,
)

C_MAX = 1e4  # nM
SIG, FUEL, INT, BUF, WASTE = "sig", "fuel", "int", "buf", "waste"


@dataclass(frozen=True)
class DsdReaction:
    """Bimolecular step ``a + b -> products`` at rate ``q`` (1/(nM s))."""

    a: str
    b: str
    products: tuple[str, ...]
    q: float
    chain: str

    def __str__(self) -> str:
        rhs = " + ".join(self.products) if self.products else "0"
        return f"{self.a} + {self.b} ->{{{self.q!r}}} {rhs}  # {self.chain}"


@dataclass(frozen=True)
class Chain:
    """Bookkeeping for one source reaction.

    ``parts`` maps roles (``G``, ``T``, ``O``...) to species names.
    """

    name: str
    kind: str
    source: str
    partner: str | None
    product: str | None
    rate: float
    parts: dict
    steps: tuple[DsdReaction, ...]


@dataclass(frozen=True)
class DsdProgram:
    species: tuple[str, ...]
    kinds: dict
    reactions: tuple[DsdReaction, ...]
    chains: tuple[Chain, ...]
    signals: tuple[str, ...]
    references: tuple[str, ...]
    c_max: float
    q_max: float
    crn_name: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.species)})

    def index(self, name: str) -> int:
        return self._index[name]

    def of_kind(self, kind: str) -> list[str]:
        return [s for s in self.species if self.kinds[s] == kind]

    @property
    def fuels(self) -> list[str]:
        return self.of_kind(FUEL)

    def initial_state(self, x0=None) -> np.ndarray:
        """Signals from ``x0`` (default 1 nM each); fuels and buffers at ``C_max``."""
        y = np.zeros(len(self.species))
        n2 = len(self.signals)
        y[:n2] = DEFAULT_X0 if x0 is None else np.asarray(x0, dtype=float)
        for s in self.species:
            if self.kinds[s] in (FUEL, BUF):
                y[self.index(s)] = self.c_max
        return y

    def to_text(self) -> str:
        head = (
            f"# dsd {self.crn_name or 'unnamed'}: {len(self.species)} species, "
            f"{len(self.reactions)} reactions, C_max={self.c_max!r} nM, q_max={self.q_max!r} /nM/s"
        )
        return "\n".join([head] + [str(r) for r in self.reactions]) + "\n"


def _sig(s: Species) -> str:
    return f"{SIG}:{s.name}"


def translate(crn: Crn, c_max: float = C_MAX, q_max: float | None = None) -> DsdProgram:
    """Expand every CRN reaction into its fuel-driven chain.

    ``q_max`` defaults to ``2 eta``.  Annihilation gates bind at ``eta / 2``
    whatever ``q_max`` is, so a larger ``q_max`` sequesters less signal.

    Raises
    ------
    UnsupportedReaction
        For a reaction kind other than catalysis, degradation or annihilation.
    """
    if not c_max > 0:
        raise ValueError("C_max must be positive")
    q_max = 2 * crn.eta if q_max is None else float(q_max)
    if not q_max > 0:
        raise ValueError(f"q_max must be positive, got {q_max}")
    signals = tuple(_sig(s) for s in crn.species)
    refs = tuple(f"{SIG}:{b}{rail}" for b in crn.inputs for rail in "pm")
    kinds = {s: SIG for s in signals + refs}
    order = list(signals + refs)
    reactions: list[DsdReaction] = []
    chains: list[Chain] = []
    seen: dict[str, int] = {}

    def new(name: str, kind: str) -> str:
        order.append(name)
        kinds[name] = kind
        return name

    for r in crn.reactions:
        tag = r.name
        seen[tag] = seen.get(tag, 0) + 1
        label = f"{tag}:{r.species.name}>{r.product.name}" if r.product is not None else f"{tag}:{r.species.name}"
        if r.kind in (CATALYSIS, DEGRADATION):
            src = _sig(r.species)
            G = new(f"{FUEL}:G[{label}]", FUEL)
            T = new(f"{FUEL}:T[{label}]", FUEL)
            Bf = new(f"{BUF}:B[{label}]", BUF)
            O = new(f"{INT}:O[{label}]", INT)
            W = new(f"{WASTE}:W[{label}]", WASTE)
            prods = (src, _sig(r.product)) if r.kind == CATALYSIS else ()
            steps = (
                DsdReaction(src, G, (O, Bf), 2 * r.rate / c_max, label),
                DsdReaction(O, Bf, (src, G), q_max, label),
                DsdReaction(O, T, prods + (W,), q_max, label),
            )
            parts = {"G": G, "T": T, "Bf": Bf, "O": O, "W": W}
            chains.append(
                Chain(label, r.kind, src, None, None if r.kind == DEGRADATION else _sig(r.product), r.rate, parts, steps)
            )
        elif r.kind == ANNIHILATION:
            # two mirror-image gates, each binding one rail first
            steps = ()
            for first, second, side in ((r.species, r.product, "p"), (r.product, r.species, "m")):
                a, b = _sig(first), _sig(second)
                gl = f"{label}/{side}"
                L = new(f"{FUEL}:L[{gl}]", FUEL)
                B = new(f"{BUF}:B[{gl}]", BUF)
                H = new(f"{INT}:H[{gl}]", INT)
                W = new(f"{WASTE}:W[{gl}]", WASTE)
                gate = (
                    DsdReaction(a, L, (H, B), crn.eta / 2, gl),
                    DsdReaction(H, B, (a, L), q_max, gl),
                    DsdReaction(H, b, (W,), q_max, gl),
                )
                chains.append(Chain(gl, ANNIHILATION, a, b, None, r.rate / 2, {"L": L, "B": B, "H": H, "W": W}, gate))
                steps += gate
        else:
            raise UnsupportedReaction(f"cannot lower reaction {r}")
        reactions.extend(steps)
    return DsdProgram(
        species=tuple(order),
        kinds=kinds,
        reactions=tuple(reactions),
        chains=tuple(chains),
        signals=signals,
        references=refs,
        c_max=c_max,
        q_max=q_max,
        crn_name=crn.name,
    )


class _Kinetics:
    """Vectorized mass action over a program, with clamped reference slots."""

    def __init__(self, prog: DsdProgram):
        self.prog = prog
        m = len(prog.species)
        self.ia = np.array([prog.index(r.a) for r in prog.reactions], dtype=int)
        self.ib = np.array([prog.index(r.b) for r in prog.reactions], dtype=int)
        self.q = np.array([r.q for r in prog.reactions])
        S = np.zeros((m, len(prog.reactions)))
        for j, r in enumerate(prog.reactions):
            S[self.ia[j], j] -= 1
            S[self.ib[j], j] -= 1
            for p in r.products:
                S[prog.index(p), j] += 1
        self.ref = np.array([prog.index(s) for s in prog.references], dtype=int)
        S[self.ref, :] = 0.0
        self.S = S

    def _clamp(self, y, r):
        if len(self.ref):
            y = y.copy()
            y[self.ref] = r
        return y

    def __call__(self, y, r):
        y = self._clamp(y, r)
        return self.S @ (self.q * y[self.ia] * y[self.ib])

    def jacobian(self, y, r):
        y = self._clamp(y, r)
        m = len(y)
        dflux = np.zeros((len(self.q), m))
        j = np.arange(len(self.q))
        np.add.at(dflux, (j, self.ia), self.q * y[self.ib])
        np.add.at(dflux, (j, self.ib), self.q * y[self.ia])
        dflux[:, self.ref] = 0.0
        return self.S @ dflux


def program_field(prog: DsdProgram):
    """Right-hand side ``f(y, r)`` of the full program."""
    return _Kinetics(prog)


@dataclass
class FuelReport:
    c_max: float
    minimum: dict[str, float]
    time_of_minimum: dict[str, float]
    consumed: dict[str, float]

    def depletion(self, name: str) -> float:
        return float(min(max(1.0 - self.minimum[name] / self.c_max, 0.0), 1.0))

    @property
    def max_depletion(self) -> float:
        return max((self.depletion(f) for f in self.minimum), default=0.0)

    @property
    def lowest(self) -> str | None:
        return min(self.minimum, key=self.minimum.get) if self.minimum else None

    def to_dict(self) -> dict:
        return {
            "c_max_nM": self.c_max,
            "max_depletion": self.max_depletion,
            "lowest_fuel": self.lowest,
            "fuels": {
                f: {
                    "min_nM": self.minimum[f],
                    "t_min_s": self.time_of_minimum[f],
                    "depletion": self.depletion(f),
                    "consumed_nM": self.consumed[f],
                }
                for f in self.minimum
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def fuel_report(prog: DsdProgram, traj: Trajectory) -> FuelReport:
    mins, tmin, used = {}, {}, {}
    for f in prog.fuels:
        col = traj.aux[f]
        k = int(np.argmin(col))
        mins[f], tmin[f] = float(col[k]), float(traj.t[k])
        used[f] = float(prog.c_max - col[-1])
    return FuelReport(prog.c_max, mins, tmin, used)


def simulate_dsd(
    prog: DsdProgram,
    x0=None,
    profile: ReferenceProfile | None = None,
    t_end: float = 1e5,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    method: str = "LSODA",
    t_eval=None,
    divergence: float = DIVERGENCE_THRESHOLD,
    y0=None,
) -> tuple[Trajectory, FuelReport]:
    """Integrate the expanded program.

    The fast binding steps make the program stiff, so a stiff solver with the
    analytic Jacobian is the default.  Reference species are clamped to the
    profile.  The trajectory's ``x`` holds the signal rails; every other
    species is in ``aux``.
    """
    profile = profile or ReferenceProfile()
    kin = _Kinetics(prog)
    y0 = prog.initial_state(x0) if y0 is None else np.asarray(y0, dtype=float)
    n2 = len(prog.signals)
    t, Y, R, events, diverged, stats = _solve(
        kin,
        y0,
        profile,
        t_end,
        jac=kin.jacobian,
        method=method,
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        divergence=divergence,
        watch=slice(0, n2),
    )
    X = Y[:, :n2]
    aux = {s: Y[:, i] for i, s in enumerate(prog.species) if i >= n2 and s not in prog.references}
    rates = np.array([kin(Y[k], R[k])[:n2] for k in range(len(t))])
    species = [s.split(":", 1)[1] for s in prog.signals]
    traj = Trajectory(t, X, species, R, rates, events, diverged, stats, aux)
    return traj, fuel_report(prog, traj)


def reduced_field(prog: DsdProgram, x, r=(0.0, 0.0), fuels=None) -> np.ndarray:
    """Signal dynamics with intermediates eliminated at quasi-steady state.

    Each chain contributes its effective rate computed from the program's
    own step rates and the fuel and buffer levels in ``fuels`` (all at
    ``C_max`` by default, the idealized mode).  Annihilation chains use the
    leading order in ``x / C_max``.
    """
    level = (lambda s: prog.c_max) if fuels is None else (lambda s: fuels.get(s, prog.c_max))
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    conc = dict(zip(prog.signals, x))
    conc.update(zip(prog.references, r))
    idx = {s: i for i, s in enumerate(prog.signals)}
    dx = np.zeros(len(prog.signals))
    for ch in prog.chains:
        p = ch.parts
        if ch.kind == ANNIHILATION:
            bind, unbind, join = ch.steps
            k_eff = bind.q * level(p["L"]) / (unbind.q * level(p["B"])) * join.q
            flux = k_eff * conc[ch.source] * conc[ch.partner]
            dx[idx[ch.source]] -= flux
            dx[idx[ch.partner]] -= flux
            continue
        bind, unbind, release = ch.steps
        k_eff = bind.q * level(p["G"]) * release.q * level(p["T"]) / (unbind.q * level(p["Bf"]) + release.q * level(p["T"]))
        flux = k_eff * conc[ch.source]
        if ch.kind == CATALYSIS:
            dx[idx[ch.product]] += flux
        else:
            dx[idx[ch.source]] -= flux
    return dx


@dataclass
class FidelityReport:
    max_rel_deviation: float
    deviation_limit: float
    t_exceeds: float | None
    fuel_fraction_at_exceed: float | None
    min_fuel_fraction: float
    crn_diverged: bool
    dsd_diverged: bool

    @property
    def agree(self) -> bool:
        return self.crn_diverged == self.dsd_diverged

    def to_dict(self) -> dict:
        return {
            "max_rel_deviation": self.max_rel_deviation,
            "deviation_limit": self.deviation_limit,
            "t_exceeds_s": self.t_exceeds,
            "fuel_fraction_at_exceed": self.fuel_fraction_at_exceed,
            "min_fuel_fraction": self.min_fuel_fraction,
            "crn_diverged": self.crn_diverged,
            "dsd_diverged": self.dsd_diverged,
            "verdicts_agree": self.agree,
        }


def fidelity_check(
    crn: Crn,
    prog: DsdProgram,
    x0=None,
    profile: ReferenceProfile | None = None,
    t_end: float = 1e5,
    *,
    n_points: int = 2001,
    limit: float = 0.05,
) -> FidelityReport:
    """Compare ``p(t)`` of the program against the source CRN.

    The deviation at each sample is ``|p_dsd - p_crn|_inf`` relative to the
    peak ``|p_crn|_inf`` over the horizon.  Also reports when it first
    exceeds ``limit`` and how much of the scarcest fuel was left then.
    """
    grid = np.linspace(0.0, t_end, n_points)
    a = integrate(mass_action_field(crn), x0, profile, t_end, method="LSODA", t_eval=grid, rtol=1e-9, atol=1e-12)
    b, _ = simulate_dsd(prog, x0, profile, t_end, t_eval=grid)
    m = min(len(a.t), len(b.t))
    scale = max(np.abs(a.p[:m]).max(), 1e-300)
    dev = np.abs(b.p[:m] - a.p[:m]).max(axis=1) / scale
    fuel = np.min([b.aux[f][:m] for f in prog.fuels], axis=0) / prog.c_max if prog.fuels else np.ones(m)
    over = np.nonzero(dev > limit)[0]
    t_ex = float(a.t[over[0]]) if len(over) else None
    return FidelityReport(
        max_rel_deviation=float(dev.max()),
        deviation_limit=limit,
        t_exceeds=t_ex,
        fuel_fraction_at_exceed=float(fuel[over[0]]) if len(over) else None,
        min_fuel_fraction=float(fuel.min()),
        crn_diverged=a.diverged,
        dsd_diverged=b.diverged,
    )


def fuel_inventory(prog: DsdProgram, traj: Trajectory) -> dict[str, np.ndarray]:
    """Fuel not yet irreversibly consumed, per chain: ``C_max - waste``.

    Free fuel is held reversibly by intermediates, so it can tick up while
    the inventory cannot.
    """
    return {ch.name: prog.c_max - traj.aux[ch.parts["W"]] for ch in prog.chains}
