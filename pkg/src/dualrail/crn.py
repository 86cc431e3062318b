"""Dual-rail chemical reaction networks: compilation and structured matrices.

Each signal ``p = x+ - x-`` of a block diagram becomes a species pair.
Only the three elementary reaction kinds are produced::

    Xi -> Xi + Xj   (catalysis, rate gamma)
    Xj -> 0         (degradation, rate gamma)
    Xj+ + Xj- -> 0  (annihilation, rate eta)

State vectors are ordered with every plus rail first and then every minus
rail, both in block order.  Concentrations are in nM, so the annihilation
rate is stored in 1/(nM s).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import UnknownRate, UnsupportedBlock
from .frontend import KINDS, BlockDiagram

#: 1/(M s) -> 1/(nM s)
PER_MOLAR_TO_PER_NANOMOLAR = 1e-9

CATALYSIS = "catalysis"
DEGRADATION = "degradation"
ANNIHILATION = "annihilation"

_RAIL_SIGN = {"p": "+", "m": "-"}


@dataclass(frozen=True, order=True)
class Species:
    base: str
    rail: str  # "p" or "m"

    @property
    def name(self) -> str:
        return f"{self.base}{self.rail}"

    @property
    def partner(self) -> "Species":
        return Species(self.base, "m" if self.rail == "p" else "p")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Reaction:
    """One elementary reaction.

    For catalysis ``species`` is the catalyst and ``product`` the produced
    species; for annihilation they are the plus and minus rails.
    """

    kind: str
    species: Species
    product: Species | None
    rate: float
    name: str

    def __str__(self) -> str:
        r = repr(self.rate)
        if self.kind == CATALYSIS:
            s = f"{self.species} ->{{{r}}} {self.species} + {self.product}"
        elif self.kind == DEGRADATION:
            s = f"{self.species} ->{{{r}}} 0"
        else:
            s = f"{self.species} + {self.product} ->{{{r}}} 0"
        return f"{s}  # {self.name}"


@dataclass(frozen=True)
class Crn:
    bases: tuple[str, ...]
    inputs: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    eta: float  # 1/(nM s)
    output: str | None = None
    name: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.bases)
        index = {Species(b, "p"): i for i, b in enumerate(self.bases)}
        index.update({Species(b, "m"): n + i for i, b in enumerate(self.bases)})
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        """Number of base species (signals)."""
        return len(self.bases)

    @property
    def species(self) -> tuple[Species, ...]:
        return tuple(Species(b, "p") for b in self.bases) + tuple(Species(b, "m") for b in self.bases)

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    def index(self, s: Species) -> int:
        return self._index[s]

    def is_input(self, s: Species) -> bool:
        return s.base in self.inputs

    def rate_names(self) -> set[str]:
        return {r.name for r in self.reactions}

    def to_text(self) -> str:
        """Line-oriented export, one reaction per line."""
        head = f"# crn {self.name or 'unnamed'}: {self.n} signals, {len(self.reactions)} reactions"
        return "\n".join([head] + [str(r) for r in self.reactions]) + "\n"


def compile_dual_rail(diagram: BlockDiagram) -> Crn:
    """Lower a validated block diagram to its dual-rail CRN.

    Every input port contributes one catalysis per rail (crossed ports feed
    the opposite rail), every degradation role one degradation per rail,
    and every signal one annihilation.
    """
    eta = diagram.eta * PER_MOLAR_TO_PER_NANOMOLAR
    reactions = []
    for block in diagram.blocks:
        kind = KINDS.get(block.kind)
        if kind is None:
            raise UnsupportedBlock(f"block {block.id!r} has unsupported kind {block.kind!r}")
        for port, crossed in kind.inputs:
            src = diagram.source_of(block.id, port)
            rate = block.rates[port]
            for rail in ("p", "m"):
                catalyst = Species(src, rail)
                target = Species(block.id, rail)
                if crossed:
                    target = target.partner
                reactions.append(
                    Reaction(CATALYSIS, catalyst, target, rate.rail(rail), rate.symbol + _RAIL_SIGN[rail])
                )
        if kind.degradation:
            rate = block.rates[kind.degradation]
            for rail in ("p", "m"):
                reactions.append(
                    Reaction(DEGRADATION, Species(block.id, rail), None, rate.rail(rail), rate.symbol + _RAIL_SIGN[rail])
                )
    for block in diagram.blocks:
        reactions.append(
            Reaction(ANNIHILATION, Species(block.id, "p"), Species(block.id, "m"), eta, f"eta[{block.id}]")
        )
    return Crn(
        bases=tuple(b.id for b in diagram.blocks),
        inputs=tuple(diagram.references),
        reactions=tuple(reactions),
        eta=eta,
        output=diagram.output,
        name=diagram.name,
    )


def _matrices(crn: Crn) -> tuple[np.ndarray, np.ndarray]:
    n2 = 2 * crn.n
    A = np.zeros((n2, n2))
    B = np.zeros((n2, 2))
    for r in crn.reactions:
        if r.kind == CATALYSIS:
            j = crn.index(r.product)
            if crn.is_input(r.species):
                B[j, 0 if r.species.rail == "p" else 1] += r.rate
            else:
                A[j, crn.index(r.species)] += r.rate
        elif r.kind == DEGRADATION:
            j = crn.index(r.species)
            A[j, j] -= r.rate
    return A, B


def rail_swap(n: int) -> np.ndarray:
    """Permutation exchanging the plus and minus halves of a state."""
    z, eye = np.zeros((n, n)), np.eye(n)
    return np.block([[z, eye], [eye, z]])


def rotation(n: int) -> np.ndarray:
    """Map ``x -> [p; q]`` with ``p = x+ - x-`` and ``q = x+ + x-``."""
    eye = np.eye(n)
    return np.block([[eye, -eye], [eye, eye]])


@dataclass(frozen=True)
class VectorField:
    """Mass-action right-hand side ``A x + B r - eta (P x) o x``."""

    A: np.ndarray
    B: np.ndarray
    eta: float

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    def swap(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        return np.concatenate((x[n:], x[:n]))

    def __call__(self, x, r=(0.0, 0.0)) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.A @ x + self.B @ np.asarray(r, dtype=float) - self.eta * self.swap(x) * x

    def annihilation_jacobian(self, x) -> np.ndarray:
        """``J{x} = -D{P x} - D{x} P``."""
        x = np.asarray(x, dtype=float)
        return -np.diag(self.swap(x)) - np.diag(x) @ rail_swap(self.n)

    def jacobian(self, x) -> np.ndarray:
        return self.A + self.eta * self.annihilation_jacobian(x)


def mass_action_field(crn: Crn) -> VectorField:
    A, B = _matrices(crn)
    return VectorField(A, B, crn.eta)


def _offdiag(M: np.ndarray) -> np.ndarray:
    return M - np.diag(np.diag(M))


@dataclass(frozen=True)
class StructuredSystem:
    """Matrices of the positive nonlinear model and its rotated form.

    Attributes follow the usual block names: ``A1p`` is the plus-rail
    diagonal block, ``A2m`` the block by which minus rails drive plus rails,
    and so on.  ``R11``..``R22`` are the rotated blocks in ``(p, q)``
    coordinates; ``R11_bar``/``R22_bar`` are only set for symmetric rates.
    """

    names: tuple[str, ...]
    A: np.ndarray
    B: np.ndarray
    eta: float

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    @cached_property
    def a(self) -> np.ndarray:
        return np.diag(self.A).copy()

    @cached_property
    def P(self) -> np.ndarray:
        return rail_swap(self.n)

    @cached_property
    def W(self) -> np.ndarray:
        return rotation(self.n)

    @property
    def Wp(self) -> np.ndarray:
        return self.W[: self.n]

    @property
    def Wq(self) -> np.ndarray:
        return self.W[self.n :]

    @cached_property
    def W_inv(self) -> np.ndarray:
        return 0.5 * self.W.T

    # partition
    @property
    def A1p(self):
        return self.A[: self.n, : self.n]

    @property
    def A2m(self):
        return self.A[: self.n, self.n :]

    @property
    def A2p(self):
        return self.A[self.n :, : self.n]

    @property
    def A1m(self):
        return self.A[self.n :, self.n :]

    @property
    def B1p(self):
        return self.B[: self.n, 0]

    @property
    def B1m(self):
        return self.B[self.n :, 1]

    @property
    def a1p(self):
        return np.diag(self.A1p)

    @property
    def a1m(self):
        return np.diag(self.A1m)

    # rotated blocks, written in closed form from the partition
    def _rotated(self, s1: int, s2: int, s3: int) -> np.ndarray:
        off = _offdiag(self.A1p + s1 * self.A1m + s2 * self.A2p + s3 * self.A2m) / 2
        if s1 > 0:
            diag = -(np.abs(self.a1p) + np.abs(self.a1m)) / 2
        else:
            diag = -(np.abs(self.a1p) - np.abs(self.a1m)) / 2
        return off + np.diag(diag)

    @cached_property
    def R11(self):
        return self._rotated(+1, -1, -1)

    @cached_property
    def R12(self):
        return self._rotated(-1, -1, +1)

    @cached_property
    def R21(self):
        return self._rotated(-1, +1, -1)

    @cached_property
    def R22(self):
        return self._rotated(+1, +1, +1)

    @property
    def R(self) -> np.ndarray:
        return np.block([[self.R11, self.R12], [self.R21, self.R22]])

    @cached_property
    def symmetric(self) -> bool:
        return (
            np.array_equal(self.A1p, self.A1m)
            and np.array_equal(self.A2p, self.A2m)
            and np.array_equal(self.B1p, self.B1m)
        )

    @property
    def A1_bar(self):
        return self.A1p if self.symmetric else None

    @property
    def A2_bar(self):
        return self.A2p if self.symmetric else None

    @property
    def R11_bar(self):
        return self.A1p - self.A2p if self.symmetric else None

    @property
    def R22_bar(self):
        return self.A1p + self.A2p if self.symmetric else None

    def io_matrix(self) -> np.ndarray:
        """Linear I/O state matrix: the nominal reduction when available."""
        return self.R11_bar if self.symmetric else self.R11

    def q_matrix(self) -> np.ndarray:
        return self.R22_bar if self.symmetric else self.R22

    def field(self) -> VectorField:
        return VectorField(self.A, self.B, self.eta)

    def to_dict(self) -> dict:
        m = lambda M: None if M is None else np.asarray(M).tolist()  # noqa: E731
        return {
            "species": list(self.names),
            "eta_per_nM_s": self.eta,
            "symmetric": bool(self.symmetric),
            "A": m(self.A),
            "a": m(self.a),
            "B": m(self.B),
            "A1+": m(self.A1p),
            "A1-": m(self.A1m),
            "A2+": m(self.A2p),
            "A2-": m(self.A2m),
            "B1+": m(self.B1p),
            "B1-": m(self.B1m),
            "R11": m(self.R11),
            "R12": m(self.R12),
            "R21": m(self.R21),
            "R22": m(self.R22),
            "R11_bar": m(self.R11_bar),
            "R22_bar": m(self.R22_bar),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def extract_structure(crn: Crn) -> StructuredSystem:
    A, B = _matrices(crn)
    return StructuredSystem(tuple(crn.species_names), A, B, crn.eta)


def apply_perturbation(crn: Crn, factors: Mapping[str, float]) -> Crn:
    """Scale rail rates independently.

    Keys are rate names such as ``"gamma4+"``; a bare symbol (``"gamma4"``)
    scales both rails and ``"eta"`` scales every annihilation.  A key that
    matches nothing raises :class:`UnknownRate`.
    """
    for key, f in factors.items():
        if not f > 0:
            raise ValueError(f"multiplier for {key!r} must be positive, got {f}")
    names = crn.rate_names()
    unknown = set()
    for key in factors:
        if key == "eta":
            continue
        if key not in names and not ({key + "+", key + "-"} & names):
            unknown.add(key)
    if unknown:
        raise UnknownRate(unknown)

    def factor(r: Reaction) -> float:
        if r.kind == ANNIHILATION:
            return factors.get("eta", 1.0)
        out = factors.get(r.name, 1.0)
        base = r.name[:-1]
        return out * factors.get(base, 1.0)

    reactions = tuple(
        Reaction(r.kind, r.species, r.product, r.rate * factor(r), r.name) for r in crn.reactions
    )
    eta = crn.eta * factors.get("eta", 1.0)
    return Crn(crn.bases, crn.inputs, reactions, eta, crn.output, crn.name)


def catalysis_graph(crn: Crn) -> dict[str, set[str]]:
    """Base-species dependency graph (catalyst -> produced), inputs excluded."""
    graph: dict[str, set[str]] = {b: set() for b in crn.bases}
    for r in crn.reactions:
        if r.kind == CATALYSIS and not crn.is_input(r.species):
            graph[r.species.base].add(r.product.base)
    return graph


def topological_order(crn: Crn) -> list[str] | None:
    """Kahn ordering of the catalysis graph, or ``None`` when it has a cycle."""
    graph = catalysis_graph(crn)
    indeg = {b: 0 for b in graph}
    for targets in graph.values():
        for t in targets:
            indeg[t] += 1
    ready = [b for b in crn.bases if indeg[b] == 0]
    order = []
    while ready:
        b = ready.pop(0)
        order.append(b)
        for t in sorted(graph[b], key=crn.bases.index):
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    return order if len(order) == len(graph) else None


def is_cascaded(crn: Crn) -> bool:
    return topological_order(crn) is not None
