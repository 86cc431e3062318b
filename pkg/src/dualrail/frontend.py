"""Block-diagram source language for linear controller designs.

A design is a set of typed linear blocks wired together.  Every block
produces one signed signal, which later becomes one dual-rail species pair.
Rates are stored per rail so that experimentally perturbed (asymmetric)
designs can be written down directly.

The on-disk format is a JSON tree::

    {
      "name": "example1_nominal",
      "eta": 5e5,                      # annihilation rate, 1/(M s)
      "references": ["R"],
      "output": "X5",
      "blocks": [
        {"id": "X1", "kind": "subtraction",
         "rates": {"in":  {"symbol": "gamma1", "value": 0.004},
                   "fb":  {"symbol": "gamma2", "value": 0.004},
                   "deg": {"symbol": "gamma3", "plus": 0.004, "minus": 0.004}}},
        ...
      ],
      "wires": [{"from": "R", "to": "X1.in"}, {"from": "X5", "to": "X1.fb"}, ...]
    }

A rate may also be a bare number (symmetric) or a ``[plus, minus]`` pair.
Unimolecular rates are in 1/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import MissingRate, SchemaError, ValidationError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BlockKind:
    """Port layout of a block type.

    ``inputs`` lists ``(port, crossed)`` pairs; a crossed port feeds the
    opposite rail, which is how negative signs are realised.
    """

    name: str
    inputs: tuple[tuple[str, bool], ...]
    degradation: str | None

    @property
    def roles(self) -> tuple[str, ...]:
        roles = tuple(port for port, _ in self.inputs)
        return roles + ((self.degradation,) if self.degradation else ())


KINDS: dict[str, BlockKind] = {
    k.name: k
    for k in (
        BlockKind("subtraction", (("in", False), ("fb", True)), "deg"),
        BlockKind("gain", (("in", False),), "deg"),
        BlockKind("integrator", (("in", False),), None),
        BlockKind("summation", (("in1", False), ("in2", False)), "deg"),
        BlockKind("plant", (("in", False),), "deg"),
    )
}


@dataclass(frozen=True)
class Rate:
    """A rate symbol with one value per rail."""

    symbol: str
    plus: float
    minus: float

    @property
    def symmetric(self) -> bool:
        return self.plus == self.minus

    def rail(self, rail: str) -> float:
        return self.plus if rail == "p" else self.minus


@dataclass(frozen=True)
class Block:
    id: str
    kind: str
    rates: Mapping[str, Rate]

    @property
    def spec(self) -> BlockKind:
        return KINDS[self.kind]


@dataclass(frozen=True)
class Wire:
    source: str
    target: str
    port: str

    def __str__(self) -> str:
        return f"{self.source}->{self.target}.{self.port}"


@dataclass(frozen=True)
class BlockDiagram:
    blocks: tuple[Block, ...]
    wires: tuple[Wire, ...]
    references: tuple[str, ...]
    output: str
    eta: float  # 1/(M s)
    name: str = ""
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {b.id: b for b in self.blocks})

    def block(self, block_id: str) -> Block:
        return self._by_id[block_id]

    def source_of(self, block_id: str, port: str) -> str:
        for w in self.wires:
            if w.target == block_id and w.port == port:
                return w.source
        raise KeyError(f"{block_id}.{port}")

    def rate_symbols(self) -> dict[str, Rate]:
        return {r.symbol: r for b in self.blocks for r in b.rates.values()}

    @property
    def symmetric(self) -> bool:
        return all(r.symmetric for r in self.rate_symbols().values())


# -- parsing -----------------------------------------------------------------


def _parse_rate(raw: Any, default_symbol: str, where: str) -> Rate:
    symbol = default_symbol
    if isinstance(raw, bool):
        raise SchemaError("rate must be a number", where)
    if isinstance(raw, (int, float)):
        plus = minus = raw
    elif isinstance(raw, (list, tuple)):
        if len(raw) != 2:
            raise SchemaError("rate pair must have exactly two entries", where)
        plus, minus = raw
    elif isinstance(raw, Mapping):
        symbol = raw.get("symbol", default_symbol)
        if not isinstance(symbol, str) or not symbol:
            raise SchemaError("rate symbol must be a non-empty string", where)
        if "value" in raw:
            if "plus" in raw or "minus" in raw:
                raise SchemaError("give either 'value' or 'plus'/'minus', not both", where)
            plus = minus = raw["value"]
        elif "plus" in raw and "minus" in raw:
            plus, minus = raw["plus"], raw["minus"]
        else:
            raise SchemaError("rate object needs 'value' or both 'plus' and 'minus'", where)
    else:
        raise SchemaError(f"unsupported rate entry {raw!r}", where)
    for v in (plus, minus):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"rate value {v!r} is not a number", where)
    return Rate(symbol, float(plus), float(minus))


def _require(doc: Mapping, key: str, kind, where: str):
    if key not in doc:
        raise SchemaError(f"missing key {key!r}", where)
    if not isinstance(doc[key], kind):
        raise SchemaError(f"{key!r} has the wrong type", where)
    return doc[key]


def parse_spec(text: str | bytes | Mapping) -> BlockDiagram:
    """Parse and validate a design document.

    Parameters
    ----------
    text : str, bytes or mapping
        JSON text, or an already-decoded tree.

    Raises
    ------
    SchemaError
        The document is not shaped like a design.
    ValidationError
        The design breaks an invariant; every problem is listed.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON ({exc.msg})", f"line {exc.lineno}") from exc
    else:
        doc = text
    if not isinstance(doc, Mapping):
        raise SchemaError("top level must be an object")

    blocks_raw = _require(doc, "blocks", list, "document")
    wires_raw = _require(doc, "wires", list, "document")
    refs_raw = doc.get("references", [])
    if not isinstance(refs_raw, list) or not all(isinstance(r, str) for r in refs_raw):
        raise SchemaError("'references' must be a list of names", "document")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise SchemaError("'output' must be a block id", "document")
    eta = doc.get("eta", 5e5)
    if isinstance(eta, bool) or not isinstance(eta, (int, float)):
        raise SchemaError("'eta' must be a number", "document")

    problems: list[tuple[str, str]] = []
    blocks = []
    for i, raw in enumerate(blocks_raw):
        where = f"blocks[{i}]"
        if not isinstance(raw, Mapping):
            raise SchemaError("block entry must be an object", where)
        bid = _require(raw, "id", str, where)
        kind = _require(raw, "kind", str, where)
        rates_raw = raw.get("rates", {})
        if not isinstance(rates_raw, Mapping):
            raise SchemaError("'rates' must be an object", bid)
        if kind not in KINDS:
            problems.append((bid, f"unknown block kind {kind!r}"))
            continue
        spec = KINDS[kind]
        rates = {}
        for role in spec.roles:
            if role not in rates_raw:
                problems.append((bid, f"missing rate for role {role!r}"))
                continue
            rate = _parse_rate(rates_raw[role], f"{bid}.{role}", f"{bid}.{role}")
            for rail, value in (("plus", rate.plus), ("minus", rate.minus)):
                if not math.isfinite(value) or value <= 0:
                    problems.append((f"{bid}.{role}", f"{rail} rate must be positive, got {value}"))
            rates[role] = rate
        for extra in set(rates_raw) - set(spec.roles):
            problems.append((bid, f"kind {kind!r} has no rate role {extra!r}"))
        blocks.append(Block(bid, kind, rates))

    wires = []
    for i, raw in enumerate(wires_raw):
        where = f"wires[{i}]"
        if not isinstance(raw, Mapping):
            raise SchemaError("wire entry must be an object", where)
        src = _require(raw, "from", str, where)
        dst = _require(raw, "to", str, where)
        target, _, port = dst.partition(".")
        if not port:
            raise SchemaError(f"wire target {dst!r} must look like 'block.port'", where)
        wires.append(Wire(src, target, port))

    diagram = BlockDiagram(
        blocks=tuple(blocks),
        wires=tuple(wires),
        references=tuple(refs_raw),
        output=output or "",
        eta=float(eta),
        name=str(doc.get("name", "")),
    )
    problems.extend(_check(diagram))
    if problems:
        raise ValidationError(problems)
    return diagram


def _check(d: BlockDiagram) -> list[tuple[str, str]]:
    problems = []
    ids = [b.id for b in d.blocks]
    for bid in {i for i in ids if ids.count(i) > 1}:
        problems.append((bid, "duplicate block id"))
    if len(d.references) > 1:
        problems.append(("references", "at most one reference signal is supported"))
    for ref in d.references:
        if ref in ids:
            problems.append((ref, "reference name collides with a block id"))
    if not (math.isfinite(d.eta) and d.eta > 0):
        problems.append(("eta", f"annihilation rate must be positive, got {d.eta}"))
    if not d.output or d.output not in ids:
        problems.append(("output", "no output designated" if not d.output else f"output {d.output!r} is not a block"))

    known = set(ids) | set(d.references)
    seen: dict[tuple[str, str], int] = {}
    for w in d.wires:
        if w.source not in known:
            problems.append((str(w), f"wire source {w.source!r} does not exist"))
        if w.target not in ids:
            problems.append((str(w), f"wire target {w.target!r} does not exist"))
            continue
        if w.source == w.target:
            problems.append((str(w), "a block cannot feed its own input"))
        kind = KINDS.get(d.block(w.target).kind)
        if kind is not None and w.port not in dict(kind.inputs):
            problems.append((str(w), f"block {w.target!r} has no input port {w.port!r}"))
            continue
        seen[(w.target, w.port)] = seen.get((w.target, w.port), 0) + 1
    for b in d.blocks:
        if b.kind not in KINDS:
            continue
        for port, _ in KINDS[b.kind].inputs:
            n = seen.get((b.id, port), 0)
            if n == 0:
                problems.append((f"{b.id}.{port}", "input port is not connected"))
            elif n > 1:
                problems.append((f"{b.id}.{port}", f"input port has {n} sources"))
    return problems


def _rate_doc(rate: Rate) -> dict:
    if rate.symmetric:
        return {"symbol": rate.symbol, "value": rate.plus}
    return {"symbol": rate.symbol, "plus": rate.plus, "minus": rate.minus}


def serialize(diagram: BlockDiagram) -> dict:
    """Canonical JSON tree for ``diagram``; ``parse_spec`` inverts it."""
    return {
        "version": FORMAT_VERSION,
        "name": diagram.name,
        "eta": diagram.eta,
        "references": list(diagram.references),
        "output": diagram.output,
        "blocks": [
            {
                "id": b.id,
                "kind": b.kind,
                "rates": {role: _rate_doc(b.rates[role]) for role in b.spec.roles},
            }
            for b in diagram.blocks
        ],
        "wires": [{"from": w.source, "to": f"{w.target}.{w.port}"} for w in diagram.wires],
    }


def dumps(diagram: BlockDiagram) -> str:
    return json.dumps(serialize(diagram), indent=2) + "\n"


def load(path) -> BlockDiagram:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# -- transformations -----------------------------------------------------------


def open_loop(diagram: BlockDiagram) -> BlockDiagram:
    """Remove every feedback wire.

    Subtraction blocks lose their ``fb`` port and become first-order gain
    stages that keep their input and degradation rates.
    """
    blocks = []
    for b in diagram.blocks:
        if b.kind == "subtraction":
            b = Block(b.id, "gain", {"in": b.rates["in"], "deg": b.rates["deg"]})
        blocks.append(b)
    wires = tuple(w for w in diagram.wires if w.port != "fb")
    name = f"{diagram.name}_open_loop" if diagram.name else "open_loop"
    return BlockDiagram(tuple(blocks), wires, diagram.references, diagram.output, diagram.eta, name)


# -- built-in designs ------------------------------------------------------------

RateTable = Mapping[str, "float | tuple[float, float]"]

#: Nominal column of the worked PI example (1/s; eta in 1/(M s)).
NOMINAL_RATES: dict[str, float | tuple[float, float]] = {
    "k0": 4.5e-4,
    "k1": 1e-3,
    "k2": 1e-3,
    "gamma1": 4e-3,
    "gamma2": 4e-3,
    "gamma3": 4e-3,
    "gamma4": 4e-6,
    "gamma5": 4e-6,
    "gamma6": 8e-3,
    "gamma7": 8e-3,
    "gamma8": 8e-3,
    "eta": 5e5,
}

#: Destabilising asymmetric column, given as (plus, minus) values.
ASYMMETRIC_RATES: dict[str, float | tuple[float, float]] = {
    "k0": 5.94e-4,
    "k1": 1.32e-3,
    "k2": (1.32e-3, 6.8e-4),
    "gamma1": 5.28e-3,
    "gamma2": 5.28e-3,
    "gamma3": 2.72e-3,
    "gamma4": (2.72e-6, 5.28e-6),
    "gamma5": 5.28e-6,
    "gamma6": 1.056e-2,
    "gamma7": (1.056e-2, 5.44e-3),
    "gamma8": 5.44e-3,
    "eta": 5e5,
}

#: Per rail-rate multipliers that turn the nominal column into the asymmetric one.
ASYMMETRIC_FACTORS: dict[str, float] = {
    "k0": 1.32,
    "k1": 1.32,
    "k2+": 1.32,
    "k2-": 0.68,
    "gamma1": 1.32,
    "gamma2": 1.32,
    "gamma3": 0.68,
    "gamma4+": 0.68,
    "gamma4-": 1.32,
    "gamma5": 1.32,
    "gamma6": 1.32,
    "gamma7+": 1.32,
    "gamma7-": 0.68,
    "gamma8": 0.68,
}


def _rate(params: RateTable, symbol: str) -> Rate:
    if symbol not in params:
        raise MissingRate(symbol)
    value = params[symbol]
    if isinstance(value, (tuple, list)):
        return Rate(symbol, float(value[0]), float(value[1]))
    return Rate(symbol, float(value), float(value))


def _validated(diagram: BlockDiagram) -> BlockDiagram:
    problems = _check(diagram)
    for b in diagram.blocks:
        for role, r in b.rates.items():
            if not (r.plus > 0 and r.minus > 0):
                problems.append((f"{b.id}.{role}", "rates must be positive"))
    if problems:
        raise ValidationError(problems)
    return diagram


def builtin_example1(params: RateTable = NOMINAL_RATES, feedback: bool = True, name: str = "") -> BlockDiagram:
    """PI loop: subtraction, gain and integrator, summation, first-order plant.

    Signals ``X1`` (error) .. ``X5`` (plant output ``y``); reference ``R``.
    With ``feedback=False`` the plant output no longer feeds the error block
    and the design is a feed-forward cascade.
    """
    r = lambda s: _rate(params, s)  # noqa: E731
    blocks = (
        Block("X1", "subtraction", {"in": r("gamma1"), "fb": r("gamma2"), "deg": r("gamma3")}),
        Block("X2", "gain", {"in": r("gamma4"), "deg": r("gamma5")}),
        Block("X3", "integrator", {"in": r("k0")}),
        Block("X4", "summation", {"in1": r("gamma6"), "in2": r("gamma7"), "deg": r("gamma8")}),
        Block("X5", "plant", {"in": r("k1"), "deg": r("k2")}),
    )
    wires = (
        Wire("R", "X1", "in"),
        Wire("X5", "X1", "fb"),
        Wire("X1", "X2", "in"),
        Wire("X1", "X3", "in"),
        Wire("X2", "X4", "in1"),
        Wire("X3", "X4", "in2"),
        Wire("X4", "X5", "in"),
    )
    eta = _rate(params, "eta")
    d = BlockDiagram(blocks, wires, ("R",), "X5", eta.plus, name or "example1")
    if not feedback:
        d = open_loop(d)
    return _validated(d)


def builtin_example2(d1: float, d2: float, c1: float, c2: float, eta: float = 5e5) -> BlockDiagram:
    """Two-state loop with negative feedback from ``Y`` onto ``X``.

    ``c2 == 0`` removes the feedback and yields a two-stage cascade.
    """
    for name, v in (("d1", d1), ("d2", d2), ("c1", c1)):
        if not v > 0:
            raise ValidationError([(name, f"rate must be positive, got {v}")])
    if not c2 >= 0:
        raise ValidationError([("c2", f"rate must be non-negative, got {c2}")])
    sym = lambda s, v: Rate(s, float(v), float(v))  # noqa: E731
    if c2 > 0:
        x = Block("X", "subtraction", {"in": sym("u", 1.0), "fb": sym("c2", c2), "deg": sym("d1", d1)})
        wires = (Wire("U", "X", "in"), Wire("Y", "X", "fb"))
    else:
        x = Block("X", "gain", {"in": sym("u", 1.0), "deg": sym("d1", d1)})
        wires = (Wire("U", "X", "in"),)
    y = Block("Y", "plant", {"in": sym("c1", c1), "deg": sym("d2", d2)})
    d = BlockDiagram((x, y), wires + (Wire("X", "Y", "in"),), ("U",), "Y", float(eta), "example2")
    return _validated(d)
