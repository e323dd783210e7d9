"""Reading grid cases: a native JSON scenario format and MATPOWER ``.m`` files.

All quantities are converted to per-unit on the case's ``baseMVA``. Line
capacities that a case does not specify are ``inf`` until a
:class:`CapacityRule` assigns them.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ._json import dumps
from .errors import (
    DimensionMismatch,
    MalformedRow,
    MissingBlock,
    MissingRateA,
    SchemaViolation,
    ZeroMeanFlow,
    ZeroReactance,
)
from .flow_factors import FlowFactorization, InjectionModel, factorize, slack_embedding, unnormalized_ptdf
from .grid_model import Network

# IEEE-14 study defaults: injection variance 2e-2 in MW^2, q = 1e-4, capacities 1.5 x |mean flow|
MATPOWER_DEFAULT_VARIANCE = 2e-2
MATPOWER_DEFAULT_VARIANCE_UNIT = "mw"
MATPOWER_DEFAULT_Q = 1e-4
DEFAULT_Q = 1e-3
ZERO_FLOW_RTOL = 1e-9


@dataclass(frozen=True)
class CapacityRule:
    """How line capacities are assigned.

    ``explicit``        keep the capacities given in the case;
    ``rate_a``          branch rating / baseMVA;
    ``factor_of_mean``  ``factor * |mean flow|`` per line. Lines with zero mean
                        flow raise :class:`ZeroMeanFlow` unless ``zero_flow`` is
                        ``"network_mean"``, which assigns them ``factor`` times
                        the average ``|mean flow|`` over all lines.
    """

    kind: str = "explicit"
    factor: float | None = None
    zero_flow: str = "error"

    def __post_init__(self):
        if self.kind not in ("explicit", "rate_a", "factor_of_mean"):
            raise ValueError(f"unknown capacity rule {self.kind!r}")
        if self.kind == "factor_of_mean" and not (self.factor is not None and self.factor > 0):
            raise ValueError("factor_of_mean needs a positive factor")
        if self.zero_flow not in ("error", "network_mean"):
            raise ValueError(f"zero_flow must be 'error' or 'network_mean', got {self.zero_flow!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "factor_of_mean":
            d.update(factor=self.factor, zero_flow=self.zero_flow)
        return d


@dataclass(frozen=True)
class CaseData:
    network: Network
    base_injections: np.ndarray  # length n, per-unit
    base_mva: float
    name: str
    source: str
    rate_a: tuple[float, ...] | None = None  # MVA per line, 0 = unrated

    @property
    def base_mu(self) -> np.ndarray:
        return self.base_injections[self.network.non_slack]


@dataclass(frozen=True)
class ScenarioOptions:
    capacity_rule: CapacityRule
    q: float | None = None


# ---------------------------------------------------------------------------
# MATPOWER

_BLOCK_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_SCALAR = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([^;]+);?")


def _strip_comment(line: str) -> str:
    i = line.find("%")
    return line if i < 0 else line[:i]


def _matrix_blocks(text: str) -> tuple[dict, float | None]:
    """Numeric ``mpc.<name> = [...]`` blocks as lists of ``(line_no, row)``."""
    blocks: dict[str, list[tuple[int, list[float]]]] = {}
    base_mva = None
    current = None
    width = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if current is None:
            m = _SCALAR.match(line)
            if m:
                try:
                    base_mva = float(m.group(1))
                    if not math.isfinite(base_mva):
                        raise ValueError
                except ValueError:
                    raise MalformedRow(f"cannot read baseMVA from {m.group(1).strip()!r}", line_no) from None
                continue
            m = _BLOCK_START.match(line)
            if not m:
                continue
            current, width = m.group(1), None
            blocks[current] = []
            line = m.group(2)
        end = line.find("]")
        body = line if end < 0 else line[:end]
        for chunk in body.split(";"):
            toks = chunk.replace(",", " ").split()
            if not toks:
                continue
            try:
                row = [float(t) for t in toks]
            except ValueError:
                raise MalformedRow(f"non-numeric entry in mpc.{current}: {chunk.strip()!r}", line_no) from None
            if not all(math.isfinite(v) for v in row):
                raise MalformedRow(f"non-finite entry in mpc.{current}: {chunk.strip()!r}", line_no)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise MalformedRow(
                    f"mpc.{current} row has {len(row)} columns, expected {width}", line_no
                )
            blocks[current].append((line_no, row))
        if end >= 0:
            current = None
    if current is not None:
        raise MalformedRow(f"mpc.{current} block is not closed with ']'")
    return blocks, base_mva


def _need_cols(rows, block: str, k: int) -> None:
    for line_no, row in rows:
        if len(row) < k:
            raise MalformedRow(f"mpc.{block} rows need at least {k} columns, got {len(row)}", line_no)


def _bus_id(value: float, line_no: int) -> str:
    if value != int(value):
        raise MalformedRow(f"bus number {value} is not an integer", line_no)
    return str(int(value))


def parse_matpower(text: str, source: str = "<string>") -> CaseData:
    """Parse the DC-relevant subset of a MATPOWER case.

    Susceptance is ``1/x``; resistance, charging, taps and shifts are ignored.
    Out-of-service branches and generators are dropped. The slack is the bus
    of type 3, or the last bus if none.
    """
    blocks, base_mva = _matrix_blocks(text)
    if base_mva is None:
        raise MissingBlock("mpc.baseMVA not found")
    if not base_mva > 0:
        raise MalformedRow(f"baseMVA must be positive, got {base_mva}")
    for name in ("bus", "branch"):
        if not blocks.get(name):
            raise MissingBlock(f"mpc.{name} block not found or empty")
    bus_rows, branch_rows, gen_rows = blocks["bus"], blocks["branch"], blocks.get("gen", [])
    _need_cols(bus_rows, "bus", 3)
    _need_cols(branch_rows, "branch", 4)
    _need_cols(gen_rows, "gen", 2)

    ids = []
    index = {}
    slack = None
    inj = []
    for line_no, row in bus_rows:
        bid = _bus_id(row[0], line_no)
        if bid in index:
            raise MalformedRow(f"duplicate bus number {bid}", line_no)
        index[bid] = len(ids)
        ids.append(bid)
        if int(row[1]) == 3 and slack is None:
            slack = bid
        inj.append(-row[2])
    for line_no, row in gen_rows:
        bid = _bus_id(row[0], line_no)
        if bid not in index:
            raise MalformedRow(f"generator at unknown bus {bid}", line_no)
        in_service = row[7] > 0 if len(row) > 7 else True
        if in_service:
            inj[index[bid]] += row[1]

    edges, rate_a = [], []
    for line_no, row in branch_rows:
        if len(row) > 10 and row[10] == 0:
            continue
        f, t = _bus_id(row[0], line_no), _bus_id(row[1], line_no)
        for b in (f, t):
            if b not in index:
                raise MalformedRow(f"branch references unknown bus {b}", line_no)
        x = row[3]
        if x == 0:
            raise ZeroReactance(f"line {line_no}: branch {f}-{t} has zero reactance")
        rate = row[5] if len(row) > 5 else 0.0
        cap = rate / base_mva if rate > 0 else math.inf
        edges.append((f, t, 1.0 / x, cap))
        rate_a.append(rate)

    net = Network.from_edges(ids, edges, slack=slack)
    m = re.search(r"function\s+\w+\s*=\s*(\w+)", text)
    return CaseData(
        network=net,
        base_injections=np.array(inj) / base_mva,
        base_mva=base_mva,
        name=m.group(1) if m else Path(source).stem,
        source=source,
        rate_a=tuple(rate_a),
    )


# ---------------------------------------------------------------------------
# native JSON

_ID = {"type": ["string", "integer"]}
_NUM_ARRAY = {"type": "array", "items": {"type": "number"}}
CASE_SCHEMA = {
    "type": "object",
    "required": ["buses", "lines", "injections"],
    "properties": {
        "name": {"type": "string"},
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "minItems": 2,
            "items": {"type": "object", "required": ["id"], "properties": {"id": _ID}},
        },
        "lines": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["from", "to", "susceptance"],
                "properties": {
                    "from": _ID,
                    "to": _ID,
                    "susceptance": {"type": "number"},
                    "capacity": {"type": "number"},
                    "rate_a": {"type": "number", "minimum": 0},
                },
            },
        },
        "slack": _ID,
        "injections": {
            "type": "object",
            "required": ["mu"],
            "properties": {
                "mu": _NUM_ARRAY,
                "sigma": {"type": "array", "items": _NUM_ARRAY},
                "iid_variance": {"type": "number", "minimum": 0},
                "variance_unit": {"enum": ["pu", "mw"]},
            },
            "oneOf": [{"required": ["sigma"]}, {"required": ["iid_variance"]}],
        },
        "capacity_rule": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["explicit", "rate_a", "factor_of_mean"]},
                "factor": {"type": "number", "exclusiveMinimum": 0},
                "zero_flow": {"enum": ["error", "network_mean"]},
            },
        },
        "q": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}


def _json_path(err: jsonschema.ValidationError) -> str:
    out = "$"
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def load_case_json(text: str, source: str = "<string>") -> tuple[CaseData, InjectionModel, ScenarioOptions]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    try:
        jsonschema.validate(doc, CASE_SCHEMA)
    except jsonschema.ValidationError as exc:
        err = jsonschema.exceptions.best_match([exc]) or exc
        raise SchemaViolation(err.message, _json_path(err)) from None

    base_mva = float(doc.get("base_mva", 1.0))
    ids = [str(b["id"]) for b in doc["buses"]]
    edges = [
        (ln["from"], ln["to"], ln["susceptance"], ln.get("capacity", math.inf))
        for ln in doc["lines"]
    ]
    net = Network.from_edges(ids, edges, slack=doc.get("slack"))
    rate_a = None
    if any("rate_a" in ln for ln in doc["lines"]):
        rate_a = tuple(float(ln.get("rate_a", 0.0)) for ln in doc["lines"])

    inj_doc = doc["injections"]
    mu = np.array(inj_doc["mu"], dtype=float)
    if mu.size != net.n - 1:
        raise DimensionMismatch(f"injections.mu has length {mu.size}, expected n - 1 = {net.n - 1}")
    scale = 1.0 / base_mva**2 if inj_doc.get("variance_unit", "pu") == "mw" else 1.0
    if "sigma" in inj_doc:
        rows = inj_doc["sigma"]
        if len(rows) != mu.size or any(len(r) != mu.size for r in rows):
            raise DimensionMismatch(f"injections.sigma must be {mu.size} x {mu.size}")
        cov = np.array(rows, dtype=float) * scale
    else:
        cov = float(inj_doc["iid_variance"]) * scale * np.eye(mu.size)
    inj = InjectionModel(mu, cov)

    base_inj = np.zeros(net.n)
    base_inj[net.non_slack] = mu
    base_inj[net.slack] = -mu.sum()
    case = CaseData(net, base_inj, base_mva, doc.get("name", Path(source).stem), source, rate_a)

    rule_doc = doc.get("capacity_rule", {"kind": "explicit"})
    rule = CapacityRule(rule_doc["kind"], rule_doc.get("factor"), rule_doc.get("zero_flow", "error"))
    return case, inj, ScenarioOptions(rule, doc.get("q"))


def dump_case_json(case: CaseData, inj: InjectionModel, options: ScenarioOptions) -> str:
    """Inverse of :func:`load_case_json` (variances written in per-unit)."""
    net = case.network
    lines = []
    for k, ln in enumerate(net.lines):
        d = {
            "from": net.buses[ln.from_bus].id,
            "to": net.buses[ln.to_bus].id,
            "susceptance": ln.susceptance,
        }
        if math.isfinite(ln.capacity):
            d["capacity"] = ln.capacity
        if case.rate_a is not None:
            d["rate_a"] = case.rate_a[k]
        lines.append(d)
    cov = inj.sigma_mat
    c = float(cov[0, 0]) if cov.size else 0.0
    if np.array_equal(cov, c * np.eye(cov.shape[0])):
        inj_doc = {"mu": inj.mu, "iid_variance": c}
    else:
        inj_doc = {"mu": inj.mu, "sigma": cov}
    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [{"id": b.id} for b in net.buses],
        "lines": lines,
        "slack": net.buses[net.slack].id,
        "injections": inj_doc,
        "capacity_rule": options.capacity_rule.to_dict(),
    }
    if options.q is not None:
        doc["q"] = options.q
    return dumps(doc)


# ---------------------------------------------------------------------------
# capacities


def mean_line_flows(net: Network, mu) -> np.ndarray:
    """Unnormalized mean flows ``B L^+ S mu`` (per-unit)."""
    _, bl = unnormalized_ptdf(net)
    return bl @ slack_embedding(net.n, net.slack) @ np.asarray(mu, dtype=float)


def apply_capacity_rule(case: CaseData, rule: CapacityRule, mu=None) -> Network:
    net = case.network
    if rule.kind == "explicit":
        return net
    if rule.kind == "rate_a":
        rates = case.rate_a
        if rates is None:
            raise MissingRateA(f"case {case.name!r} carries no branch ratings")
        missing = [net.line_label(k) for k, r in enumerate(rates) if not r > 0]
        if missing:
            raise MissingRateA(f"lines without rateA: {', '.join(missing)}")
        return net.with_capacities([r / case.base_mva for r in rates])

    mu = case.base_mu if mu is None else np.asarray(mu, dtype=float)
    flows = np.abs(mean_line_flows(net, mu))
    zero = flows <= ZERO_FLOW_RTOL * flows.max()
    caps = rule.factor * flows
    if zero.any():
        labels = ", ".join(net.line_label(k) for k in np.flatnonzero(zero))
        if rule.zero_flow == "error" or zero.all():
            raise ZeroMeanFlow(f"zero mean flow on line(s) {labels}; factor rule undefined")
        caps[zero] = rule.factor * flows.mean()
    return net.with_capacities(caps)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """A case with injections, capacities and ``q`` resolved, ready to analyze."""

    case: CaseData
    injections: InjectionModel
    rule: CapacityRule
    q: float
    network: Network
    factors: FlowFactorization
    options: dict

    def with_mu(self, mu) -> "Scenario":
        return replace(self, factors=self.factors.at(mu))

    def config_hash(self) -> str:
        doc = dump_case_json(
            replace(self.case, network=self.network), self.injections, ScenarioOptions(self.rule, self.q)
        )
        payload = doc + dumps({"mu": self.factors.mu})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


BUNDLED = ("k3.json", "case14.m")


def resolve_case_path(name: str) -> tuple[str, str]:
    """Return ``(text, source)`` for a file path or a bundled case name."""
    p = Path(name)
    if p.is_file():
        return p.read_text(), str(p)
    for cand in (name, name + ".json", name + ".m"):
        if cand in BUNDLED:
            return resources.files("gridrisk.cases").joinpath(cand).read_text(), f"bundled:{cand}"
    raise FileNotFoundError(f"no such case file or bundled case: {name!r}")


def load_scenario(
    name: str,
    *,
    q: float | None = None,
    mu=None,
    iid_variance: float | None = None,
    variance_unit: str | None = None,
    capacity_rule: CapacityRule | None = None,
) -> Scenario:
    """Load a case file and resolve every modelling choice.

    JSON scenarios carry their own defaults. MATPOWER cases default to
    ``mu`` = base injections, ``Sigma = 2e-2 MW^2 * I``, ``q = 1e-4`` and
    capacities 1.5 x |mean flow| (zero-flow lines get 1.5 x the network
    average). ``mu`` overrides the evaluation point only; capacity rules are
    applied at the case's own mean injections.
    """
    text, source = resolve_case_path(name)
    if source.endswith(".m"):
        case = parse_matpower(text, source)
        var = MATPOWER_DEFAULT_VARIANCE if iid_variance is None else iid_variance
        unit = variance_unit or MATPOWER_DEFAULT_VARIANCE_UNIT
        inj = InjectionModel.iid(case.base_mu, var / (case.base_mva**2 if unit == "mw" else 1.0))
        rule = capacity_rule or CapacityRule("factor_of_mean", 1.5, "network_mean")
        q = MATPOWER_DEFAULT_Q if q is None else q
    else:
        case, inj, opts = load_case_json(text, source)
        if iid_variance is not None:
            scale = 1.0 / case.base_mva**2 if variance_unit == "mw" else 1.0
            inj = InjectionModel.iid(inj.mu, iid_variance * scale)
        rule = capacity_rule or opts.capacity_rule
        q = q if q is not None else (opts.q if opts.q is not None else DEFAULT_Q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    net = apply_capacity_rule(case, rule, inj.mu)
    factors = factorize(net, inj)
    if mu is not None:
        factors = factors.at(mu)
    options = {
        "q": q,
        "capacity_rule": rule.to_dict(),
        "iid_variance": iid_variance,
        "variance_unit": variance_unit,
        "mu": None if mu is None else [float(x) for x in np.asarray(mu, dtype=float)],
    }
    return Scenario(case, inj, rule, q, net, factors, options)
