"""Grid topology and the weighted Laplacian / incidence matrices of a DC network."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BadSlackIndex, Disconnected, DuplicateLine, NonPositiveParameter


@dataclass(frozen=True)
class Bus:
    id: str
    index: int


@dataclass(frozen=True)
class Line:
    """An oriented transmission line; flow is positive from ``from_bus`` to ``to_bus``.

    ``capacity`` may be ``math.inf`` for an unrated line, whose normalized
    flow is then identically zero.
    """

    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float
    index: int


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    slack: int
    _index_of: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index_of", {b.id: b.index for b in self.buses})

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def m(self) -> int:
        return len(self.lines)

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    @property
    def non_slack(self) -> list[int]:
        """Bus indices of the non-slack buses, in index order."""
        return [b.index for b in self.buses if b.index != self.slack]

    def index_of(self, bus_id: str) -> int:
        try:
            return self._index_of[str(bus_id)]
        except KeyError:
            raise KeyError(f"unknown bus id {bus_id!r}") from None

    def line_label(self, k: int) -> str:
        ln = self.lines[k]
        return f"{self.buses[ln.from_bus].id}-{self.buses[ln.to_bus].id}"

    @property
    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    @property
    def susceptances(self) -> np.ndarray:
        return np.array([ln.susceptance for ln in self.lines], dtype=float)

    def with_capacities(self, capacities: Sequence[float]) -> "Network":
        if len(capacities) != self.m:
            raise ValueError(f"expected {self.m} capacities, got {len(capacities)}")
        lines = tuple(
            Line(ln.from_bus, ln.to_bus, ln.susceptance, float(c), ln.index)
            for ln, c in zip(self.lines, capacities)
        )
        net = Network(self.buses, lines, self.slack)
        validate(net)
        return net

    @classmethod
    def from_edges(
        cls,
        bus_ids: Iterable,
        edges: Iterable[tuple],
        slack: str | None = None,
    ) -> "Network":
        """Build and validate a network from bus ids and ``(from_id, to_id, b, M)`` tuples.

        The slack defaults to the last bus.
        """
        buses = tuple(Bus(str(b), i) for i, b in enumerate(bus_ids))
        index = {}
        for b in buses:
            if b.id in index:
                raise ValueError(f"duplicate bus id {b.id!r}")
            index[b.id] = b.index
        lines = []
        for k, (f, t, beta, cap) in enumerate(edges):
            try:
                lines.append(Line(index[str(f)], index[str(t)], float(beta), float(cap), k))
            except KeyError as exc:
                raise ValueError(f"line {k} references unknown bus {exc.args[0]!r}") from None
        if slack is None:
            slack_idx = len(buses) - 1
        elif str(slack) in index:
            slack_idx = index[str(slack)]
        else:
            raise BadSlackIndex(f"slack bus {slack!r} is not a bus of the network")
        net = cls(buses, tuple(lines), slack_idx)
        validate(net)
        return net


def validate(net: Network) -> None:
    """Raise a structured error if ``net`` violates any structural invariant."""
    n, m = net.n, net.m
    if n < 2:
        raise NonPositiveParameter(f"network needs at least 2 buses, got {n}")
    if m < 1:
        raise NonPositiveParameter("network has no lines")
    if sorted(b.index for b in net.buses) != list(range(n)):
        raise ValueError("bus indices must be a permutation of 0..n-1")
    if len({b.id for b in net.buses}) != n:
        raise ValueError("bus ids must be unique")
    if not (isinstance(net.slack, (int, np.integer)) and 0 <= net.slack < n):
        raise BadSlackIndex(f"slack index {net.slack!r} out of range 0..{n - 1}")

    seen: dict[frozenset, int] = {}
    for k, ln in enumerate(net.lines):
        if ln.index != k:
            raise ValueError(f"line at position {k} carries index {ln.index}")
        if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n):
            raise ValueError(f"line {k} references a bus outside 0..{n - 1}")
        if ln.from_bus == ln.to_bus:
            raise ValueError(f"line {k} is a self-loop at bus {net.buses[ln.from_bus].id}")
        if not (math.isfinite(ln.susceptance) and ln.susceptance > 0):
            raise NonPositiveParameter(
                f"line {net.line_label(k)} has non-positive susceptance {ln.susceptance}"
            )
        if not ln.capacity > 0:
            raise NonPositiveParameter(
                f"line {net.line_label(k)} has non-positive capacity {ln.capacity}"
            )
        pair = frozenset((ln.from_bus, ln.to_bus))
        if pair in seen:
            raise DuplicateLine(
                f"lines {seen[pair]} and {k} both connect buses {net.line_label(k)}"
            )
        seen[pair] = k

    rows = [ln.from_bus for ln in net.lines]
    cols = [ln.to_bus for ln in net.lines]
    adj = coo_matrix((np.ones(m), (rows, cols)), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp > 1:
        comps = [[net.buses[i].id for i in np.flatnonzero(labels == c)] for c in range(n_comp)]
        raise Disconnected(comps)


def build_laplacian(net: Network) -> np.ndarray:
    n = net.n
    lap = np.zeros((n, n))
    for ln in net.lines:
        i, j, b = ln.from_bus, ln.to_bus, ln.susceptance
        lap[i, j] -= b
        lap[j, i] -= b
        lap[i, i] += b
        lap[j, j] += b
    return lap


def build_incidence(net: Network, weighted: bool = True) -> np.ndarray:
    """Edge-vertex incidence matrix, ``m x n``.

    Row ``l = (i, j)`` holds ``+beta`` at column ``i`` and ``-beta`` at column ``j``;
    with ``weighted=False`` the entries are ``+1``/``-1``.
    """
    inc = np.zeros((net.m, net.n))
    for ln in net.lines:
        w = ln.susceptance if weighted else 1.0
        inc[ln.index, ln.from_bus] = w
        inc[ln.index, ln.to_bus] = -w
    return inc
