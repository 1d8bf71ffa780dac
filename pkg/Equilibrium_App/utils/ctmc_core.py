# utils/ctmc_core.py - Rate graphs, energy solve with cycle witnesses, Boltzmann weights
import math
import logging
from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.special import logsumexp

from config import Config
from errors import (
    EquilibriumError, MissingEdgeError, NonContiguousPathError,
    AsymmetricSupportError, StateMismatchError,
)


class RateGraph:
    """Finite sparse transition graph with strictly positive rates.

    States are arbitrary hashable keys kept in insertion order; edges are
    stored by index pair so that every ordering in this module follows the
    state index.
    """

    def __init__(self, states, edges=None):
        self.states = tuple(states)
        self._index = {}
        for i, state in enumerate(self.states):
            if state in self._index:
                raise EquilibriumError(f"duplicate state {state!r}")
            self._index[state] = i
        self._edges = {}
        self._adjacent = [set() for _ in self.states]
        for (source, target), rate in (edges or {}).items():
            self._add(self.index_of(source), self.index_of(target), rate)

    @classmethod
    def from_indexed(cls, states, indexed_edges):
        """Build from edges already keyed by state index"""
        graph = cls(states)
        for (i, j), rate in indexed_edges.items():
            graph._add(i, j, rate)
        return graph

    def _add(self, i, j, rate):
        if i == j:
            raise EquilibriumError(f"self-loop on state {self.states[i]!r}")
        rate = float(rate)
        if not (rate > 0 and math.isfinite(rate)):
            raise EquilibriumError(
                f"rate {rate} on {self.states[i]!r} -> {self.states[j]!r} is not a positive finite number")
        self._edges[(i, j)] = rate
        self._adjacent[i].add(j)
        self._adjacent[j].add(i)

    def __len__(self):
        return len(self.states)

    def __contains__(self, state):
        return state in self._index

    def index_of(self, state):
        try:
            return self._index[state]
        except KeyError:
            raise StateMismatchError(f"unknown state {state!r}") from None

    def rate(self, source, target):
        """Rate of source -> target in state keys, 0.0 when absent"""
        return self._edges.get((self.index_of(source), self.index_of(target)), 0.0)

    def neighbours(self, state):
        return [self.states[j] for j in sorted(self._adjacent[self.index_of(state)])]

    def edge_items(self):
        """All edges as ((source, target), rate) in ascending index order"""
        return [((self.states[i], self.states[j]), rate) for (i, j), rate in sorted(self._edges.items())]

    @property
    def n_edges(self):
        return len(self._edges)

    def to_networkx(self):
        """Undirected support graph over state indices"""
        support = nx.Graph()
        support.add_nodes_from(range(len(self.states)))
        support.add_edges_from(self._edges)
        return support

    def to_json(self):
        return {
            'states': list(self.states),
            'edges': [{'from': s, 'to': t, 'rate': rate} for (s, t), rate in self.edge_items()],
        }

    @classmethod
    def from_json(cls, document):
        states = [tuple(s) if isinstance(s, list) else s for s in document['states']]
        edges = {}
        for edge in document.get('edges', []):
            source = tuple(edge['from']) if isinstance(edge['from'], list) else edge['from']
            target = tuple(edge['to']) if isinstance(edge['to'], list) else edge['to']
            edges[(source, target)] = edge['rate']
        return cls(states, edges)

    def __repr__(self):
        return f'<RateGraph states={len(self.states)} edges={len(self._edges)}>'


@dataclass(frozen=True)
class EnergyAssignment:
    energy: dict
    components: tuple
    references: tuple

    def component_of(self, state):
        for c, members in enumerate(self.components):
            if state in members:
                return c
        raise StateMismatchError(f"unknown state {state!r}")

    def to_dict(self):
        return {
            'energy': [[state, value] for state, value in self.energy.items()],
            'components': [list(c) for c in self.components],
            'references': list(self.references),
        }


@dataclass(frozen=True)
class CycleWitness:
    path: tuple
    energy_sum: float

    def states(self):
        return [edge[0] for edge in self.path]

    def to_dict(self):
        return {'path': [list(edge) for edge in self.path], 'energy_sum': self.energy_sum}


@dataclass(frozen=True)
class Distribution:
    p: dict
    log_z: float
    shift: float = 0.0
    truncated_mass: float = 0.0

    def __post_init__(self):
        total = math.fsum(self.p.values())
        if abs(total + self.truncated_mass - 1.0) > 1e-9:
            raise EquilibriumError(f"probabilities sum to {total} with truncated mass {self.truncated_mass}")

    @property
    def z(self):
        try:
            return math.exp(self.log_z)
        except OverflowError:
            return math.inf

    def __getitem__(self, state):
        return self.p[state]

    def get(self, state, default=0.0):
        return self.p.get(state, default)


@dataclass
class BalanceReport:
    max_residual: float
    worst_edge: tuple = None
    tolerance: float = 1e-9
    n_edges: int = 0

    @property
    def passed(self):
        return self.max_residual <= self.tolerance

    def to_dict(self):
        return {
            'max_residual': self.max_residual,
            'worst_edge': list(self.worst_edge) if self.worst_edge else None,
            'tolerance': self.tolerance,
            'passed': self.passed,
        }


def check_symmetric_support(g):
    """Return None when every edge has a reverse, else the first edge lacking one"""
    for (i, j) in sorted(g._edges):
        if (j, i) not in g._edges:
            return (g.states[i], g.states[j])
    return None


def edge_delta_e(g, i, j):
    """Energy difference E(j) - E(i) = ln(q_ji / q_ij)"""
    a, b = g.index_of(i), g.index_of(j)
    forward = g._edges.get((a, b))
    backward = g._edges.get((b, a))
    if forward is None or backward is None:
        raise MissingEdgeError(f"edge {i!r} <-> {j!r} is missing a direction")
    return math.log(backward) - math.log(forward)


def path_delta_e(g, path):
    total = 0.0
    previous = None
    for source, target in path:
        if previous is not None and previous != source:
            raise NonContiguousPathError(f"edge starting at {source!r} does not follow {previous!r}")
        total += edge_delta_e(g, source, target)
        previous = target
    return total


def spanning_forest(g):
    """Breadth-first spanning forest from the lowest index of each component.

    Returns (components, parent) where components are sorted index lists and
    parent maps every non-root index to its tree parent.
    """
    support = g.to_networkx()
    components = sorted((sorted(c) for c in nx.connected_components(support)), key=lambda c: c[0])
    parent = {}
    for members in components:
        for u, v in nx.bfs_edges(support, members[0], sort_neighbors=sorted):
            parent[v] = u
    return components, parent


def _tree_path(parent, depth, source, target):
    """Index path source -> target inside one tree"""
    up, down = [source], [target]
    a, b = source, target
    while depth[a] > depth[b]:
        a = parent[a]
        up.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        down.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        up.append(a)
        down.append(b)
    return up + down[-2::-1]


def solve_energy(g, pins=None, tol=None):
    """Assign energies along a spanning forest or return a violating fundamental cycle"""
    tol = Config.TOLERANCE if tol is None else tol
    pins = dict(pins or {})
    unknown = [state for state in pins if state not in g]
    if unknown:
        raise StateMismatchError(f"pins name {len(unknown)} unknown states, first {unknown[0]!r}")
    offending = check_symmetric_support(g)
    if offending is not None:
        raise AsymmetricSupportError(offending)

    components, parent = spanning_forest(g)
    depth = {}
    relative = np.zeros(len(g))
    log_rate = {edge: math.log(rate) for edge, rate in g._edges.items()}
    for members in components:
        root = members[0]
        depth[root] = 0
        # parents precede their children in bfs order
        for v in _bfs_order(parent, root, members):
            if v == root:
                continue
            u = parent[v]
            depth[v] = depth[u] + 1
            relative[v] = relative[u] + log_rate[(v, u)] - log_rate[(u, v)]

    for (i, j) in sorted(g._edges):
        if i >= j or parent.get(j) == i or parent.get(i) == j:
            continue
        residual = (log_rate[(j, i)] - log_rate[(i, j)]) - (relative[j] - relative[i])
        if abs(residual) > tol:
            indices = [i] + _tree_path(parent, depth, j, i)
            path = tuple((g.states[a], g.states[b]) for a, b in zip(indices, indices[1:]))
            witness = CycleWitness(path=path, energy_sum=path_delta_e(g, path))
            logging.info(f"Energy solve found a violated cycle of length {len(path)} "
                         f"with energy sum {witness.energy_sum:.6g}")
            return witness

    energy = {}
    references = []
    for members in components:
        pinned = [v for v in members if g.states[v] in pins]
        if len(pinned) > 1:
            raise EquilibriumError(
                f"component of {g.states[members[0]]!r} has {len(pinned)} pinned states, at most one allowed")
        reference = pinned[0] if pinned else members[0]
        offset = pins.get(g.states[reference], 0.0) - relative[reference]
        for v in members:
            energy[g.states[v]] = float(relative[v] + offset)
        references.append(g.states[reference])

    logging.info(f"Energy solve succeeded on {len(g)} states in {len(components)} components")
    return EnergyAssignment(
        energy=energy,
        components=tuple(tuple(g.states[v] for v in members) for members in components),
        references=tuple(references),
    )


def _bfs_order(parent, root, members):
    children = {}
    for v in members:
        if v != root:
            children.setdefault(parent[v], []).append(v)
    order, queue = [], deque([root])
    while queue:
        v = queue.popleft()
        order.append(v)
        queue.extend(sorted(children.get(v, ())))
    return order


def boltzmann(e):
    """Boltzmann distribution of an energy assignment, computed in log space"""
    states = list(e.energy)
    if not states:
        raise EquilibriumError("cannot normalise an empty energy assignment")
    energies = np.array([e.energy[s] for s in states], dtype=float)
    shift = float(energies.min())
    log_weights = -(energies - shift)
    log_norm = float(logsumexp(log_weights))
    probabilities = np.exp(log_weights - log_norm)
    return Distribution(
        p=dict(zip(states, probabilities.tolist())),
        log_z=log_norm - shift,
        shift=shift,
    )


def verify_detailed_balance(p, g, tol=None):
    tol = Config.TOLERANCE if tol is None else tol
    missing = [s for s in g.states if s not in p.p]
    if missing:
        raise StateMismatchError(f"distribution has no value for {len(missing)} states, first {missing[0]!r}")
    report = BalanceReport(max_residual=0.0, tolerance=tol, n_edges=g.n_edges)
    for (source, target), rate in g.edge_items():
        residual = abs(p[source] * rate - p[target] * g.rate(target, source))
        if report.worst_edge is None or residual > report.max_residual:
            report.max_residual = residual
            report.worst_edge = (source, target)
    return report


def energy_deviation(assignment, reference):
    """Largest |E - reference - c| after aligning one constant per component"""
    worst = 0.0
    for members, anchor in zip(assignment.components, assignment.references):
        constant = assignment.energy[anchor] - reference[anchor]
        for state in members:
            worst = max(worst, abs(assignment.energy[state] - reference[state] - constant))
    return worst
