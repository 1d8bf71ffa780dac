# utils/explorer.py - Bounded state-space exploration, equilibrium check, census and partition sums
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import psutil

from config import Config
from errors import StateCapExceeded
from utils.ctmc_core import RateGraph, CycleWitness, solve_energy, path_delta_e, energy_deviation
from utils.sitegraph_engine import RateMode

SOUNDNESS_NOTE = ("A violation found in a truncation is a violation of the full chain; "
                  "absence of a violation only covers cycles within the bound.")
BOUND_NOTE = ("Bounded surrogate: the equivalence between violations and solutions is checked "
              "only up to the exploration bound.")


@dataclass
class TruncatedChain:
    graph: RateGraph
    keys: list
    states: list
    n_values: list
    success: list
    bound: int
    frontier: set = field(default_factory=set)
    labels: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)
    closing: dict = field(default_factory=dict)
    complete: bool = True

    def __post_init__(self):
        self.index = {key: i for i, key in enumerate(self.keys)}

    def __len__(self):
        return len(self.keys)

    def edge_labels(self):
        """(source key, target key, label) for every rule behind every directed edge"""
        labelled = []
        for (source, target), _ in self.graph.edge_items():
            for label in self.labels[(source, target)]:
                labelled.append((self.keys[source], self.keys[target], label))
        return labelled


def _memory_mb():
    return psutil.Process().memory_info().rss / (1024 * 1024)


def _expand(source, state, rate_mode):
    return source.moves(state, rate_mode)


def explore(source, bound, state_cap=None, include_shadow=False, threads=None,
            rate_mode=RateMode.EMBEDDING_WEIGHTED):
    """Breadth-first closure of the initial state over states with n <= bound.

    The closure skips shadow edges (the second switch of the PCP encoding)
    unless include_shadow is set; edges of every kind are then added between
    the states included.
    """
    settings = Config()
    state_cap = settings.STATE_CAP if state_cap is None else state_cap
    threads = settings.THREADS if threads is None else threads
    rate_mode = RateMode.parse(rate_mode)

    initial = source.initial()
    keys, states, index = [source.key(initial)], [initial], {}
    index[keys[0]] = 0
    expanded = {}
    frontier = set()
    level = [0]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    try:
        while level:
            if pool is not None:
                results = list(pool.map(lambda i: _expand(source, states[i], rate_mode), level))
            else:
                results = [_expand(source, states[i], rate_mode) for i in level]
            next_level = []
            for i, moves in zip(level, results):
                expanded[i] = moves
                for move in moves:
                    if not include_shadow and source.is_shadow_label(move.label):
                        continue
                    if move.key in index or move.key in frontier:
                        continue
                    if source.n_value(move.target) > bound:
                        frontier.add(move.key)
                        continue
                    if len(keys) >= state_cap:
                        chain = _assemble(source, keys, states, index, expanded, frontier, bound, complete=False)
                        logging.warning(f"State cap {state_cap} reached; memory {_memory_mb():.1f} MB")
                        raise StateCapExceeded(state_cap, chain, len(keys) - len(expanded))
                    index[move.key] = len(keys)
                    keys.append(move.key)
                    states.append(move.target)
                    next_level.append(index[move.key])
            level = next_level
    finally:
        if pool is not None:
            pool.shutdown()

    chain = _assemble(source, keys, states, index, expanded, frontier, bound)
    logging.info(f"Explored {len(chain)} states and {chain.graph.n_edges} directed edges up to n={bound}; "
                 f"frontier {len(frontier)}, memory {_memory_mb():.1f} MB")
    return chain


def _assemble(source, keys, states, index, expanded, frontier, bound, complete=True):
    rates, labels, closing = {}, {}, {}
    for i, moves in expanded.items():
        for move in moves:
            j = index.get(move.key)
            if j is None:
                continue
            if j == i:
                logging.debug(f"Dropping self-loop {move.label} on state {i}")
                continue
            rates[(i, j)] = rates.get((i, j), 0.0) + move.rate
            labels.setdefault((i, j), []).append(move.label)
            direction = source.closing_direction(move.label)
            if direction:
                closing[(i, j)] = direction
    # edges out of states still waiting on expansion would lack their reverses
    if not complete:
        rates = {e: r for e, r in rates.items() if e[0] in expanded and e[1] in expanded}
        labels = {e: labels[e] for e in rates}
        closing = {e: d for e, d in closing.items() if e in rates}
    graph = RateGraph.from_indexed(list(range(len(keys))), rates)
    flagged = [i for i, s in enumerate(states) if source.flag(s)]
    for i in flagged:
        logging.warning(f"Empty symbol chain away from the anchor: {source.describe(states[i])}")
    return TruncatedChain(
        graph=graph,
        keys=list(keys),
        states=list(states),
        n_values=[source.n_value(s) for s in states],
        success=[source.is_success(s) for s in states],
        bound=bound,
        frontier=set(frontier),
        labels={e: tuple(v) for e, v in labels.items()},
        flagged=flagged,
        closing=closing,
        complete=complete,
    )


@dataclass
class EquilibriumVerdict:
    kind: str
    assignment: object = None
    witness: CycleWitness = None
    traverses_closing: bool = False
    closing_net: int = 0
    note: str = SOUNDNESS_NOTE

    @property
    def witness_energy(self):
        return self.witness.energy_sum if self.witness else None

    def to_dict(self, chain=None, describe=None):
        data = {'kind': self.kind, 'note': self.note}
        if self.witness is not None:
            path = []
            for source, target in self.witness.path:
                entry = {'from': source, 'to': target}
                if chain is not None:
                    entry['labels'] = list(chain.labels.get((source, target), ()))
                    if describe is not None:
                        entry['from_state'] = describe(chain.states[source])
                        entry['to_state'] = describe(chain.states[target])
                path.append(entry)
            data['witness'] = {
                'energy_sum': self.witness.energy_sum,
                'length': len(self.witness.path),
                'traverses_second_switch': self.traverses_closing,
                'path': path,
            }
        if self.assignment is not None:
            data['energy'] = {str(state): value for state, value in self.assignment.energy.items()}
        return data


def check_equilibrium(t, tol=None):
    """Energy assignment of the truncation, or a witness oriented along the closing step"""
    result = solve_energy(t.graph, tol=tol)
    if not isinstance(result, CycleWitness):
        return EquilibriumVerdict('equilibrium', assignment=result)

    net = sum(t.closing.get(edge, 0) for edge in result.path)
    witness = result
    if net < 0:
        path = tuple((target, source) for source, target in reversed(result.path))
        witness = CycleWitness(path=path, energy_sum=path_delta_e(t.graph, path))
        net = -net
    traverses = any(edge in t.closing for edge in witness.path)
    if not traverses:
        logging.warning("Violated cycle avoids every closing edge")
    logging.info(f"Witness of length {len(witness.path)} with energy {witness.energy_sum:.6g}, "
                 f"closing traversals {net}")
    return EquilibriumVerdict('violation', witness=witness, traverses_closing=traverses, closing_net=net)


def state_function_deviation(t, assignment, epsilon):
    """Largest gap between the solved energies and n*epsilon after constant alignment"""
    return energy_deviation(assignment, {i: n * epsilon for i, n in enumerate(t.n_values)})


@dataclass
class OmegaCensus:
    counts: dict
    bounds: dict
    exceeded: list
    success_levels: list
    n_pairs: int = 1
    flagged: int = 0

    def to_rows(self):
        return [{'n': n, 'count': self.counts[n], 'bound': self.bounds[n],
                 'exceeded': n in self.exceeded, 'success': n in self.success_levels}
                for n in sorted(self.counts)]

    def to_dict(self):
        return {'levels': self.to_rows(), 'exceeded': self.exceeded,
                'success_levels': self.success_levels, 'flagged_states': self.flagged}


def omega_census(t, n_pairs):
    """Per-level state counts against (n+1)|X|^n"""
    counts = {n: 0 for n in range(t.bound + 1)}
    success_levels = set()
    for n, success in zip(t.n_values, t.success):
        counts[n] += 1
        if success:
            success_levels.add(n)
    bounds = {n: (n + 1) * n_pairs ** n for n in counts}
    exceeded = [n for n in sorted(counts) if counts[n] > bounds[n]]
    if exceeded:
        logging.warning(f"Level counts above (n+1)|X|^n at n={exceeded}")
    return OmegaCensus(counts, bounds, exceeded, sorted(success_levels), n_pairs, len(t.flagged))


def tail_bound(n_pairs, epsilon, bound):
    """Closed form of sum over n > bound of (n+1)|X|^n e^(-n epsilon)"""
    q = n_pairs * math.exp(-epsilon)
    if q >= 1:
        return math.inf
    return q ** (bound + 1) * ((bound + 2) - (bound + 1) * q) / (1 - q) ** 2


@dataclass
class PartitionReport:
    partial_sums: list
    tail_bound: float
    verdict: str
    epsilon: float
    note: str = BOUND_NOTE

    def to_dict(self):
        return {
            'partial_sums': self.partial_sums,
            'tail_bound': None if math.isinf(self.tail_bound) else self.tail_bound,
            'tail_bound_finite': math.isfinite(self.tail_bound),
            'verdict': self.verdict,
            'epsilon': self.epsilon,
            'note': self.note,
        }


def partition_sum(t, epsilon, census, witness=None):
    sums, running = [], 0.0
    for n in sorted(census.counts):
        running += census.counts[n] * math.exp(-n * epsilon)
        sums.append(running)
    tail = tail_bound(census.n_pairs, epsilon, t.bound)
    if witness is not None or census.success_levels:
        verdict = 'violation-found'
    elif math.isfinite(tail):
        verdict = 'converges'
    else:
        verdict = 'divergence-suspected'
    logging.info(f"Partition partial sum {sums[-1]:.6g} with tail bound {tail:.6g}: {verdict}")
    return PartitionReport(sums, tail, verdict, epsilon)
