# utils/simulator.py - Direct-method stochastic simulation and the A/B creation model
import math
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from config import Config
from errors import EquilibriumError, DivergenceError, EmptyOccupancyError
from models import Move
from utils.ctmc_core import Distribution
from utils.sitegraph_engine import RateMode, SiteGraph

_BLOCK = 4096
_CACHE_LIMIT = 200_000


@dataclass
class Trajectory:
    seed: int
    rate_mode: str
    n_events: int = 0
    total_time: float = 0.0
    occupancy: dict = field(default_factory=dict)
    flux: Counter = field(default_factory=Counter)
    visits: Counter = field(default_factory=Counter)
    events: list = None
    deadlocked: bool = False
    watched: int = 0

    def distribution(self):
        """Residence-time estimate of the stationary law"""
        total = math.fsum(self.occupancy.values())
        if total <= 0:
            raise EmptyOccupancyError("trajectory has no residence time")
        return {key: value / total for key, value in self.occupancy.items()}

    def to_dict(self):
        return {
            'seed': self.seed,
            'rate_mode': self.rate_mode,
            'events': self.n_events,
            'total_time': self.total_time,
            'deadlocked': self.deadlocked,
            'states_visited': len(self.occupancy),
            'watched_hits': self.watched,
        }


class _UniformStream:
    """Uniform draws pulled from the generator in blocks"""

    def __init__(self, rng):
        self.rng = rng
        self.buffer = rng.random(_BLOCK)
        self.position = 0

    def next(self):
        if self.position == _BLOCK:
            self.buffer = self.rng.random(_BLOCK)
            self.position = 0
        value = self.buffer[self.position]
        self.position += 1
        return value


def ssa_run(system, init=None, events=None, time=None, seed=None, rate_mode=RateMode.UNIT_RATE,
            record_events=False, watch=None):
    """Gillespie direct method: exponential holding times, jumps chosen by rate.

    watch, when given, is a predicate on states; jumps into states it accepts
    are counted in Trajectory.watched.
    """
    settings = Config()
    seed = settings.DEFAULT_SEED if seed is None else seed
    if events is None and time is None:
        events = settings.DEFAULT_EVENTS
    if (events is not None and events < 0) or (time is not None and time < 0):
        raise EquilibriumError("simulation budget must be non-negative")
    rate_mode = RateMode.parse(rate_mode)

    state = system.initial() if init is None else init
    key = system.key(state)
    trajectory = Trajectory(seed=seed, rate_mode=rate_mode.value, events=[] if record_events else None)
    if events == 0 or time == 0:
        return trajectory

    draws = _UniformStream(np.random.default_rng(seed))
    occupancy = defaultdict(float)
    cache = {}
    watched = {}
    t = 0.0
    fired = 0
    while events is None or fired < events:
        moves = cache.get(key)
        if moves is None:
            if len(cache) > _CACHE_LIMIT:
                cache.clear()
            moves = cache[key] = system.moves(state, rate_mode)
        if not moves:
            trajectory.deadlocked = True
            logging.warning(f"Simulation deadlocked after {fired} events")
            if time is not None:
                occupancy[key] += time - t
                t = time
            break
        total = math.fsum(move.rate for move in moves)
        dt = -math.log(1.0 - draws.next()) / total
        if time is not None and t + dt >= time:
            occupancy[key] += time - t
            t = time
            break
        occupancy[key] += dt
        t += dt

        threshold = draws.next() * total
        chosen = moves[-1]
        running = 0.0
        for move in moves:
            running += move.rate
            if threshold < running:
                chosen = move
                break
        trajectory.flux[(key, chosen.key)] += 1
        trajectory.visits[chosen.key] += 1
        if watch is not None:
            hit = watched.get(chosen.key)
            if hit is None:
                hit = watched[chosen.key] = bool(watch(chosen.target))
            trajectory.watched += hit
        if record_events:
            trajectory.events.append((t, chosen.label, key, chosen.key))
        state, key = chosen.target, chosen.key
        fired += 1

    trajectory.occupancy = dict(occupancy)
    trajectory.n_events = fired
    trajectory.total_time = t
    logging.info(f"Simulated {fired} events over time {t:.6g} (seed {seed}, {rate_mode.value}), "
                 f"{len(occupancy)} states visited")
    return trajectory


def run_replicas(system, seeds, threads=1, **kwargs):
    """Independent runs, one per seed, in seed order"""
    def run(seed):
        return ssa_run(system, seed=seed, **kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, seeds))
    return [run(seed) for seed in seeds]


def merge_occupancy(trajectories):
    merged = defaultdict(float)
    for trajectory in trajectories:
        for key, value in trajectory.occupancy.items():
            merged[key] += value
    return dict(merged)


def compare_distribution(occupancy, predicted):
    """Total-variation distance between residence times and a predicted law"""
    if isinstance(occupancy, Trajectory):
        occupancy = occupancy.occupancy
    total = math.fsum(occupancy.values())
    if total <= 0:
        raise EmptyOccupancyError("occupancy is empty")
    support = set(occupancy) | set(predicted.p)
    return 0.5 * math.fsum(abs(occupancy.get(k, 0.0) / total - predicted.get(k, 0.0)) for k in support)


def edge_flux_asymmetry(trajectory, top=10):
    """|jumps i->j - jumps j->i| / events on the most used edges"""
    totals = Counter()
    for (source, target), count in trajectory.flux.items():
        edge = tuple(sorted((source, target), key=repr))
        totals[edge] += count
    rows = []
    for (a, b), _ in totals.most_common(top):
        forward, backward = trajectory.flux.get((a, b), 0), trajectory.flux.get((b, a), 0)
        rows.append({'edge': (a, b), 'forward': forward, 'backward': backward,
                     'asymmetry': abs(forward - backward) / max(trajectory.n_events, 1)})
    return rows


def success_hits(trajectory, predicate):
    """Number of jumps into states satisfying predicate"""
    return sum(count for key, count in trajectory.visits.items() if predicate(key))


def petri_closed_form(e1, e2, n_max, m_max):
    """Geometric equilibrium of the unit-rate A/B model on the grid n <= n_max, m <= m_max"""
    if not (e1 > 0 and e1 + e2 > 0):
        raise DivergenceError(f"E1={e1}, E2={e2}: the partition function diverges unless E1 > 0 and E1+E2 > 0")
    a_factor = -math.expm1(-e1)
    b_factor = -math.expm1(-(e1 + e2))
    n = np.arange(n_max + 1)[:, None]
    m = np.arange(m_max + 1)[None, :]
    grid = a_factor * b_factor * np.exp(-n * e1 - m * (e1 + e2))
    p = {(int(i), int(j)): float(grid[i, j]) for i in range(n_max + 1) for j in range(m_max + 1)}
    truncated = max(0.0, 1.0 - math.fsum(p.values()))
    return Distribution(p=p, log_z=-math.log(a_factor) - math.log(b_factor), truncated_mass=truncated)


def petri_poisson_form(e1, e2, n_max, m_max):
    """Equilibrium of the embedding-weighted A/B model: independent Poisson counts"""
    lam_a, lam_b = math.exp(-e1), math.exp(-(e1 + e2))
    pa = poisson.pmf(np.arange(n_max + 1), lam_a)
    pb = poisson.pmf(np.arange(m_max + 1), lam_b)
    p = {(i, j): float(pa[i] * pb[j]) for i in range(n_max + 1) for j in range(m_max + 1)}
    truncated = max(0.0, 1.0 - math.fsum(p.values()))
    return Distribution(p=p, log_z=lam_a + lam_b, truncated_mass=truncated)


@dataclass(frozen=True)
class PetriModel:
    """Creation of A from nothing and conversion of A into B, with energies E1 and E2"""
    e1: float
    e2: float
    base_rate: float = 1.0

    @property
    def rates(self):
        return {
            'create_A': (self.base_rate, self.base_rate * math.exp(self.e1)),
            'convert_A': (self.base_rate, self.base_rate * math.exp(self.e2)),
        }

    def initial(self):
        return (0, 0)

    def key(self, state):
        return state

    def moves(self, state, rate_mode=RateMode.UNIT_RATE):
        weighted = RateMode.parse(rate_mode) is RateMode.EMBEDDING_WEIGHTED
        n, m = state
        create, destroy = self.rates['create_A']
        convert, revert = self.rates['convert_A']
        moves = [Move('create_A', (n + 1, m), (n + 1, m), create, self.e1)]
        if n >= 1:
            moves.append(Move('create_A_op', (n - 1, m), (n - 1, m), destroy * (n if weighted else 1), -self.e1))
            moves.append(Move('convert_A', (n - 1, m + 1), (n - 1, m + 1), convert * (n if weighted else 1),
                              self.e2))
        if m >= 1:
            moves.append(Move('convert_A_op', (n + 1, m - 1), (n + 1, m - 1), revert * (m if weighted else 1),
                              -self.e2))
        return moves

    def n_value(self, state):
        return state[0] + state[1]

    def is_success(self, state):
        return False

    def flag(self, state):
        return False

    def is_shadow_label(self, label):
        return False

    def closing_direction(self, label):
        return 0

    def describe(self, state):
        return f'A={state[0]} B={state[1]}'

    def to_kappa(self):
        """The same model as rules over agents A and B"""
        (create, destroy), (convert, revert) = self.rates['create_A'], self.rates['convert_A']
        return '\n'.join([
            '%agent: A()',
            '%agent: B()',
            "%init: 'empty'",
            f"%rule: 'create_A'  -> A() @ {create!r}, {destroy!r} dE {self.e1!r}",
            f"%rule: 'convert_A' A() -> B() @ {convert!r}, {revert!r} dE {self.e2!r}",
        ]) + '\n'

    def graph_of(self, state, signatures):
        n, m = state
        return SiteGraph.from_parts(signatures, [('A', {})] * n + [('B', {})] * m)

    @staticmethod
    def counts(g):
        return g.count('A'), g.count('B')
