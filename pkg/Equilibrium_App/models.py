# models.py - Data models for PCP instances, encoding parameters and abstract configurations
import math
from dataclasses import dataclass

from errors import InvalidInstanceError, InvalidStateError

DUMMY = '*'


@dataclass(frozen=True)
class Move:
    """One outgoing transition of a state: label, successor, its key, rate and declared energy difference"""
    label: str
    target: object
    key: object
    rate: float
    delta_e: float = None


@dataclass(frozen=True)
class PcpInstance:
    """Post correspondence instance: pairs (u_i, v_i) of non-empty words, indexed from 1"""
    alphabet: tuple
    pairs: tuple

    def __post_init__(self):
        if not self.alphabet:
            raise InvalidInstanceError("alphabet must hold at least one symbol")
        for symbol in self.alphabet:
            if len(symbol) != 1 or not symbol.isalnum():
                raise InvalidInstanceError(f"alphabet symbol {symbol!r} must be a single letter or digit")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise InvalidInstanceError("alphabet symbols must be distinct")
        if not self.pairs:
            raise InvalidInstanceError("instance needs at least one pair")
        for i, (u, v) in enumerate(self.pairs, start=1):
            if not u or not v:
                raise InvalidInstanceError(f"pair {i} has an empty word")
            stray = set(u + v) - set(self.alphabet)
            if stray:
                raise InvalidInstanceError(f"pair {i} uses symbols outside the alphabet: {sorted(stray)}")

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['alphabet']), tuple((u, v) for u, v in data['pairs']))

    def to_dict(self):
        return {'alphabet': list(self.alphabet), 'pairs': [[u, v] for u, v in self.pairs]}

    @property
    def n(self):
        return len(self.pairs)

    def u(self, i):
        return self.pairs[i - 1][0]

    def v(self, i):
        return self.pairs[i - 1][1]

    def upper(self, log):
        return ''.join(self.u(i) for i in log)

    def lower(self, log):
        return ''.join(self.v(i) for i in log)

    def is_solution(self, log):
        return len(log) >= 1 and self.upper(log) == self.lower(log)


@dataclass(frozen=True)
class EncodingParams:
    epsilon: float = 1.5
    e_switch: float = 1.0
    base_rate: float = 1.0

    @classmethod
    def from_dict(cls, data):
        return cls(float(data['epsilon']), float(data['e_switch']), float(data.get('base_rate', 1.0)))

    def to_dict(self):
        return {'epsilon': self.epsilon, 'e_switch': self.e_switch, 'base_rate': self.base_rate}

    def validate(self, n_pairs):
        """Raise on unusable values; return warnings for degenerate ones"""
        for name in ('epsilon', 'e_switch', 'base_rate'):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInstanceError(f"{name} must be finite")
        if self.base_rate <= 0:
            raise InvalidInstanceError("base_rate must be positive")
        warnings = []
        if math.isclose(self.e_switch, -self.epsilon, abs_tol=1e-12):
            warnings.append("e_switch = -epsilon makes the second switch energy-compatible; no violation can be found")
        if self.epsilon <= math.log(n_pairs):
            warnings.append(f"epsilon {self.epsilon} <= ln {n_pairs}; the partition tail bound is unavailable")
        return warnings


@dataclass(frozen=True)
class AbstractState:
    """Configuration of the encoding: mode F or B, index log, B position and the symbol chain"""
    mode: str
    log: tuple
    pos: int = None
    chain: str = ''

    @classmethod
    def initial(cls):
        return cls('F', (), None, '')

    @classmethod
    def forward(cls, log, instance):
        return cls('F', tuple(log), None, instance.upper(log))

    @classmethod
    def backward(cls, log, k, instance):
        log = tuple(log)
        if not 0 <= k <= len(log):
            raise InvalidStateError(f"position {k} outside log of length {len(log)}")
        upper, consumed = instance.upper(log), instance.lower(log[k:])
        if not upper.endswith(consumed):
            raise InvalidStateError(f"v-suffix {consumed!r} is not a suffix of {upper!r}")
        return cls('B', log, k, upper[:len(upper) - len(consumed)])

    @property
    def n(self):
        return len(self.log)

    def validate(self, instance):
        if self.mode not in ('F', 'B'):
            raise InvalidStateError(f"unknown mode {self.mode!r}")
        if self.mode == 'F' and self.pos is not None:
            raise InvalidStateError("forward states carry no position")
        if self.mode == 'B' and (self.pos is None or not 0 <= self.pos <= len(self.log)):
            raise InvalidStateError(f"position {self.pos} outside log of length {len(self.log)}")
        if any(not 1 <= i <= instance.n for i in self.log):
            raise InvalidStateError(f"log {self.log} names a pair outside 1..{instance.n}")
        if set(self.chain) - set(instance.alphabet):
            raise InvalidStateError(f"chain {self.chain!r} leaves the alphabet")

    def describe(self):
        indices = ','.join(str(i) for i in self.log)
        if self.mode == 'F':
            return f"F[{indices}] '{self.chain}'"
        return f"B[{indices}]@{self.pos} '{self.chain}'"

    def to_dict(self):
        return {'mode': self.mode, 'log': list(self.log), 'pos': self.pos, 'chain': self.chain}
