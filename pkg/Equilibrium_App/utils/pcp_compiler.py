# utils/pcp_compiler.py - Compile PCP instances into reversible site-graph rule sets
import re
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from config import Config
from errors import InvalidStateError
from models import AbstractState, EncodingParams, Move, DUMMY
from utils.kappa_syntax import parse_model
from utils.sitegraph_engine import (
    SiteGraph, RuleSystem, RateMode, check_rate_consistency,
)

_LABEL = re.compile(r'^(F|B|switch1|switch2|delete)(?:_(\d+))?(_op)?$')


def rule_family(label):
    """Split a rule label into (family, index or None, forward?)"""
    match = _LABEL.match(label)
    if not match:
        return None, None, True
    family, index, op = match.groups()
    return family, int(index) if index else None, op is None


@dataclass(frozen=True)
class Encoding:
    instance: object
    params: EncodingParams
    extended: bool
    model: object
    text: str

    @property
    def rules(self):
        return tuple(self.model.rules)

    @property
    def initial(self):
        return self.model.inits['initial']

    @property
    def signatures(self):
        return self.model.signatures

    @property
    def directed_rule_count(self):
        return len(self.model.rules)

    @property
    def pair_count(self):
        return sum(1 for rule in self.model.rules if not rule.name.endswith('_op'))

    def to_dict(self):
        return {
            'instance': self.instance.to_dict(),
            'params': self.params.to_dict(),
            'extended': self.extended,
            'pairs': self.pair_count,
            'directed_rules': self.directed_rule_count,
            'rules': [{'name': r.name, 'rate': r.rate, 'delta_e': r.delta_e} for r in self.model.rules],
        }


def _symbol_chain(symbols, first_label, next_label, head_label):
    """S agents spelling symbols; the first takes l^first_label, the last binds x to head_label"""
    agents = []
    k = len(symbols)
    for t, symbol in enumerate(symbols, start=1):
        left = first_label if t == 1 else next_label + t - 2
        right = f'^{next_label + t - 1}' if t < k else ''
        tail = f'^{head_label}' if t == k else ''
        agents.append(f'S(l^{left},r{right},x_{symbol}{tail})')
    return agents


def _rule_line(name, lhs, rhs, base_rate, delta_e):
    return (f"%rule: '{name}' {', '.join(lhs)} -> {', '.join(rhs)} "
            f"@ {base_rate!r}, {base_rate * math.exp(delta_e)!r} dE {delta_e!r}")


def encoding_text(instance, params, extended):
    """Model text of the encoding in the rule mini-language"""
    indices = [str(i) for i in range(1, instance.n + 1)]
    eps, base = params.epsilon, params.base_rate
    lines = [
        '# Post correspondence encoding',
        f"# pairs: {', '.join(f'({u},{v})' for u, v in instance.pairs)}",
        '%agent: F(s, i)',
        '%agent: B(s, i)',
        f"%agent: S(l, r, x{{{','.join(list(instance.alphabet) + [DUMMY])}}})",
        f"%agent: I(l, r, x{{{','.join(indices + [DUMMY])}}})",
        f"%init: 'initial' F(s^1,i^2), S(l,r,x_{DUMMY}^1), I(l,r,x_{DUMMY}^2)",
    ]

    for i, (u, _) in enumerate(instance.pairs, start=1):
        lhs = ['F(s^1,i^2)', 'S(x^1,r)', 'I(x^2,r)']
        rhs = ['F(s^1,i^2)', 'S(x,r^3)', 'I(x,r^4)'] + _symbol_chain(u, 3, 5, 1) + [f'I(l^4,r,x_{i}^2)']
        lines.append(_rule_line(f'F_{i}', lhs, rhs, base, eps))

    real = '{' + ','.join(indices) + '}'
    lines.append(_rule_line('switch1',
                            ['F(s^1,i^2)', 'S(x^1)', f'I(x{real}^2,r)'],
                            ['B(s^1,i^2)', 'S(x^1)', f'I(x{real}^2,r)'], base, 0.0))

    for i, (_, v) in enumerate(instance.pairs, start=1):
        lhs = ['B(s^1,i^2)', f'I(l^3,x_{i}^2)', 'I(r^3,x)', 'S(r^4,x)'] + _symbol_chain(v, 4, 5, 1)
        rhs = ['B(s^5,i^6)', f'I(l^3,x_{i})', 'I(r^3,x^6)', 'S(r,x^5)']
        lines.append(_rule_line(f'B_{i}', lhs, rhs, base, 0.0))

    if extended:
        anchor = ['B(s^1,i^2)', f'S(x_{DUMMY}^1,r)']
        for j in indices:
            lines.append(_rule_line(
                f'delete_{j}',
                anchor + [f'I(x_{DUMMY}^2,r^3)', 'I(l^4)', f'I(l^3,r^4,x_{j})'],
                anchor + [f'I(x_{DUMMY}^2,r^5)', 'I(l^5)'], base, -eps))
        for j in indices:
            lines.append(_rule_line(
                f'switch2_{j}',
                anchor + [f'I(x_{DUMMY}^2,r^3)', f'I(l^3,r,x_{j})'],
                ['F(s^1,i^2)', f'S(x_{DUMMY}^1,r)', f'I(x_{DUMMY}^2,r)'], base, params.e_switch))
    return '\n'.join(lines) + '\n'


def compile_encoding(instance, params, extended=False):
    """Rule set R_X, or its extension with deletion and second switch, as engine rules"""
    for warning in params.validate(instance.n):
        logging.warning(warning)
    text = encoding_text(instance, params, extended)
    model = parse_model(text)
    inconsistent = check_rate_consistency(model.rules, Config.TOLERANCE)
    if inconsistent:
        logging.warning(f"Rate ratios disagree with declared energies for: {', '.join(inconsistent)}")
    encoding = Encoding(instance, params, extended, model, text)
    logging.info(f"Compiled {instance.n} pairs into {encoding.pair_count} reversible pairs "
                 f"({encoding.directed_rule_count} directed rules), extended={extended}")
    return encoding


def oracle_transitions(s, x, p, extended=False):
    """Labelled transitions of an abstract configuration, mirroring the compiled rules"""
    s.validate(x)
    base, eps = p.base_rate, p.epsilon
    log, w, m = s.log, s.chain, len(s.log)
    moves = []

    def add(label, target, delta_e, backward=False):
        rate = base * math.exp(-delta_e) if backward else base
        moves.append(Move(label, target, target, rate, delta_e))

    if s.mode == 'F':
        for i in range(1, x.n + 1):
            add(f'F_{i}', AbstractState('F', log + (i,), None, w + x.u(i)), eps)
        if m >= 1 and w.endswith(x.u(log[-1])):
            last = log[-1]
            add(f'F_{last}_op', AbstractState('F', log[:-1], None, w[:len(w) - len(x.u(last))]), -eps, True)
        if m >= 1:
            add('switch1', AbstractState('B', log, m, w), 0.0)
        if extended and m == 0 and w == '':
            for j in range(1, x.n + 1):
                add(f'switch2_{j}_op', AbstractState('B', (j,), 0, ''), -p.e_switch, True)
        return moves

    k = s.pos
    if k >= 1 and w.endswith(x.v(log[k - 1])):
        i = log[k - 1]
        add(f'B_{i}', AbstractState('B', log, k - 1, w[:len(w) - len(x.v(i))]), 0.0)
    if k < m:
        i = log[k]
        add(f'B_{i}_op', AbstractState('B', log, k + 1, w + x.v(i)), 0.0, True)
    if k == m and m >= 1:
        add('switch1_op', AbstractState('F', log, None, w), 0.0, True)
    if extended and k == 0 and w == '':
        if m >= 2:
            add(f'delete_{log[0]}', AbstractState('B', log[1:], 0, ''), -eps)
        if m >= 1:
            for j in range(1, x.n + 1):
                add(f'delete_{j}_op', AbstractState('B', (j,) + log, 0, ''), eps, True)
        if m == 1:
            add(f'switch2_{log[0]}', AbstractState.initial(), p.e_switch)
    return moves


def is_success(s):
    """B agent at the anchor with an empty symbol chain"""
    return s.mode == 'B' and s.pos == 0 and s.chain == '' and len(s.log) >= 1


def is_empty_chain_flag(s):
    return s.mode == 'B' and s.chain == '' and (s.pos or 0) > 0


def _extend(x, seq, top, bottom, max_len, found):
    if len(seq) >= 1 and top == bottom:
        found.append(seq)
    if len(seq) == max_len:
        return
    for i in range(1, x.n + 1):
        new_top, new_bottom = top + x.u(i), bottom + x.v(i)
        if new_top.startswith(new_bottom) or new_bottom.startswith(new_top):
            _extend(x, seq + (i,), new_top, new_bottom, max_len, found)


def solve_pcp_bounded(x, max_len, threads=1):
    """Every index sequence of length 1..max_len whose two concatenations agree"""
    if max_len < 1:
        return []

    def from_first(i):
        found = []
        top, bottom = x.u(i), x.v(i)
        if top.startswith(bottom) or bottom.startswith(top):
            _extend(x, (i,), top, bottom, max_len, found)
        return found

    firsts = range(1, x.n + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(from_first, firsts))
    else:
        chunks = [from_first(i) for i in firsts]
    solutions = sorted((seq for chunk in chunks for seq in chunk), key=lambda seq: (len(seq), seq))
    logging.info(f"Bounded search up to length {max_len} found {len(solutions)} solutions")
    return solutions


def realize(s, encoding):
    """Site graph of an abstract configuration"""
    agents = [('F' if s.mode == 'F' else 'B', {})]
    bonds = []
    s_start = len(agents)
    agents.append(('S', {'x': DUMMY}))
    for symbol in s.chain:
        agents.append(('S', {'x': symbol}))
    i_start = len(agents)
    agents.append(('I', {'x': DUMMY}))
    for index in s.log:
        agents.append(('I', {'x': str(index)}))
    for a in range(s_start, i_start - 1):
        bonds.append(((a, 'r'), (a + 1, 'l')))
    for a in range(i_start, len(agents) - 1):
        bonds.append(((a, 'r'), (a + 1, 'l')))
    position = len(s.log) if s.mode == 'F' else s.pos
    bonds.append(((0, 's'), (i_start - 1, 'x')))
    bonds.append(((0, 'i'), (i_start + position, 'x')))
    return SiteGraph.from_parts(encoding.signatures, agents, bonds)


def _walk(g, start):
    chain = [start]
    while True:
        nxt = g.partner(chain[-1], 'r')
        if nxt is None:
            return chain
        chain.append(nxt[0])


def _head(g):
    heads = [a for a, agent in enumerate(g.agents) if agent.name in ('F', 'B')]
    if len(heads) != 1:
        raise InvalidStateError(f"expected one F or B agent, found {len(heads)}")
    return heads[0]


def _dummy(g, name):
    for a, agent in enumerate(g.agents):
        if agent.name == name and g.state(a, 'x') == DUMMY:
            return a
    raise InvalidStateError(f"no dummy {name} agent")


def graph_state(g):
    """Read an encoding site graph back into its abstract configuration"""
    head = _head(g)
    symbols = _walk(g, _dummy(g, 'S'))
    indices = _walk(g, _dummy(g, 'I'))
    if g.partner(head, 's') != (symbols[-1], 'x'):
        raise InvalidStateError("head is not bound to the end of the symbol chain")
    held = g.partner(head, 'i')
    if held is None or held[0] not in indices:
        raise InvalidStateError("head is not bound to the index chain")
    chain = ''.join(g.state(a, 'x') for a in symbols[1:])
    log = tuple(int(g.state(a, 'x')) for a in indices[1:])
    pos = indices.index(held[0])
    if g.agents[head].name == 'F':
        if pos != len(log):
            raise InvalidStateError("forward head must hold the last index")
        return AbstractState('F', log, None, chain)
    return AbstractState('B', log, pos, chain)


def graph_n_value(g):
    return sum(1 for a, agent in enumerate(g.agents) if agent.name == 'I' and g.state(a, 'x') != DUMMY)


def _head_anchor(g):
    """(head name, symbol-side state, index-side state) around the F or B agent"""
    head = _head(g)
    s_partner, i_partner = g.partner(head, 's'), g.partner(head, 'i')
    return (g.agents[head].name,
            g.state(s_partner[0], 'x') if s_partner else None,
            g.state(i_partner[0], 'x') if i_partner else None)


def graph_is_success(g):
    name, symbol, index = _head_anchor(g)
    return name == 'B' and symbol == DUMMY and index == DUMMY and graph_n_value(g) >= 1


def graph_empty_chain_flag(g):
    name, symbol, index = _head_anchor(g)
    return name == 'B' and symbol == DUMMY and index not in (DUMMY, None)


def _closing_direction(label):
    family, _, forward = rule_family(label)
    if family != 'switch2':
        return 0
    return 1 if forward else -1


class OracleSource:
    """Abstract configurations as a transition system"""

    def __init__(self, instance, params, extended=True):
        self.instance = instance
        self.params = params
        self.extended = extended

    def initial(self):
        return AbstractState.initial()

    def key(self, s):
        return s

    def moves(self, s, rate_mode=RateMode.EMBEDDING_WEIGHTED):
        # every rule has at most one embedding, so both rate modes agree
        return oracle_transitions(s, self.instance, self.params, self.extended)

    def n_value(self, s):
        return s.n

    def is_success(self, s):
        return is_success(s)

    def flag(self, s):
        return is_empty_chain_flag(s)

    def is_shadow_label(self, label):
        return rule_family(label)[0] == 'switch2'

    def closing_direction(self, label):
        return _closing_direction(label)

    def describe(self, s):
        return s.describe()


class EncodingSource(RuleSystem):
    """Compiled site-graph encoding as a transition system"""

    def __init__(self, encoding):
        super().__init__(encoding.rules, encoding.initial, graph_n_value, graph_is_success)
        self.encoding = encoding

    def flag(self, g):
        return graph_empty_chain_flag(g)

    def is_shadow_label(self, label):
        return rule_family(label)[0] == 'switch2'

    def closing_direction(self, label):
        return _closing_direction(label)

    def describe(self, g):
        return graph_state(g).describe()
