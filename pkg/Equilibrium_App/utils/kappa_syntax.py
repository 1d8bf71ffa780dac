# utils/kappa_syntax.py - Parser and printer for the rule mini-language
#
#   %agent: S(l, r, x{a,b,*})
#   %init: 'start' F(s^1,i^2), S(l,r,x_*^1), I(l,r,x_*^2)
#   %rule: 'F_1' lhs -> rhs @ 1.0, 4.48 dE 1.5
#
# Sites read NAME[_STATE | {S1,S2}][^N | ^_ | ^?].  A site written without a
# link is free; a site left out of a pattern is unconstrained.
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import pyparsing as pp

from errors import ModelSyntaxError, EquilibriumError
from utils.sitegraph_engine import (
    AgentSignature, Agent, SiteGraph, SiteTest, PatternAgent, Pattern, Rule,
    reversible_pair, FREE, BOUND,
)


@dataclass
class Model:
    signatures: dict = field(default_factory=dict)
    inits: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)

    def rule(self, name):
        for rule in self.rules:
            if rule.name == name:
                return rule
        raise KeyError(name)


@dataclass
class _StateSpec:
    values: tuple
    is_set: bool
    column: int


@dataclass
class _LinkSpec:
    label: str
    column: int


@dataclass
class _Site:
    name: str
    state: _StateSpec
    link: _LinkSpec
    column: int


@dataclass
class _Agent:
    name: str
    sites: list
    column: int


IDENT = pp.Word(pp.alphas, pp.alphanums)
STATE = pp.Word(pp.alphanums + '*')
NUMBER = pp.pyparsing_common.fnumber
QUOTED = pp.QuotedString("'")


def _grammar():
    single = pp.Suppress('_') + STATE
    single.set_parse_action(lambda s, loc, t: _StateSpec((t[0],), False, pp.col(loc, s)))
    state_set = pp.Suppress('{') + pp.DelimitedList(STATE) + pp.Suppress('}')
    state_set.set_parse_action(lambda s, loc, t: _StateSpec(tuple(t), True, pp.col(loc, s)))
    link = pp.Suppress('^') + (pp.Word(pp.nums) | pp.Literal('_') | pp.Literal('?'))
    link.set_parse_action(lambda s, loc, t: _LinkSpec(t[0], pp.col(loc, s)))

    site = IDENT + pp.Optional(single | state_set) + pp.Optional(link)

    def make_site(s, loc, t):
        state = next((x for x in t[1:] if isinstance(x, _StateSpec)), None)
        bond = next((x for x in t[1:] if isinstance(x, _LinkSpec)), None)
        return _Site(t[0], state, bond, pp.col(loc, s))

    site.set_parse_action(make_site)
    agent = IDENT + pp.Suppress('(') + pp.Optional(pp.DelimitedList(site)) + pp.Suppress(')')
    agent.set_parse_action(lambda s, loc, t: _Agent(t[0], list(t[1:]), pp.col(loc, s)))
    expression = pp.Group(pp.Optional(pp.DelimitedList(agent)))

    declared_site = pp.Group(IDENT + pp.Optional(pp.Suppress('{') + pp.DelimitedList(STATE) + pp.Suppress('}')))
    agent_decl = (pp.Suppress(pp.Literal('%agent:')) + IDENT + pp.Suppress('(')
                  + pp.Group(pp.Optional(pp.DelimitedList(declared_site))) + pp.Suppress(')'))
    init_decl = pp.Suppress(pp.Literal('%init:')) + QUOTED + expression
    rule_decl = (pp.Suppress(pp.Literal('%rule:')) + QUOTED + expression + pp.Suppress('->') + expression
                 + pp.Suppress('@') + NUMBER + pp.Optional(pp.Group(pp.Suppress(',') + NUMBER)('rate_back'))
                 + pp.Optional(pp.Group(pp.Suppress(pp.Keyword('dE')) + NUMBER)('delta_e')))
    return agent_decl, init_decl, rule_decl


AGENT_DECL, INIT_DECL, RULE_DECL = _grammar()


def _resolve(agents, signatures, line, as_graph):
    """Turn parsed agents into a Pattern, or a SiteGraph when as_graph is set"""
    occurrences = defaultdict(list)
    slots = []
    for slot, parsed in enumerate(agents):
        if parsed.name not in signatures:
            raise ModelSyntaxError(f"unknown agent {parsed.name}", line, parsed.column)
        sig = signatures[parsed.name]
        seen = {}
        for site in parsed.sites:
            if site.name not in sig.sites:
                raise ModelSyntaxError(f"agent {parsed.name} has no site {site.name}", line, site.column)
            if site.name in seen:
                raise ModelSyntaxError(f"site {site.name} repeated in agent {parsed.name}", line, site.column)
            states = None
            if site.state is not None:
                domain = sig.domain(site.name)
                for value in site.state.values:
                    if value not in domain:
                        raise ModelSyntaxError(f"state {value} not declared for {parsed.name}.{site.name}",
                                               line, site.state.column)
                if as_graph and site.state.is_set:
                    raise ModelSyntaxError("state sets are only allowed in patterns", line, site.state.column)
                states = frozenset(site.state.values)
            link = FREE
            if site.link is not None:
                if site.link.label in ('_', '?'):
                    if as_graph:
                        raise ModelSyntaxError(f"^{site.link.label} is only allowed in patterns", line,
                                               site.link.column)
                    link = BOUND if site.link.label == '_' else None
                else:
                    occurrences[site.link.label].append((slot, site.name, site.link.column))
                    link = site.link.label
            seen[site.name] = (states, link)
        slots.append((parsed.name, seen))

    partner = {}
    for label, ends in occurrences.items():
        if len(ends) == 1:
            raise ModelSyntaxError(f"bond label {label} used once", line, ends[0][2])
        if len(ends) > 2:
            raise ModelSyntaxError(f"bond label {label} used more than twice", line, ends[2][2])
        (a, s, _), (b, t, _) = ends
        partner[(a, s)] = (b, t)
        partner[(b, t)] = (a, s)

    if as_graph:
        built = []
        for slot, (name, seen) in enumerate(slots):
            sig = signatures[name]
            values = []
            for site in sig.sites:
                states = seen.get(site, (None, FREE))[0]
                values.append(next(iter(states)) if states else sig.default_state(site))
            built.append(Agent(name, tuple(values)))
        return SiteGraph(signatures, built, partner)

    pattern_agents = []
    for slot, (name, seen) in enumerate(slots):
        tests = []
        for site in signatures[name].sites:
            if site not in seen:
                continue
            states, link = seen[site]
            if isinstance(link, str) and link not in (FREE, BOUND):
                link = partner[(slot, site)]
            tests.append((site, SiteTest(states, link)))
        pattern_agents.append(PatternAgent(name, tuple(tests)))
    return Pattern(tuple(pattern_agents))


def _parse_line(grammar, text, line):
    try:
        return grammar.parse_string(text, parse_all=True)
    except pp.ParseException as e:
        raise ModelSyntaxError(e.msg, line, e.column) from None


def parse_model(text):
    """Parse a model into signatures, named initial graphs and rules"""
    model = Model()
    for line, raw in enumerate(text.splitlines(), start=1):
        body = raw.split('#', 1)[0]
        # keep columns aligned with the source line
        stripped = body.rstrip()
        if not stripped.strip():
            continue
        directive = stripped.lstrip()
        if directive.startswith('%agent:'):
            tokens = _parse_line(AGENT_DECL, stripped, line)
            name, sites = tokens[0], tokens[1]
            if name in model.signatures:
                raise ModelSyntaxError(f"agent {name} declared twice", line, stripped.index(name) + 1)
            try:
                model.signatures[name] = AgentSignature.build(
                    name, [(s[0], tuple(s[1:]) or None) for s in sites])
            except EquilibriumError as e:
                raise ModelSyntaxError(str(e), line, 1) from None
        elif directive.startswith('%init:'):
            tokens = _parse_line(INIT_DECL, stripped, line)
            model.inits[tokens[0]] = _resolve(list(tokens[1]), model.signatures, line, as_graph=True)
        elif directive.startswith('%rule:'):
            tokens = _parse_line(RULE_DECL, stripped, line)
            name = tokens[0]
            if any(rule.name in (name, f'{name}_op') for rule in model.rules):
                raise ModelSyntaxError(f"rule {name} defined twice", line, stripped.index(name) + 1)
            lhs = _resolve(list(tokens[1]), model.signatures, line, as_graph=False)
            rhs = _resolve(list(tokens[2]), model.signatures, line, as_graph=False)
            rate = tokens[3]
            rate_back = tokens.rate_back[0] if tokens.rate_back else None
            delta_e = tokens.delta_e[0] if tokens.delta_e else None
            try:
                if rate_back is None:
                    model.rules.append(Rule.build(name, lhs, rhs, model.signatures, rate, delta_e))
                else:
                    model.rules.extend(reversible_pair(name, lhs, rhs, model.signatures,
                                                       rate, rate_back, delta_e))
            except EquilibriumError as e:
                raise ModelSyntaxError(str(e), line, 1) from None
        else:
            raise ModelSyntaxError(f"unknown directive {directive.split()[0]}", line,
                                   len(stripped) - len(directive) + 1)
    logging.debug(f"Parsed model with {len(model.signatures)} agents, {len(model.inits)} initial graphs "
                  f"and {len(model.rules)} rules")
    return model


def _format_states(states):
    if states is None:
        return ''
    if len(states) == 1:
        return f'_{next(iter(states))}'
    return '{' + ','.join(sorted(states)) + '}'


def _label_allocator():
    labels = {}

    def label_for(left, right):
        key = tuple(sorted((left, right)))
        if key not in labels:
            labels[key] = len(labels) + 1
        return labels[key]
    return label_for


def print_pattern(p):
    label_for = _label_allocator()
    parts = []
    for slot, agent in enumerate(p.agents):
        sites = []
        for site, test in agent.tests:
            text = site + _format_states(test.states)
            if isinstance(test.link, tuple):
                text += f'^{label_for((slot, site), test.link)}'
            elif test.link == BOUND:
                text += '^_'
            elif test.link is None:
                text += '^?'
            sites.append(text)
        parts.append(f'{agent.name}({",".join(sites)})')
    return ', '.join(parts)


def print_graph(g):
    label_for = _label_allocator()
    parts = []
    for a, agent in enumerate(g.agents):
        sites = []
        for site, state in zip(g.signature(a).sites, agent.states):
            text = site + ('' if state is None else f'_{state}')
            p = g.links.get((a, site))
            if p is not None:
                text += f'^{label_for((a, site), p)}'
            sites.append(text)
        parts.append(f'{agent.name}({",".join(sites)})')
    return ', '.join(parts)


def print_signature(sig):
    sites = []
    for site, domain in zip(sig.sites, sig.domains):
        sites.append(site + ('{' + ','.join(domain) + '}' if domain else ''))
    return f'%agent: {sig.name}({", ".join(sites)})'


def print_model(model):
    lines = [print_signature(sig) for sig in model.signatures.values()]
    for name, g in model.inits.items():
        lines.append(f"%init: '{name}' {print_graph(g)}")
    by_name = {rule.name: rule for rule in model.rules}
    printed = set()
    for rule in model.rules:
        if rule.name in printed:
            continue
        partner = by_name.get(rule.reverse_of)
        text = f"%rule: '{rule.name}' {print_pattern(rule.lhs)} -> {print_pattern(rule.rhs)} @ {rule.rate!r}"
        if partner is not None:
            text += f', {partner.rate!r}'
            printed.add(partner.name)
        if rule.delta_e is not None:
            text += f' dE {rule.delta_e!r}'
        lines.append(text)
        printed.add(rule.name)
    return '\n'.join(lines) + '\n'
