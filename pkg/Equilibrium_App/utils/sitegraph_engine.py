# utils/sitegraph_engine.py - Site graphs, patterns, rule application and canonical keys
import math
import itertools
from collections import Counter, deque, namedtuple
from dataclasses import dataclass, field
from enum import Enum

from errors import EquilibriumError, RuleError, ActionError
from models import Move

# Link constraints a pattern site can carry besides a named partner (slot, site)
FREE = 'free'
BOUND = 'bound'


class RateMode(str, Enum):
    EMBEDDING_WEIGHTED = 'embedding_weighted'
    UNIT_RATE = 'unit_rate'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).replace('-', '_'))


@dataclass(frozen=True)
class AgentSignature:
    name: str
    sites: tuple
    domains: tuple

    def __post_init__(self):
        if len(set(self.sites)) != len(self.sites):
            raise EquilibriumError(f"agent {self.name} declares a site twice")
        if len(self.domains) != len(self.sites):
            raise EquilibriumError(f"agent {self.name} needs one state domain per site")

    @classmethod
    def build(cls, name, sites):
        """sites: iterable of (site, states) with states an iterable or None"""
        sites = list(sites)
        return cls(name, tuple(s for s, _ in sites), tuple(tuple(d or ()) for _, d in sites))

    def site_index(self, site):
        return self.sites.index(site)

    def domain(self, site):
        return self.domains[self.sites.index(site)]

    def default_state(self, site):
        domain = self.domain(site)
        return domain[0] if domain else None


Agent = namedtuple('Agent', 'name states')


class SiteGraph:
    """Agents with per-site internal states and a symmetric link map.

    links maps an endpoint (agent index, site) to its partner endpoint and
    always holds both directions of a bond.
    """

    __slots__ = ('signatures', 'agents', 'links')

    def __init__(self, signatures, agents=(), links=None, check=True):
        self.signatures = signatures
        self.agents = tuple(agents)
        self.links = dict(links or {})
        if check:
            self.validate()

    @classmethod
    def from_parts(cls, signatures, agents, bonds=()):
        """Build from [(name, {site: state})] and [((a, site), (b, site))]"""
        built = []
        for name, states in agents:
            sig = signatures[name]
            built.append(Agent(name, tuple(states.get(site, sig.default_state(site)) for site in sig.sites)))
        links = {}
        for left, right in bonds:
            links[tuple(left)] = tuple(right)
            links[tuple(right)] = tuple(left)
        return cls(signatures, built, links)

    def validate(self):
        """Raise when a bond or state breaks the site-graph invariants"""
        for a, agent in enumerate(self.agents):
            if agent.name not in self.signatures:
                raise EquilibriumError(f"agent {a} has undeclared type {agent.name}")
            sig = self.signatures[agent.name]
            for site, state in zip(sig.sites, agent.states):
                domain = sig.domain(site)
                if domain and state not in domain:
                    raise EquilibriumError(f"state {state!r} not allowed on {agent.name}.{site}")
        for endpoint, partner in self.links.items():
            if endpoint == partner:
                raise EquilibriumError(f"endpoint {endpoint} bound to itself")
            if self.links.get(partner) != endpoint:
                raise EquilibriumError(f"bond {endpoint} -> {partner} is not symmetric")
            a, site = endpoint
            if not 0 <= a < len(self.agents) or site not in self.signature(a).sites:
                raise EquilibriumError(f"bond endpoint {endpoint} does not exist")

    def __len__(self):
        return len(self.agents)

    def signature(self, a):
        return self.signatures[self.agents[a].name]

    def state(self, a, site):
        return self.agents[a].states[self.signature(a).site_index(site)]

    def partner(self, a, site):
        return self.links.get((a, site))

    def count(self, name):
        return sum(1 for agent in self.agents if agent.name == name)

    def bonds(self):
        return sorted({tuple(sorted((e, p))) for e, p in self.links.items()})

    def components(self):
        seen = set()
        components = []
        for start in range(len(self.agents)):
            if start in seen:
                continue
            members, queue = [], deque([start])
            seen.add(start)
            while queue:
                a = queue.popleft()
                members.append(a)
                for site in self.signature(a).sites:
                    p = self.links.get((a, site))
                    if p and p[0] not in seen:
                        seen.add(p[0])
                        queue.append(p[0])
            components.append(sorted(members))
        return components

    def relabel(self, order):
        """Same graph with agent order[k] moved to index k"""
        position = {old: new for new, old in enumerate(order)}
        links = {(position[a], s): (position[b], t) for (a, s), (b, t) in self.links.items()}
        return SiteGraph(self.signatures, [self.agents[a] for a in order], links, check=False)

    def to_json(self):
        agents = []
        for a, agent in enumerate(self.agents):
            sig = self.signature(a)
            agents.append({'name': agent.name,
                           'states': {s: v for s, v in zip(sig.sites, agent.states) if v is not None}})
        return {'agents': agents, 'bonds': [[list(e), list(p)] for e, p in self.bonds()]}

    def __repr__(self):
        return f'<SiteGraph agents={len(self.agents)} bonds={len(self.links) // 2}>'


@dataclass(frozen=True)
class SiteTest:
    states: frozenset = None
    link: object = None


@dataclass(frozen=True)
class PatternAgent:
    name: str
    tests: tuple

    def test(self, site):
        for s, t in self.tests:
            if s == site:
                return t
        return None


@dataclass(frozen=True)
class Pattern:
    agents: tuple = ()

    def __len__(self):
        return len(self.agents)

    @classmethod
    def from_graph(cls, g):
        """Pattern matching exactly the agents, states and links of g"""
        agents = []
        for a, agent in enumerate(g.agents):
            tests = []
            for site, state in zip(g.signature(a).sites, agent.states):
                p = g.links.get((a, site))
                tests.append((site, SiteTest(None if state is None else frozenset([state]), p if p else FREE)))
            agents.append(PatternAgent(agent.name, tuple(tests)))
        return cls(tuple(agents))

    def components(self):
        parent = list(range(len(self.agents)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for slot, agent in enumerate(self.agents):
            for _, test in agent.tests:
                if isinstance(test.link, tuple):
                    parent[find(slot)] = find(test.link[0])
        groups = {}
        for slot in range(len(self.agents)):
            groups.setdefault(find(slot), []).append(slot)
        return sorted(groups.values(), key=lambda members: members[0])


def _local_match(pagent, g, a):
    agent = g.agents[a]
    if agent.name != pagent.name:
        return False
    sig = g.signatures[agent.name]
    for site, test in pagent.tests:
        if test.states is not None and agent.states[sig.site_index(site)] not in test.states:
            return False
        bound = (a, site) in g.links
        if test.link == FREE:
            if bound:
                return False
        elif test.link is not None and not bound:
            return False
    return True


def _match_component(p, slots, g):
    root = slots[0]
    matches = []
    for start in range(len(g.agents)):
        if not _local_match(p.agents[root], g, start):
            continue
        assignment = {root: start}
        used = {start}
        queue = deque([root])
        ok = True
        while queue and ok:
            slot = queue.popleft()
            a = assignment[slot]
            for site, test in p.agents[slot].tests:
                if not isinstance(test.link, tuple):
                    continue
                other_slot, other_site = test.link
                target = g.links.get((a, site))
                if target is None or target[1] != other_site:
                    ok = False
                    break
                b = target[0]
                if other_slot in assignment:
                    if assignment[other_slot] != b:
                        ok = False
                        break
                    continue
                if b in used or not _local_match(p.agents[other_slot], g, b):
                    ok = False
                    break
                assignment[other_slot] = b
                used.add(b)
                queue.append(other_slot)
        if ok:
            matches.append(assignment)
    return matches


def find_embeddings(p, g):
    """All injective matches of p in g as tuples of agent indices per slot"""
    if not p.agents:
        return [()]
    per_component = [_match_component(p, slots, g) for slots in p.components()]
    embeddings = []
    for combination in itertools.product(*per_component):
        merged = {}
        for assignment in combination:
            merged.update(assignment)
        if len(set(merged.values())) != len(merged):
            continue
        embeddings.append(tuple(merged[slot] for slot in range(len(p.agents))))
    return embeddings


@dataclass(frozen=True)
class Action:
    kind: str
    ref: tuple
    site: str = None
    other: tuple = None
    other_site: str = None
    value: object = None


def _bond_key(left, right):
    return tuple(sorted((left, right)))


def derive_actions(name, lhs, rhs, signatures):
    """Action list turning lhs into rhs.

    Slot j is the same agent on both sides when the names agree there;
    otherwise the lhs agent is deleted and the rhs agent created.
    """
    kept = {j for j in range(min(len(lhs), len(rhs))) if lhs.agents[j].name == rhs.agents[j].name}
    rhs_ref = {j: ('lhs', j) if j in kept else ('new', j) for j in range(len(rhs))}
    unbinds, binds, deletes, creates, states = {}, {}, [], [], []

    for i, pagent in enumerate(lhs.agents):
        if i in kept:
            continue
        for site, test in pagent.tests:
            if isinstance(test.link, tuple):
                here = (('lhs', i), site)
                unbinds[_bond_key(here, (('lhs', test.link[0]), test.link[1]))] = Action('unbind', ('lhs', i), site)
        deletes.append(Action('delete', ('lhs', i)))

    for i in sorted(kept):
        left, right = lhs.agents[i], rhs.agents[i]
        for site in signatures[left.name].sites:
            lt, rt = left.test(site), right.test(site)
            if (lt is None) != (rt is None):
                raise RuleError(f"rule {name}: site {left.name}.{site} is mentioned on one side only")
            if lt is None:
                continue
            here = (('lhs', i), site)
            l_partner = (('lhs', lt.link[0]), lt.link[1]) if isinstance(lt.link, tuple) else None
            r_partner = (rhs_ref[rt.link[0]], rt.link[1]) if isinstance(rt.link, tuple) else None
            if rt.link is None or rt.link == BOUND:
                if lt.link != rt.link:
                    raise RuleError(f"rule {name}: rhs of {left.name}.{site} must state its link as the lhs does")
            elif rt.link == FREE:
                if l_partner is not None:
                    unbinds[_bond_key(here, l_partner)] = Action('unbind', ('lhs', i), site)
                elif lt.link != FREE:
                    raise RuleError(f"rule {name}: cannot free {left.name}.{site} without naming its partner")
            elif l_partner != r_partner:
                if l_partner is not None:
                    unbinds[_bond_key(here, l_partner)] = Action('unbind', ('lhs', i), site)
                elif lt.link == BOUND:
                    raise RuleError(f"rule {name}: {left.name}.{site} is bound to an unnamed partner")
                first, second = _bond_key(here, r_partner)
                binds[(first, second)] = Action('bind', first[0], first[1], second[0], second[1])

            if rt.states is None:
                if lt.states is not None:
                    raise RuleError(f"rule {name}: rhs drops the state test on {left.name}.{site}")
            elif len(rt.states) == 1:
                if lt.states != rt.states:
                    states.append(Action('set_state', ('lhs', i), site, value=next(iter(rt.states))))
            elif lt.states != rt.states:
                raise RuleError(f"rule {name}: rhs widens the state set of {left.name}.{site}")

    for j, pagent in enumerate(rhs.agents):
        if j in kept:
            continue
        sig = signatures[pagent.name]
        values = []
        for site in sig.sites:
            test = pagent.test(site)
            if test is not None and test.states is not None:
                if len(test.states) != 1:
                    raise RuleError(f"rule {name}: created {pagent.name}.{site} needs a single state")
                values.append(next(iter(test.states)))
            else:
                values.append(sig.default_state(site))
            if test is None:
                continue
            if test.link == BOUND:
                raise RuleError(f"rule {name}: created {pagent.name}.{site} is bound to an unnamed partner")
            if isinstance(test.link, tuple):
                first, second = _bond_key((('new', j), site), (rhs_ref[test.link[0]], test.link[1]))
                binds[(first, second)] = Action('bind', first[0], first[1], second[0], second[1])
        creates.append(Action('create', ('new', j), value=(pagent.name, tuple(values))))

    return tuple(itertools.chain(unbinds.values(), deletes, creates, binds.values(), states))


@dataclass(frozen=True)
class Rule:
    name: str
    lhs: Pattern
    rhs: Pattern
    rate: float
    delta_e: float = None
    reverse_of: str = None
    actions: tuple = field(default=(), compare=False, repr=False)

    @classmethod
    def build(cls, name, lhs, rhs, signatures, rate, delta_e=None, reverse_of=None):
        rate = float(rate)
        if not (rate > 0 and math.isfinite(rate)):
            raise RuleError(f"rule {name}: rate {rate} is not a positive finite number")
        return cls(name, lhs, rhs, rate, delta_e, reverse_of, derive_actions(name, lhs, rhs, signatures))

    def deleted_slots(self):
        return [a.ref[1] for a in self.actions if a.kind == 'delete']


def _fully_specified(pagent, signatures):
    sig = signatures[pagent.name]
    for site in sig.sites:
        test = pagent.test(site)
        if test is None:
            return False
        if sig.domain(site) and (test.states is None or len(test.states) != 1):
            return False
        if test.link != FREE and not isinstance(test.link, tuple):
            return False
    return True


def reversible_pair(name, lhs, rhs, signatures, rate, rate_back, delta_e=None):
    """Forward rule and its partner <name>_op with swapped sides"""
    if delta_e is None:
        delta_e = math.log(rate_back) - math.log(rate)
    forward = Rule.build(name, lhs, rhs, signatures, rate, delta_e, reverse_of=f'{name}_op')
    backward = Rule.build(f'{name}_op', rhs, lhs, signatures, rate_back, -delta_e, reverse_of=name)
    for rule, side in ((forward, lhs), (backward, rhs)):
        for slot in rule.deleted_slots():
            if not _fully_specified(side.agents[slot], signatures):
                raise RuleError(f"rule {rule.name}: deleted agent {side.agents[slot].name} in slot {slot} "
                                f"must state every site for the partner rule to recreate it")
    return forward, backward


def check_rate_consistency(rules, tol=1e-9):
    """Names of rules whose declared energy difference disagrees with their pair's rate ratio"""
    by_name = {rule.name: rule for rule in rules}
    inconsistent = []
    for rule in rules:
        partner = by_name.get(rule.reverse_of)
        if partner is None or rule.delta_e is None:
            continue
        if abs(math.log(partner.rate) - math.log(rule.rate) - rule.delta_e) > tol:
            inconsistent.append(rule.name)
    return inconsistent


def apply_rule(rule, embedding, g):
    agents = list(g.agents)
    links = dict(g.links)
    created = {}
    deleted = set()

    def resolve(ref):
        kind, slot = ref
        return embedding[slot] if kind == 'lhs' else created[slot]

    for action in rule.actions:
        if action.kind == 'unbind':
            a = resolve(action.ref)
            partner = links.pop((a, action.site), None)
            if partner is None:
                raise ActionError(f"rule {rule.name}: {agents[a].name}.{action.site} of agent {a} is not bound")
            links.pop(partner, None)
        elif action.kind == 'delete':
            a = resolve(action.ref)
            deleted.add(a)
            for site in g.signatures[agents[a].name].sites:
                partner = links.pop((a, site), None)
                if partner is not None:
                    links.pop(partner, None)
        elif action.kind == 'create':
            created[action.ref[1]] = len(agents)
            agents.append(Agent(*action.value))
        elif action.kind == 'bind':
            left = (resolve(action.ref), action.site)
            right = (resolve(action.other), action.other_site)
            if left in links or right in links or left == right:
                raise ActionError(f"rule {rule.name}: cannot bind {left} to {right}")
            links[left] = right
            links[right] = left
        elif action.kind == 'set_state':
            a = resolve(action.ref)
            sig = g.signatures[agents[a].name]
            if action.value not in sig.domain(action.site):
                raise ActionError(f"rule {rule.name}: state {action.value!r} not allowed on "
                                  f"{sig.name}.{action.site}")
            values = list(agents[a].states)
            values[sig.site_index(action.site)] = action.value
            agents[a] = agents[a]._replace(states=tuple(values))

    if deleted:
        position = {}
        for a in range(len(agents)):
            if a not in deleted:
                position[a] = len(position)
        agents = [agent for a, agent in enumerate(agents) if a not in deleted]
        links = {(position[a], s): (position[b], t) for (a, s), (b, t) in links.items()}
    return SiteGraph(g.signatures, agents, links, check=False)


def _traverse(g, start):
    ids = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for site in g.signature(a).sites:
            p = g.links.get((a, site))
            if p is not None and p[0] not in ids:
                ids[p[0]] = len(order)
                order.append(p[0])
                queue.append(p[0])
    chunks = []
    for a in order:
        agent = g.agents[a]
        sites = []
        for site, state in zip(g.signature(a).sites, agent.states):
            p = g.links.get((a, site))
            link = f'{ids[p[0]]}.{p[1]}' if p is not None else '-'
            sites.append(f'{site}{"" if state is None else "~" + state}:{link}')
        chunks.append(f'{agent.name}({",".join(sites)})')
    return ';'.join(chunks)


def canonical_form(g):
    """Isomorphism-invariant key.

    Bonds use each site at most once, so a traversal from a fixed start
    agent visiting sites in signature order is unique; the key of a
    component is the least traversal over starts of its rarest agent type.
    """
    parts = []
    for component in g.components():
        counts = Counter(g.agents[a].name for a in component)
        rarest = min(counts, key=lambda name: (counts[name], name))
        parts.append(min(_traverse(g, a) for a in component if g.agents[a].name == rarest))
    parts.sort()
    return '|'.join(parts).encode()


@dataclass(frozen=True)
class Transition:
    rule: Rule
    embedding: tuple
    key: bytes
    rate: float
    successor: SiteGraph


def enumerate_transitions(g, rules, rate_mode=RateMode.EMBEDDING_WEIGHTED):
    """One transition per (rule, embedding); unit rate keeps the first embedding only"""
    rate_mode = RateMode.parse(rate_mode)
    transitions = []
    for rule in rules:
        embeddings = find_embeddings(rule.lhs, g)
        if rate_mode is RateMode.UNIT_RATE:
            embeddings = embeddings[:1]
        for embedding in embeddings:
            successor = apply_rule(rule, embedding, g)
            transitions.append(Transition(rule, embedding, canonical_form(successor), rule.rate, successor))
    return transitions


class RuleSystem:
    """A rule set and an initial graph seen as a transition system"""

    def __init__(self, rules, initial, n_value=None, success=None):
        self.rules = tuple(rules)
        self._initial = initial
        self._n_value = n_value or len
        self._success = success or (lambda g: False)
        self.by_name = {rule.name: rule for rule in self.rules}

    def initial(self):
        return self._initial

    def key(self, g):
        return canonical_form(g)

    def moves(self, g, rate_mode=RateMode.EMBEDDING_WEIGHTED):
        return [Move(t.rule.name, t.successor, t.key, t.rate, t.rule.delta_e)
                for t in enumerate_transitions(g, self.rules, rate_mode)]

    def n_value(self, g):
        return self._n_value(g)

    def is_success(self, g):
        return self._success(g)

    def closing_direction(self, label):
        return 0

    def is_shadow_label(self, label):
        return False

    def flag(self, g):
        return False

    def describe(self, g):
        return canonical_form(g).decode()

    def partner(self, rule):
        return self.by_name.get(rule.reverse_of)
