import itertools

import numpy as np
import pytest

from errors import EquilibriumError, RuleError, ActionError
from utils.explorer import explore
from utils.kappa_syntax import parse_model
from utils.sitegraph_engine import (
    AgentSignature, SiteGraph, SiteTest, PatternAgent, Pattern, Action, Rule, RateMode, RuleSystem,
    FREE, BOUND, find_embeddings, derive_actions, reversible_pair, check_rate_consistency, apply_rule,
    canonical_form, enumerate_transitions,
)

SIGNATURES = {
    'S': AgentSignature.build('S', [('l', None), ('r', None), ('x', ('a', 'b'))]),
}

TOY = """
%agent: A(x, s{u,p})
%agent: B(y)
%init: 'pair' A(x,s_u), B(y)
%rule: 'bind' A(x), B(y) -> A(x^1), B(y^1) @ 1.0, 2.0
%rule: 'phos' A(s_u) -> A(s_p) @ 1.0
%rule: 'degrade' B(y) -> @ 0.5
"""


def chain(word):
    agents = [('S', {'x': symbol}) for symbol in word]
    bonds = [((k, 'r'), (k + 1, 'l')) for k in range(len(word) - 1)]
    return SiteGraph.from_parts(SIGNATURES, agents, bonds)


def single(name, **tests):
    return PatternAgent(name, tuple(tests.items()))


def brute_force_embeddings(p, g):
    found = []
    for image in itertools.permutations(range(len(g.agents)), len(p.agents)):
        if all(_agrees(p, g, image, slot) for slot in range(len(p.agents))):
            found.append(image)
    return sorted(found)


def _agrees(p, g, image, slot):
    pagent, a = p.agents[slot], image[slot]
    if g.agents[a].name != pagent.name:
        return False
    for site, test in pagent.tests:
        if test.states is not None and g.state(a, site) not in test.states:
            return False
        partner = g.partner(a, site)
        if test.link == FREE and partner is not None:
            return False
        if test.link == BOUND and partner is None:
            return False
        if isinstance(test.link, tuple) and partner != (image[test.link[0]], test.link[1]):
            return False
    return True


def random_graph(rng, size):
    agents = [('S', {'x': str(rng.choice(['a', 'b']))}) for _ in range(size)]
    free = [(a, s) for a in range(size) for s in ('l', 'r')]
    order = rng.permutation(len(free))
    free = [free[k] for k in order]
    bonds = []
    while len(free) >= 2 and rng.random() < 0.7:
        left, right = free.pop(), free.pop()
        if left[0] != right[0]:
            bonds.append((left, right))
    return SiteGraph.from_parts(SIGNATURES, agents, bonds)


def random_pattern(rng):
    def test():
        states = [None, frozenset({'a'}), frozenset({'b'})][int(rng.integers(3))]
        link = [None, FREE, BOUND][int(rng.integers(3))]
        return SiteTest(states, link)

    if rng.random() < 0.5:
        return Pattern((single('S', x=SiteTest(test().states), l=test()), single('S', r=test())))
    first = PatternAgent('S', (('r', SiteTest(None, (1, 'l'))), ('x', test())))
    second = PatternAgent('S', (('l', SiteTest(None, (0, 'r'))), ('r', test())))
    return Pattern((first, second))


class TestSiteGraph:
    def test_defaults_and_accessors(self):
        g = chain('ab')
        assert g.state(0, 'x') == 'a'
        assert g.partner(0, 'r') == (1, 'l')
        assert g.partner(0, 'l') is None
        assert g.count('S') == 2
        assert g.bonds() == [((0, 'r'), (1, 'l'))]

    def test_state_outside_domain(self):
        with pytest.raises(EquilibriumError):
            SiteGraph.from_parts(SIGNATURES, [('S', {'x': 'c'})])

    def test_asymmetric_links(self):
        g = chain('a')
        with pytest.raises(EquilibriumError):
            SiteGraph(SIGNATURES, g.agents + g.agents, {(0, 'r'): (1, 'l')})

    def test_components(self):
        g = SiteGraph.from_parts(SIGNATURES, [('S', {})] * 3, [((0, 'r'), (2, 'l'))])
        assert g.components() == [[0, 2], [1]]

    def test_json(self):
        assert chain('ab').to_json() == {
            'agents': [{'name': 'S', 'states': {'x': 'a'}}, {'name': 'S', 'states': {'x': 'b'}}],
            'bonds': [[[0, 'r'], [1, 'l']]],
        }


class TestEmbeddings:
    def test_single_agent_pattern(self):
        p = Pattern((single('S', x=SiteTest(frozenset({'a'}))),))
        assert find_embeddings(p, chain('aabab')) == [(0,), (1,), (3,)]

    def test_bonded_pattern(self):
        p = Pattern((
            PatternAgent('S', (('r', SiteTest(None, (1, 'l'))), ('x', SiteTest(frozenset({'a'}))))),
            PatternAgent('S', (('l', SiteTest(None, (0, 'r'))), ('x', SiteTest(frozenset({'b'}))))),
        ))
        assert find_embeddings(p, chain('aabab')) == [(1, 2), (3, 4)]

    def test_free_and_bound_tests(self):
        g = chain('aab')
        assert find_embeddings(Pattern((single('S', l=SiteTest(None, FREE)),)), g) == [(0,)]
        assert find_embeddings(Pattern((single('S', r=SiteTest(None, BOUND)),)), g) == [(0,), (1,)]

    def test_graph_as_pattern(self):
        g = chain('aab')
        assert find_embeddings(Pattern.from_graph(g), g) == [(0, 1, 2)]
        assert find_embeddings(Pattern.from_graph(chain('ab')), g) == []

    def test_empty_pattern(self):
        assert find_embeddings(Pattern(()), chain('ab')) == [()]

    def test_disconnected_pattern_is_injective(self):
        p = Pattern((single('S'), single('S')))
        assert sorted(find_embeddings(p, chain('ab'))) == [(0, 1), (1, 0)]

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            g = random_graph(rng, int(rng.integers(1, 6)))
            p = random_pattern(rng)
            assert sorted(find_embeddings(p, g)) == brute_force_embeddings(p, g)


class TestRules:
    @pytest.fixture
    def toy(self):
        return parse_model(TOY)

    def test_bind_actions(self, toy):
        rule = toy.rule('bind')
        assert rule.actions == (Action('bind', ('lhs', 0), 'x', ('lhs', 1), 'y'),)
        assert toy.rule('bind_op').actions == (Action('unbind', ('lhs', 1), 'y'),)

    def test_apply_and_reverse(self, toy):
        g = toy.inits['pair']
        bound = apply_rule(toy.rule('bind'), find_embeddings(toy.rule('bind').lhs, g)[0], g)
        assert bound.partner(0, 'x') == (1, 'y')
        back = apply_rule(toy.rule('bind_op'), find_embeddings(toy.rule('bind_op').lhs, bound)[0], bound)
        assert canonical_form(back) == canonical_form(g)

    def test_encoding_moves_are_undone_by_their_partners(self, post_source):
        chain = explore(post_source, 3, include_shadow=True)
        checked = 0
        for g in chain.states:
            key = canonical_form(g)
            for move in post_source.moves(g):
                partner = post_source.partner(post_source.by_name[move.label])
                assert partner is not None, move.label
                embeddings = find_embeddings(partner.lhs, move.target)
                assert key in {canonical_form(apply_rule(partner, e, move.target)) for e in embeddings}, move.label
                checked += 1
        assert checked > len(chain)

    def test_set_state(self, toy):
        g = toy.inits['pair']
        after = apply_rule(toy.rule('phos'), (0,), g)
        assert after.state(0, 's') == 'p'
        assert g.state(0, 's') == 'u'

    def test_delete_compacts_indices(self, toy):
        g = toy.inits['pair']
        after = apply_rule(toy.rule('degrade'), (1,), g)
        assert [agent.name for agent in after.agents] == ['A']

    def test_bind_on_bound_site(self, toy):
        g = toy.inits['pair']
        bound = apply_rule(toy.rule('bind'), (0, 1), g)
        with pytest.raises(ActionError):
            apply_rule(toy.rule('bind'), (0, 1), bound)

    def test_site_on_one_side_only(self, toy):
        lhs = Pattern((single('A', x=SiteTest(None, FREE)),))
        rhs = Pattern((single('A', s=SiteTest(frozenset({'p'}))),))
        with pytest.raises(RuleError):
            derive_actions('bad', lhs, rhs, toy.signatures)

    def test_partner_needs_full_deleted_agents(self, toy):
        lhs = Pattern((single('A', x=SiteTest(None, FREE)),))
        with pytest.raises(RuleError):
            reversible_pair('vanish', lhs, Pattern(()), toy.signatures, 1.0, 1.0)

    def test_rate_must_be_positive(self, toy):
        with pytest.raises(RuleError):
            Rule.build('zero', Pattern(()), Pattern(()), toy.signatures, 0.0)

    def test_reversible_pair_energy(self, toy):
        forward, backward = toy.rule('bind'), toy.rule('bind_op')
        assert forward.delta_e == pytest.approx(np.log(2.0))
        assert backward.delta_e == pytest.approx(-np.log(2.0))
        assert forward.reverse_of == 'bind_op' and backward.reverse_of == 'bind'

    def test_rate_consistency(self, toy):
        lhs = Pattern((single('B', y=SiteTest(None, FREE)),))
        rules = reversible_pair('make', Pattern(()), lhs, toy.signatures, 1.0, 2.0, delta_e=1.0)
        assert check_rate_consistency(rules) == ['make', 'make_op']
        assert check_rate_consistency(toy.rules) == []


class TestCanonicalForm:
    def test_relabelling_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(1, 8)))
            key = canonical_form(g)
            for _ in range(100):
                order = [int(a) for a in rng.permutation(len(g.agents))]
                assert canonical_form(g.relabel(order)) == key

    def test_distinguishes_orientation(self):
        assert canonical_form(chain('ab')) != canonical_form(chain('ba'))

    def test_components_are_sorted(self):
        g = SiteGraph.from_parts(SIGNATURES, [('S', {'x': 'b'}), ('S', {'x': 'a'})])
        h = SiteGraph.from_parts(SIGNATURES, [('S', {'x': 'a'}), ('S', {'x': 'b'})])
        assert canonical_form(g) == canonical_form(h)


class TestTransitions:
    @pytest.fixture
    def flip(self):
        lhs = Pattern((single('S', x=SiteTest(frozenset({'a'}))),))
        rhs = Pattern((single('S', x=SiteTest(frozenset({'b'}))),))
        return Rule.build('flip', lhs, rhs, SIGNATURES, 1.0)

    def test_embedding_weighted(self, flip):
        transitions = enumerate_transitions(chain('aabab'), [flip], RateMode.EMBEDDING_WEIGHTED)
        assert len(transitions) == 3

    def test_unit_rate_keeps_one_embedding(self, flip):
        transitions = enumerate_transitions(chain('aabab'), [flip], 'unit-rate')
        assert len(transitions) == 1
        assert transitions[0].embedding == (0,)

    def test_rule_system_moves(self, flip):
        system = RuleSystem([flip], chain('ab'))
        moves = system.moves(system.initial())
        assert [move.label for move in moves] == ['flip']
        assert moves[0].key == canonical_form(chain('bb'))
        assert system.n_value(system.initial()) == 2
