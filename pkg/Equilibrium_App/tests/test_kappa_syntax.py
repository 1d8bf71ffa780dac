import pytest

from errors import ModelSyntaxError
from utils.explorer import explore
from utils.kappa_syntax import parse_model, print_model, print_pattern, print_graph, print_signature
from utils.pcp_compiler import EncodingSource
from utils.sitegraph_engine import BOUND, canonical_form

TOY = """
# two agents and a reversible bond
%agent: A(x, s{u,p})
%agent: B(y)
%init: 'pair' A(x,s_u), B(y)   # unbound
%rule: 'bind' A(x), B(y) -> A(x^1), B(y^1) @ 1.0, 2.0
%rule: 'phos' A(s_u) -> A(s_p) @ 1.0
%rule: 'degrade' B(y) -> @ 0.5
"""


@pytest.fixture
def toy():
    return parse_model(TOY)


class TestParseModel:
    def test_declarations(self, toy):
        assert list(toy.signatures) == ['A', 'B']
        assert toy.signatures['A'].domain('s') == ('u', 'p')
        assert [rule.name for rule in toy.rules] == ['bind', 'bind_op', 'phos', 'degrade']
        assert toy.rule('bind_op').rate == 2.0

    def test_init_defaults(self, toy):
        g = toy.inits['pair']
        assert len(g) == 2
        assert g.state(0, 's') == 'u'
        assert g.links == {}

    def test_default_state_when_omitted(self):
        model = parse_model("%agent: A(s{u,p})\n%init: 'i' A()")
        assert model.inits['i'].state(0, 's') == 'u'

    def test_link_constraints(self):
        model = parse_model("%agent: A(x, y)\n%rule: 'r' A(x^_, y^?) -> A(x^_, y^?) @ 1.0")
        lhs = model.rule('r').lhs
        assert lhs.agents[0].test('x').link == BOUND
        assert lhs.agents[0].test('y').link is None

    def test_state_set_in_pattern(self):
        model = parse_model("%agent: A(s{u,p,q})\n%rule: 'r' A(s{u,p}) -> A(s_q) @ 1.0")
        assert model.rule('r').lhs.agents[0].test('s').states == frozenset({'u', 'p'})

    def test_explicit_energy(self):
        model = parse_model("%agent: A()\n%rule: 'make' -> A() @ 1.0, 4.5 dE 1.5")
        assert model.rule('make').delta_e == 1.5
        assert model.rule('make_op').delta_e == -1.5

    @pytest.mark.parametrize('text, line, column', [
        ("%agent: A(x)\n%init: 'i' C()", 2, 12),
        ("%agent: A(x)\n%init: 'i' A(z)", 2, 14),
        ("%foo: A()", 1, 1),
        ("%agent: A(x)\n\n  %bar: 1", 3, 3),
    ])
    def test_error_positions(self, text, line, column):
        with pytest.raises(ModelSyntaxError) as excinfo:
            parse_model(text)
        assert (excinfo.value.line, excinfo.value.column) == (line, column)
        assert str(excinfo.value).startswith(f'line {line}, column {column}: ')

    @pytest.mark.parametrize('text', [
        "%agent: A(x",
        "%agent: A(x)\n%init: 'i' A(x^1)",
        "%agent: A(x)\n%init: 'i' A(x^1), A(x^1), A(x^1)",
        "%agent: A(x)\n%init: 'i' A(x, x)",
        "%agent: A(s{u})\n%init: 'i' A(s_v)",
        "%agent: A(s{u,p})\n%init: 'i' A(s{u,p})",
        "%agent: A(x)\n%init: 'i' A(x^_)",
        "%agent: A(x)\n%agent: A(y)",
        "%agent: A(x)\n%rule: 'r' A(x) -> A(x) @ 1.0\n%rule: 'r' A(x) -> A(x) @ 2.0",
        "%agent: A(x)\n%rule: 'r' A(x) -> A(x) @ 0",
        "%agent: A(x, s{u,p})\n%rule: 'r' A(x) -> @ 1.0, 1.0",
    ])
    def test_rejected(self, text):
        with pytest.raises(ModelSyntaxError):
            parse_model(text)


class TestPrinter:
    def test_pattern_and_graph(self, toy):
        assert print_pattern(toy.rule('bind').rhs) == 'A(x^1), B(y^1)'
        assert print_pattern(toy.rule('bind').lhs) == 'A(x), B(y)'
        assert print_graph(toy.inits['pair']) == 'A(x,s_u), B(y)'

    def test_model_round_trip(self, toy):
        again = parse_model(print_model(toy))
        assert [(r.name, r.rate, r.delta_e) for r in again.rules] == \
            [(r.name, r.rate, r.delta_e) for r in toy.rules]
        assert [r.actions for r in again.rules] == [r.actions for r in toy.rules]
        assert canonical_form(again.inits['pair']) == canonical_form(toy.inits['pair'])

    def test_unconstrained_site_with_state(self):
        model = parse_model("%agent: A(x, s{u,p})\n%rule: 'r' A(x^?, s_u) -> A(x^?, s_p) @ 1.0")
        assert print_pattern(model.rule('r').lhs) == 'A(x^?,s_u)'


    def test_encoding_model_round_trip(self, post_encoding):
        again = parse_model(print_model(post_encoding.model))
        assert [(r.name, r.rate, r.delta_e, r.reverse_of) for r in again.rules] == \
            [(r.name, r.rate, r.delta_e, r.reverse_of) for r in post_encoding.rules]
        assert [r.actions for r in again.rules] == [r.actions for r in post_encoding.rules]
        assert canonical_form(again.inits['initial']) == canonical_form(post_encoding.initial)

    def test_encoding_graphs_round_trip(self, post_encoding):
        header = '\n'.join(print_signature(sig) for sig in post_encoding.signatures.values())
        chain = explore(EncodingSource(post_encoding), 2, include_shadow=True)
        assert max(len(g.links) for g in chain.states) > 4
        for g in chain.states:
            model = parse_model(f"{header}\n%init: 'g' {print_graph(g)}\n")
            assert canonical_form(model.inits['g']) == canonical_form(g)
