import math

import pytest

from errors import StateCapExceeded
from models import EncodingParams
from utils.ctmc_core import check_symmetric_support
from utils.explorer import (
    explore, check_equilibrium, omega_census, partition_sum, tail_bound, state_function_deviation,
)
from utils.pcp_compiler import OracleSource, EncodingSource, compile_encoding


@pytest.fixture(params=['oracle', 'encoding'])
def post_system(request):
    return request.getfixturevalue('post_oracle' if request.param == 'oracle' else 'post_source')


class TestExplore:
    def test_first_level(self, post_system):
        chain = explore(post_system, 1)
        assert len(chain) == 8
        assert chain.graph.n_edges == 14
        assert check_symmetric_support(chain.graph) is None

    def test_bound_zero(self, post_system):
        chain = explore(post_system, 0)
        assert len(chain) == 1
        assert chain.graph.n_edges == 0
        assert len(chain.frontier) == 3

    def test_state_table(self, post_oracle):
        chain = explore(post_oracle, 1)
        described = sorted(s.describe() for s in chain.states)
        assert described == sorted([
            "F[] ''", "F[1] 'aa'", "F[2] 'ba'", "F[3] 'b'",
            "B[1]@1 'aa'", "B[2]@1 'ba'", "B[3]@1 'b'", "B[1]@0 'a'",
        ])

    def test_initial_state_first(self, post_system):
        chain = explore(post_system, 2)
        assert chain.n_values[0] == 0
        assert chain.index[chain.keys[0]] == 0

    def test_level_sizes_without_solution(self, unsolvable_instance, params):
        chain = explore(OracleSource(unsolvable_instance, params), 6)
        assert len(chain) == 22
        counts = omega_census(chain, 1).counts
        assert [counts[n] for n in range(7)] == [1, 2, 3, 3, 4, 4, 5]

    def test_flagged_empty_chains(self, unsolvable_instance, params):
        chain = explore(OracleSource(unsolvable_instance, params), 4)
        assert sorted(chain.states[i].describe() for i in chain.flagged) == ["B[1,1,1,1]@2 ''", "B[1,1]@1 ''"]

    def test_shadow_region_adds_states(self, post_oracle):
        core = explore(post_oracle, 2)
        full = explore(post_oracle, 2, include_shadow=True)
        assert len(full) > len(core)
        assert set(core.keys) <= set(full.keys)

    def test_threads_give_identical_ids(self, post_oracle):
        single = explore(post_oracle, 3, threads=1)
        pooled = explore(post_oracle, 3, threads=4)
        assert single.keys == pooled.keys
        assert dict(single.graph.edge_items()) == dict(pooled.graph.edge_items())

    def test_state_cap(self, post_oracle):
        with pytest.raises(StateCapExceeded) as excinfo:
            explore(post_oracle, 4, state_cap=10)
        partial = excinfo.value.partial
        assert not partial.complete
        assert len(partial) == 10
        assert excinfo.value.cap == 10
        assert check_symmetric_support(partial.graph) is None

    def test_state_cap_equal_to_chain_size(self, post_oracle):
        chain = explore(post_oracle, 1, state_cap=8)
        assert chain.complete
        assert len(chain) == 8
        with pytest.raises(StateCapExceeded) as excinfo:
            explore(post_oracle, 1, state_cap=7)
        assert len(excinfo.value.partial) == 7

    def test_edge_labels(self, post_oracle):
        chain = explore(post_oracle, 1)
        labels = {label for _, _, label in chain.edge_labels()}
        assert labels == {'F_1', 'F_1_op', 'F_2', 'F_2_op', 'F_3', 'F_3_op', 'switch1', 'switch1_op',
                          'B_1', 'B_1_op'}


class TestCheckEquilibrium:
    def test_violation_through_second_switch(self, post_oracle):
        verdict = check_equilibrium(explore(post_oracle, 4))
        assert verdict.kind == 'violation'
        assert verdict.traverses_closing
        assert verdict.closing_net == 1
        assert verdict.witness_energy == pytest.approx(2.5)

    def test_violation_on_site_graphs(self, post_source):
        verdict = check_equilibrium(explore(post_source, 3))
        assert verdict.kind == 'violation'
        assert verdict.witness_energy == pytest.approx(2.5)

    def test_witness_report(self, post_oracle):
        chain = explore(post_oracle, 2)
        data = check_equilibrium(chain).to_dict(chain, post_oracle.describe)
        assert data['witness']['traverses_second_switch']
        labels = [label for step in data['witness']['path'] for label in step['labels']]
        assert any(label.startswith('switch2_') and not label.endswith('_op') for label in labels)

    def test_compatible_second_switch(self, post_instance):
        source = OracleSource(post_instance, EncodingParams(1.5, -1.5))
        chain = explore(source, 4)
        verdict = check_equilibrium(chain)
        assert verdict.kind == 'equilibrium'
        assert state_function_deviation(chain, verdict.assignment, 1.5) < 1e-9

    def test_no_solution_is_equilibrium(self, unsolvable_instance, params):
        chain = explore(EncodingSource(compile_encoding(unsolvable_instance, params, extended=True)), 5)
        verdict = check_equilibrium(chain)
        assert verdict.kind == 'equilibrium'
        assert state_function_deviation(chain, verdict.assignment, params.epsilon) < 1e-9

    @pytest.mark.parametrize('epsilon, expected', [(1.0, 'converges'), (0.0, 'divergence-suspected')])
    def test_no_solution_partition_verdict(self, unsolvable_instance, epsilon, expected):
        chain = explore(OracleSource(unsolvable_instance, EncodingParams(epsilon, 1.0)), 6)
        assert check_equilibrium(chain).kind == 'equilibrium'
        report = partition_sum(chain, epsilon, omega_census(chain, 1))
        assert report.verdict == expected
        assert report.to_dict()['tail_bound_finite'] == (expected == 'converges')

    def test_solution_length_sets_the_bound(self, post_oracle):
        assert check_equilibrium(explore(post_oracle, 1)).kind == 'equilibrium'
        assert check_equilibrium(explore(post_oracle, 2)).kind == 'violation'


class TestCensus:
    def test_counts_against_bound(self, post_oracle):
        census = omega_census(explore(post_oracle, 1), 3)
        assert census.counts == {0: 1, 1: 7}
        assert census.bounds == {0: 1, 1: 6}
        assert census.exceeded == [1]
        assert census.success_levels == []

    def test_success_levels(self, post_oracle):
        census = omega_census(explore(post_oracle, 3), 3)
        assert census.success_levels == [2, 3]
        assert [row['success'] for row in census.to_rows()] == [False, False, True, True]

    def test_flagged_count(self, unsolvable_instance, params):
        census = omega_census(explore(OracleSource(unsolvable_instance, params), 4), 1)
        assert census.flagged == 2
        assert census.to_dict()['flagged_states'] == 2


class TestPartition:
    def test_tail_bound_closed_form(self):
        q = 3 * math.exp(-1.5)
        brute = math.fsum((n + 1) * q ** n for n in range(5, 3000))
        assert tail_bound(3, 1.5, 4) == pytest.approx(brute, rel=1e-9)

    def test_tail_bound_diverges(self):
        assert tail_bound(3, 1.0, 4) == math.inf

    def test_partial_sums(self, unsolvable_instance, params):
        chain = explore(OracleSource(unsolvable_instance, params), 2)
        report = partition_sum(chain, 1.5, omega_census(chain, 1))
        expected = [1.0, 1.0 + 2 * math.exp(-1.5), 1.0 + 2 * math.exp(-1.5) + 3 * math.exp(-3.0)]
        assert report.partial_sums == pytest.approx(expected)
        assert report.verdict == 'converges'
        assert report.to_dict()['tail_bound_finite']

    def test_violation_found(self, post_oracle):
        chain = explore(post_oracle, 2)
        verdict = check_equilibrium(chain)
        report = partition_sum(chain, 1.5, omega_census(chain, 3), verdict.witness)
        assert report.verdict == 'violation-found'

    def test_divergence_suspected(self, post_instance):
        chain = explore(OracleSource(post_instance, EncodingParams(1.0, 1.0)), 1)
        report = partition_sum(chain, 1.0, omega_census(chain, 3))
        assert report.verdict == 'divergence-suspected'
        assert report.to_dict()['tail_bound'] is None
