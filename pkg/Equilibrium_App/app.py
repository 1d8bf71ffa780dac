# app.py - Command-line entry point: compile, solve, explore, check, simulate, petri and energy
import os
import logging
from functools import wraps

import click

# Load environment variables FIRST
from dotenv import load_dotenv
load_dotenv()

from config import Config, get_config, configure_logging
from errors import EquilibriumError, StateCapExceeded
from forms import ExploreForm, SolveForm, SimulateForm, PetriForm, first_error
from models import EncodingParams
from utils.ctmc_core import CycleWitness, solve_energy, boltzmann, verify_detailed_balance
from utils.explorer import (
    explore as explore_chain, check_equilibrium, omega_census, partition_sum, state_function_deviation,
)
from utils.exporters import (
    write_json, chain_dot, rate_graph_dot, sitegraph_dot, save_dot, write_census_csv, write_occupancy_csv,
)
from utils.pcp_compiler import (
    compile_encoding, solve_pcp_bounded, EncodingSource, OracleSource, is_success,
)
from utils.schemas import load_instance, load_params, load_rate_graph
from utils.simulator import (
    ssa_run, PetriModel, petri_closed_form, petri_poisson_form, compare_distribution,
    edge_flux_asymmetry, success_hits,
)
from utils.sitegraph_engine import RateMode


SOLVE_LIMIT = 8


class RuntimeFailure(click.ClickException):
    """Module error surfaced verbatim with exit code 3"""
    exit_code = 3


def _validated(form_class, **data):
    form = form_class(data=data)
    if not form.validate():
        flag, message = first_error(form)
        raise click.UsageError(f"--{flag}: {message}")
    return form


def _params(path):
    if path:
        return load_params(path)
    settings = get_config()
    return EncodingParams(settings.DEFAULT_EPSILON, settings.DEFAULT_E_SWITCH, settings.DEFAULT_BASE_RATE)


def _source(kind, instance, params, extended):
    if kind == 'oracle':
        return OracleSource(instance, params, extended)
    return EncodingSource(compile_encoding(instance, params, extended))


def _echo_config(**values):
    return {k: (str(v) if isinstance(v, os.PathLike) else v) for k, v in values.items()}


def _chain_summary(chain, source):
    return {
        'states': len(chain),
        'edges': chain.graph.n_edges,
        'bound': chain.bound,
        'frontier': len(chain.frontier),
        'complete': chain.complete,
        'success_states': [i for i, s in enumerate(chain.success) if s],
        'flagged_states': [{'id': i, 'state': source.describe(chain.states[i])} for i in chain.flagged],
        'state_table': {i: source.describe(s) for i, s in enumerate(chain.states)},
    }


def _write_extras(chain, source, census, partition, dot, csv_path):
    if dot:
        save_dot(chain_dot(chain, source.describe), dot)
    if csv_path and census is not None:
        write_census_csv(census, partition, csv_path)


def _explore_or_partial(source, output, report, **kwargs):
    try:
        return explore_chain(source, **kwargs)
    except StateCapExceeded as e:
        if output and e.partial is not None:
            report['chain'] = _chain_summary(e.partial, source)
            report['error'] = str(e)
            write_json(report, output)
        raise


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log at DEBUG level.')
def cli(verbose):
    """Equilibrium analysis of rule-based stochastic models."""
    configure_logging(get_config(), 'DEBUG' if verbose else None)


def _guard(fn):
    """Turn package errors into exit code 3"""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EquilibriumError as e:
            logging.error(f"{fn.__name__}: {str(e)}")
            raise RuntimeFailure(str(e)) from e
    return wrapper


instance_option = click.option('--instance', required=True, type=click.Path(exists=True, dir_okay=False),
                               help='PCP instance JSON.')
params_option = click.option('--params', type=click.Path(exists=True, dir_okay=False),
                             help='Encoding parameters JSON (defaults from the environment).')
output_option = click.option('-o', '--output', type=click.Path(dir_okay=False), help='JSON report path.')


@cli.command('compile')
@instance_option
@params_option
@click.option('--extended/--no-extended', default=False, help='Add deletion and second-switch rules.')
@click.option('-o', '--output', type=click.Path(dir_okay=False), help='Model file in the rule language.')
@click.option('--report', type=click.Path(dir_okay=False), help='JSON summary path.')
@click.option('--dot', type=click.Path(dir_okay=False), help='Graphviz source of the initial site graph.')
@_guard
def compile_command(instance, params, extended, output, report, dot):
    """Compile a PCP instance into a reversible rule set."""
    x, p = load_instance(instance), _params(params)
    encoding = compile_encoding(x, p, extended)
    if output:
        with open(output, 'w', encoding='utf-8') as f:
            f.write(encoding.text)
    else:
        click.echo(encoding.text, nl=False)
    if report:
        write_json({'command': 'compile',
                    'config': _echo_config(instance=instance, params=params, extended=extended),
                    **encoding.to_dict()}, report)
    if dot:
        save_dot(sitegraph_dot(encoding.initial), dot)
    click.echo(f"Compiled {x.n} pairs: {encoding.pair_count} reversible pairs, "
               f"{encoding.directed_rule_count} directed rules", err=output is None)


@cli.command('solve-pcp')
@instance_option
@click.option('--max-len', default=6, show_default=True, type=int, help='Longest index sequence tried.')
@click.option('--threads', default=1, show_default=True, type=int)
@output_option
@_guard
def solve_command(instance, max_len, threads, output):
    """Enumerate solutions up to a length bound."""
    _validated(SolveForm, max_len=max_len, threads=threads)
    x = load_instance(instance)
    solutions = solve_pcp_bounded(x, max_len, threads)
    report = {'command': 'solve-pcp',
              'config': _echo_config(instance=instance, max_len=max_len, threads=threads),
              'solutions': [list(s) for s in solutions],
              'count': len(solutions)}
    if output:
        write_json(report, output)
    click.echo(f"{len(solutions)} solutions up to length {max_len}")
    for s in solutions:
        click.echo('  ' + ' '.join(str(i) for i in s) + f"  ->  {x.upper(s)}")


def exploration_options(fn):
    for option in reversed([
        instance_option,
        params_option,
        click.option('--bound', default=4, show_default=True, type=int, help='Largest index-chain length kept.'),
        click.option('--state-cap', default=None, type=int, help='Maximum number of states.'),
        click.option('--threads', default=None, type=int, help='Worker threads for frontier expansion.'),
        click.option('--extended/--no-extended', default=True, help='Use the extended rule set.'),
        click.option('--source', 'source_kind', type=click.Choice(['encoding', 'oracle']), default='encoding',
                     show_default=True),
        click.option('--include-shadow', is_flag=True, help='Follow the second switch during the closure.'),
        click.option('--rate-mode', type=click.Choice(['embedding_weighted', 'unit_rate']),
                     default='embedding_weighted', show_default=True),
        output_option,
        click.option('--dot', type=click.Path(dir_okay=False), help='Graphviz source of the chain.'),
        click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help='Census CSV.'),
    ]):
        fn = option(fn)
    return fn


def _exploration(instance, params, bound, state_cap, threads, extended, source_kind, include_shadow,
                 rate_mode, output, command):
    settings = get_config()
    state_cap = settings.STATE_CAP if state_cap is None else state_cap
    threads = settings.THREADS if threads is None else threads
    _validated(ExploreForm, bound=bound, state_cap=state_cap, threads=threads, rate_mode=rate_mode)
    x, p = load_instance(instance), _params(params)
    source = _source(source_kind, x, p, extended)
    report = {'command': command,
              'config': _echo_config(instance=instance, params=p.to_dict(), bound=bound, state_cap=state_cap,
                                     threads=threads, extended=extended, source=source_kind,
                                     include_shadow=include_shadow, rate_mode=rate_mode)}
    chain = _explore_or_partial(source, output, report, bound=bound, state_cap=state_cap,
                                include_shadow=include_shadow, threads=threads, rate_mode=rate_mode)
    report['chain'] = _chain_summary(chain, source)
    census = omega_census(chain, x.n)
    return x, p, source, chain, census, report


@cli.command('explore')
@exploration_options
@_guard
def explore_command(instance, params, bound, state_cap, threads, extended, source_kind, include_shadow,
                    rate_mode, output, dot, csv_path):
    """Enumerate the bounded component of the initial state."""
    x, p, source, chain, census, report = _exploration(
        instance, params, bound, state_cap, threads, extended, source_kind, include_shadow, rate_mode,
        output, 'explore')
    partition = partition_sum(chain, p.epsilon, census)
    report['census'] = census.to_dict()
    report['partition'] = partition.to_dict()
    if output:
        write_json(report, output)
    _write_extras(chain, source, census, partition, dot, csv_path)
    click.echo(f"{len(chain)} states, {chain.graph.n_edges} directed edges up to n={bound}")
    for row in census.to_rows():
        click.echo(f"  n={row['n']}: {row['count']} states (bound {row['bound']})")


@cli.command('check')
@exploration_options
@click.option('--tol', default=None, type=float, help='Tolerance on cycle energy sums.')
@_guard
def check_command(instance, params, bound, state_cap, threads, extended, source_kind, include_shadow,
                  rate_mode, output, dot, csv_path, tol):
    """Decide whether the bounded chain admits an energy function."""
    x, p, source, chain, census, report = _exploration(
        instance, params, bound, state_cap, threads, extended, source_kind, include_shadow, rate_mode,
        output, 'check')
    verdict = check_equilibrium(chain, tol)
    partition = partition_sum(chain, p.epsilon, census, verdict.witness)
    report['verdict'] = verdict.to_dict(chain, source.describe)
    if verdict.assignment is not None:
        report['verdict']['max_state_function_deviation'] = state_function_deviation(
            chain, verdict.assignment, p.epsilon)
    report['solutions_within_bound'] = [list(s) for s in solve_pcp_bounded(x, min(bound, SOLVE_LIMIT))]
    report['census'] = census.to_dict()
    report['partition'] = partition.to_dict()
    if output:
        write_json(report, output)
    _write_extras(chain, source, census, partition, dot, csv_path)
    click.echo(f"{len(chain)} states explored up to n={bound}: {verdict.kind}")
    if verdict.witness is not None:
        click.echo(f"  witness cycle of length {len(verdict.witness.path)}, "
                   f"energy {verdict.witness.energy_sum:.9g}, second switch: {verdict.traverses_closing}")
    click.echo(f"  partition: {partition.verdict}")


@cli.command('simulate')
@instance_option
@params_option
@click.option('--extended/--no-extended', default=True)
@click.option('--source', 'source_kind', type=click.Choice(['encoding', 'oracle']), default='encoding',
              show_default=True)
@click.option('--events', default=None, type=int, help='Number of jumps.')
@click.option('--time', 'time_budget', default=None, type=float, help='Simulated time budget.')
@click.option('--seed', default=None, type=int)
@click.option('--rate-mode', type=click.Choice(['embedding_weighted', 'unit_rate']), default='unit_rate',
              show_default=True)
@output_option
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help='Occupancy CSV.')
@_guard
def simulate_command(instance, params, extended, source_kind, events, time_budget, seed, rate_mode, output,
                     csv_path):
    """Stochastic simulation of the encoding."""
    settings = get_config()
    seed = settings.DEFAULT_SEED if seed is None else seed
    if events is None and time_budget is None:
        events = settings.DEFAULT_EVENTS
    _validated(SimulateForm, events=events, seed=seed, time=time_budget, rate_mode=rate_mode)
    x, p = load_instance(instance), _params(params)
    source = _source(source_kind, x, p, extended)
    watch = source.is_success if source_kind == 'encoding' else None
    trajectory = ssa_run(source, events=events, time=time_budget, seed=seed, rate_mode=rate_mode, watch=watch)
    hits = trajectory.watched if watch is not None else success_hits(trajectory, is_success)
    report = {'command': 'simulate',
              'config': _echo_config(instance=instance, params=p.to_dict(), extended=extended, source=source_kind,
                                     events=events, time=time_budget, seed=seed, rate_mode=rate_mode),
              'trajectory': trajectory.to_dict(),
              'success_hits': hits,
              'flux_asymmetry': [{**row, 'edge': [_key_text(k, source) for k in row['edge']]}
                                 for row in edge_flux_asymmetry(trajectory)]}
    if output:
        write_json(report, output)
    if csv_path:
        write_occupancy_csv(trajectory, csv_path, lambda key: _key_text(key, source))
    click.echo(f"{trajectory.n_events} events, time {trajectory.total_time:.6g}, success hits {hits}")


def _key_text(key, source):
    if isinstance(key, bytes):
        return key.decode()
    return source.describe(key)


@cli.command('petri')
@click.option('--e1', type=float, required=True, help='Energy of creating A.')
@click.option('--e2', type=float, required=True, help='Energy of converting A into B.')
@click.option('--base-rate', default=1.0, show_default=True, type=float)
@click.option('--events', default=None, type=int)
@click.option('--time', 'time_budget', default=None, type=float)
@click.option('--seed', default=None, type=int)
@click.option('--rate-mode', type=click.Choice(['embedding_weighted', 'unit_rate']), default='unit_rate',
              show_default=True)
@click.option('--n-max', default=10, show_default=True, type=int)
@click.option('--m-max', default=10, show_default=True, type=int)
@output_option
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help='Occupancy CSV.')
@_guard
def petri_command(e1, e2, base_rate, events, time_budget, seed, rate_mode, n_max, m_max, output, csv_path):
    """Simulate the A/B creation model against its closed-form equilibrium."""
    settings = get_config()
    seed = settings.DEFAULT_SEED if seed is None else seed
    if events is None and time_budget is None:
        events = settings.DEFAULT_EVENTS
    _validated(PetriForm, events=events, seed=seed, time=time_budget, rate_mode=rate_mode,
               e1=e1, e2=e2, n_max=n_max, m_max=m_max)
    model = PetriModel(e1, e2, base_rate)
    if RateMode.parse(rate_mode) is RateMode.UNIT_RATE:
        predicted = petri_closed_form(e1, e2, n_max, m_max)
    else:
        predicted = petri_poisson_form(e1, e2, n_max, m_max)
    trajectory = ssa_run(model, events=events, time=time_budget, seed=seed, rate_mode=rate_mode)
    empirical = trajectory.distribution()
    distance = compare_distribution(trajectory, predicted)
    flux = edge_flux_asymmetry(trajectory)
    report = {'command': 'petri',
              'config': _echo_config(e1=e1, e2=e2, base_rate=base_rate, events=events, time=time_budget,
                                     seed=seed, rate_mode=rate_mode, n_max=n_max, m_max=m_max),
              'trajectory': trajectory.to_dict(),
              'total_variation': distance,
              'truncated_mass': predicted.truncated_mass,
              'log_z': predicted.log_z,
              'p00': {'empirical': empirical.get((0, 0), 0.0), 'predicted': predicted.get((0, 0), 0.0)},
              'max_flux_asymmetry': max((row['asymmetry'] for row in flux), default=0.0),
              'flux_asymmetry': [{**row, 'edge': [list(k) for k in row['edge']]} for row in flux]}
    if output:
        write_json(report, output)
    if csv_path:
        write_occupancy_csv(trajectory, csv_path, model.describe)
    click.echo(f"{trajectory.n_events} events: TV distance {distance:.4g}, "
               f"p(0,0) {report['p00']['empirical']:.4g} vs {report['p00']['predicted']:.4g}")


@cli.command('energy')
@click.option('--graph', 'graph_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Rate graph JSON.')
@click.option('--tol', default=None, type=float)
@output_option
@click.option('--dot', type=click.Path(dir_okay=False), help='Graphviz source of the graph.')
@_guard
def energy_command(graph_path, tol, output, dot):
    """Solve a rate graph for energies and its Boltzmann distribution."""
    g = load_rate_graph(graph_path)
    result = solve_energy(g, tol=tol)
    report = {'command': 'energy', 'config': _echo_config(graph=graph_path, tol=tol)}
    if isinstance(result, CycleWitness):
        report['verdict'] = {'kind': 'violation', 'energy_sum': result.energy_sum,
                             'path': [[str(i), str(j)] for i, j in result.path]}
        click.echo(f"No energy function: cycle of length {len(result.path)} with energy {result.energy_sum:.9g}")
    else:
        distribution = boltzmann(result)
        balance = verify_detailed_balance(distribution, g, tol if tol is not None else Config.TOLERANCE)
        report['verdict'] = {'kind': 'equilibrium', **result.to_dict()}
        report['distribution'] = {str(k): v for k, v in distribution.p.items()}
        report['detailed_balance'] = {'max_residual': balance.max_residual, 'passed': balance.passed}
        click.echo(f"Energy function over {len(g.states)} states; detailed balance residual "
                   f"{balance.max_residual:.3g}")
    if output:
        write_json(report, output)
    if dot:
        save_dot(rate_graph_dot(g), dot)


if __name__ == '__main__':
    cli()
