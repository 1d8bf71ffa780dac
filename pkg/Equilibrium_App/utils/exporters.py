# utils/exporters.py - JSON, CSV and Graphviz writers for chains, census tables and occupancy
import os
import csv
import json
import logging

import graphviz

from utils.ctmc_core import edge_delta_e


def write_json(data, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, default=str)
    logging.info(f"Wrote report to {path}")


def rate_graph_dot(g, name='rates'):
    """Graphviz source of a rate graph, edges labelled with rate and energy difference"""
    dot = graphviz.Digraph(name)
    for i, state in enumerate(g.states):
        dot.node(str(i), str(state))
    for (source, target), rate in g.edge_items():
        label = f'q={rate:.4g}'
        if g.rate(target, source) > 0:
            label += f' dE={edge_delta_e(g, source, target):.4g}'
        dot.edge(str(g.index_of(source)), str(g.index_of(target)), label=label)
    return dot


def chain_dot(chain, describe=str, name='chain'):
    dot = graphviz.Digraph(name)
    for i, state in enumerate(chain.states):
        shape = 'doublecircle' if chain.success[i] else 'ellipse'
        dot.node(str(i), f'{i}: {describe(state)}', shape=shape)
    for (source, target), _ in chain.graph.edge_items():
        rules = ','.join(chain.labels.get((source, target), ()))
        delta = edge_delta_e(chain.graph, source, target)
        dot.edge(str(source), str(target), label=f'{rules} dE={delta:.4g}')
    return dot


def sitegraph_dot(g, name='sitegraph'):
    dot = graphviz.Graph(name)
    for a, agent in enumerate(g.agents):
        sig = g.signature(a)
        sites = ' '.join(f'{s}~{v}' if v is not None else s for s, v in zip(sig.sites, agent.states))
        dot.node(str(a), f'{agent.name}({sites})', shape='box')
    for (a, s), (b, t) in g.bonds():
        dot.edge(str(a), str(b), taillabel=s, headlabel=t)
    return dot


def save_dot(dot, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dot.source)
    logging.info(f"Wrote Graphviz source to {path}")


def write_census_csv(census, partition, path):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['n', 'count', 'bound', 'exceeded', 'success', 'partial_sum'])
        for row, partial in zip(census.to_rows(), partition.partial_sums):
            writer.writerow([row['n'], row['count'], row['bound'], row['exceeded'], row['success'], partial])
    logging.info(f"Wrote census to {path}")


def write_occupancy_csv(trajectory, path, describe=str):
    total = trajectory.total_time or 1.0
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['state', 'residence_time', 'fraction'])
        for key, value in sorted(trajectory.occupancy.items(), key=lambda kv: -kv[1]):
            writer.writerow([describe(key), value, value / total])
    logging.info(f"Wrote occupancy to {path}")
