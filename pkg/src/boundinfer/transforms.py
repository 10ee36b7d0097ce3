"""Structural reformulations: imposed global independence (naive-Bayes star)
and importance-threshold arc pruning used by completeness modulation."""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .errors import BoundInferError
from .exact import marginal, posterior_distribution
from .network import ChanceNode, Evidence, Network, make_network


def impose_global_independence(net: Network, condition: str, evidence_vars: Sequence[str]) -> Network:
    """Star network: ``condition`` keeps its exact prior, every evidence
    variable becomes its sole child with the exact pairwise conditional."""
    if condition in evidence_vars:
        raise BoundInferError(f"condition {condition!r} cannot also be an evidence variable")
    cond = net.variable(condition)
    for e in evidence_vars:
        net.variable(e)
        if e in net.ancestors(condition):
            raise BoundInferError(f"{condition!r} must not be a descendant of evidence variable {e!r}")
    if len(set(evidence_vars)) != len(evidence_vars):
        raise BoundInferError("evidence variables listed twice")

    prior = marginal(net, condition)
    nodes = [ChanceNode(cond, (), (tuple(float(p) for p in prior),))]
    for e in evidence_vars:
        var = net.variable(e)
        rows = []
        for state, p_c in zip(cond.states, prior):
            if p_c > 0.0:
                dist, _ = posterior_distribution(net, Evidence({condition: state}), e)
            else:
                # conditional is undefined for an impossible condition state
                dist = np.full(var.card, 1.0 / var.card)
            rows.append(tuple(float(x) for x in dist))
        nodes.append(ChanceNode(var, (condition,), tuple(rows), (1.0,)))
    return make_network(nodes, net.decision_nodes, net.value_nodes)


def prune_arcs(net: Network, threshold: float) -> Network:
    """Drop every arc with importance < ``threshold``.

    A node losing parents has its CPT averaged over each removed parent,
    weighted by that parent's prior marginal in the already-pruned network.
    Nodes are processed in topological order so those marginals exist.
    """
    pruned: list[ChanceNode] = []
    for node_id in net.topo_order:
        node = net.node(node_id)
        keep = [i for i, w in enumerate(node.arc_importance) if w >= threshold]
        if len(keep) == len(node.parents):
            pruned.append(node)
            continue
        partial = make_network(pruned)
        cards = [net.variable(p).card for p in node.parents]
        weights = [
            None if i in keep else marginal(partial, p)
            for i, p in enumerate(node.parents)
        ]
        table = np.asarray(node.cpt, dtype=float).reshape(*cards, node.variable.card)
        # contract removed parent axes against their marginals, last axis first
        for i in reversed(range(len(node.parents))):
            if weights[i] is not None:
                table = np.tensordot(np.moveaxis(table, i, 0), weights[i], axes=([0], [0]))
        kept_cards = [cards[i] for i in keep]
        rows = []
        for combo in itertools.product(*(range(c) for c in kept_cards)):
            row = table[combo] if combo else table
            rows.append(tuple(float(x) for x in row))
        pruned.append(
            ChanceNode(
                node.variable,
                tuple(node.parents[i] for i in keep),
                tuple(rows),
                tuple(node.arc_importance[i] for i in keep),
            )
        )
    order = {n.id: k for k, n in enumerate(net.chance_nodes)}
    pruned.sort(key=lambda n: order[n.id])
    return make_network(pruned, net.decision_nodes, net.value_nodes)

