"""Exact inference: brute-force joint enumeration (the test oracle) and
variable elimination (the production exact engine), plus R_c measurement."""

from __future__ import annotations

import itertools
import statistics
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundInferError, InconsistentEvidenceError, OracleCapExceeded
from .network import Evidence, Network, Query, check_evidence, check_query

ORACLE_CAP = 20


@dataclass(frozen=True)
class Posterior:
    probability: float
    evidence_mass: float


@dataclass(frozen=True)
class ResourceLedger:
    """Complete resources R_c, allocated resources R_a, both in seconds."""

    complete_resources: float
    allocated: float = 0.0

    def __post_init__(self):
        if not self.complete_resources > 0:
            raise BoundInferError("complete resources must be positive")
        if self.allocated < 0:
            raise BoundInferError("allocated resources must be non-negative")

    @property
    def resource_fraction(self) -> float:
        return self.allocated / self.complete_resources

    def allocate(self, seconds: float) -> ResourceLedger:
        return ResourceLedger(self.complete_resources, seconds)


# --------------------------------------------------------------------------
# oracle


def joint_enumeration(net: Network, ev: Evidence, q: Query, cap: float = ORACLE_CAP) -> Posterior:
    """Sum the full joint over every instantiation. Exponential; tests only."""
    check_query(net, ev, q)
    if net.binary_size() > cap + 1e-9:
        raise OracleCapExceeded(f"{net.binary_size():.1f} binary-equivalent nodes exceeds cap {cap}")
    nodes = [net.node(i) for i in net.topo_order]
    pos = {n.id: k for k, n in enumerate(nodes)}
    observed = {pos[v]: net.variable(v).index(s) for v, s in ev.items()}
    target, target_idx = pos[q.target], net.variable(q.target).index(q.target_state)

    hit = total = 0.0
    for inst in itertools.product(*(range(n.variable.card) for n in nodes)):
        if any(inst[k] != s for k, s in observed.items()):
            continue
        p = 1.0
        for k, n in enumerate(nodes):
            row = 0
            for par in n.parents:
                row = row * net.variable(par).card + inst[pos[par]]
            p *= n.cpt[row][inst[k]]
        total += p
        if inst[target] == target_idx:
            hit += p
    if total <= 0.0:
        raise InconsistentEvidenceError("evidence has zero probability")
    return Posterior(hit / total, total)


# --------------------------------------------------------------------------
# factors


@dataclass
class Factor:
    vars: tuple[str, ...]
    values: np.ndarray

    def reduce(self, var: str, index: int) -> Factor:
        if var not in self.vars:
            return self
        axis = self.vars.index(var)
        return Factor(self.vars[:axis] + self.vars[axis + 1 :], np.take(self.values, index, axis=axis))

    def expand(self, order: tuple[str, ...]) -> np.ndarray:
        """Values broadcast against ``order`` (a superset of self.vars)."""
        perm = sorted(range(len(self.vars)), key=lambda i: order.index(self.vars[i]))
        arr = np.transpose(self.values, perm)
        present = set(self.vars)
        shape = []
        it = iter(arr.shape)
        for v in order:
            shape.append(next(it) if v in present else 1)
        return arr.reshape(shape)

    def sum_out(self, var: str) -> Factor:
        axis = self.vars.index(var)
        return Factor(self.vars[:axis] + self.vars[axis + 1 :], self.values.sum(axis=axis))


def multiply(factors: Sequence[Factor]) -> Factor:
    order: list[str] = []
    for f in factors:
        for v in f.vars:
            if v not in order:
                order.append(v)
    scope = tuple(order)
    result = np.ones(())
    for f in factors:
        result = result * f.expand(scope)
    shape = [1] * len(scope)
    for f in factors:
        for v, n in zip(f.vars, f.values.shape):
            shape[scope.index(v)] = n
    return Factor(scope, np.broadcast_to(result, shape).copy())


def cpt_factor(net: Network, node_id: str) -> Factor:
    node = net.node(node_id)
    shape = [net.variable(p).card for p in node.parents] + [node.variable.card]
    return Factor(node.parents + (node_id,), np.asarray(node.cpt, dtype=float).reshape(shape))


def min_degree_order(factors: Sequence[Factor], eliminate: set[str]) -> list[str]:
    """Greedy min-degree over the interaction graph; ties broken by id."""
    adj: dict[str, set[str]] = {}
    for f in factors:
        for v in f.vars:
            adj.setdefault(v, set()).update(u for u in f.vars if u != v)
    remaining = set(eliminate)
    order = []
    while remaining:
        v = min(remaining, key=lambda x: (len(adj.get(x, ())), x))
        nbrs = adj.pop(v, set())
        for a in nbrs:
            adj[a].discard(v)
            adj[a].update(nbrs - {a})
        remaining.discard(v)
        order.append(v)
    return order


def _evidence_factors(net: Network, ev: Evidence) -> list[Factor]:
    factors = []
    for node_id in net.topo_order:
        f = cpt_factor(net, node_id)
        for var, state in ev.items():
            f = f.reduce(var, net.variable(var).index(state))
        factors.append(f)
    return factors


def posterior_distribution(
    net: Network, ev: Evidence, target: str, order: Sequence[str] | None = None
) -> tuple[np.ndarray, float]:
    """Normalized P(target | ev) over all target states, and P(ev)."""
    check_evidence(net, ev)
    net.variable(target)
    if target in ev:
        raise BoundInferError(f"query variable {target!r} is observed in the evidence")
    factors = _evidence_factors(net, ev)
    hidden = {v for v in net.ids if v != target and v not in ev}
    if order is None:
        order = min_degree_order(factors, hidden)
    elif set(order) != hidden or len(order) != len(hidden):
        raise BoundInferError("elimination order must list every hidden variable exactly once")
    for var in order:
        touching = [f for f in factors if var in f.vars]
        if not touching:
            continue
        factors = [f for f in factors if var not in f.vars]
        factors.append(multiply(touching).sum_out(var))
    joint = multiply(factors)
    card = net.variable(target).card
    if target in joint.vars:
        unnorm = joint.expand((target,)).reshape(card)
    else:
        unnorm = np.full(card, float(joint.values) / card)
    mass = float(unnorm.sum())
    if mass <= 0.0:
        raise InconsistentEvidenceError("evidence has zero probability")
    return unnorm / mass, mass


def variable_elimination(
    net: Network, ev: Evidence, q: Query, order: Sequence[str] | None = None
) -> Posterior:
    check_query(net, ev, q)
    dist, mass = posterior_distribution(net, ev, q.target, order)
    return Posterior(float(dist[net.variable(q.target).index(q.target_state)]), mass)


def marginal(net: Network, var: str, ev: Evidence | None = None) -> np.ndarray:
    return posterior_distribution(net, ev or Evidence(), var)[0]


def measure_complete_resources(net: Network, ev: Evidence, q: Query, repeats: int = 5) -> ResourceLedger:
    """R_c as the median wall-clock time of ``repeats`` exact runs."""
    if repeats < 3:
        raise BoundInferError("need at least 3 repeats to take a median")
    durations = []
    answers = set()
    for _ in range(repeats):
        start = time.perf_counter()
        answers.add(variable_elimination(net, ev, q).probability)
        durations.append(time.perf_counter() - start)
    if len(answers) != 1:
        raise BoundInferError("exact inference was not deterministic across repeats")
    rc = statistics.median(durations)
    return ResourceLedger(max(rc, time.get_clock_info("perf_counter").resolution))
