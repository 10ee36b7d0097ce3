"""Network builders: random problem classes for profiling and testing, and
small fixed networks (chain, diamond, calibration net, ICU diagnosis)."""

from __future__ import annotations

import numpy as np

from .network import ChanceNode, Evidence, Network, Query, Variable, make_network

BINARY = ("t", "f")


def _binary(name: str) -> Variable:
    return Variable(name, BINARY)


def _random_rows(rng: np.random.Generator, n_rows: int) -> tuple[tuple[float, float], ...]:
    # keep probabilities away from 0/1 so evidence stays reasonably likely
    p = rng.uniform(0.05, 0.95, size=n_rows)
    return tuple((float(x), 1.0 - float(x)) for x in p)


def random_network(
    rng: np.random.Generator, n_nodes: int, max_parents: int = 2, polytree: bool = False, importance: bool = False
) -> Network:
    """Random DAG over binary nodes X0..X{n-1} in index order.

    With ``polytree`` the undirected skeleton stays acyclic. With
    ``importance`` arcs get random weights in [0, 1].
    """
    names = [f"X{i}" for i in range(n_nodes)]
    comp = list(range(n_nodes))

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    nodes = []
    for i, name in enumerate(names):
        k = int(rng.integers(0, min(max_parents, i) + 1))
        candidates = list(rng.permutation(i)) if i else []
        parents = []
        for c in candidates:
            if len(parents) == k:
                break
            if polytree:
                if find(int(c)) == find(i):
                    continue
                comp[find(int(c))] = find(i)
            parents.append(int(c))
        parents.sort()
        weights = tuple(float(w) for w in rng.uniform(0, 1, len(parents))) if importance else None
        nodes.append(
            ChanceNode(_binary(name), tuple(names[p] for p in parents), _random_rows(rng, 2 ** len(parents)), weights)
        )
    return make_network(nodes)


def random_problem(
    rng: np.random.Generator, n_nodes: int, max_evidence: int = 2, **kwargs
) -> tuple[Network, Evidence, Query]:
    net = random_network(rng, n_nodes, **kwargs)
    order = [str(x) for x in rng.permutation(net.ids)]
    target = order[0]
    k = int(rng.integers(0, min(max_evidence, n_nodes - 1) + 1))
    ev = Evidence({v: BINARY[int(rng.integers(0, 2))] for v in order[1 : 1 + k]})
    return net, ev, Query(target, BINARY[int(rng.integers(0, 2))])


def problem_class(n_nodes: int, max_evidence: int = 2, **kwargs):
    """Sampler callable for ``profile_strategy``."""

    def sample(rng):
        return random_problem(rng, n_nodes, max_evidence, **kwargs)

    return sample


def chain_network() -> Network:
    """A(0.3) -> B with P(B=t|A=t)=0.8, P(B=t|A=f)=0.1."""
    return make_network(
        [
            ChanceNode(_binary("A"), (), ((0.3, 0.7),)),
            ChanceNode(_binary("B"), ("A",), ((0.8, 0.2), (0.1, 0.9))),
        ]
    )


def diamond_network(importance_s1_s2: float = 1.0) -> Network:
    """D -> S1, D -> S2, S1 -> S2: two symptoms that are dependent given D."""
    return make_network(
        [
            ChanceNode(_binary("D"), (), ((0.2, 0.8),)),
            ChanceNode(_binary("S1"), ("D",), ((0.9, 0.1), (0.2, 0.8))),
            ChanceNode(
                _binary("S2"),
                ("D", "S1"),
                ((0.95, 0.05), (0.6, 0.4), (0.5, 0.5), (0.05, 0.95)),
                (1.0, importance_s1_s2),
            ),
        ]
    )


def calibration_problem() -> tuple[Network, Evidence, Query]:
    """Fixed 8-node multiply-connected net used for sampler coverage checks."""
    net = random_network(np.random.default_rng(20240808), 8, max_parents=2)
    return net, Evidence({"X4": "t", "X6": "f"}), Query("X0", "t")


def icu_network() -> Network:
    """Diagnosis decision network: disease D, respiratory findings T_r,
    diagnosis decision D_x, test decision T, value V(D_x, D)."""
    disease = Variable("D", ("present", "absent"))
    findings = Variable("T_r", ("present", "absent"))
    return make_network(
        [
            ChanceNode(disease, (), ((0.15, 0.85),)),
            ChanceNode(findings, ("D",), ((0.85, 0.15), (0.2, 0.8))),
        ],
        decision_nodes=[("D_x", ("treat", "no-treat")), ("T", ("test", "no-test"))],
        value_nodes=[("V", ("D_x", "D"))],
    )
