"""Belief/decision network representation, validation and the JSON file format.

State conventions used throughout the package:

* CPT rows enumerate parent-state combinations with the LAST declared parent
  varying fastest (``itertools.product`` order).
* For binary variables, state index 0 is the "true"/"on" state. Noisy-OR
  tables and the random generators rely on this.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import BoundInferError, NetworkParseError, NetworkValidationError

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    id: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def card(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise BoundInferError(f"variable {self.id!r} has no state {state!r}") from None


@dataclass(frozen=True)
class ChanceNode:
    variable: Variable
    parents: tuple[str, ...] = ()
    cpt: tuple[tuple[float, ...], ...] = ()
    arc_importance: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "cpt", tuple(tuple(float(p) for p in row) for row in self.cpt))
        if self.arc_importance is None:
            # unannotated arcs are never pruned
            object.__setattr__(self, "arc_importance", (1.0,) * len(self.parents))
        else:
            object.__setattr__(self, "arc_importance", tuple(float(w) for w in self.arc_importance))

    @property
    def id(self) -> str:
        return self.variable.id

    def importance(self, parent: str) -> float:
        return self.arc_importance[self.parents.index(parent)]


@dataclass(frozen=True)
class Network:
    """Chance nodes carry the probabilistic model; decision and value nodes
    are descriptive metadata for scenario files."""

    chance_nodes: tuple[ChanceNode, ...]
    decision_nodes: tuple[tuple[str, tuple[str, ...]], ...] = ()
    value_nodes: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "chance_nodes", tuple(self.chance_nodes))
        object.__setattr__(
            self, "decision_nodes", tuple((d, tuple(opts)) for d, opts in self.decision_nodes)
        )
        object.__setattr__(
            self, "value_nodes", tuple((v, tuple(ps)) for v, ps in self.value_nodes)
        )

    @cached_property
    def _by_id(self) -> dict[str, ChanceNode]:
        return {n.id: n for n in self.chance_nodes}

    def node(self, node_id: str) -> ChanceNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise BoundInferError(f"unknown chance node {node_id!r}") from None

    def variable(self, node_id: str) -> Variable:
        return self.node(node_id).variable

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.chance_nodes]

    @cached_property
    def children(self) -> dict[str, list[str]]:
        kids: dict[str, list[str]] = {n.id: [] for n in self.chance_nodes}
        for n in self.chance_nodes:
            for p in n.parents:
                if p in kids:
                    kids[p].append(n.id)
        return kids

    @cached_property
    def topo_order(self) -> tuple[str, ...]:
        order, cycle = _toposort(self.chance_nodes)
        if cycle:
            raise BoundInferError(f"network has a cycle through {', '.join(cycle)}")
        return tuple(order)

    def ancestors(self, node_id: str) -> set[str]:
        seen: set[str] = set()
        stack = list(self.node(node_id).parents)
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(self.node(p).parents)
        return seen

    def binary_size(self) -> float:
        """log2 of the joint state-space size ("binary-equivalent nodes")."""
        return sum(math.log2(n.variable.card) for n in self.chance_nodes)

    def replace_nodes(self, nodes: Iterable[ChanceNode]) -> Network:
        return Network(tuple(nodes), self.decision_nodes, self.value_nodes)


@dataclass(frozen=True)
class Evidence:
    assignments: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))

    def __contains__(self, var: str) -> bool:
        return var in self.assignments

    def __len__(self) -> int:
        return len(self.assignments)

    def items(self):
        return self.assignments.items()

    def __hash__(self):
        return hash(tuple(sorted(self.assignments.items())))

    @classmethod
    def parse(cls, text: str | None) -> Evidence:
        """Parse ``"A=t,B=f"``; an empty string means no evidence."""
        out: dict[str, str] = {}
        for part in (text or "").split(","):
            part = part.strip()
            if not part:
                continue
            var, sep, state = part.partition("=")
            if not sep or not var.strip() or not state.strip():
                raise BoundInferError(f"bad evidence term {part!r}, expected VAR=STATE")
            var = var.strip()
            if var in out:
                raise BoundInferError(f"variable {var!r} assigned twice in evidence")
            out[var] = state.strip()
        return cls(out)


@dataclass(frozen=True)
class Query:
    target: str
    target_state: str

    @classmethod
    def parse(cls, text: str) -> Query:
        var, sep, state = text.partition("=")
        if not sep or not var.strip() or not state.strip():
            raise BoundInferError(f"bad query {text!r}, expected VAR=STATE")
        return cls(var.strip(), state.strip())


def check_evidence(net: Network, ev: Evidence) -> None:
    for var, state in ev.items():
        net.variable(var).index(state)


def check_query(net: Network, ev: Evidence, q: Query) -> None:
    check_evidence(net, ev)
    net.variable(q.target).index(q.target_state)
    if q.target in ev:
        raise BoundInferError(f"query variable {q.target!r} is observed in the evidence")


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    node: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.node}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def add(self, kind, node, message):
        self.violations.append(Violation(kind, node, message))

    def __str__(self):
        if self.ok:
            return "OK: no violations"
        return "\n".join(str(v) for v in self.violations)


def _toposort(nodes: Sequence[ChanceNode]) -> tuple[list[str], list[str]]:
    """Kahn's algorithm with id tie-breaking. Returns (order, nodes_on_cycles)."""
    ids = {n.id for n in nodes}
    indeg = {n.id: 0 for n in nodes}
    kids: dict[str, list[str]] = {n.id: [] for n in nodes}
    for n in nodes:
        for p in n.parents:
            if p in ids:
                indeg[n.id] += 1
                kids[p].append(n.id)
    # keep declaration order among ready nodes for a stable layout
    position = {n.id: i for i, n in enumerate(nodes)}
    ready = sorted((i for i, d in indeg.items() if d == 0), key=position.__getitem__)
    order = []
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        for k in kids[cur]:
            indeg[k] -= 1
            if indeg[k] == 0:
                ready.append(k)
                ready.sort(key=position.__getitem__)
    leftover = [n.id for n in nodes if n.id not in set(order)]
    return order, _cycle_members(nodes, leftover)


def _cycle_members(nodes: Sequence[ChanceNode], leftover: list[str]) -> list[str]:
    # leftover holds cycle members plus their descendants; keep nodes that
    # can reach themselves
    if not leftover:
        return []
    sub = set(leftover)
    parents = {n.id: [p for p in n.parents if p in sub] for n in nodes if n.id in sub}
    on_cycle = []
    for start in leftover:
        stack, seen = list(parents[start]), set()
        while stack:
            cur = stack.pop()
            if cur == start:
                on_cycle.append(start)
                break
            if cur not in seen:
                seen.add(cur)
                stack.extend(parents[cur])
    return on_cycle


def validate(net: Network) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    report = ValidationReport()
    seen: set[str] = set()
    for n in net.chance_nodes:
        var = n.variable
        if n.id in seen:
            report.add("duplicate", n.id, "node id declared more than once")
        seen.add(n.id)
        if var.card < 2:
            report.add("states", n.id, "a variable needs at least 2 states")
        if len(set(var.states)) != var.card:
            report.add("states", n.id, "state labels are not unique")

    meta_ids = [d for d, _ in net.decision_nodes] + [v for v, _ in net.value_nodes]
    for m in meta_ids:
        if m in seen:
            report.add("duplicate", m, "node id declared more than once")
        seen.add(m)
    for d, opts in net.decision_nodes:
        if len(opts) < 1:
            report.add("states", d, "decision node needs at least one option")

    chance_ids = {n.id for n in net.chance_nodes}
    dangling = False
    for n in net.chance_nodes:
        for p in n.parents:
            if p not in chance_ids:
                dangling = True
                report.add("dangling", n.id, f"parent {p!r} is not a chance node")
        if len(set(n.parents)) != len(n.parents):
            report.add("duplicate", n.id, "parent listed more than once")
        if len(n.arc_importance) != len(n.parents):
            report.add(
                "importance",
                n.id,
                f"{len(n.arc_importance)} importance weights for {len(n.parents)} parents",
            )
        for p, w in zip(n.parents, n.arc_importance):
            if not (0.0 <= w <= 1.0) or math.isnan(w):
                report.add("importance", n.id, f"arc {p}->{n.id} importance {w} outside [0,1]")
    for v, parents in net.value_nodes:
        for p in parents:
            if p not in seen:
                report.add("dangling", v, f"parent {p!r} is not declared")

    if not dangling:
        by_id = {n.id: n for n in net.chance_nodes}
        for n in net.chance_nodes:
            expected_rows = math.prod(by_id[p].variable.card for p in n.parents)
            if len(n.cpt) != expected_rows:
                report.add("cardinality", n.id, f"{len(n.cpt)} CPT rows, expected {expected_rows}")
            for i, row in enumerate(n.cpt):
                if len(row) != n.variable.card:
                    report.add(
                        "cardinality", n.id, f"row {i} has {len(row)} entries, expected {n.variable.card}"
                    )
                    continue
                if any(not (0.0 <= p <= 1.0) for p in row):
                    report.add("probability", n.id, f"row {i} has entries outside [0,1]")
                total = math.fsum(row)
                if abs(total - 1.0) > ROW_SUM_TOL:
                    report.add("row-sum", n.id, f"row {i} sums to {total:.12g}, not 1")

        _, cycle = _toposort(net.chance_nodes)
        if cycle:
            report.add("cycle", ",".join(cycle), f"directed cycle through {', '.join(cycle)}")
    return report


def make_network(chance_nodes, decision_nodes=(), value_nodes=()) -> Network:
    """Build and validate; raise NetworkValidationError on any violation."""
    net = Network(tuple(chance_nodes), tuple(decision_nodes), tuple(value_nodes))
    report = validate(net)
    if not report.ok:
        raise NetworkValidationError(report)
    net.topo_order  # noqa: B018 - populate the cache while we know it is acyclic
    return net


# --------------------------------------------------------------------------
# noisy-OR


@dataclass(frozen=True)
class NoisyOrSpec:
    cause_activations: tuple[float, ...]
    leak: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cause_activations", tuple(float(p) for p in self.cause_activations))


def noisy_or_cpt(spec: NoisyOrSpec, parent_count: int) -> tuple[tuple[float, float], ...]:
    """Rows of P(child | parents) for binary parents and a binary child.

    A parent is "on" in its state 0; the child's state 0 is "true".
    """
    probs = spec.cause_activations
    if len(probs) != parent_count:
        raise BoundInferError(f"{len(probs)} activations given for {parent_count} parents")
    for p in (*probs, spec.leak):
        if not (0.0 <= p <= 1.0):
            raise BoundInferError(f"noisy-OR probability {p} outside [0,1]")
    rows = []
    for combo in itertools.product((0, 1), repeat=parent_count):
        off = 1.0 - spec.leak
        for p, state in zip(probs, combo):
            if state == 0:
                off *= 1.0 - p
        p_true = 1.0 - off
        rows.append((p_true, 1.0 - p_true))
    return tuple(rows)


# --------------------------------------------------------------------------
# structure


def is_multiply_connected(net: Network) -> bool:
    """True iff the undirected skeleton of the chance nodes has a cycle."""
    parent_of = {n.id: n.id for n in net.chance_nodes}

    def find(x):
        while parent_of[x] != x:
            parent_of[x] = parent_of[parent_of[x]]
            x = parent_of[x]
        return x

    for n in net.chance_nodes:
        for p in n.parents:
            a, b = find(n.id), find(p)
            if a == b:
                return True
            parent_of[a] = b
    return False


# --------------------------------------------------------------------------
# file format


def _expect(obj, key, kind, where):
    if key not in obj:
        raise NetworkParseError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise NetworkParseError(f"{where}: field {key!r} has the wrong type")
    return value


def parse_network(text: str) -> Network:
    """Parse the JSON network format and validate the result."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise NetworkParseError("top level must be an object")

    variables: dict[str, Variable] = {}
    for i, v in enumerate(_expect(doc, "variables", list, "document")):
        where = f"variables[{i}]"
        if not isinstance(v, dict):
            raise NetworkParseError(f"{where}: expected an object")
        vid = _expect(v, "id", str, where)
        states = _expect(v, "states", list, where)
        if not all(isinstance(s, str) for s in states):
            raise NetworkParseError(f"{where}: state labels must be strings")
        if vid in variables:
            raise NetworkParseError(f"{where}: variable {vid!r} declared twice")
        variables[vid] = Variable(vid, tuple(states))

    nodes = []
    declared = set()
    for i, c in enumerate(_expect(doc, "chance", list, "document")):
        where = f"chance[{i}]"
        if not isinstance(c, dict):
            raise NetworkParseError(f"{where}: expected an object")
        cid = _expect(c, "id", str, where)
        if cid not in variables:
            raise NetworkParseError(f"{where}: no variable declared for {cid!r}")
        declared.add(cid)
        var = variables[cid]
        parents = tuple(c.get("parents", []))
        importance = c.get("arc_importance")
        if "noisy_or" in c:
            if "cpt" in c:
                raise NetworkParseError(f"{where}: give either cpt or noisy_or, not both")
            spec = c["noisy_or"]
            if not isinstance(spec, dict):
                raise NetworkParseError(f"{where}: noisy_or must be an object")
            for p in parents:
                if p not in variables or variables[p].card != 2:
                    raise NetworkParseError(f"{where}: noisy-OR parent {p!r} must be a binary variable")
            if var.card != 2:
                raise NetworkParseError(f"{where}: noisy-OR child must be binary")
            ns = NoisyOrSpec(tuple(spec.get("activations", [])), float(spec.get("leak", 0.0)))
            try:
                rows = noisy_or_cpt(ns, len(parents))
            except BoundInferError as exc:
                raise NetworkParseError(f"{where}: {exc}") from None
        else:
            flat = _expect(c, "cpt", list, where)
            if not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in flat):
                raise NetworkParseError(f"{where}: cpt entries must be numbers")
            k = var.card
            if len(flat) % k:
                raise NetworkParseError(f"{where}: cpt length {len(flat)} is not a multiple of {k}")
            rows = tuple(tuple(flat[j : j + k]) for j in range(0, len(flat), k))
        nodes.append(ChanceNode(var, parents, rows, None if importance is None else tuple(importance)))
    missing = set(variables) - declared
    if missing:
        raise NetworkParseError(f"variables without a chance entry: {', '.join(sorted(missing))}")

    decisions = []
    for i, d in enumerate(doc.get("decisions", [])):
        where = f"decisions[{i}]"
        decisions.append((_expect(d, "id", str, where), tuple(_expect(d, "options", list, where))))
    values = []
    for i, v in enumerate(doc.get("values", [])):
        where = f"values[{i}]"
        values.append((_expect(v, "id", str, where), tuple(v.get("parents", []))))
    return make_network(nodes, decisions, values)


def _num(x: float) -> str:
    return format(x, ".17g")


def _block(name: str, entries: list[str], last: bool = False) -> str:
    tail = "" if last else ","
    if not entries:
        return f'  "{name}": []{tail}'
    body = ",\n".join(f"    {e}" for e in entries)
    return f'  "{name}": [\n{body}\n  ]{tail}'


def serialize_network(net: Network) -> str:
    """Canonical text: fixed key order, 17 significant digits."""
    q = json.dumps
    variables = [
        f'{{"id": {q(n.id)}, "states": [{", ".join(q(s) for s in n.variable.states)}]}}'
        for n in net.chance_nodes
    ]
    chance = []
    for n in net.chance_nodes:
        flat = ", ".join(_num(p) for row in n.cpt for p in row)
        parents = ", ".join(q(p) for p in n.parents)
        imp = ", ".join(_num(w) for w in n.arc_importance)
        chance.append(
            f'{{"id": {q(n.id)}, "parents": [{parents}], "cpt": [{flat}], "arc_importance": [{imp}]}}'
        )
    decisions = [
        f'{{"id": {q(d)}, "options": [{", ".join(q(o) for o in opts)}]}}' for d, opts in net.decision_nodes
    ]
    values = [f'{{"id": {q(v)}, "parents": [{", ".join(q(p) for p in ps)}]}}' for v, ps in net.value_nodes]
    parts = [
        "{",
        _block("variables", variables),
        _block("chance", chance),
        _block("decisions", decisions),
        _block("values", values, last=True),
        "}",
    ]
    return "\n".join(parts) + "\n"


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())
