"""Interruptible inference engines sharing one step/estimate contract.

Every engine advances in discrete steps and exposes its current answer as an
:class:`Estimate` that can be read between any two steps. What a step means:

* ``LogicSampler``: one likelihood-weighted forward sample.
* ``BoundPropagator``: one complete instantiation popped from a best-first
  search in descending joint probability.
* ``CompletenessModulator``: one rung of an importance-threshold ladder.
* ``DefaultPolicy``: one table lookup tick.

Converting steps to seconds is the job of precision profiles (``meta``).
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BoundInferError
from .exact import variable_elimination
from .network import Evidence, Network, Query, check_query
from .transforms import prune_arcs

Z95 = 1.96


@dataclass(frozen=True)
class Estimate:
    mean: float
    low: float
    high: float
    support: int
    well_founded: bool

    @property
    def interval(self) -> tuple[float, float]:
        return (self.low, self.high)

    @property
    def width(self) -> float:
        return self.high - self.low

    @property
    def precision(self) -> float:
        return 1.0 - self.width

    def contains(self, p: float, slack: float = 1e-12) -> bool:
        return self.low - slack <= p <= self.high + slack


def _centered(mean: float, width: float, support: int, well_founded: bool) -> Estimate:
    # shift rather than clip at the borders so the width (the calibrated
    # precision) is preserved
    width = min(max(width, 0.0), 1.0)
    low = min(max(mean - width / 2, 0.0), 1.0 - width)
    return Estimate(mean, low, low + width, support, well_founded)


class AnytimeEngine:
    strategy_id = "abstract"
    well_founded = True

    def __init__(self):
        self.steps_taken = 0

    @property
    def done(self) -> bool:
        return False

    def step(self, n: int = 1) -> AnytimeEngine:
        if n < 0:
            raise BoundInferError("step count must be non-negative")
        n = min(n, self.remaining()) if self.remaining() is not None else n
        if n:
            self._advance(n)
            self.steps_taken += n
        return self

    def remaining(self) -> int | None:
        """Steps left before completion; ``None`` for unbounded engines."""
        return None

    def _advance(self, n: int) -> None:
        raise NotImplementedError

    def estimate(self) -> Estimate:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} steps={self.steps_taken} done={self.done}>"


def step(state: AnytimeEngine, n: int) -> AnytimeEngine:
    return state.step(n)


def current_estimate(state: AnytimeEngine) -> Estimate:
    return state.estimate()


# --------------------------------------------------------------------------
# likelihood-weighted stochastic simulation


class _Compiled:
    """Array form of a network for vectorized forward sampling."""

    def __init__(self, net: Network, ev: Evidence):
        self.order = list(net.topo_order)
        pos = {v: k for k, v in enumerate(self.order)}
        self.cards = [net.variable(v).card for v in self.order]
        self.parents = []
        self.strides = []
        self.tables = []
        self.cumtables = []
        for v in self.order:
            node = net.node(v)
            pidx = [pos[p] for p in node.parents]
            strides, acc = [], 1
            for p in reversed(node.parents):
                strides.append(acc)
                acc *= net.variable(p).card
            self.parents.append(np.asarray(pidx, dtype=np.int64))
            self.strides.append(np.asarray(strides[::-1], dtype=np.int64))
            table = np.asarray(node.cpt, dtype=float)
            self.tables.append(table)
            self.cumtables.append(np.cumsum(table, axis=1))
        self.observed = {pos[v]: net.variable(v).index(s) for v, s in ev.items()}


class LogicSampler(AnytimeEngine):
    """Likelihood weighting. Interval is the normal approximation to the
    binomial with the weighted effective sample size (sum w)^2 / sum w^2."""

    strategy_id = "sample"
    _CHUNK = 1024

    def __init__(self, net: Network, ev: Evidence, q: Query, seed: int = 0):
        super().__init__()
        check_query(net, ev, q)
        self.net, self.evidence, self.query, self.seed = net, ev, q, seed
        self._c = _Compiled(net, ev)
        self._target = self._c.order.index(q.target)
        self._target_state = net.variable(q.target).index(q.target_state)
        self._rng = np.random.default_rng(seed)
        # totals over completed chunks of _CHUNK samples, plus the open chunk;
        # chunking at absolute sample indices keeps sums bit-identical however
        # the steps are split
        self._totals = np.zeros(3)
        self._open_w = np.empty(0)
        self._open_hit = np.empty(0)

    def _draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        c = self._c
        u = self._rng.random((n, len(c.order)))
        states = np.zeros((n, len(c.order)), dtype=np.int64)
        weights = np.ones(n)
        for k in range(len(c.order)):
            row = states[:, c.parents[k]] @ c.strides[k] if len(c.parents[k]) else np.zeros(n, dtype=np.int64)
            if k in c.observed:
                s = c.observed[k]
                states[:, k] = s
                weights *= c.tables[k][row, s]
            else:
                cum = c.cumtables[k][row]
                drawn = (u[:, k : k + 1] >= cum).sum(axis=1)
                states[:, k] = np.minimum(drawn, c.cards[k] - 1)
        hits = states[:, self._target] == self._target_state
        return weights, weights * hits

    def _advance(self, n: int) -> None:
        w, hw = self._draw(n)
        w = np.concatenate([self._open_w, w])
        hw = np.concatenate([self._open_hit, hw])
        full = (len(w) // self._CHUNK) * self._CHUNK
        for start in range(0, full, self._CHUNK):
            cw, ch = w[start : start + self._CHUNK], hw[start : start + self._CHUNK]
            self._totals += (cw.sum(), ch.sum(), (cw * cw).sum())
        self._open_w, self._open_hit = w[full:], hw[full:]

    def _sums(self) -> tuple[float, float, float]:
        ow = self._open_w
        sw, sh, s2 = self._totals
        return (float(sw + ow.sum()), float(sh + self._open_hit.sum()), float(s2 + (ow * ow).sum()))

    @property
    def effective_samples(self) -> float:
        sw, _, s2 = self._sums()
        return sw * sw / s2 if s2 > 0 else 0.0

    def estimate(self) -> Estimate:
        sw, sh, s2 = self._sums()
        if sw <= 0.0 or s2 <= 0.0:
            return Estimate(0.5, 0.0, 1.0, self.steps_taken, True)
        mean = min(max(sh / sw, 0.0), 1.0)
        ess = sw * sw / s2
        half = Z95 * math.sqrt(mean * (1.0 - mean) / ess)
        return Estimate(mean, max(0.0, mean - half), min(1.0, mean + half), self.steps_taken, True)


def make_logic_sampler(net: Network, ev: Evidence, q: Query, seed: int = 0) -> LogicSampler:
    return LogicSampler(net, ev, q, seed)


# --------------------------------------------------------------------------
# best-first bound propagation


class BoundPropagator(AnytimeEngine):
    """Enumerates complete instantiations in descending joint probability.

    With a = explored mass of (target, evidence), b = explored mass of
    (not target, evidence) and u = unexplored mass, the posterior lies in
    [a / (a+b+u), (a+u) / (a+b+u)]. The interval only ever shrinks.
    """

    strategy_id = "bounds"

    def __init__(self, net: Network, ev: Evidence, q: Query):
        super().__init__()
        check_query(net, ev, q)
        self.net, self.evidence, self.query = net, ev, q
        self._order = list(net.topo_order)
        self._pos = {v: k for k, v in enumerate(self._order)}
        self._nodes = [net.node(v) for v in self._order]
        self._cards = [n.variable.card for n in self._nodes]
        self._observed = {self._pos[v]: net.variable(v).index(s) for v, s in ev.items()}
        self._target = self._pos[q.target]
        self._target_state = net.variable(q.target).index(q.target_state)
        self._total = math.prod(self._cards)
        self._counter = itertools.count()
        # entries: (-probability, tiebreak, partial assignment)
        self._frontier: list = [(-1.0, next(self._counter), ())]
        self.a = self.b = self.explored = 0.0

    def remaining(self) -> int:
        return self._total - self.steps_taken

    @property
    def done(self) -> bool:
        return self.steps_taken >= self._total

    def _factor(self, assignment: tuple[int, ...], k: int, state: int) -> float:
        node = self._nodes[k]
        row = 0
        for par in node.parents:
            row = row * self.net.variable(par).card + assignment[self._pos[par]]
        return node.cpt[row][state]

    def _advance(self, n: int) -> None:
        depth = len(self._order)
        popped = 0
        while popped < n:
            neg_p, _, partial = heapq.heappop(self._frontier)
            if len(partial) == depth:
                self._record(-neg_p, partial)
                popped += 1
                continue
            k = len(partial)
            for s in range(self._cards[k]):
                p = -neg_p * self._factor(partial, k, s)
                heapq.heappush(self._frontier, (-p, next(self._counter), partial + (s,)))

    def _record(self, p: float, inst: tuple[int, ...]) -> None:
        self.explored += p
        if all(inst[k] == s for k, s in self._observed.items()):
            if inst[self._target] == self._target_state:
                self.a += p
            else:
                self.b += p

    def estimate(self) -> Estimate:
        u = 0.0 if self.done else max(0.0, 1.0 - self.explored)
        denom = self.a + self.b + u
        if denom <= 0.0:
            return Estimate(0.5, 0.0, 1.0, self.steps_taken, True)
        low = min(self.a / denom, 1.0)
        high = min((self.a + u) / denom, 1.0)
        return Estimate((low + high) / 2, low, high, self.steps_taken, True)


def make_bound_propagator(net: Network, ev: Evidence, q: Query) -> BoundPropagator:
    return BoundPropagator(net, ev, q)


# --------------------------------------------------------------------------
# completeness modulation


class CompletenessModulator(AnytimeEngine):
    """Each step solves the network pruned at the next importance threshold.

    The interval comes from ``calibration`` (expected precision per rung)
    when supplied; otherwise it is the uninformative [0, 1].
    """

    strategy_id = "modulate"
    well_founded = False

    def __init__(
        self,
        net: Network,
        ev: Evidence,
        q: Query,
        ladder: Sequence[float] = (0.0,),
        calibration: Sequence[float] | None = None,
    ):
        super().__init__()
        check_query(net, ev, q)
        ladder = tuple(float(x) for x in ladder)
        if not ladder:
            raise BoundInferError("ladder must not be empty")
        if any(not 0.0 <= x <= 1.0 for x in ladder):
            raise BoundInferError("ladder thresholds must lie in [0,1]")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise BoundInferError("ladder thresholds must be strictly descending")
        if ladder[-1] != 0.0:
            raise BoundInferError("final ladder rung must be 0 (the full model)")
        if calibration is not None and len(calibration) != len(ladder):
            raise BoundInferError("calibration needs one precision per rung")
        self.net, self.evidence, self.query = net, ev, q
        self.ladder = ladder
        self.calibration = None if calibration is None else tuple(calibration)
        self.rung_posteriors: list[float] = []

    def remaining(self) -> int:
        return len(self.ladder) - self.steps_taken

    @property
    def done(self) -> bool:
        return self.steps_taken >= len(self.ladder)

    def _advance(self, n: int) -> None:
        for k in range(self.steps_taken, self.steps_taken + n):
            pruned = prune_arcs(self.net, self.ladder[k]) if self.ladder[k] > 0 else self.net
            self.rung_posteriors.append(variable_elimination(pruned, self.evidence, self.query).probability)

    def estimate(self) -> Estimate:
        if not self.rung_posteriors:
            return Estimate(0.5, 0.0, 1.0, 0, False)
        mean = self.rung_posteriors[-1]
        if self.calibration is None:
            return Estimate(mean, 0.0, 1.0, self.steps_taken, False)
        width = 1.0 - self.calibration[self.steps_taken - 1]
        return _centered(mean, width, self.steps_taken, False)


def make_completeness_modulator(
    net: Network, ev: Evidence, q: Query, ladder: Sequence[float] = (0.0,), calibration=None
) -> CompletenessModulator:
    return CompletenessModulator(net, ev, q, ladder, calibration)


# --------------------------------------------------------------------------
# compiled defaults


@dataclass(frozen=True)
class DefaultEntry:
    action: str
    precision: float
    availability_steps: int = 1
    # probability the compiled advice implicitly asserts; the interval is
    # centered here
    mean: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.precision <= 1.0:
            raise BoundInferError("default precision must lie in [0,1]")
        if self.availability_steps < 0:
            raise BoundInferError("availability_steps must be non-negative")
        if not 0.0 <= self.mean <= 1.0:
            raise BoundInferError("default mean must lie in [0,1]")


class DefaultPolicyTable(dict):
    """context key -> DefaultEntry."""

    @classmethod
    def from_records(cls, records) -> DefaultPolicyTable:
        table = cls()
        for r in records:
            key = r["context_key"]
            if key in table:
                raise BoundInferError(f"context key {key!r} appears twice")
            table[key] = DefaultEntry(
                r["action"], float(r["precision"]), int(r.get("availability_steps", 1)), float(r.get("mean", 0.5))
            )
        return table

    @classmethod
    def parse(cls, text: str) -> DefaultPolicyTable:
        return cls.from_records(json.loads(text))

    def to_records(self) -> list[dict]:
        return [
            {
                "context_key": k,
                "action": e.action,
                "precision": e.precision,
                "availability_steps": e.availability_steps,
                "mean": e.mean,
            }
            for k, e in self.items()
        ]


class DefaultPolicy(AnytimeEngine):
    """Compiled advice: fixed precision once available, never refined."""

    strategy_id = "default"
    well_founded = False

    def __init__(self, table: Mapping[str, DefaultEntry], context_key: str):
        super().__init__()
        if context_key not in table:
            raise BoundInferError(f"no default policy for context {context_key!r}")
        self.context_key = context_key
        self.entry = table[context_key]

    @property
    def action(self) -> str:
        return self.entry.action

    def remaining(self) -> int:
        return max(self.entry.availability_steps - self.steps_taken, 0)

    @property
    def done(self) -> bool:
        return self.steps_taken >= self.entry.availability_steps

    def _advance(self, n: int) -> None:
        pass

    def estimate(self) -> Estimate:
        if not self.done:
            return Estimate(self.entry.mean, 0.0, 1.0, self.steps_taken, False)
        return _centered(self.entry.mean, 1.0 - self.entry.precision, self.steps_taken, False)


def make_default_policy(table: Mapping[str, DefaultEntry], context_key: str) -> DefaultPolicy:
    return DefaultPolicy(table, context_key)
