"""Metalevel control: precision profiles, comprehensive-value curves, strategy
selection, desiderata checks and monitored execution."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .engines import AnytimeEngine, DefaultPolicy, Estimate
from .errors import BoundInferError, InconsistentEvidenceError
from .exact import ResourceLedger, variable_elimination
from .value import (
    ValueContext,
    ValuePoint,
    comprehensive_value,
    discount,
    object_value,
    validate_tradeoff,
)

DEFAULT_GRID_N = 512
CATALOG_ENV = "BOUNDINFER_CATALOG"


@dataclass(frozen=True)
class PrecisionProfile:
    """Expected precision as a function of computation time (seconds)."""

    strategy_id: str
    problem_class: str
    points: tuple[tuple[float, float], ...]
    steps_per_second: float = 1.0
    source: dict = field(default_factory=lambda: {"kind": "analytic"})

    def __post_init__(self):
        pts = tuple((float(t), float(p)) for t, p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise BoundInferError("profile has no points")
        if pts[0][0] < 0:
            raise BoundInferError("profile times must be non-negative")
        if any(not 0.0 <= p <= 1.0 for _, p in pts):
            raise BoundInferError("profile precision outside [0,1]")
        if len(pts) > 1:
            report = validate_tradeoff(pts)
            if not report.valid:
                raise BoundInferError(f"profile precision decreases at points {report.violation}")
        if not self.steps_per_second > 0:
            raise BoundInferError("steps_per_second must be positive")

    def __hash__(self):
        return hash((self.strategy_id, self.problem_class, self.points))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def precisions(self) -> np.ndarray:
        return np.array([p for _, p in self.points])

    def to_dict(self) -> dict:
        return {
            "strategy_id": self.strategy_id,
            "problem_class": self.problem_class,
            "source": self.source,
            "steps_per_second": self.steps_per_second,
            "points": [[t, p] for t, p in self.points],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PrecisionProfile:
        try:
            return cls(
                doc["strategy_id"],
                doc.get("problem_class", ""),
                tuple(tuple(pt) for pt in doc["points"]),
                float(doc.get("steps_per_second", 1.0)),
                doc.get("source", {"kind": "analytic"}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BoundInferError(f"malformed profile: {exc}") from None


def analytic_profile(
    strategy_id: str, fn: Callable[[np.ndarray], np.ndarray], horizon: float, knots: int = 2049, problem_class: str = "analytic"
) -> PrecisionProfile:
    """Sample a closed-form precision curve onto profile knots."""
    t = np.linspace(0.0, horizon, knots)
    p = np.clip(np.maximum.accumulate(np.asarray(fn(t), dtype=float)), 0.0, 1.0)
    return PrecisionProfile(strategy_id, problem_class, tuple(zip(t.tolist(), p.tolist())))


def step_profile(strategy_id: str, precision: float, available_at: float, problem_class: str = "analytic") -> PrecisionProfile:
    """Flat profile for compiled defaults: 0 before ``available_at``."""
    eps = available_at * 1e-9 if available_at > 0 else 0.0
    if available_at <= 0:
        points = ((0.0, precision),)
    else:
        points = ((0.0, 0.0), (available_at - eps, 0.0), (available_at, precision))
    return PrecisionProfile(strategy_id, problem_class, points)


def save_profile(profile: PrecisionProfile, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{profile.strategy_id}.json"
    path.write_text(json.dumps(profile.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_profile(path) -> PrecisionProfile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BoundInferError(f"{path}: {exc}") from None
    return PrecisionProfile.from_dict(doc)


def load_catalog(directory=None) -> list[PrecisionProfile]:
    """Every ``*.json`` profile in ``directory`` (or $BOUNDINFER_CATALOG)."""
    directory = directory or os.environ.get(CATALOG_ENV)
    if not directory:
        raise BoundInferError(f"no catalog directory given and ${CATALOG_ENV} is unset")
    files = sorted(Path(directory).glob("*.json"))
    if not files:
        raise BoundInferError(f"no profiles in {directory}")
    return [load_profile(f) for f in files]


def eval_profile(p: PrecisionProfile, t: float) -> float:
    if not p.points:
        raise BoundInferError("profile has no points")
    if t < 0:
        raise BoundInferError("time must be non-negative")
    return float(np.interp(t, p.times, p.precisions))


# --------------------------------------------------------------------------
# empirical profiling


ProblemSampler = Callable[[np.random.Generator], tuple]
EngineFactory = Callable[..., AnytimeEngine]


def _run_trial(factory, sampler, checkpoints, trial_seed, max_retries):
    rng = np.random.default_rng(trial_seed)
    for _ in range(max_retries):
        net, ev, q = sampler(rng)
        try:
            truth = variable_elimination(net, ev, q).probability
        except InconsistentEvidenceError:
            continue
        break
    else:
        raise BoundInferError(f"no consistent problem after {max_retries} draws")
    engine = factory(net, ev, q, trial_seed)
    errors, precisions = [], []
    start = time.perf_counter()
    done = 0
    for c in checkpoints:
        engine.step(c - done)
        done = c
        est = engine.estimate()
        errors.append(abs(est.mean - truth))
        precisions.append(est.precision)
    elapsed = time.perf_counter() - start
    return errors, precisions, isinstance(engine, DefaultPolicy), engine.steps_taken, elapsed


def profile_strategy(
    factory: EngineFactory,
    sampler: ProblemSampler,
    checkpoints: Sequence[int],
    trials: int,
    seed: int,
    *,
    strategy_id: str | None = None,
    problem_class: str = "",
    quantile: float = 0.95,
    steps_per_second: float | None = None,
    workers: int = 1,
    max_retries: int = 20,
) -> PrecisionProfile:
    """Empirical profile: precision = 1 - 2 * (quantile of |mean - exact|).

    ``factory(net, ev, q, seed)`` builds the engine; ``sampler(rng)`` returns
    ``(net, ev, q)``. Trial ``i`` uses seed ``seed + i``. Default-policy
    engines report their table precision instead, since compiled advice has
    no error against a particular problem's posterior to measure.
    """
    if trials < 10:
        raise BoundInferError("need at least 10 trials")
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])) or checkpoints[0] < 0:
        raise BoundInferError("checkpoints must be non-negative and strictly ascending")

    def run(i):
        return _run_trial(factory, sampler, checkpoints, seed + i, max_retries)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(i) for i in range(trials)]

    errors = np.array([r[0] for r in results])
    if all(r[2] for r in results):
        prec = np.array([r[1] for r in results]).min(axis=0)
    else:
        prec = 1.0 - 2.0 * np.quantile(np.sort(errors, axis=0), quantile, axis=0, method="higher")
    prec = np.maximum.accumulate(np.clip(prec, 0.0, 1.0))

    if steps_per_second is None:
        total_steps = sum(r[3] for r in results)
        total_time = sum(r[4] for r in results)
        steps_per_second = total_steps / total_time if total_steps and total_time > 0 else 1.0
    times = [c / steps_per_second for c in checkpoints]
    sid = strategy_id or getattr(factory, "strategy_id", None) or "strategy"
    return PrecisionProfile(
        sid,
        problem_class,
        tuple(zip(times, prec.tolist())),
        steps_per_second,
        {"kind": "empirical", "trials": trials, "quantile": quantile},
    )


# --------------------------------------------------------------------------
# value curves and selection


@dataclass(frozen=True)
class ValueCurve:
    strategy_id: str
    points: tuple[ValuePoint, ...]

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def v_c(self) -> np.ndarray:
        return np.array([p.comprehensive_value for p in self.points])


def _jump_times(p: PrecisionProfile) -> list[float]:
    # knots that follow their predecessor almost immediately mark a step in
    # precision (e.g. a default becoming available)
    out = []
    for (t0, p0), (t1, p1) in zip(p.points, p.points[1:]):
        if p1 > p0 and t1 - t0 <= 1e-6 * max(1.0, t1):
            out.append(t1)
    return out


def _curve_grid(p: PrecisionProfile, horizon: float, grid_n: int) -> list[float]:
    """Uniform grid plus any precision jump inside the horizon, so a uniform
    grid never steps over the instant a strategy becomes useful."""
    grid = np.linspace(0.0, horizon, grid_n)
    extra = [t for t in _jump_times(p) if 0.0 < t < horizon]
    return np.unique(np.concatenate([grid, extra])).tolist() if extra else grid.tolist()


def value_curve(p: PrecisionProfile, ctx: ValueContext, horizon: float, grid_n: int = DEFAULT_GRID_N) -> ValueCurve:
    if not horizon > 0:
        raise BoundInferError("horizon must be positive")
    if grid_n < 2:
        raise BoundInferError("grid needs at least 2 points")
    points = []
    for t in _curve_grid(p, horizon, grid_n):
        pi = eval_profile(p, t)
        v_o = object_value(ctx, min(max(1.0 - pi, 0.0), 1.0))
        d = discount(ctx.discount, t)
        points.append(ValuePoint(t, pi, v_o, d, comprehensive_value(v_o, d)))
    return ValueCurve(p.strategy_id, tuple(points))


def peak(c: ValueCurve) -> tuple[float, float]:
    """Grid argmax; ties resolve to the earliest time."""
    if not c.points:
        raise BoundInferError("empty value curve")
    i = int(np.argmax(c.v_c))
    return c.points[i].t, c.points[i].comprehensive_value


@dataclass(frozen=True)
class MetaDecision:
    selected: str
    t_max: float
    v_c_max: float
    curves: dict[str, ValueCurve]
    profiles: dict[str, PrecisionProfile]
    ledger: ResourceLedger
    metalevel_overhead: float

    @property
    def profile(self) -> PrecisionProfile:
        return self.profiles[self.selected]

    def summary(self) -> str:
        return f"SELECTED {self.selected} t_max={self.t_max:.6g} v_c_max={self.v_c_max:.6g}"


def select_strategy(
    catalog: Sequence[PrecisionProfile],
    ctx: ValueContext,
    horizon: float,
    grid_n: int = DEFAULT_GRID_N,
    complete_resources: float | None = None,
) -> MetaDecision:
    """Pick the strategy whose value curve has the highest peak.

    Ties go to the smaller t_max, then the smaller strategy id. The ledger's
    complete resources default to the horizon when not measured.
    """
    if not catalog:
        raise BoundInferError("strategy catalog is empty")
    start = time.perf_counter()
    curves, profiles, ranked = {}, {}, []
    for prof in catalog:
        if prof.strategy_id in curves:
            raise BoundInferError(f"strategy {prof.strategy_id!r} appears twice in the catalog")
        curve = value_curve(prof, ctx, horizon, grid_n)
        curves[prof.strategy_id] = curve
        profiles[prof.strategy_id] = prof
        t_max, v_max = peak(curve)
        ranked.append((-v_max, t_max, prof.strategy_id))
    ranked.sort()
    neg_v, t_max, best = ranked[0]
    overhead = time.perf_counter() - start
    ledger = ResourceLedger(complete_resources or horizon, t_max)
    return MetaDecision(best, t_max, -neg_v, curves, profiles, ledger, overhead)


# --------------------------------------------------------------------------
# desiderata


def dominance_intervals(c: ValueCurve) -> list[tuple[float, float]]:
    """Maximal grid intervals over which V_c strictly increases."""
    v, t = c.v_c, c.t
    out = []
    i = 0
    while i < len(v) - 1:
        if v[i + 1] > v[i]:
            j = i
            while j < len(v) - 1 and v[j + 1] > v[j]:
                j += 1
            out.append((float(t[i]), float(t[j])))
            i = j
        else:
            i += 1
    return out


@dataclass(frozen=True)
class DiscontinuityBound:
    delta: float
    epsilon: float


def check_bounded_discontinuity(c: ValueCurve, ledger: ResourceLedger, delta: float) -> DiscontinuityBound:
    """Largest |change in V_c| between grid points within ``delta`` of each
    other in resource fraction (t / R_c)."""
    if not delta > 0:
        raise BoundInferError("delta must be positive")
    r = c.t / ledger.complete_resources
    v = c.v_c
    near = np.abs(r[:, None] - r[None, :]) <= delta
    jumps = np.abs(v[:, None] - v[None, :])
    return DiscontinuityBound(delta, float(jumps[near].max()))


def check_endpoint_convergence(
    factory: EngineFactory, net, ev, q, tolerance: float, max_steps: int = 200_000
) -> bool:
    """Run the engine to completion (or ``max_steps`` for unbounded engines)
    and compare its mean to the exact posterior."""
    engine = factory(net, ev, q)
    remaining = engine.remaining()
    engine.step(max_steps if remaining is None else remaining)
    truth = variable_elimination(net, ev, q).probability
    return abs(engine.estimate().mean - truth) <= tolerance


# --------------------------------------------------------------------------
# monitored execution


@dataclass(frozen=True)
class Checkpoint:
    t: float
    steps: int
    precision: float
    object_value: float
    discount: float
    comprehensive_value: float


@dataclass
class ExecutionLog:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def stop_time(self) -> float:
        return self.checkpoints[-1].t if self.checkpoints else 0.0


def execute_with_monitoring(
    decision: MetaDecision, state: AnytimeEngine, ctx: ValueContext, check_every: int
) -> tuple[Estimate, ExecutionLog]:
    """Step the selected engine toward t_max, re-valuing at each checkpoint.

    Stops at t_max, at engine completion, or after realized V_c drops at two
    consecutive checkpoints.
    """
    if check_every < 1:
        raise BoundInferError("check_every must be at least 1")
    expected = decision.profile.source.get("engine", decision.selected)
    if state.strategy_id != expected:
        raise BoundInferError(f"engine {state.strategy_id!r} does not match selected strategy {decision.selected!r}")
    sps = decision.profile.steps_per_second
    target = math.ceil(decision.t_max * sps - 1e-9)
    log = ExecutionLog()
    drops = 0
    while True:
        todo = min(check_every, target - state.steps_taken)
        if todo <= 0:
            log.stop_reason = "reached t_max"
            break
        state.step(todo)
        est = state.estimate()
        t = state.steps_taken / sps
        v_o = object_value(ctx, min(max(est.width, 0.0), 1.0))
        d = discount(ctx.discount, t)
        cp = Checkpoint(t, state.steps_taken, est.precision, v_o, d, comprehensive_value(v_o, d))
        if log.checkpoints and cp.comprehensive_value < log.checkpoints[-1].comprehensive_value:
            drops += 1
        else:
            drops = 0
        log.checkpoints.append(cp)
        if drops >= 2:
            log.stop_reason = "realized value fell at two consecutive checkpoints"
            break
        if state.done:
            log.stop_reason = "engine completed"
            break
    return state.estimate(), log
