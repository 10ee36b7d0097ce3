"""ICU time-pressure scenarios: three strategy profiles evaluated under
mild, sharp and deadline discounting, plus config-file driven scenarios."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import BoundInferError
from .exact import variable_elimination
from .meta import MetaDecision, PrecisionProfile, analytic_profile, load_catalog, select_strategy, step_profile
from .network import Evidence, Network, Query, load_network, parse_network
from .value import DiscountFunction, UtilityTable, ValueContext, load_context

CSV_HEADER = "strategy,t,precision,v_o,discount,v_c"


def builtin_network() -> Network:
    text = resources.files("boundinfer").joinpath("data/icu_network.json").read_text(encoding="utf-8")
    return parse_network(text)


def icu_catalog(horizon: float) -> list[PrecisionProfile]:
    """E-1 stochastic simulation, E-2 completeness modulation (fast early,
    slow later), E-3 compiled default (0.15, available at 0.01 s)."""
    e1 = analytic_profile("E-1", lambda t: 1 - np.exp(-0.5 * t), horizon, problem_class="icu")
    e2 = analytic_profile("E-2", lambda t: 0.8 * (1 - np.exp(-2.0 * t)), horizon, problem_class="icu")
    e3 = step_profile("E-3", 0.15, 0.01, problem_class="icu")
    tag = {"E-1": "sample", "E-2": "modulate", "E-3": "default"}
    return [
        PrecisionProfile(p.strategy_id, p.problem_class, p.points, p.steps_per_second, {"kind": "analytic", "engine": tag[p.strategy_id]})
        for p in (e1, e2, e3)
    ]


ICU_UTILITIES = UtilityTable(100.0, -20.0, -80.0, 0.0)


def _icu_context(d: DiscountFunction, note: str) -> ValueContext:
    return ValueContext(ICU_UTILITIES, d, (0.0, 1.0), "multiplicative", note, object_model="linear")


@dataclass(frozen=True)
class ScenarioConfig:
    network: Network
    evidence: Evidence
    query: Query
    context: ValueContext
    catalog: tuple[PrecisionProfile, ...]
    horizon: float
    grid_n: int = 512
    output: str | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise BoundInferError("scenario horizon must be positive")


BUILTIN = {
    "icu-mild": (DiscountFunction.exponential(0.02), 20.0, "stable patient"),
    "icu-sharp": (DiscountFunction.exponential(1.5), 5.0, "poor oxygenation"),
    "icu-extreme": (DiscountFunction.step(0.05, 0.0), 0.1, "blood pressure collapse"),
}


def builtin_scenario(name: str) -> ScenarioConfig:
    if name not in BUILTIN:
        raise BoundInferError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTIN)}")
    d, horizon, note = BUILTIN[name]
    return ScenarioConfig(
        builtin_network(),
        Evidence({"T_r": "present"}),
        Query("D", "present"),
        _icu_context(d, note),
        tuple(icu_catalog(horizon)),
        horizon,
    )


def load_scenario(path) -> ScenarioConfig:
    """Scenario file: {network, evidence, query, value_context, catalog,
    horizon, grid_n, output}; relative paths resolve against the file and a
    missing catalog falls back to $BOUNDINFER_CATALOG."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BoundInferError(f"{path}: {exc}") from None
    base = path.parent
    try:
        return ScenarioConfig(
            load_network(base / doc["network"]),
            Evidence.parse(doc.get("evidence", "")),
            Query.parse(doc["query"]),
            load_context(base / doc["value_context"]),
            tuple(load_catalog(base / doc["catalog"] if doc.get("catalog") else None)),
            float(doc["horizon"]),
            int(doc.get("grid_n", 512)),
            doc.get("output"),
        )
    except KeyError as exc:
        raise BoundInferError(f"{path}: missing field {exc}") from None


def _fmt(x: float) -> str:
    return format(x, ".10g")


def run_scenario(cfg: ScenarioConfig) -> tuple[str, MetaDecision, float]:
    """Returns (CSV text, decision, exact posterior of the query)."""
    posterior = variable_elimination(cfg.network, cfg.evidence, cfg.query).probability
    decision = select_strategy(cfg.catalog, cfg.context, cfg.horizon, cfg.grid_n)
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for sid in sorted(decision.curves):
        for p in decision.curves[sid].points:
            out.write(
                ",".join(
                    [sid, _fmt(p.t), _fmt(p.precision), _fmt(p.object_value), _fmt(p.discount), _fmt(p.comprehensive_value)]
                )
                + "\n"
            )
    return out.getvalue(), decision, posterior
