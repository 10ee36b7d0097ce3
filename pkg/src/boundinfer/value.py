"""Object-related value of a probability estimate for a treat/no-treat
decision, time discounting of that value, and their combination.

The object-related value of reporting the probability with interval width
``w`` is a preposterior expectation: the true probability is uniform over the
prior belief interval, the reported estimate is off by a uniform error of
width ``w``, and the action is chosen by the threshold rule on the estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import BoundInferError

P_GRID = 2001
E_GRID = 201


@dataclass(frozen=True)
class UtilityTable:
    """Utilities of the four (action, condition) outcomes."""

    u_treat_cond: float
    u_treat_nocond: float
    u_notreat_cond: float
    u_notreat_nocond: float

    def __post_init__(self):
        if not self.u_treat_cond > self.u_notreat_cond:
            raise BoundInferError("treating must help when the condition is present")
        if not self.u_notreat_nocond > self.u_treat_nocond:
            raise BoundInferError("treating must hurt when the condition is absent")

    def scaled(self, a: float, b: float = 0.0) -> UtilityTable:
        return UtilityTable(
            a * self.u_treat_cond + b,
            a * self.u_treat_nocond + b,
            a * self.u_notreat_cond + b,
            a * self.u_notreat_nocond + b,
        )


@dataclass(frozen=True)
class DiscountFunction:
    """Multiplicative time discount D(t) in [0, 1], non-increasing.

    kinds: ``exponential`` (rate), ``step`` (deadline, floor),
    ``logistic`` (steepness, midpoint).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        required = {
            "exponential": {"rate"},
            "step": {"deadline", "floor"},
            "logistic": {"steepness", "midpoint"},
        }
        if self.kind not in required:
            raise BoundInferError(f"unknown discount kind {self.kind!r}")
        missing = required[self.kind] - set(self.params)
        if missing:
            raise BoundInferError(f"{self.kind} discount needs {', '.join(sorted(missing))}")
        p = self.params
        if self.kind == "exponential" and p["rate"] < 0:
            raise BoundInferError("exponential rate must be non-negative")
        if self.kind == "step" and not 0.0 <= p["floor"] <= 1.0:
            raise BoundInferError("step floor must lie in [0,1]")
        if self.kind == "logistic" and p["steepness"] < 0:
            raise BoundInferError("logistic steepness must be non-negative")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    @classmethod
    def exponential(cls, rate: float) -> DiscountFunction:
        return cls("exponential", {"rate": rate})

    @classmethod
    def step(cls, deadline: float, floor: float = 0.0) -> DiscountFunction:
        return cls("step", {"deadline": deadline, "floor": floor})

    @classmethod
    def logistic(cls, steepness: float, midpoint: float) -> DiscountFunction:
        return cls("logistic", {"steepness": steepness, "midpoint": midpoint})

    def __call__(self, t: float) -> float:
        return discount(self, t)


def discount(d: DiscountFunction, t: float) -> float:
    if t < 0:
        raise BoundInferError("time must be non-negative")
    p = d.params
    if d.kind == "exponential":
        return math.exp(-p["rate"] * t)
    if d.kind == "step":
        return 1.0 if t < p["deadline"] else p["floor"]
    z = p["steepness"] * (t - p["midpoint"])
    # 1/(1+e^z) without overflow
    if z > 0:
        ez = math.exp(-z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class ValueContext:
    """Everything needed to turn a precision level and a delay into value.

    ``object_model`` selects how precision maps to object-related value:
    ``preposterior`` (the decision-analytic model above) or ``linear``
    (V_o = 1 - w, a stand-in for hand-assessed value curves).
    """

    utilities: UtilityTable
    discount: DiscountFunction = field(default_factory=lambda: DiscountFunction.exponential(0.0))
    belief: tuple[float, float] = (0.0, 1.0)
    combination: str = "multiplicative"
    phi_note: str = ""
    object_model: str = "preposterior"

    def __post_init__(self):
        lo, hi = (float(x) for x in self.belief)
        object.__setattr__(self, "belief", (lo, hi))
        if not 0.0 <= lo < hi <= 1.0:
            raise BoundInferError("belief interval must satisfy 0 <= l0 < u0 <= 1")
        if self.combination != "multiplicative":
            raise BoundInferError(f"unsupported combination rule {self.combination!r}")
        if self.object_model not in ("preposterior", "linear"):
            raise BoundInferError(f"unknown object model {self.object_model!r}")

    def with_discount(self, d: DiscountFunction) -> ValueContext:
        return ValueContext(self.utilities, d, self.belief, self.combination, self.phi_note, self.object_model)

    def with_utilities(self, u: UtilityTable) -> ValueContext:
        return ValueContext(u, self.discount, self.belief, self.combination, self.phi_note, self.object_model)


@dataclass(frozen=True)
class ValuePoint:
    t: float
    precision: float
    object_value: float
    discount: float
    comprehensive_value: float


def treatment_threshold(u: UtilityTable) -> float:
    """Probability above which treating has the higher expected utility."""
    harm = u.u_notreat_nocond - u.u_treat_nocond
    benefit = u.u_treat_cond - u.u_notreat_cond
    if harm <= 0 or benefit <= 0:
        raise BoundInferError("utility table gives a degenerate threshold")
    return harm / (benefit + harm)


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w / w.sum()


@lru_cache(maxsize=4096)
def _object_value(ctx: ValueContext, w: float) -> float:
    u = ctx.utilities
    if ctx.object_model == "linear":
        return 1.0 - w
    threshold = treatment_threshold(u)
    lo, hi = ctx.belief
    p = np.linspace(lo, hi, P_GRID)
    e = np.linspace(-w / 2, w / 2, E_GRID)
    we = _trapezoid_weights(E_GRID)
    # clip(p + e, 0, 1) > threshold  <=>  e > threshold - p, since the
    # threshold lies strictly inside (0, 1); ties go to no-treat
    first = np.searchsorted(e, threshold - p, side="right")
    tail = np.concatenate([np.cumsum(we[::-1])[::-1], [0.0]])
    p_treat = tail[first]
    eu_treat = p * u.u_treat_cond + (1 - p) * u.u_treat_nocond
    eu_none = p * u.u_notreat_cond + (1 - p) * u.u_notreat_nocond
    utility = p_treat * eu_treat + (1 - p_treat) * eu_none
    return float(_trapezoid_weights(P_GRID) @ utility)


def object_value(ctx: ValueContext, w: float) -> float:
    if not 0.0 <= w <= 1.0:
        raise BoundInferError(f"interval width {w} outside [0,1]")
    return _object_value(ctx, float(w))


def optimal_object_value(ctx: ValueContext) -> float:
    return object_value(ctx, 0.0)


def comprehensive_value(v_o: float, discount_factor: float) -> float:
    if not 0.0 <= discount_factor <= 1.0:
        raise BoundInferError("discount factor must lie in [0,1]")
    return v_o * discount_factor


@dataclass(frozen=True)
class TradeoffReport:
    valid: bool
    violation: tuple[int, int] | None = None
    violating_delays: tuple[float, float] | None = None


def validate_tradeoff(points) -> TradeoffReport:
    """Check precision is non-decreasing in delay over (delay, precision) pairs."""
    points = [(float(t), float(p)) for t, p in points]
    if len(points) < 2:
        raise BoundInferError("need at least two (delay, precision) points")
    for (t0, _), (t1, _) in zip(points, points[1:]):
        if not t1 > t0:
            raise BoundInferError("delays must be strictly increasing")
    for i, ((t0, p0), (t1, p1)) in enumerate(zip(points, points[1:])):
        if p1 < p0:
            return TradeoffReport(False, (i, i + 1), (t0, t1))
    return TradeoffReport(True)


# --------------------------------------------------------------------------
# file format


def context_to_dict(ctx: ValueContext) -> dict:
    u = ctx.utilities
    return {
        "utilities": {
            "tc": u.u_treat_cond,
            "tn": u.u_treat_nocond,
            "nc": u.u_notreat_cond,
            "nn": u.u_notreat_nocond,
        },
        "discount": {"kind": ctx.discount.kind, "params": dict(ctx.discount.params)},
        "belief": list(ctx.belief),
        "combination": ctx.combination,
        "phi_note": ctx.phi_note,
        "object_model": ctx.object_model,
    }


def context_from_dict(doc: dict) -> ValueContext:
    try:
        u = doc["utilities"]
        d = doc["discount"]
        return ValueContext(
            UtilityTable(float(u["tc"]), float(u["tn"]), float(u["nc"]), float(u["nn"])),
            DiscountFunction(d["kind"], d.get("params", {})),
            tuple(doc.get("belief", (0.0, 1.0))),
            doc.get("combination", "multiplicative"),
            doc.get("phi_note", ""),
            doc.get("object_model", "preposterior"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BoundInferError(f"malformed value context: {exc}") from None


def load_context(path) -> ValueContext:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BoundInferError(f"{path}: {exc}") from None
    return context_from_dict(doc)
