"""Tunable search-policy state: schedules, feature scores, softmax choice, presets."""

from __future__ import annotations

import bisect
import hashlib
import json
import math
import random
from dataclasses import dataclass, fields, replace
from typing import Sequence

__all__ = [
    "TAU_FLOOR",
    "Schedule",
    "Policy",
    "FeatureVector",
    "schedule_eval",
    "pool_score",
    "final_score",
    "softmax_select",
    "greedy_preset",
    "default_policy",
    "policy_to_config",
    "policy_from_config",
    "policy_digest",
]

# below this temperature the softmax degenerates to an exact argmax
TAU_FLOOR = 1e-6


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant value indexed by the current column count.

    thresholds r1 > r2 > ... > rk pick values[0] for rho >= r1, values[i]
    for r(i+1) <= rho < r(i), and values[k] below rk.  No thresholds means
    a constant.
    """

    values: tuple
    thresholds: tuple = ()

    def __post_init__(self):
        if len(self.values) != len(self.thresholds) + 1:
            raise ValueError("need exactly one more value than thresholds")
        for a, b in zip(self.thresholds, self.thresholds[1:]):
            if not a > b:
                raise ValueError("thresholds must be strictly decreasing")
        if self.thresholds and self.thresholds[-1] < 0:
            raise ValueError("thresholds must be >= 0")

    @classmethod
    def constant(cls, v) -> "Schedule":
        return cls(values=(v,))

    def __call__(self, rho: int):
        return schedule_eval(self, rho)


def schedule_eval(s: Schedule, rho: int):
    """Exact piecewise lookup (right-closed brackets at each threshold)."""
    for i, r in enumerate(s.thresholds):
        if rho >= r:
            return s.values[i]
    return s.values[-1]


def _const(v) -> Schedule:
    return Schedule.constant(v)


_COUNT_FIELDS = (
    "min_z_to_research",
    "num_samples",
    "max_tohpe",
    "tohpe_num_best",
    "min_pool_size",
    "max_pool_size",
    "max_from_single_ns",
    "beamsearch_width",
    "todd_width",
)


@dataclass(frozen=True)
class Policy:
    """All tunable controls of one optimizer run; every field is a Schedule."""

    min_z_to_research: Schedule
    gen_part: Schedule
    num_samples: Schedule
    max_tohpe: Schedule
    tohpe_num_best: Schedule
    try_only_tohpe: Schedule
    min_pool_size: Schedule
    max_pool_size: Schedule
    max_from_single_ns: Schedule
    min_reduction: Schedule
    max_reduction: Schedule
    beamsearch_width: Schedule
    todd_width: Schedule
    pool_weights: tuple[Schedule, ...]
    pool_centers: tuple[Schedule, ...]
    pool_exponent: Schedule
    final_weights: tuple[Schedule, ...]
    final_centers: tuple[Schedule, ...]
    final_exponent: Schedule
    temperature: Schedule

    def __post_init__(self):
        if len(self.pool_weights) != 5 or len(self.pool_centers) != 5:
            raise ValueError("pool weights/centers must have 5 entries")
        if len(self.final_weights) != 6 or len(self.final_centers) != 6:
            raise ValueError("final weights/centers must have 6 entries")
        for name in _COUNT_FIELDS:
            if any(v < 0 for v in getattr(self, name).values):
                raise ValueError(f"{name} values must be >= 0")
        if any(not 0.0 <= v <= 1.0 for v in self.gen_part.values):
            raise ValueError("gen_part values must lie in [0, 1]")
        if any(v <= 0 for v in self.temperature.values):
            raise ValueError("temperature values must be > 0")
        for name in ("pool_exponent", "final_exponent"):
            if any(v <= 0 for v in getattr(self, name).values):
                raise ValueError(f"{name} values must be > 0")
        for rho in _breakpoints(self.min_reduction, self.max_reduction):
            if schedule_eval(self.min_reduction, rho) > schedule_eval(self.max_reduction, rho):
                raise ValueError("min_reduction must be <= max_reduction everywhere")

    def at(self, rho: int) -> "PolicyControls":
        """Snapshot every control at the given column count, coerced to use types."""
        g = lambda s: schedule_eval(s, rho)
        return PolicyControls(
            min_z_to_research=int(round(g(self.min_z_to_research))),
            gen_part=float(g(self.gen_part)),
            num_samples=int(round(g(self.num_samples))),
            max_tohpe=int(round(g(self.max_tohpe))),
            tohpe_num_best=int(round(g(self.tohpe_num_best))),
            try_only_tohpe=bool(g(self.try_only_tohpe)),
            min_pool_size=int(round(g(self.min_pool_size))),
            max_pool_size=int(round(g(self.max_pool_size))),
            max_from_single_ns=int(round(g(self.max_from_single_ns))),
            min_reduction=int(round(g(self.min_reduction))),
            max_reduction=int(round(g(self.max_reduction))),
            beamsearch_width=int(round(g(self.beamsearch_width))),
            todd_width=int(round(g(self.todd_width))),
            pool_weights=tuple(float(g(s)) for s in self.pool_weights),
            pool_centers=tuple(float(g(s)) for s in self.pool_centers),
            pool_exponent=float(g(self.pool_exponent)),
            final_weights=tuple(float(g(s)) for s in self.final_weights),
            final_centers=tuple(float(g(s)) for s in self.final_centers),
            final_exponent=float(g(self.final_exponent)),
            temperature=float(g(self.temperature)),
        )


def _breakpoints(*schedules: Schedule) -> list[int]:
    pts = {0}
    for s in schedules:
        pts.update(int(t) for t in s.thresholds)
        pts.update(int(t) + 1 for t in s.thresholds)
    return sorted(pts)


@dataclass(frozen=True)
class PolicyControls:
    """Policy evaluated at one column count."""

    min_z_to_research: int
    gen_part: float
    num_samples: int
    max_tohpe: int
    tohpe_num_best: int
    try_only_tohpe: bool
    min_pool_size: int
    max_pool_size: int
    max_from_single_ns: int
    min_reduction: int
    max_reduction: int
    beamsearch_width: int
    todd_width: int
    pool_weights: tuple[float, ...]
    pool_centers: tuple[float, ...]
    pool_exponent: float
    final_weights: tuple[float, ...]
    final_centers: tuple[float, ...]
    final_exponent: float
    temperature: float


@dataclass(frozen=True)
class FeatureVector:
    """Normalized candidate features, all in [0, 1].

    f1 reduction / m, f2 kernel dimension / m, f3 per-z reduction cap / m,
    f4 |y| / m, f5 |z| / n; f6 is the one-step lookahead (dimension of the
    resulting matrix's common subspace / m), present only after rescoring.
    """

    f1: float
    f2: float
    f3: float
    f4: float
    f5: float
    f6: float | None = None

    def pool_features(self) -> tuple[float, ...]:
        return (self.f1, self.f2, self.f3, self.f4, self.f5)


def _weighted_score(xs, weights, centers, exponent) -> float:
    return sum(w * abs(x - c) ** exponent for x, w, c in zip(xs, weights, centers))


def pool_score(x: FeatureVector, pol: Policy, rho: int) -> float:
    """Sum over the five pool features of w_i |x_i - c_i|^p at this column count."""
    ctl = pol.at(rho)
    return _weighted_score(x.pool_features(), ctl.pool_weights, ctl.pool_centers, ctl.pool_exponent)


def final_score(x: FeatureVector, pol: Policy, rho: int) -> float:
    """Six-feature rescoring; requires the lookahead feature to be present."""
    if x.f6 is None:
        raise ValueError("final_score needs the lookahead feature f6")
    ctl = pol.at(rho)
    xs = x.pool_features() + (x.f6,)
    return _weighted_score(xs, ctl.final_weights, ctl.final_centers, ctl.final_exponent)


def _argmax_low_index(scores: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def softmax_select(scores: Sequence[float], tau: float, k: int, rng: random.Random) -> list[int]:
    """Draw k indices i.i.d. with Pr(i) proportional to exp(scores[i] / tau).

    Uses a max shift for overflow safety; at or below TAU_FLOOR the draw is
    an exact argmax with lowest-index tie break.
    """
    if not scores:
        raise ValueError("empty score list")
    if k < 1:
        raise ValueError("k must be >= 1")
    if tau <= 0:
        raise ValueError("temperature must be > 0")
    if tau <= TAU_FLOOR:
        return [_argmax_low_index(scores)] * k
    mx = max(scores)
    weights = [math.exp((s - mx) / tau) for s in scores]
    cum = []
    acc = 0.0
    for w in weights:
        acc += w
        cum.append(acc)
    out = []
    for _ in range(k):
        r = rng.random() * acc
        out.append(min(bisect.bisect_right(cum, r), len(scores) - 1))
    return out


def default_policy() -> Policy:
    """The stock search policy used by the command line when none is given."""
    return Policy(
        min_z_to_research=_const(24),
        gen_part=_const(1.0),
        num_samples=_const(192),
        max_tohpe=_const(48),
        tohpe_num_best=_const(8),
        try_only_tohpe=_const(0),
        min_pool_size=_const(10),
        max_pool_size=_const(48),
        max_from_single_ns=_const(6),
        min_reduction=_const(0),
        max_reduction=_const(1_000_000),
        beamsearch_width=_const(1),
        todd_width=_const(2),
        pool_weights=(_const(1.0), _const(0.0), _const(0.0), _const(0.0), _const(0.0)),
        pool_centers=tuple(_const(0.0) for _ in range(5)),
        pool_exponent=_const(1.0),
        final_weights=(_const(1.0),) + tuple(_const(0.0) for _ in range(5)),
        final_centers=tuple(_const(0.0) for _ in range(6)),
        final_exponent=_const(1.0),
        temperature=_const(0.05),
    )


def greedy_preset(kind: str) -> Policy:
    """'max' prefers the largest immediate reduction, 'min' the smallest positive one."""
    base = default_policy()
    zero5 = tuple(_const(0.0) for _ in range(5))
    if kind.lower() == "max":
        return replace(
            base,
            todd_width=_const(1),
            pool_weights=(_const(1.0),) + zero5[1:],
            pool_centers=zero5,
            pool_exponent=_const(1.0),
            final_weights=(_const(1.0),) + tuple(_const(0.0) for _ in range(5)),
            final_centers=tuple(_const(0.0) for _ in range(6)),
            final_exponent=_const(1.0),
            temperature=_const(TAU_FLOOR),
        )
    if kind.lower() == "min":
        # center sits just above zero so the smallest positive reduction wins
        return replace(
            base,
            todd_width=_const(1),
            min_reduction=_const(1),
            pool_weights=(_const(-1.0),) + zero5[1:],
            pool_centers=(_const(1e-6),) + zero5[1:],
            pool_exponent=_const(1.0),
            final_weights=(_const(-1.0),) + tuple(_const(0.0) for _ in range(5)),
            final_centers=(_const(1e-6),) + tuple(_const(0.0) for _ in range(5)),
            final_exponent=_const(1.0),
            temperature=_const(TAU_FLOOR),
        )
    raise ValueError(f"unknown greedy preset: {kind!r}")


# ---------------------------------------------------------------------------
# Config serialization (JSON-syntax files; unknown keys are errors)
# ---------------------------------------------------------------------------

_VECTOR_FIELDS = {"pool_weights": 5, "pool_centers": 5, "final_weights": 6, "final_centers": 6}


def _schedule_to_obj(s: Schedule):
    if not s.thresholds:
        return s.values[0]
    return {"thresholds": list(s.thresholds), "values": list(s.values)}


def _schedule_from_obj(obj, key: str) -> Schedule:
    if isinstance(obj, (int, float, bool)):
        return Schedule.constant(obj)
    if isinstance(obj, dict):
        extra = set(obj) - {"thresholds", "values"}
        if extra or "values" not in obj:
            raise ValueError(f"{key}: schedule objects take 'thresholds' and 'values'")
        return Schedule(values=tuple(obj["values"]), thresholds=tuple(obj.get("thresholds", ())))
    raise ValueError(f"{key}: expected a scalar or a schedule object")


def policy_to_config(pol: Policy) -> dict:
    cfg = {}
    for f in fields(Policy):
        v = getattr(pol, f.name)
        if f.name in _VECTOR_FIELDS:
            cfg[f.name] = [_schedule_to_obj(s) for s in v]
        else:
            cfg[f.name] = _schedule_to_obj(v)
    return cfg


def policy_from_config(cfg: dict) -> Policy:
    known = {f.name for f in fields(Policy)}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown policy keys: {sorted(unknown)}")
    base = default_policy()
    kwargs = {}
    for f in fields(Policy):
        if f.name not in cfg:
            kwargs[f.name] = getattr(base, f.name)
            continue
        v = cfg[f.name]
        if f.name in _VECTOR_FIELDS:
            want = _VECTOR_FIELDS[f.name]
            if not isinstance(v, (list, tuple)) or len(v) != want:
                raise ValueError(f"{f.name}: expected a list of {want} entries")
            kwargs[f.name] = tuple(_schedule_from_obj(o, f.name) for o in v)
        else:
            kwargs[f.name] = _schedule_from_obj(v, f.name)
    return Policy(**kwargs)


def policy_digest(pol: Policy) -> str:
    """Stable hash of the policy config; recorded in trajectory files."""
    blob = json.dumps(policy_to_config(pol), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()
