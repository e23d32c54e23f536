"""Latent-vector policy mapping, official fitness, path store, and the PSO tuner."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import statistics
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .parity import (
    ParityMatrix,
    SignatureTensor,
    density,
    signature_tensor,
    simplify,
    tensors_equal,
)
from .policy import Policy, Schedule, default_policy
from .search import (
    SearchBudget,
    Trajectory,
    format_trajectory,
    optimize,
    parse_trajectory,
)

__all__ = [
    "BOX_LO",
    "BOX_HI",
    "Transform",
    "MappingEntry",
    "MappingSpec",
    "FitnessReport",
    "PathStore",
    "TuneSettings",
    "policy_mapping",
    "fitness",
    "set_up_new_init",
    "pso_optimize",
    "tune",
    "mapping_spec_from_config",
    "mapping_spec_to_config",
]

log = logging.getLogger("vartodd.tuner")

BOX_LO = -2.0
BOX_HI = 2.0

_TRANSFORM_KINDS = ("affine", "exp", "logistic", "int", "gate")


@dataclass(frozen=True)
class Transform:
    """Maps one latent coordinate in [-2, 2] into a control's admissible range.

    affine / int: linear onto [lo, hi] (int rounds); exp: linear in log
    space, so theta = 0 lands on the geometric midpoint; logistic: sigmoid
    squashed onto (lo, hi); gate: 1.0 when theta >= threshold else 0.0.
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    threshold: float = 0.0

    def __post_init__(self):
        if self.kind not in _TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "exp" and (self.lo <= 0 or self.hi <= 0):
            raise ValueError("exp transform needs positive bounds")

    def apply(self, theta: float) -> float:
        t = (theta - BOX_LO) / (BOX_HI - BOX_LO)
        if self.kind == "affine":
            return self.lo + t * (self.hi - self.lo)
        if self.kind == "int":
            return float(round(self.lo + t * (self.hi - self.lo)))
        if self.kind == "exp":
            return math.exp(math.log(self.lo) + t * (math.log(self.hi) - math.log(self.lo)))
        if self.kind == "logistic":
            s = 1.0 / (1.0 + math.exp(-2.0 * theta))
            return self.lo + s * (self.hi - self.lo)
        return 1.0 if theta >= self.threshold else 0.0


@dataclass(frozen=True)
class MappingEntry:
    """One latent coordinate: the control it feeds, its transform, its stage threshold."""

    control: str
    transform: Transform
    rank_thr: int | None = None


@dataclass(frozen=True)
class MappingSpec:
    """Ordered mapping entries; consumes exactly one coordinate per entry."""

    entries: tuple[MappingEntry, ...] = ()

    @property
    def dimension(self) -> int:
        return len(self.entries)


_CONTROL_RE = re.compile(r"^([a-z_]+)(?:\[(\d+)\])?$")
_VECTOR_SIZES = {"pool_weights": 5, "pool_centers": 5, "final_weights": 6, "final_centers": 6}


def _parse_control(name: str) -> tuple[str, int | None]:
    mo = _CONTROL_RE.match(name)
    if not mo:
        raise ValueError(f"bad control name {name!r}")
    field_name, idx = mo.group(1), mo.group(2)
    known = {f.name for f in fields(Policy)}
    if field_name not in known:
        raise ValueError(f"unknown policy control {field_name!r}")
    if field_name in _VECTOR_SIZES:
        if idx is None:
            raise ValueError(f"{field_name} needs an index, e.g. {field_name}[0]")
        i = int(idx)
        if not 0 <= i < _VECTOR_SIZES[field_name]:
            raise ValueError(f"{field_name} index out of range: {i}")
        return field_name, i
    if idx is not None:
        raise ValueError(f"{field_name} is scalar and takes no index")
    return field_name, None


def policy_mapping(spec: MappingSpec, theta: Sequence[float], base: Policy | None = None) -> Policy:
    """Map a latent vector to a valid policy, grouping staged entries into schedules.

    Entries sharing a control assemble into one piecewise schedule: each
    rank_thr becomes a threshold, and the entry without one provides the
    value below every threshold (falling back to the base policy's tail
    value when absent).  Coordinates must lie in the box.
    """
    base = base or default_policy()
    if len(theta) != spec.dimension:
        raise ValueError(f"expected {spec.dimension} coordinates, got {len(theta)}")
    for i, t in enumerate(theta):
        if not BOX_LO <= t <= BOX_HI:
            raise ValueError(f"coordinate {i} outside [{BOX_LO}, {BOX_HI}]: {t}")

    groups: dict[tuple[str, int | None], list[tuple[int | None, float]]] = {}
    for entry, t in zip(spec.entries, theta):
        key = _parse_control(entry.control)
        groups.setdefault(key, []).append((entry.rank_thr, entry.transform.apply(t)))

    updates: dict[str, object] = {}
    for (field_name, idx), items in groups.items():
        tail = [v for thr, v in items if thr is None]
        if len(tail) > 1:
            raise ValueError(f"{field_name}: more than one entry without rank_thr")
        staged = sorted(
            [(thr, v) for thr, v in items if thr is not None],
            key=lambda tv: -tv[0],
        )
        thrs = [thr for thr, _ in staged]
        if len(set(thrs)) != len(thrs):
            raise ValueError(f"{field_name}: duplicate rank_thr values")
        base_sched = getattr(base, field_name)
        if idx is not None:
            base_sched = base_sched[idx]
        if not staged:
            sched = Schedule.constant(tail[0])
        else:
            tail_value = tail[0] if tail else base_sched.values[-1]
            sched = Schedule(
                values=tuple(v for _, v in staged) + (tail_value,),
                thresholds=tuple(thrs),
            )
        if idx is None:
            updates[field_name] = sched
        else:
            vec = list(updates.get(field_name, getattr(base, field_name)))
            vec[idx] = sched
            updates[field_name] = tuple(vec)

    pol = replace(base, **updates)
    # keep the mapping total on the box: repair an inverted reduction range pointwise
    lo, hi = pol.min_reduction, pol.max_reduction
    probe = sorted({0, *lo.thresholds, *hi.thresholds, *(t + 1 for t in lo.thresholds + hi.thresholds)})
    if any(lo(r) > hi(r) for r in probe):
        merged = tuple(sorted({*lo.thresholds, *hi.thresholds}, reverse=True))
        hi_vals = tuple(max(lo(r), hi(r)) for r in merged) + (
            max(lo.values[-1], hi.values[-1]),
        )
        pol = replace(pol, max_reduction=Schedule(values=hi_vals, thresholds=merged))
    return pol


@dataclass(frozen=True)
class FitnessReport:
    """Official score of one final matrix: rho + density + penalty, tensor-checked."""

    rho: int
    density: float
    penalty: float
    fitness: float
    valid: bool


def fitness(p_final: ParityMatrix, started_from_store: bool, start_rho: int,
            tensor_ref: SignatureTensor) -> FitnessReport:
    """Column count plus density tie-breaker, plus 1.0 when a store restart failed to improve."""
    valid = tensors_equal(signature_tensor(p_final), tensor_ref)
    rho = p_final.column_count()
    dens = density(p_final)
    penalty = 1.0 if (started_from_store and rho >= start_rho) else 0.0
    if not valid:
        return FitnessReport(rho=rho, density=dens, penalty=penalty, fitness=math.inf, valid=False)
    return FitnessReport(rho=rho, density=dens, penalty=penalty,
                         fitness=rho + dens + penalty, valid=True)


class PathStore:
    """Numbered trajectories kept as restart material, optionally persisted.

    Every inserted trajectory must carry states equivalent to the store's
    reference tensor; violating trajectories are rejected.
    """

    def __init__(self, tensor_ref: SignatureTensor | None = None):
        self.tensor_ref = tensor_ref
        self._paths: dict[int, Trajectory] = {}
        self._next_id = 1

    def __len__(self) -> int:
        return len(self._paths)

    def ids(self) -> list[int]:
        return sorted(self._paths)

    def get(self, path_num: int) -> Trajectory:
        if path_num not in self._paths:
            raise KeyError(f"unknown path id {path_num}")
        return self._paths[path_num]

    def rho_sequence(self, path_num: int) -> list[int]:
        return list(self.get(path_num).column_counts)

    def insert(self, traj: Trajectory, tensor_ref: SignatureTensor | None = None) -> int:
        ref = tensor_ref or self.tensor_ref
        if ref is None:
            raise ValueError("no reference tensor to validate against")
        if self.tensor_ref is None:
            self.tensor_ref = ref
        for state in traj.states:
            if not tensors_equal(signature_tensor(state), ref):
                raise ValueError("trajectory state breaks the shared-tensor invariant")
        pid = self._next_id
        self._next_id += 1
        self._paths[pid] = traj
        return pid

    def best_path(self) -> int | None:
        """Path with the lowest final column count (ties to the older path)."""
        if not self._paths:
            return None
        return min(self._paths, key=lambda pid: (self._paths[pid].column_counts[-1], pid))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = {"version": 1, "paths": []}
        for pid in self.ids():
            traj = self._paths[pid]
            name = f"path-{pid:04d}.traj"
            (d / name).write_text(format_trajectory(traj), encoding="ascii")
            index["paths"].append(
                {"id": pid, "file": name, "rhos": traj.column_counts}
            )
        (d / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="ascii")

    @classmethod
    def load(cls, directory, tensor_ref: SignatureTensor | None = None) -> "PathStore":
        d = Path(directory)
        store = cls(tensor_ref)
        index = json.loads((d / "index.json").read_text(encoding="ascii"))
        for rec in index["paths"]:
            traj = parse_trajectory((d / rec["file"]).read_text(encoding="ascii"))
            pid = int(rec["id"])
            if tensor_ref is not None:
                for state in traj.states:
                    if not tensors_equal(signature_tensor(state), tensor_ref):
                        raise ValueError(f"stored path {pid} breaks the tensor invariant")
            store._paths[pid] = traj
            store._next_id = max(store._next_id, pid + 1)
        return store


def set_up_new_init(store: PathStore, path_num: int, rank_thr: int) -> ParityMatrix:
    """Last state on the path whose column count is still above rank_thr.

    Falls back to the path's first state when no state qualifies.
    """
    traj = store.get(path_num)
    pick = None
    for state, rho in zip(traj.states, traj.column_counts):
        if rho > rank_thr:
            pick = state
    return pick if pick is not None else traj.states[0]


def pso_optimize(objective: Callable[[np.ndarray], float] | None, d: int, swarm: int,
                 iters: int, seed: int, *,
                 inertia: float = 0.7298,
                 cognitive: float = 1.49618,
                 social: float = 1.49618,
                 batch_eval: Callable[[list[np.ndarray]], list[float]] | None = None,
                 deadline: float | None = None) -> tuple[np.ndarray, float]:
    """Global-best particle swarm minimization over the box [-2, 2]^d.

    Constriction-style defaults; positions are clamped to the box before
    every evaluation, so the objective never sees an out-of-box point.
    Deterministic for a fixed seed.  `batch_eval`, when given, evaluates a
    whole swarm batch and replaces per-particle objective calls.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if swarm < 2:
        raise ValueError("swarm size must be >= 2")
    if objective is None and batch_eval is None:
        raise ValueError("need an objective or a batch evaluator")
    rng = np.random.default_rng(seed)
    x = rng.uniform(BOX_LO, BOX_HI, size=(swarm, d))
    v = np.zeros((swarm, d))

    def evaluate(positions: np.ndarray) -> np.ndarray:
        pts = [positions[i].copy() for i in range(len(positions))]
        if batch_eval is not None:
            vals = batch_eval(pts)
        else:
            vals = [objective(p) for p in pts]
        return np.asarray(vals, dtype=float)

    y = evaluate(x)
    pbest_x = x.copy()
    pbest_y = y.copy()
    g = int(np.argmin(pbest_y))
    gbest_x = pbest_x[g].copy()
    gbest_y = float(pbest_y[g])

    for _ in range(iters):
        if deadline is not None and time.monotonic() >= deadline:
            break
        r1 = rng.random((swarm, d))
        r2 = rng.random((swarm, d))
        v = inertia * v + cognitive * r1 * (pbest_x - x) + social * r2 * (gbest_x - x)
        x = np.clip(x + v, BOX_LO, BOX_HI)
        y = evaluate(x)
        better = y < pbest_y
        pbest_x[better] = x[better]
        pbest_y[better] = y[better]
        g = int(np.argmin(pbest_y))
        if pbest_y[g] < gbest_y:
            gbest_y = float(pbest_y[g])
            gbest_x = pbest_x[g].copy()
    return gbest_x, gbest_y


@dataclass
class TuneSettings:
    """Outer-loop knobs: swarm geometry, repetitions, restart cadence, limits."""

    swarm: int = 8
    iterations: int = 10
    repetitions: int = 3
    fresh_every: int = 4
    wall_clock_limit: float | None = None
    map_workers: int = 1


def _derive_seed(seed: int, eval_idx: int, rep: int) -> int:
    blob = f"{seed}:{eval_idx}:{rep}".encode("ascii")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def _quartile_thresholds(rhos: Sequence[int]) -> list[int]:
    if len(rhos) == 1:
        return [int(rhos[0])]
    qs = statistics.quantiles(rhos, n=4, method="inclusive")
    return sorted({int(q) for q in qs})


def tune(benchmark: ParityMatrix, spec: MappingSpec, budget: SearchBudget,
         store: PathStore | None, seed: int,
         settings: TuneSettings | None = None) -> tuple[Policy, FitnessReport, PathStore]:
    """Search the latent policy box for the best official fitness on one benchmark.

    Each objective evaluation maps the latent point to a policy and runs the
    optimizer `repetitions` times with derived seeds, keeping the minimum
    fitness.  Starts alternate between the benchmark matrix and restarts
    from the stored best path (one fresh start in every `fresh_every`);
    improving trajectories enter the store between swarm batches, in
    particle order, so runs are reproducible.
    """
    budget.ensure_bounded()
    settings = settings or TuneSettings()
    tensor_ref = signature_tensor(benchmark)
    if store is None:
        store = PathStore(tensor_ref)
    elif store.tensor_ref is None:
        store.tensor_ref = tensor_ref
    base_start = simplify(benchmark)
    base_rho = base_start.column_count()

    deadline = None
    if settings.wall_clock_limit is not None:
        deadline = time.monotonic() + settings.wall_clock_limit

    state = {"next_idx": 0, "best": None}  # best: (fitness, idx, policy, final, report)

    def eval_one(idx: int, theta: np.ndarray):
        pol = policy_mapping(spec, theta)
        use_store = len(store) > 0 and (idx % max(1, settings.fresh_every) != 0)
        if use_store:
            pid = store.best_path()
            thrs = _quartile_thresholds(store.rho_sequence(pid))
            rank_thr = thrs[idx % len(thrs)]
            start = set_up_new_init(store, pid, rank_thr)
            start_rho = start.column_count()
        else:
            start = base_start
            start_rho = base_rho
        best_rep: FitnessReport | None = None
        best_traj: Trajectory | None = None
        rep_rhos: list[int] = []
        total_evals = 0
        for r in range(max(1, settings.repetitions)):
            traj = optimize(start, pol, budget, _derive_seed(seed, idx, r))
            rep = fitness(traj.states[-1], use_store, start_rho, tensor_ref)
            rep_rhos.append(rep.rho)
            total_evals += traj.eval_counts[-1] if traj.eval_counts else 0
            if best_rep is None or rep.fitness < best_rep.fitness:
                best_rep = rep
                best_traj = traj
        log.info(
            "eval %d: fitness=%.6f rho=%s reps_rho=%s from_store=%s evals=%d store_best=%s",
            idx, best_rep.fitness, best_rep.rho, rep_rhos, use_store, total_evals,
            store.rho_sequence(store.best_path())[-1] if len(store) else None,
        )
        return pol, best_rep, best_traj

    def batch_eval(points: list[np.ndarray]) -> list[float]:
        jobs = [(state["next_idx"] + i, p) for i, p in enumerate(points)]
        state["next_idx"] += len(points)
        if settings.map_workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=settings.map_workers) as ex:
                results = list(ex.map(lambda jt: eval_one(*jt), jobs))
        else:
            results = [eval_one(idx, p) for idx, p in jobs]
        values = []
        for (idx, _), (pol, rep, traj) in zip(jobs, results):
            values.append(rep.fitness)
            best = state["best"]
            if rep.valid and (best is None or rep.fitness < best[0]):
                state["best"] = (rep.fitness, idx, pol, traj.states[-1], rep)
            if rep.valid and (
                len(store) == 0
                or traj.column_counts[-1] < store.rho_sequence(store.best_path())[-1]
            ):
                store.insert(traj)
        return values

    pso_optimize(
        None,
        d=spec.dimension,
        swarm=settings.swarm,
        iters=settings.iterations,
        seed=_derive_seed(seed, -1, 0) % (2**32),
        batch_eval=batch_eval,
        deadline=deadline,
    )

    best = state["best"]
    if best is None:
        raise RuntimeError("no valid decomposition found within the budget")
    _, _, pol, final, _ = best
    # leaderboard entries are re-verified at report time
    report = fitness(final, False, base_rho, tensor_ref)
    return pol, report, store


# ---------------------------------------------------------------------------
# Config serialization for mapping specs
# ---------------------------------------------------------------------------


def mapping_spec_to_config(spec: MappingSpec) -> list[dict]:
    out = []
    for e in spec.entries:
        rec: dict = {"control": e.control, "transform": e.transform.kind}
        if e.transform.kind == "gate":
            rec["threshold"] = e.transform.threshold
        else:
            rec["lo"] = e.transform.lo
            rec["hi"] = e.transform.hi
        if e.rank_thr is not None:
            rec["rank_thr"] = e.rank_thr
        out.append(rec)
    return out


def mapping_spec_from_config(cfg: Sequence[dict]) -> MappingSpec:
    entries = []
    for i, rec in enumerate(cfg):
        extra = set(rec) - {"control", "transform", "lo", "hi", "threshold", "rank_thr"}
        if extra:
            raise ValueError(f"mapping entry {i}: unknown keys {sorted(extra)}")
        kind = rec.get("transform", "affine")
        tf = Transform(
            kind=kind,
            lo=float(rec.get("lo", 0.0)),
            hi=float(rec.get("hi", 1.0)),
            threshold=float(rec.get("threshold", 0.0)),
        )
        entries.append(
            MappingEntry(
                control=rec["control"],
                transform=tf,
                rank_thr=int(rec["rank_thr"]) if "rank_thr" in rec else None,
            )
        )
    # validate control names early
    for e in entries:
        _parse_control(e.control)
    return MappingSpec(entries=tuple(entries))
