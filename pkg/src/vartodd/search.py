"""The optimization loop: candidate staging, pooling, stochastic choice, beam variant."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .engine import (
    Action,
    ORIGIN_FASTTODD,
    ORIGIN_TOHPE,
    TOHPE_NULLSPACE_ID,
    _nullspace_for_z_bits,
    _reduction_upper_bound_bits,
    _simplify_cols,
    _updated_cols,
    _updated_count,
    _z_candidates_bits,
    tohpe_subspace,
)
from .gf2 import BitVector, _nullspace_ints
from .parity import (
    MatrixFormatError,
    ParityMatrix,
    density,
    format_matrix,
    parse_matrix,
    simplify,
)
from .policy import Policy, TAU_FLOOR, FeatureVector, policy_digest, softmax_select

__all__ = [
    "SearchBudget",
    "Trajectory",
    "EvalCounter",
    "IterationStats",
    "run_iteration",
    "optimize",
    "optimize_beam",
    "format_trajectory",
    "parse_trajectory",
    "write_trajectory_file",
    "read_trajectory_file",
]

TRAJECTORY_HEADER = "vartodd-trajectory v1"

# patience: consecutive steps without an improving pool before stopping
_PATIENCE_STRICT = 1
_PATIENCE_PLATEAU = 5


class EvalCounter:
    """Counts simplify(P xor z*y^T) evaluations; the budget currency."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k: int = 1) -> None:
        self.count += k


@dataclass(frozen=True)
class SearchBudget:
    """Stopping limits for one run; at least one must be finite."""

    wall_clock_limit: float | None = None
    max_matrix_evals: int | None = None
    max_iterations: int | None = None

    def ensure_bounded(self) -> None:
        if (
            self.wall_clock_limit is None
            and self.max_matrix_evals is None
            and self.max_iterations is None
        ):
            raise ValueError("budget needs at least one finite limit")


@dataclass
class Trajectory:
    """Sequence of simplified states with the action applied at each step."""

    states: list[ParityMatrix]
    actions: list[Action]
    column_counts: list[int]
    seed: int
    policy_digest: str
    eval_counts: list[int] = field(default_factory=list)
    stop_reason: str = ""


@dataclass
class IterationStats:
    rho: int
    z_explored: int = 0
    tohpe_candidates: int = 0
    expansion_candidates: int = 0
    viable_candidates: int = 0
    pool: tuple[Action, ...] = ()
    best_predicted: int | None = None
    matrix_evals: int = 0


@dataclass
class _Cand:
    z: int
    y: int
    delta: int
    ns_id: int
    ns_dim: int
    origin: str
    result_cols: tuple[int, ...] | None = None


def _span_samples(basis: list[int], gens: int, want: int, rng: random.Random) -> list[int]:
    """Nonzero vectors from the span of the first `gens` basis vectors.

    Enumerates the span exhaustively when it fits within `want` draws,
    otherwise samples distinct random combinations.
    """
    g = min(gens, len(basis))
    if g <= 0 or want <= 0:
        return []
    if g < 63 and (1 << g) <= want + 1:
        out = []
        for mask in range(1, 1 << g):
            y = 0
            mm = mask
            while mm:
                low = mm & -mm
                y ^= basis[low.bit_length() - 1]
                mm ^= low
            out.append(y)
        return out
    out = []
    seen = set()
    attempts = 0
    limit = want * 4
    while len(out) < want and attempts < limit:
        attempts += 1
        mask = rng.getrandbits(g)
        if not mask or mask in seen:
            continue
        seen.add(mask)
        y = 0
        while mask:
            low = mask & -mask
            y ^= basis[low.bit_length() - 1]
            mask ^= low
        out.append(y)
    return out


def _tohpe_dim_of_cols(cols: list[int], n: int) -> int:
    """dim of the common admissible subspace of a column list (lookahead feature)."""
    m = len(cols)
    if m == 0:
        return 0
    rows = [0] * n
    for j, c in enumerate(cols):
        bit = 1 << j
        while c:
            low = c & -c
            rows[low.bit_length() - 1] |= bit
            c ^= low
    sys_rows: set[int] = set()
    for a in range(n):
        ra = rows[a]
        for b in range(a, n):
            r = ra & rows[b]
            if r:
                sys_rows.add(r)
    sys_rows.add((1 << m) - 1)
    return len(_nullspace_ints(sorted(sys_rows), m))


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def _iterate(state: ParityMatrix, pol: Policy, rng: random.Random, counter: EvalCounter,
             deadline: float | None) -> tuple[list[tuple[Action, ParityMatrix]], IterationStats]:
    """One candidate-generation / selection round; returns the drawn (action, result) pairs."""
    n = state.n
    cols = state.col_bits
    m = len(cols)
    stats = IterationStats(rho=m)
    if m == 0:
        return [], stats
    ctl = pol.at(m)
    start_evals = counter.count

    zs = _z_candidates_bits(cols)
    if not zs:
        return [], stats
    ubs = [_reduction_upper_bound_bits(cols, z) for z in zs]
    ub_of = dict(zip(zs, ubs))

    candidates: list[_Cand] = []

    # --- stage 1: cheap exploration in the z-independent common subspace
    tohpe_basis = [v.bits for v in tohpe_subspace(state)]
    tohpe_dim = len(tohpe_basis)
    if tohpe_basis and ctl.max_tohpe > 0:
        head = zs[: max(1, ctl.tohpe_num_best)]
        ys = _span_samples(tohpe_basis, tohpe_dim, ctl.num_samples, rng)
        for i, y in enumerate(ys):
            if len(candidates) >= ctl.max_tohpe:
                break
            z = head[i % len(head)]
            delta = m - _updated_count(cols, z, y)
            counter.add(1)
            candidates.append(_Cand(z, y, delta, TOHPE_NULLSPACE_ID, tohpe_dim, ORIGIN_TOHPE))
    stats.tohpe_candidates = len(candidates)

    viable_so_far = sum(
        1 for c in candidates if ctl.min_reduction <= c.delta <= ctl.max_reduction
    )

    # --- stage 2: per-z kernel expansion, skipped when stage 1 already filled the pool
    if not (ctl.try_only_tohpe and viable_so_far >= ctl.min_pool_size):
        ranked = sorted(range(len(zs)), key=lambda i: (-ubs[i], i))
        explore = ranked[: ctl.tohpe_num_best + ctl.min_z_to_research]
        for zi in explore:
            if deadline is not None and time.monotonic() >= deadline:
                break
            z = zs[zi]
            basis = _nullspace_for_z_bits(state, z)
            stats.z_explored += 1
            if not basis:
                continue
            gens = math.ceil(ctl.gen_part * len(basis))
            for y in _span_samples(basis, gens, ctl.num_samples, rng):
                delta = m - _updated_count(cols, z, y)
                counter.add(1)
                candidates.append(_Cand(z, y, delta, z, len(basis), ORIGIN_FASTTODD))
    stats.expansion_candidates = len(candidates) - stats.tohpe_candidates

    # --- stage 3: feasibility filter, pool scoring, diversity cap, truncation
    in_range = [c for c in candidates if ctl.min_reduction <= c.delta <= ctl.max_reduction]
    stats.viable_candidates = len(in_range)
    if not in_range:
        stats.matrix_evals = counter.count - start_evals
        return [], stats

    feats = [
        FeatureVector(
            f1=_clamp01(c.delta / m),
            f2=_clamp01(c.ns_dim / m),
            f3=_clamp01(ub_of[c.z] / m),
            f4=_clamp01(c.y.bit_count() / m),
            f5=_clamp01(c.z.bit_count() / n),
        )
        for c in in_range
    ]
    pw, pc, pe = ctl.pool_weights, ctl.pool_centers, ctl.pool_exponent
    pscores = [
        sum(w * abs(x - ce) ** pe for x, w, ce in zip(f.pool_features(), pw, pc))
        for f in feats
    ]
    order = sorted(range(len(in_range)), key=lambda i: (-pscores[i], -in_range[i].delta, i))
    per_ns: dict[int, int] = {}
    pool_idx: list[int] = []
    for i in order:
        if len(pool_idx) >= ctl.max_pool_size:
            break
        ns = in_range[i].ns_id
        if per_ns.get(ns, 0) >= ctl.max_from_single_ns:
            continue
        per_ns[ns] = per_ns.get(ns, 0) + 1
        pool_idx.append(i)
    if not pool_idx:
        stats.matrix_evals = counter.count - start_evals
        return [], stats

    # --- stage 4: final rescoring (lookahead feature computed only when weighted)
    need_f6 = ctl.final_weights[5] != 0.0
    fw, fc, fe = ctl.final_weights, ctl.final_centers, ctl.final_exponent
    rescored: list[tuple[float, _Cand]] = []
    for i in pool_idx:
        c = in_range[i]
        if need_f6:
            res = _simplify_cols(_updated_cols(cols, c.z, c.y, False))
            counter.add(1)
            c.result_cols = tuple(res)
            f6 = _clamp01(_tohpe_dim_of_cols(res, n) / m)
        else:
            f6 = 0.0
        xs = feats[i].pool_features() + (f6,)
        fs = sum(w * abs(x - ce) ** fe for x, w, ce in zip(xs, fw, fc))
        rescored.append((fs, c))
    keyed = sorted(range(len(rescored)), key=lambda i: (-rescored[i][0], -rescored[i][1].delta, i))
    final_pool = [rescored[i] for i in keyed]
    pool_actions = tuple(
        Action(
            z=BitVector(n, c.z),
            y=BitVector(m, c.y),
            predicted_reduction=c.delta,
            origin=c.origin,
            nullspace_id=c.ns_id,
        )
        for _, c in final_pool
    )
    stats.pool = pool_actions
    stats.best_predicted = max(c.delta for _, c in final_pool)

    # --- stage 5: temperature-controlled draw of todd_width actions
    scores = [s for s, _ in final_pool]
    draws = softmax_select(scores, ctl.temperature, max(1, ctl.todd_width), rng)
    picked: list[int] = []
    for d in draws:
        if d not in picked:
            picked.append(d)
    out: list[tuple[Action, ParityMatrix]] = []
    for d in picked:
        c = final_pool[d][1]
        if c.result_cols is None:
            res = _simplify_cols(_updated_cols(cols, c.z, c.y, False))
            counter.add(1)
            c.result_cols = tuple(res)
        out.append((pool_actions[d], ParityMatrix(n, c.result_cols)))
    stats.matrix_evals = counter.count - start_evals
    return out, stats


def run_iteration(p: ParityMatrix, pol: Policy, rng: random.Random, *,
                  counter: EvalCounter | None = None,
                  deadline: float | None = None) -> tuple[Action | None, IterationStats]:
    """One optimizer round on a simplified matrix.

    Runs the cheap common-subspace stage, then the per-z kernel expansion
    unless gated off, pools and rescores the candidates, draws todd_width of
    them, and returns the action whose applied result is best by (column
    count, density).  Returns None when the pool comes up empty, which the
    outer loop treats as a normal terminal signal.
    """
    counter = counter or EvalCounter()
    draws, stats = _iterate(p, pol, rng, counter, deadline)
    if not draws:
        return None, stats
    best = min(
        range(len(draws)),
        key=lambda i: (draws[i][1].column_count(), density(draws[i][1]), i),
    )
    return draws[best][0], stats


@dataclass
class _Branch:
    state: ParityMatrix
    actions: list[Action]
    states: list[ParityMatrix]


def _search(p: ParityMatrix, pol: Policy, budget: SearchBudget, seed: int,
            beam: bool) -> Trajectory:
    budget.ensure_bounded()
    rng = random.Random(seed)
    counter = EvalCounter()
    deadline = None
    if budget.wall_clock_limit is not None:
        deadline = time.monotonic() + budget.wall_clock_limit
    start = simplify(p)
    digest = policy_digest(pol)

    branches = [_Branch(state=start, actions=[], states=[start])]
    step_evals: list[int] = []
    streak = 0
    stop_reason = "converged"
    steps = 0
    while True:
        if budget.max_iterations is not None and steps >= budget.max_iterations:
            stop_reason = "budget"
            break
        if budget.max_matrix_evals is not None and counter.count >= budget.max_matrix_evals:
            stop_reason = "budget"
            break
        if deadline is not None and time.monotonic() >= deadline:
            stop_reason = "budget"
            break
        rho_before = min(b.state.column_count() for b in branches)
        width = max(1, pol.at(rho_before).beamsearch_width) if beam else 1
        children: list[tuple[tuple, _Branch]] = []
        best_predicted: int | None = None
        for bi, br in enumerate(branches):
            draws, st = _iterate(br.state, pol, rng, counter, deadline)
            if st.best_predicted is not None and (
                best_predicted is None or st.best_predicted > best_predicted
            ):
                best_predicted = st.best_predicted
            for di, (action, result) in enumerate(draws):
                key = (result.column_count(), density(result), bi, di)
                children.append(
                    (key, _Branch(result, br.actions + [action], br.states + [result]))
                )
        steps += 1
        step_evals.append(counter.count)
        if not children:
            stop_reason = "converged"
            break
        children.sort(key=lambda t: t[0])
        kept: list[_Branch] = []
        seen: set[tuple] = set()
        for _, br in children:
            sig = (br.state.n, br.state.col_bits)
            if sig in seen:
                continue
            seen.add(sig)
            kept.append(br)
            if len(kept) >= width:
                break
        branches = kept
        # patience on the best available predicted reduction across branches
        k = _PATIENCE_STRICT if pol.at(rho_before).min_reduction >= 1 else _PATIENCE_PLATEAU
        if best_predicted is not None and best_predicted <= 0:
            streak += 1
        else:
            streak = 0
        if streak >= k:
            stop_reason = "patience"
            break

    best = min(
        range(len(branches)),
        key=lambda i: (branches[i].state.column_count(), density(branches[i].state), i),
    )
    br = branches[best]
    states = br.states
    return Trajectory(
        states=states,
        actions=br.actions,
        column_counts=[s.column_count() for s in states],
        seed=seed,
        policy_digest=digest,
        eval_counts=[0] + step_evals[: len(br.actions)],
        stop_reason=stop_reason,
    )


def optimize(p: ParityMatrix, pol: Policy, budget: SearchBudget, seed: int) -> Trajectory:
    """Iterate run_iteration until the pool empties, patience fires, or the budget ends.

    The input is simplified first; every recorded state is simplified and
    shares the input's signature tensor.
    """
    return _search(p, pol, budget, seed, beam=False)


def optimize_beam(p: ParityMatrix, pol: Policy, budget: SearchBudget, seed: int) -> Trajectory:
    """Beam variant keeping up to beamsearch_width states per step.

    Every kept state is expanded with todd_width sampled actions and the
    best states by (column count, density) survive.  Width 1 reproduces
    optimize exactly under the same seed.
    """
    return _search(p, pol, budget, seed, beam=True)


# ---------------------------------------------------------------------------
# Trajectory files
# ---------------------------------------------------------------------------
#
# Header: "vartodd-trajectory v1", then the policy digest and seed lines.
# States follow in the parity-matrix text format, separated by "---" lines,
# with the applied (z, y) bit-strings on the line before each successor
# state.  Each state block carries a "# evals N" comment with the cumulative
# evaluation counter (readers may ignore comments).


def format_trajectory(traj: Trajectory) -> str:
    out = [TRAJECTORY_HEADER, f"policy_digest {traj.policy_digest}", f"seed {traj.seed}"]
    evals = traj.eval_counts or [0] * len(traj.states)
    block = format_matrix(traj.states[0], comments=[f"evals {evals[0]}"])
    out.append(block.rstrip("\n"))
    for i, action in enumerate(traj.actions):
        out.append("---")
        out.append(f"{action.z.to01()} {action.y.to01()}")
        block = format_matrix(traj.states[i + 1], comments=[f"evals {evals[i + 1]}"])
        out.append(block.rstrip("\n"))
    return "\n".join(out) + "\n"


def parse_trajectory(text: str) -> Trajectory:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3 or lines[0] != TRAJECTORY_HEADER:
        raise MatrixFormatError("missing trajectory header")
    if not lines[1].startswith("policy_digest ") or not lines[2].startswith("seed "):
        raise MatrixFormatError("malformed trajectory header")
    digest = lines[1].split(" ", 1)[1]
    try:
        seed = int(lines[2].split(" ", 1)[1])
    except ValueError as exc:
        raise MatrixFormatError("malformed seed line") from exc

    blocks: list[list[str]] = [[]]
    for line in lines[3:]:
        if line == "---":
            blocks.append([])
        else:
            blocks[-1].append(line)

    def block_evals(block: list[str]) -> int:
        for line in block:
            if line.startswith("# evals "):
                try:
                    return int(line.split(" ")[2])
                except (IndexError, ValueError):
                    return 0
        return 0

    states = [parse_matrix("\n".join(blocks[0]) + "\n")]
    evals = [block_evals(blocks[0])]
    actions: list[Action] = []
    for block in blocks[1:]:
        if not block:
            raise MatrixFormatError("empty trajectory block")
        zy = block[0].split(" ")
        if len(zy) != 2:
            raise MatrixFormatError("expected 'z y' bit-strings before each state")
        z = BitVector.from_string(zy[0])
        y = BitVector.from_string(zy[1])
        state = parse_matrix("\n".join(block[1:]) + "\n")
        prev = states[-1]
        if z.n != prev.n:
            raise MatrixFormatError("z length does not match the qubit count")
        if y.n not in (prev.column_count(), prev.column_count() + 1):
            raise MatrixFormatError("y length does not match the preceding state")
        actions.append(
            Action(
                z=z,
                y=y,
                predicted_reduction=prev.column_count() - state.column_count(),
                origin=ORIGIN_FASTTODD,
                nullspace_id=z.bits,
                append_z=y.n == prev.column_count() + 1,
            )
        )
        states.append(state)
        evals.append(block_evals(block))
    return Trajectory(
        states=states,
        actions=actions,
        column_counts=[s.column_count() for s in states],
        seed=seed,
        policy_digest=digest,
        eval_counts=evals,
    )


def write_trajectory_file(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_trajectory(traj))


def read_trajectory_file(path) -> Trajectory:
    with open(path, "r", encoding="ascii") as fh:
        return parse_trajectory(fh.read())
