"""Admissible-action machinery: z candidates, per-z kernels, the common subspace, updates."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .gf2 import BitMatrix, BitVector, _nullspace_ints
from .parity import ParityMatrix, _simplify_cols

__all__ = [
    "Action",
    "ConstraintSystem",
    "ORIGIN_TOHPE",
    "ORIGIN_FASTTODD",
    "TOHPE_NULLSPACE_ID",
    "z_candidates",
    "constraint_system",
    "nullspace_for_z",
    "tohpe_subspace",
    "apply_action",
    "reduction_upper_bound",
]

ORIGIN_TOHPE = "tohpe"
ORIGIN_FASTTODD = "fasttodd"

# pool-diversity identifier for candidates drawn from the common subspace
TOHPE_NULLSPACE_ID = -1


@dataclass(frozen=True)
class Action:
    """A (z, y) update with its realized column-count change.

    ``y`` has one coordinate per column of the matrix it was generated
    against; with ``append_z`` it carries one extra coordinate whose bit
    says whether a fresh z column joins the matrix before simplification.
    """

    z: BitVector
    y: BitVector
    predicted_reduction: int
    origin: str = ORIGIN_FASTTODD
    nullspace_id: int = 0
    append_z: bool = False


@dataclass(frozen=True)
class ConstraintSystem:
    """Row system whose kernel is the admissible space N_z for source_z."""

    rows: BitMatrix
    source_z: BitVector


def _constraint_rows(row_bits: Sequence[int], n: int, z: int, ncols: int) -> list[int]:
    """Admissibility rows for a fixed z, one per sorted index triple touching z.

    For the triple (a, b, c) the row is the XOR of the pairwise-AND rows,
    the single rows, and the all-ones vector, each gated by the matching
    monomial in z.  The kernel of the full set is exactly the set of y for
    which P xor z*y^T keeps every tensor entry (validated against the
    brute-force oracle in the tests).  Duplicate rows are folded.
    """
    ones = (1 << ncols) - 1
    pair = [[0] * n for _ in range(n)]
    for a in range(n):
        ra = row_bits[a]
        for b in range(a, n):
            pair[a][b] = ra & row_bits[b]
    out: set[int] = set()
    zbits = [(z >> i) & 1 for i in range(n)]
    for a in range(n):
        za = zbits[a]
        for b in range(a, n):
            zb = zbits[b]
            for c in range(b, n):
                zc = zbits[c]
                if not (za or zb or zc):
                    continue
                r = 0
                if za:
                    r ^= pair[b][c]
                if zb:
                    r ^= pair[a][c]
                if zc:
                    r ^= pair[a][b]
                if za and zb:
                    r ^= row_bits[c]
                if za and zc:
                    r ^= row_bits[b]
                if zb and zc:
                    r ^= row_bits[a]
                if za and zb and zc:
                    r ^= ones
                if r:
                    out.add(r)
    return sorted(out)


def _rows_for(p: ParityMatrix, z: int, append_z: bool) -> tuple[list[int], int]:
    m = p.column_count()
    row_bits = p.row_bits()
    if append_z:
        for a in range(p.n):
            if (z >> a) & 1:
                row_bits[a] |= 1 << m
        m += 1
    return _constraint_rows(row_bits, p.n, z, m), m


def constraint_system(p: ParityMatrix, z: BitVector, append_z: bool = False) -> ConstraintSystem:
    if z.n != p.n:
        raise ValueError(f"z length {z.n} != qubit count {p.n}")
    rows, ncols = _rows_for(p, z.bits, append_z)
    mat = BitMatrix(len(rows), ncols, [BitVector(ncols, r) for r in rows])
    return ConstraintSystem(rows=mat, source_z=z.copy())


def _nullspace_for_z_bits(p: ParityMatrix, z: int, append_z: bool = False) -> list[int]:
    rows, ncols = _rows_for(p, z, append_z)
    return _nullspace_ints(rows, ncols)


def nullspace_for_z(p: ParityMatrix, z: BitVector, append_z: bool = False) -> list[BitVector]:
    """Basis of the admissible space N_z; spans all of F2^m when z = 0.

    With ``append_z`` the system is solved for the matrix extended by a z
    column, which admits updates flipping an odd number of columns; see
    apply_action for how the extra coordinate is applied.
    """
    if z.n != p.n:
        raise ValueError(f"z length {z.n} != qubit count {p.n}")
    ncols = p.column_count() + (1 if append_z else 0)
    return [BitVector(ncols, v) for v in _nullspace_for_z_bits(p, z.bits, append_z)]


def _tohpe_rows(p: ParityMatrix) -> list[int]:
    row_bits = p.row_bits()
    n = p.n
    m = p.column_count()
    out: set[int] = set()
    for a in range(n):
        ra = row_bits[a]
        for b in range(a, n):
            r = ra & row_bits[b]
            if r:
                out.add(r)
    if m:
        out.add((1 << m) - 1)
    return sorted(out)


def tohpe_subspace(p: ParityMatrix) -> list[BitVector]:
    """Basis of the z-independent admissible subspace (contained in every N_z).

    Its rows are every pairwise-AND of matrix rows (covering the single rows)
    plus the all-ones vector, so each per-z constraint row is a combination
    of them; any vector here preserves the tensor for every z.
    """
    m = p.column_count()
    if m == 0:
        return []
    return [BitVector(m, v) for v in _nullspace_ints(_tohpe_rows(p), m)]


def _z_candidates_bits(cols: Sequence[int]) -> list[int]:
    seen: set[int] = set()
    out: list[int] = []
    for c in cols:
        if c and c not in seen:
            seen.add(c)
            out.append(c)
    mm = len(cols)
    for i in range(mm):
        ci = cols[i]
        for j in range(i + 1, mm):
            v = ci ^ cols[j]
            if v and v not in seen:
                seen.add(v)
                out.append(v)
    return out


def z_candidates(p: ParityMatrix) -> list[BitVector]:
    """Deduplicated {col_i} then {col_i xor col_j, i<j}, zero excluded, in scan order."""
    return [BitVector(p.n, v) for v in _z_candidates_bits(p.col_bits)]


def _updated_cols(cols: Sequence[int], z: int, y: int, append_z: bool) -> list[int]:
    out = [c ^ z if (y >> j) & 1 else c for j, c in enumerate(cols)]
    if append_z and (y >> len(cols)) & 1:
        out.append(z)
    return out


def _updated_count(cols: Sequence[int], z: int, y: int, append_z: bool = False) -> int:
    """Column count of simplify(P xor z*y^T) without materializing the matrix."""
    counts: dict[int, int] = {}
    for j, c in enumerate(cols):
        if (y >> j) & 1:
            c ^= z
        counts[c] = counts.get(c, 0) + 1
    if append_z and (y >> len(cols)) & 1:
        counts[z] = counts.get(z, 0) + 1
    total = 0
    for v, k in counts.items():
        if v and k & 1:
            total += 1
    return total


def apply_action(p: ParityMatrix, a: Action) -> ParityMatrix:
    """simplify(P xor z*y^T), appending a z column first when the action says so."""
    if a.z.n != p.n:
        raise ValueError(f"z length {a.z.n} != qubit count {p.n}")
    expected = p.column_count() + (1 if a.append_z else 0)
    if a.y.n != expected:
        raise ValueError(f"y length {a.y.n} != {expected}")
    cols = _updated_cols(p.col_bits, a.z.bits, a.y.bits, a.append_z)
    return ParityMatrix(p.n, _simplify_cols(cols))


def _reduction_upper_bound_bits(cols: Sequence[int], z: int) -> int:
    cnt = Counter(cols)
    pairs = sum(k * cnt.get(v ^ z, 0) for v, k in cnt.items()) // 2
    return 2 * pairs + cnt.get(z, 0)


def reduction_upper_bound(p: ParityMatrix, z: BitVector) -> int:
    """2 * #(column pairs XOR-ing to z) + #(columns equal to z); heuristic cap, z nonzero."""
    if z.n != p.n:
        raise ValueError(f"z length {z.n} != qubit count {p.n}")
    if z.bits == 0:
        raise ValueError("z must be nonzero")
    return _reduction_upper_bound_bits(p.col_bits, z.bits)
