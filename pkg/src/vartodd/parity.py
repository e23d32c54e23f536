"""Parity matrices, the cubic signature tensor, odd-multiplicity simplification, text I/O."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .gf2 import BitVector

__all__ = [
    "ParityMatrix",
    "SignatureTensor",
    "signature_tensor",
    "simplify",
    "tensors_equal",
    "density",
    "MatrixFormatError",
    "parse_matrix",
    "format_matrix",
    "read_matrix_file",
    "write_matrix_file",
]


class ParityMatrix:
    """n-row binary matrix whose columns are the parities carrying odd phase.

    Columns are stored packed (bit a of column j = entry in row a).  The
    column count is the working T-count proxy.  Instances are immutable.
    """

    __slots__ = ("n", "col_bits")

    def __init__(self, n: int, columns: Iterable = ()):
        if n < 0:
            raise ValueError("qubit count must be non-negative")
        cols = []
        for c in columns:
            if isinstance(c, BitVector):
                if c.n != n:
                    raise ValueError(f"column length {c.n} != {n}")
                cols.append(c.bits)
            else:
                c = int(c)
                if c < 0 or c >> n:
                    raise ValueError(f"column value out of range for {n} rows")
                cols.append(c)
        self.n = n
        self.col_bits: tuple[int, ...] = tuple(cols)

    @classmethod
    def from_strings(cls, n: int, columns: Sequence[str]) -> "ParityMatrix":
        return cls(n, [BitVector.from_string(s) for s in columns])

    def column_count(self) -> int:
        return len(self.col_bits)

    def column(self, j: int) -> BitVector:
        return BitVector(self.n, self.col_bits[j])

    def columns(self) -> list[BitVector]:
        return [BitVector(self.n, c) for c in self.col_bits]

    def row_bits(self) -> list[int]:
        """Rows as packed ints of length column_count (bit j = entry in column j)."""
        rows = [0] * self.n
        for j, c in enumerate(self.col_bits):
            bit = 1 << j
            while c:
                low = c & -c
                rows[low.bit_length() - 1] |= bit
                c ^= low
        return rows

    def ones_count(self) -> int:
        return sum(c.bit_count() for c in self.col_bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParityMatrix):
            return NotImplemented
        return self.n == other.n and self.col_bits == other.col_bits

    def __hash__(self) -> int:
        return hash((self.n, self.col_bits))

    def __repr__(self) -> str:
        return f"ParityMatrix(n={self.n}, m={len(self.col_bits)})"


class SignatureTensor:
    """Symmetric n*n*n GF(2) tensor, packed one bit per sorted index triple."""

    __slots__ = ("n", "bits")

    def __init__(self, n: int, bits: int = 0):
        if n < 0:
            raise ValueError("dimension must be non-negative")
        size = n * (n + 1) * (n + 2) // 6
        if bits < 0 or bits >> size:
            raise ValueError("payload has bits beyond the triple range")
        self.n = n
        self.bits = bits

    def entry(self, a: int, b: int, c: int) -> int:
        a, b, c = sorted((a, b, c))
        if not 0 <= a <= c < self.n:
            raise IndexError((a, b, c))
        return (self.bits >> _triple_index(self.n, a, b, c)) & 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignatureTensor):
            return NotImplemented
        return self.n == other.n and self.bits == other.bits

    def __hash__(self) -> int:
        return hash((self.n, self.bits))

    def __repr__(self) -> str:
        return f"SignatureTensor(n={self.n})"


def _triple_index(n: int, a: int, b: int, c: int) -> int:
    """Lexicographic position of the sorted triple (a, b, c) among all such triples."""
    idx = 0
    for x in range(a):
        k = n - x
        idx += k * (k + 1) // 2
    for y in range(a, b):
        idx += n - y
    return idx + (c - b)


def signature_tensor(p: ParityMatrix) -> SignatureTensor:
    """A(a,b,c) = sum_j P(a,j) P(b,j) P(c,j) mod 2 over all sorted triples."""
    n = p.n
    rows = p.row_bits()
    acc = 0
    idx = 0
    for a in range(n):
        ra = rows[a]
        for b in range(a, n):
            rab = ra & rows[b]
            for c in range(b, n):
                if (rab & rows[c]).bit_count() & 1:
                    acc |= 1 << idx
                idx += 1
    return SignatureTensor(n, acc)


def tensors_equal(a: SignatureTensor, b: SignatureTensor) -> bool:
    """Exact equality over all triples; dimensions must match."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} != {b.n}")
    return a.bits == b.bits


def _simplify_cols(cols: Sequence[int]) -> list[int]:
    """Drop zero columns and cancel duplicates in pairs; keep first occurrences in order."""
    counts = Counter(cols)
    out: list[int] = []
    seen: set[int] = set()
    for c in cols:
        if c and counts[c] & 1 and c not in seen:
            out.append(c)
            seen.add(c)
    return out


def simplify(p: ParityMatrix) -> ParityMatrix:
    """Remove zero columns and duplicate columns in pairs (tensor-preserving, idempotent)."""
    return ParityMatrix(p.n, _simplify_cols(p.col_bits))


def density(p: ParityMatrix) -> float:
    """Fraction of one-bits, ones / (n * m); 0.0 for the empty matrix by convention."""
    m = p.column_count()
    if m == 0 or p.n == 0:
        return 0.0
    return p.ones_count() / (p.n * m)


# ---------------------------------------------------------------------------
# Text interchange format
# ---------------------------------------------------------------------------
#
# First non-comment line is "n m"; then exactly n lines of m characters from
# {0,1}, giving row a of the matrix.  Lines starting with '#' are comments
# and may appear anywhere.  Trailing whitespace is forbidden.


class MatrixFormatError(ValueError):
    """Raised when parity-matrix text is malformed."""


def parse_matrix(text: str) -> ParityMatrix:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    body = []
    for ln, line in enumerate(lines, 1):
        if line != line.rstrip():
            raise MatrixFormatError(f"line {ln}: trailing whitespace")
        if line.startswith("#"):
            continue
        body.append((ln, line))
    if not body:
        raise MatrixFormatError("missing header line 'n m'")
    ln, header = body[0]
    parts = header.split()
    if len(parts) != 2 or not all(s.isdigit() for s in parts):
        raise MatrixFormatError(f"line {ln}: expected header 'n m', got {header!r}")
    n, m = int(parts[0]), int(parts[1])
    rows = body[1:]
    if len(rows) != n:
        raise MatrixFormatError(f"expected {n} row lines, found {len(rows)}")
    row_ints = []
    for ln, line in rows:
        if len(line) != m or set(line) - {"0", "1"}:
            raise MatrixFormatError(f"line {ln}: expected {m} characters from {{0,1}}")
        row_ints.append(int(line[::-1], 2) if line else 0)
    cols = []
    for j in range(m):
        c = 0
        for a in range(n):
            if (row_ints[a] >> j) & 1:
                c |= 1 << a
        cols.append(c)
    return ParityMatrix(n, cols)


def format_matrix(p: ParityMatrix, comments: Sequence[str] = ()) -> str:
    out = [f"# {c}" if not c.startswith("#") else c for c in comments]
    m = p.column_count()
    out.append(f"{p.n} {m}")
    rows = p.row_bits()
    for r in rows:
        out.append(format(r, f"0{m}b")[::-1] if m else "")
    return "\n".join(out) + "\n"


def read_matrix_file(path) -> ParityMatrix:
    with open(path, "r", encoding="ascii") as fh:
        return parse_matrix(fh.read())


def write_matrix_file(p: ParityMatrix, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_matrix(p, comments))
