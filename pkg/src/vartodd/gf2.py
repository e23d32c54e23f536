"""Packed linear algebra over GF(2): bit vectors, bit matrices, elimination, kernels."""

from __future__ import annotations

__all__ = [
    "BitVector",
    "BitMatrix",
    "xor_in_place",
    "and_popcount_parity",
    "rank",
    "nullspace_basis",
]


class BitVector:
    """Length-n vector over GF(2) packed into a Python int.

    Bit i sits at integer weight 2**i, so the payload is little-endian
    within each machine word when serialized.  Bits at positions >= n are
    always zero; constructors reject payloads that violate this.
    """

    __slots__ = ("n", "bits")

    def __init__(self, n: int, bits: int = 0):
        if n < 0:
            raise ValueError("length must be non-negative")
        if bits < 0 or bits >> n:
            raise ValueError(f"payload has bits set at positions >= {n}")
        self.n = n
        self.bits = bits

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls(n, 0)

    @classmethod
    def from_string(cls, s: str) -> "BitVector":
        """Parse '1010' with character i giving bit i."""
        if not s:
            return cls(0, 0)
        if set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        return cls(len(s), int(s[::-1], 2))

    @classmethod
    def from_bits(cls, bits) -> "BitVector":
        acc = 0
        n = 0
        for b in bits:
            if b:
                acc |= 1 << n
            n += 1
        return cls(n, acc)

    def to01(self) -> str:
        if self.n == 0:
            return ""
        return format(self.bits, f"0{self.n}b")[::-1]

    def copy(self) -> "BitVector":
        return BitVector(self.n, self.bits)

    def bit(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return (self.bits >> i) & 1

    def set_bit(self, i: int, value: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(i)
        if value:
            self.bits |= 1 << i
        else:
            self.bits &= ~(1 << i)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def is_zero(self) -> bool:
        return self.bits == 0

    def dot(self, other: "BitVector") -> int:
        """Inner product over GF(2): parity of the AND popcount."""
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} != {other.n}")
        return (self.bits & other.bits).bit_count() & 1

    def __len__(self) -> int:
        return self.n

    def __xor__(self, other: "BitVector") -> "BitVector":
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} != {other.n}")
        return BitVector(self.n, self.bits ^ other.bits)

    def __and__(self, other: "BitVector") -> "BitVector":
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} != {other.n}")
        return BitVector(self.n, self.bits & other.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.n == other.n and self.bits == other.bits

    def __hash__(self) -> int:
        # stable only while the vector is not mutated, per the sharing contract
        return hash((self.n, self.bits))

    def __repr__(self) -> str:
        return f"BitVector('{self.to01()}')"


def xor_in_place(a: BitVector, b: BitVector) -> BitVector:
    """a := a XOR b; returns a.  Lengths must match."""
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} != {b.n}")
    a.bits ^= b.bits
    return a


def and_popcount_parity(a: BitVector, b: BitVector) -> int:
    """popcount(a AND b) mod 2.  Lengths must match."""
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} != {b.n}")
    return (a.bits & b.bits).bit_count() & 1


class BitMatrix:
    """Row-major binary matrix; every row is a BitVector of length cols."""

    __slots__ = ("rows", "cols", "row_data")

    def __init__(self, rows: int, cols: int, row_data=None):
        if rows < 0 or cols < 0:
            raise ValueError("negative dimensions")
        if row_data is None:
            row_data = [BitVector(cols) for _ in range(rows)]
        else:
            row_data = list(row_data)
            if len(row_data) != rows:
                raise ValueError(f"expected {rows} rows, got {len(row_data)}")
            for r in row_data:
                if r.n != cols:
                    raise ValueError(f"row length {r.n} != cols {cols}")
        self.rows = rows
        self.cols = cols
        self.row_data = row_data

    @classmethod
    def from_rows(cls, row_data, cols: int | None = None) -> "BitMatrix":
        row_data = list(row_data)
        if cols is None:
            if not row_data:
                raise ValueError("cannot infer cols from zero rows")
            cols = row_data[0].n
        return cls(len(row_data), cols, row_data)

    @classmethod
    def from_strings(cls, lines) -> "BitMatrix":
        return cls.from_rows([BitVector.from_string(s) for s in lines])

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls(n, n, [BitVector(n, 1 << i) for i in range(n)])

    def row_bits(self) -> list[int]:
        return [r.bits for r in self.row_data]

    def column(self, j: int) -> BitVector:
        """Materialize column j as a BitVector of length rows."""
        if not 0 <= j < self.cols:
            raise IndexError(j)
        acc = 0
        for i, r in enumerate(self.row_data):
            if (r.bits >> j) & 1:
                acc |= 1 << i
        return BitVector(self.rows, acc)

    def set_column(self, j: int, v: BitVector) -> None:
        if not 0 <= j < self.cols:
            raise IndexError(j)
        if v.n != self.rows:
            raise ValueError(f"column length {v.n} != rows {self.rows}")
        for i, r in enumerate(self.row_data):
            r.set_bit(j, (v.bits >> i) & 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and self.row_data == other.row_data
        )

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"


def _rref(rows: list[int], ncols: int) -> tuple[list[int], list[int]]:
    """Reduced row echelon form over GF(2).

    Pivoting is a row swap on the leftmost column not yet used, which keeps
    the output deterministic.  Returns (reduced rows, pivot column list).
    """
    work = list(rows)
    pivots: list[int] = []
    r = 0
    nrows = len(work)
    for c in range(ncols):
        sel = -1
        for i in range(r, nrows):
            if (work[i] >> c) & 1:
                sel = i
                break
        if sel < 0:
            continue
        work[r], work[sel] = work[sel], work[r]
        wr = work[r]
        for i in range(nrows):
            if i != r and (work[i] >> c) & 1:
                work[i] ^= wr
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return work, pivots


def _rank_ints(rows: list[int], ncols: int) -> int:
    return len(_rref(rows, ncols)[1])


def _nullspace_ints(rows: list[int], ncols: int) -> list[int]:
    """Kernel basis of the row system, one vector per free column.

    Vectors come out in increasing free-column order so downstream candidate
    enumeration is reproducible.
    """
    rref, pivots = _rref(rows, ncols)
    pivot_set = set(pivots)
    basis: list[int] = []
    for free in range(ncols):
        if free in pivot_set:
            continue
        v = 1 << free
        for ri, pc in enumerate(pivots):
            if (rref[ri] >> free) & 1:
                v |= 1 << pc
        basis.append(v)
    return basis


def rank(m: BitMatrix) -> int:
    """GF(2) rank via Gaussian elimination."""
    return _rank_ints(m.row_bits(), m.cols)


def nullspace_basis(m: BitMatrix) -> list[BitVector]:
    """Basis of {y : m @ y = 0 over GF(2)}; empty iff the kernel is trivial."""
    return [BitVector(m.cols, v) for v in _nullspace_ints(m.row_bits(), m.cols)]
