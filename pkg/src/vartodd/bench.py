"""Benchmark instance generation and equivalence verification."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .parity import (
    ParityMatrix,
    SignatureTensor,
    density,
    signature_tensor,
    simplify,
    tensors_equal,
)

__all__ = [
    "DEFAULT_MODULI",
    "MultiplicationSpec",
    "trilinear_terms",
    "gen_gf2n",
    "gen_random",
    "VerifyReport",
    "verify",
]

# smallest irreducible polynomial of each degree, MSB-first bit strings
DEFAULT_MODULI: dict[int, str] = {
    2: "111",
    3: "1011",
    4: "10011",
    5: "100101",
    6: "1000011",
    7: "10000011",
    8: "100011011",
    9: "1000000011",
    10: "10000001001",
    11: "100000000101",
    12: "1000000001001",
    13: "10000000011011",
    14: "100000000100001",
    15: "1000000000000011",
    16: "10000000000101011",
}


def _poly_rem(a: int, b: int) -> int:
    db = b.bit_length() - 1
    while a and a.bit_length() - 1 >= db:
        a ^= b << (a.bit_length() - 1 - db)
    return a


def _is_irreducible(p: int, n: int) -> bool:
    """Trial division by every polynomial of degree 1..n//2."""
    if p.bit_length() - 1 != n:
        return False
    for d in range(1, n // 2 + 1):
        for q in range(1 << d, 1 << (d + 1)):
            if _poly_rem(p, q) == 0:
                return False
    return True


@dataclass(frozen=True)
class MultiplicationSpec:
    """Field multiplication instance: extension degree and reduction polynomial."""

    n: int
    modulus: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("extension degree must be >= 1")
        if self.modulus.bit_length() - 1 != self.n:
            raise ValueError(f"modulus degree must be exactly {self.n}")
        if not _is_irreducible(self.modulus, self.n):
            raise ValueError(f"modulus {self.modulus:#b} is reducible")

    @classmethod
    def from_bitstring(cls, n: int, bits: str | None = None) -> "MultiplicationSpec":
        if bits is None:
            if n not in DEFAULT_MODULI:
                raise ValueError(f"no default modulus for degree {n}")
            bits = DEFAULT_MODULI[n]
        if set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return cls(n=n, modulus=int(bits, 2))

    def modulus_bits(self) -> str:
        return format(self.modulus, "b")


def trilinear_terms(spec: MultiplicationSpec) -> list[tuple[int, int, int]]:
    """(i, j, k) triples where input monomial a_i * b_j feeds output digit c_k."""
    n = spec.n
    powers = []
    cur = 1
    for _ in range(2 * n - 1):
        powers.append(cur)
        cur <<= 1
        if cur >> n:
            cur ^= spec.modulus
    terms = []
    for i in range(n):
        for j in range(n):
            r = powers[i + j]
            for k in range(n):
                if (r >> k) & 1:
                    terms.append((i, j, k))
    return terms


def gen_gf2n(spec: MultiplicationSpec) -> tuple[ParityMatrix, SignatureTensor]:
    """Schoolbook multiplier as a 3n-qubit parity matrix plus its signature tensor.

    Every trilinear term (i, j, k) contributes the seven nonzero parities
    supported on wires {i, n+j, 2n+k}; the matrix is returned simplified and
    the tensor is the symmetrization of the term set.
    """
    n = spec.n
    raw_cols: list[int] = []
    for (i, j, k) in trilinear_terms(spec):
        wires = (i, n + j, 2 * n + k)
        for s in range(1, 8):
            c = 0
            for b in range(3):
                if (s >> b) & 1:
                    c |= 1 << wires[b]
            raw_cols.append(c)
    raw = ParityMatrix(3 * n, raw_cols)
    return simplify(raw), signature_tensor(raw)


def gen_random(n: int, m: int, seed: int) -> ParityMatrix:
    """m uniformly random nonzero columns over n rows, simplified; seed-deterministic."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    rng = random.Random(seed)
    cols = [rng.randrange(1, 1 << n) for _ in range(m)]
    return simplify(ParityMatrix(n, cols))


@dataclass(frozen=True)
class VerifyReport:
    """Equivalence verdict with the column counts, densities, and fitness gap."""

    equivalent: bool
    rho_a: int
    rho_b: int
    density_a: float
    density_b: float
    fitness_a: float
    fitness_b: float
    fitness_delta: float


def verify(a: ParityMatrix, b: ParityMatrix) -> VerifyReport:
    """Tensor-equality check of two matrices plus their score comparison."""
    if a.n != b.n:
        raise ValueError(f"qubit-count mismatch: {a.n} != {b.n}")
    eq = tensors_equal(signature_tensor(a), signature_tensor(b))
    fa = a.column_count() + density(a)
    fb = b.column_count() + density(b)
    return VerifyReport(
        equivalent=eq,
        rho_a=a.column_count(),
        rho_b=b.column_count(),
        density_a=density(a),
        density_b=density(b),
        fitness_a=fa,
        fitness_b=fb,
        fitness_delta=fa - fb,
    )
