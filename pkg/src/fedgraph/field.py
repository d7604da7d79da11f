"""Arithmetic over a prime field for quantized secure aggregation.

The default modulus is the Mersenne prime 2^61 - 1, which leaves ample
headroom for sums of clamped fixed-point updates. Vectors are plain
Python integer lists; Python's arbitrary-precision integers keep every
intermediate product exact.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateEvaluationPoint, InsufficientShares

MERSENNE61 = (1 << 61) - 1


@dataclass
class FieldVector:
    values: list
    p: int = MERSENNE61

    def __post_init__(self):
        self.values = [int(v) % self.p for v in self.values]

    def __len__(self):
        return len(self.values)

    def __add__(self, other):
        self._check(other)
        return FieldVector(
            [(a + b) % self.p for a, b in zip(self.values, other.values)], self.p
        )

    def __sub__(self, other):
        self._check(other)
        return FieldVector(
            [(a - b) % self.p for a, b in zip(self.values, other.values)], self.p
        )

    def scale(self, c: int) -> "FieldVector":
        c = int(c) % self.p
        return FieldVector([(a * c) % self.p for a in self.values], self.p)

    def _check(self, other):
        if self.p != other.p or len(self) != len(other):
            raise ValueError("field or length mismatch")

    def to_bytes(self) -> bytes:
        """u32 LE length prefix, then little-endian u64 residues."""
        return struct.pack("<I", len(self.values)) + b"".join(
            struct.pack("<Q", v) for v in self.values
        )

    @classmethod
    def from_bytes(cls, data: bytes, p: int = MERSENNE61) -> "FieldVector":
        (n,) = struct.unpack_from("<I", data, 0)
        vals = list(struct.unpack_from(f"<{n}Q", data, 4))
        return cls(vals, p)


def expand_seed(seed: bytes, length: int, p: int = MERSENNE61) -> FieldVector:
    """Counter-mode expansion of a seed to uniform field residues.

    u64 draws are rejected at or above the largest multiple of p below
    2^64, then reduced, so every residue is exactly uniform.
    """
    limit = (1 << 64) // p * p
    vals = []
    counter = 0
    while len(vals) < length:
        block = hashlib.sha256(seed + counter.to_bytes(8, "little")).digest()
        counter += 1
        for off in range(0, 32, 8):
            v = int.from_bytes(block[off:off + 8], "little")
            if v < limit:
                vals.append(v % p)
                if len(vals) == length:
                    break
    return FieldVector(vals, p)


def random_vector(length: int, rng: np.random.Generator, p: int = MERSENNE61) -> FieldVector:
    return FieldVector([int(v) for v in rng.integers(0, p, size=length)], p)


def shamir_share(secret: FieldVector, n: int, t: int,
                 rng: np.random.Generator) -> list[tuple[int, FieldVector]]:
    """Per-coordinate degree-(t-1) polynomials with the secret as constant
    term, evaluated at x = 1..n."""
    p = secret.p
    if not (1 <= t <= n < p):
        raise ValueError(f"need 1 <= T <= N < p, got T={t}, N={n}")
    d = len(secret)
    coeffs = [random_vector(d, rng, p) for _ in range(t - 1)]
    shares = []
    for x in range(1, n + 1):
        vals = []
        for c in range(d):
            acc = 0  # Horner from the highest coefficient down
            for coef in reversed(coeffs):
                acc = (acc + coef.values[c]) * x % p
            vals.append((acc + secret.values[c]) % p)
        shares.append((x, FieldVector(vals, p)))
    return shares


def shamir_reconstruct(shares: list[tuple[int, FieldVector]], t: int) -> FieldVector:
    """Lagrange interpolation at 0 from any >= t shares."""
    if len(shares) < t:
        raise InsufficientShares(f"{len(shares)} shares < threshold {t}")
    shares = shares[:t]
    xs = [x for x, _ in shares]
    if len(set(xs)) != len(xs):
        raise DuplicateEvaluationPoint(f"duplicate x in {xs}")
    p = shares[0][1].p
    d = len(shares[0][1])
    lams = []
    for j, xj in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m != j:
                num = num * xm % p
                den = den * (xm - xj) % p
        lams.append(num * pow(den, p - 2, p) % p)
    out = [0] * d
    for lam, (_, sv) in zip(lams, shares):
        for c in range(d):
            out[c] = (out[c] + lam * sv.values[c]) % p
    return FieldVector(out, p)
