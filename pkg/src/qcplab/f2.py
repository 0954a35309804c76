"""Exact linear algebra over GF(2) with bit-packed vectors.

Vectors of length n are packed into python ints: coordinate i is bit
(n-1-i), so the packed value doubles as the computational-basis index of
|v> in an n-qubit register. All subspaces are kept in reduced row echelon
form, which is the unique canonical representative of the set of vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DimensionError, ResourceLimitError

ENUMERATION_CAP = 20  # max subspace dim for enumerate()


@dataclass(frozen=True)
class F2Vector:
    """A vector in GF(2)^n, packed into an int (coordinate 0 = MSB)."""

    n: int
    bits: int

    def __post_init__(self):
        if self.n < 0 or self.bits < 0 or self.bits >> self.n:
            raise DimensionError(f"packed value {self.bits:#x} does not fit in {self.n} bits")

    @classmethod
    def from_coords(cls, coords) -> "F2Vector":
        bits = 0
        for c in coords:
            bits = (bits << 1) | (int(c) & 1)
        return cls(len(tuple(coords)), bits)

    @classmethod
    def zero(cls, n: int) -> "F2Vector":
        return cls(n, 0)

    def coords(self) -> tuple[int, ...]:
        return tuple((self.bits >> (self.n - 1 - i)) & 1 for i in range(self.n))

    def dot(self, other: "F2Vector") -> int:
        if self.n != other.n:
            raise DimensionError(f"dot of length-{self.n} and length-{other.n} vectors")
        return bin(self.bits & other.bits).count("1") & 1

    def __xor__(self, other: "F2Vector") -> "F2Vector":
        if self.n != other.n:
            raise DimensionError("xor of vectors with different lengths")
        return F2Vector(self.n, self.bits ^ other.bits)

    def is_zero(self) -> bool:
        return self.bits == 0

    def __repr__(self):
        return f"F2Vector({''.join(map(str, self.coords()))})"


def _rref(rows: list[int]) -> tuple[int, ...]:
    """Reduced row echelon form of the span of packed rows, sorted by pivot."""
    pivot_rows: dict[int, int] = {}  # leading bit position -> row
    for r in rows:
        while r:
            lead = r.bit_length() - 1
            if lead in pivot_rows:
                r ^= pivot_rows[lead]
            else:
                pivot_rows[lead] = r
                break
    leads = sorted(pivot_rows, reverse=True)
    # back-substitution: clear each pivot bit from every row above it
    for i, lead in enumerate(leads):
        for upper in leads[:i]:
            if (pivot_rows[upper] >> lead) & 1:
                pivot_rows[upper] ^= pivot_rows[lead]
    return tuple(pivot_rows[lead] for lead in leads)


@dataclass(frozen=True)
class F2Subspace:
    """A linear subspace of GF(2)^n held as a canonical (RREF) basis.

    Two F2Subspace values compare equal iff they are the same set of
    vectors. |S| = 2**dim.
    """

    n: int
    basis: tuple[int, ...]

    def __post_init__(self):
        if any(b >> self.n for b in self.basis):
            raise DimensionError("basis row wider than ambient dimension")
        if self.basis != _rref(list(self.basis)):
            raise DimensionError("basis rows are not in canonical RREF form")

    @classmethod
    def from_spanning(cls, n: int, rows) -> "F2Subspace":
        rows = [int(r) for r in rows]
        if any(r < 0 or r >> n for r in rows):
            raise DimensionError(f"spanning row does not fit in {n} bits")
        return cls(n, _rref(rows))

    @classmethod
    def from_vectors(cls, vectors) -> "F2Subspace":
        vectors = list(vectors)
        if not vectors:
            raise DimensionError("need at least one vector to infer the ambient dimension")
        n = vectors[0].n
        return cls.from_spanning(n, [v.bits for v in vectors])

    @classmethod
    def zero(cls, n: int) -> "F2Subspace":
        return cls(n, ())

    @classmethod
    def full(cls, n: int) -> "F2Subspace":
        return cls(n, tuple(1 << (n - 1 - i) for i in range(n)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def size(self) -> int:
        return 1 << self.dim

    def member(self, v: F2Vector) -> bool:
        """True iff v is in the subspace (the zero vector always is)."""
        if v.n != self.n:
            raise DimensionError(f"vector length {v.n} != ambient dimension {self.n}")
        return self.member_bits(v.bits)

    def member_bits(self, bits: int) -> bool:
        r = bits
        for row in self.basis:  # rows sorted by descending pivot: one pass reduces fully
            if r and (r >> (row.bit_length() - 1)) & 1:
                r ^= row
        return r == 0

    def dual(self) -> "F2Subspace":
        """Orthogonal complement: all y with x.y = 0 for every x in the subspace."""
        pivots = {row.bit_length() - 1 for row in self.basis}
        out = []
        for j in range(self.n):
            if j in pivots:
                continue
            w = 1 << j
            for row in self.basis:
                if (row >> j) & 1:
                    w |= 1 << (row.bit_length() - 1)
            out.append(w)
        return F2Subspace(self.n, _rref(out))

    def enumerate(self, cap: int | None = None) -> list[F2Vector]:
        """All 2**dim members, ordered lexicographically by coefficient vector."""
        return [F2Vector(self.n, bits) for bits in self.enumerate_bits(cap)]

    def enumerate_bits(self, cap: int | None = None) -> list[int]:
        cap = ENUMERATION_CAP if cap is None else cap
        if self.dim > cap:
            raise ResourceLimitError(
                f"enumeration of a dim-{self.dim} subspace exceeds the cap ({cap})"
            )
        d = self.dim
        out = [0] * (1 << d)
        for k in range(1 << d):
            acc = 0
            for i in range(d):
                if (k >> (d - 1 - i)) & 1:
                    acc ^= self.basis[i]
            out[k] = acc
        return out

    def indicator(self) -> np.ndarray:
        """Boolean membership mask over all 2**n packed values."""
        mask = np.zeros(1 << self.n, dtype=bool)
        mask[self.enumerate_bits()] = True
        return mask

    def __iter__(self) -> Iterator[F2Vector]:
        return iter(self.enumerate())

    def __contains__(self, v: F2Vector) -> bool:
        return self.member(v)

    def to_json(self) -> str:
        width = max(1, (self.n + 3) // 4)
        return json.dumps({"n": self.n, "basis": [f"{row:0{width}x}" for row in self.basis]})

    @classmethod
    def from_json(cls, text: str) -> "F2Subspace":
        obj = json.loads(text)
        return cls(int(obj["n"]), tuple(int(row, 16) for row in obj["basis"]))

    def __repr__(self):
        rows = ",".join(f"{row:0{max(1, self.n)}b}" for row in self.basis)
        return f"F2Subspace(n={self.n}, dim={self.dim}, rows=[{rows}])"


def rand_subspace(n: int, d: int, rng: np.random.Generator) -> F2Subspace:
    """A uniformly random d-dimensional subspace of GF(2)^n.

    Draws d x n matrices until one has full rank; every subspace has the
    same number of ordered bases, so the row space is uniform.
    """
    if d < 0 or d > n:
        raise DimensionError(f"cannot pick a dim-{d} subspace of GF(2)^{n}")
    if d == 0:
        return F2Subspace.zero(n)
    while True:
        rows = [int(rng.integers(0, 1 << n)) for _ in range(d)]
        basis = _rref(rows)
        if len(basis) == d:
            return F2Subspace(n, basis)


def all_subspaces(n: int, d: int | None = None) -> list[F2Subspace]:
    """Brute-force enumeration of subspaces of GF(2)^n (all dims, or one dim).

    Only intended for small n; used as an independent oracle in tests and
    for exhaustive checks.
    """
    if n > 6:
        raise ResourceLimitError("exhaustive subspace enumeration capped at n = 6")
    # grow spans breadth-first from the zero space; RREF keys dedupe
    seen: set[tuple[int, ...]] = {()}
    out = [F2Subspace.zero(n)]
    current = [()]
    while current:
        nxt = []
        for basis in current:
            space = F2Subspace(n, basis)
            members = set(space.enumerate_bits())
            for v in range(1, 1 << n):
                if v in members:
                    continue
                grown = _rref(list(basis) + [v])
                if grown not in seen:
                    seen.add(grown)
                    nxt.append(grown)
                    out.append(F2Subspace(n, grown))
        current = nxt
    if d is not None:
        out = [s for s in out if s.dim == d]
    return out


def gaussian_binomial(n: int, k: int) -> int:
    """Number of k-dimensional subspaces of GF(2)^n."""
    if k < 0 or k > n:
        return 0
    num = den = 1
    for i in range(k):
        num *= (1 << n) - (1 << i)
        den *= (1 << k) - (1 << i)
    return num // den
