"""Lattice parameters, bit patterns and the flat (order, offset, pattern) layout.

Sites are numbered ``n-1`` (entry side) down to ``0`` (exit side).  A pattern
``b`` of length ``l`` placed at offset ``d`` describes sites ``d .. d+l-1``;
bit ``j`` of ``b`` is the occupancy of site ``d+j``.  A full configuration of
the lattice is therefore the integer whose bit ``i`` is the occupancy of site
``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

MAX_MASTER_SITES = 20
MAX_PATTERN_BITS = 64


@dataclass(frozen=True)
class LatticeParams:
    """Rates of an open TASEP lattice with ``n`` sites.

    ``h[i-1]`` is the hop rate from site ``i`` to site ``i-1`` (``i = 1..n-1``),
    so ``hop(i)`` is the 1-based accessor matching the usual ``h_i`` notation.
    """

    n: int
    alpha: float
    beta: float
    h: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if len(self.h) != self.n - 1:
            raise InvalidInputError(
                f"h must hold n-1={self.n - 1} hop rates, got {len(self.h)}")
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"{name} must be positive and finite, got {value!r}")
        if any(not np.isfinite(v) or v <= 0 for v in self.h):
            raise InvalidInputError("all hop rates h must be positive and finite")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def uniform(cls, n: int, alpha: float, beta: float, hop: float = 1.0) -> "LatticeParams":
        return cls(n, alpha, beta, (hop,) * (n - 1))

    def hop(self, i: int) -> float:
        """Rate ``h_i`` of the jump from site ``i`` into site ``i-1``."""
        if not 1 <= i <= self.n - 1:
            raise InvalidInputError(f"no hop rate h_{i} on a lattice with n={self.n}")
        return self.h[i - 1]

    @property
    def c(self) -> float:
        """Sum of all rates; bounds the outflow of every marginal."""
        return self.alpha + self.beta + sum(self.h)

    @property
    def homogeneous(self) -> bool:
        return all(v == 1.0 for v in self.h)

    @property
    def hop_array(self) -> np.ndarray:
        return np.asarray(self.h, dtype=float)


# --------------------------------------------------------------------------
# bit patterns

@dataclass(frozen=True)
class BitPattern:
    """Binary pattern with an explicit length; leading zeros are significant."""

    length: int
    bits: int = 0

    def __post_init__(self):
        if self.length < 0 or self.length > MAX_PATTERN_BITS:
            raise InvalidInputError(f"pattern length {self.length} out of range")
        if self.bits < 0 or self.bits >= (1 << self.length):
            raise InvalidInputError(
                f"bits {self.bits} do not fit into {self.length} digits")

    @classmethod
    def from_string(cls, s: str) -> "BitPattern":
        s = s.strip()
        if s in ("", "∅"):
            return EMPTY
        if any(ch not in "01" for ch in s):
            raise InvalidInputError(f"not a binary string: {s!r}")
        return cls(len(s), int(s, 2))

    def bit(self, j: int) -> int:
        return (self.bits >> j) & 1

    def __str__(self):
        return format(self.bits, f"0{self.length}b") if self.length else "∅"


EMPTY = BitPattern(0, 0)


def left_truncate(b: BitPattern, i: int) -> BitPattern:
    """Drop the ``i`` leftmost (most significant) digits."""
    if i < 1:
        raise InvalidInputError("truncation needs i >= 1")
    k = max(b.length - i, 0)
    return BitPattern(k, b.bits & ((1 << k) - 1))


def right_truncate(b: BitPattern, i: int) -> BitPattern:
    """Drop the ``i`` rightmost (least significant) digits."""
    if i < 1:
        raise InvalidInputError("truncation needs i >= 1")
    k = max(b.length - i, 0)
    return BitPattern(k, b.bits >> i if k else 0)


def left_crop(b: BitPattern, i: int) -> BitPattern:
    """Keep only the ``i`` leftmost digits."""
    if not 0 <= i <= b.length:
        raise InvalidInputError(f"cannot crop {i} digits from a pattern of length {b.length}")
    return BitPattern(i, b.bits >> (b.length - i))


def right_crop(b: BitPattern, i: int) -> BitPattern:
    """Keep only the ``i`` rightmost digits."""
    if not 0 <= i <= b.length:
        raise InvalidInputError(f"cannot crop {i} digits from a pattern of length {b.length}")
    return BitPattern(i, b.bits & ((1 << i) - 1))


def concat(a: BitPattern, b: BitPattern) -> BitPattern:
    """Concatenate with ``a`` in the high digits."""
    return BitPattern(a.length + b.length, (a.bits << b.length) | b.bits)


# --------------------------------------------------------------------------
# flat layout

def layout_size(n: int, max_order: int) -> int:
    return sum((n - k + 1) << k for k in range(1, max_order + 1))


@dataclass(frozen=True)
class IndexLayout:
    """Bijection between ``(l, d, b)`` triples and flat vector offsets.

    Blocks are stored with ``l`` ascending, then ``d`` ascending, then ``b``
    ascending, so the block of order ``l`` reshapes to ``(n-l+1, 2**l)``.
    A layout of order ``m`` is a prefix of every layout of higher order.
    """

    n: int
    max_order: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("n must be positive")
        if not 1 <= self.max_order <= self.n:
            raise InvalidInputError(
                f"max_order must lie in [1, {self.n}], got {self.max_order}")

    @cached_property
    def offsets(self) -> tuple:
        out = [0, 0]
        for k in range(1, self.max_order + 1):
            out.append(out[-1] + ((self.n - k + 1) << k))
        # offsets[l] is the start of order l; offsets[max_order + 1] is the size
        return tuple(out)

    @property
    def size(self) -> int:
        return self.offsets[self.max_order + 1]

    def offset(self, order: int) -> int:
        return self.offsets[order]

    def block(self, order: int) -> slice:
        return slice(self.offsets[order], self.offsets[order + 1])

    def block_shape(self, order: int) -> tuple:
        return (self.n - order + 1, 1 << order)

    def flat(self, order: int, d: int, b) -> int:
        bits = _bits_of(b, order)
        if not 1 <= order <= self.max_order:
            raise InvalidInputError(f"order {order} outside [1, {self.max_order}]")
        if not 0 <= d <= self.n - order:
            raise InvalidInputError(f"offset d={d} outside [0, {self.n - order}]")
        if not 0 <= bits < (1 << order):
            raise InvalidInputError(f"pattern {bits} has more than {order} digits")
        return self.offsets[order] + (d << order) + bits

    def unflatten(self, index: int) -> tuple:
        """Return ``(l, d, BitPattern)`` for a flat offset."""
        if not 0 <= index < self.size:
            raise InvalidInputError(f"flat index {index} outside [0, {self.size})")
        order = int(np.searchsorted(self.offsets, index, side="right")) - 1
        rel = index - self.offsets[order]
        return order, rel >> order, BitPattern(order, rel & ((1 << order) - 1))

    def triples(self):
        """Iterate ``(l, d, bits)`` in flat order."""
        for order in range(1, self.max_order + 1):
            for d in range(self.n - order + 1):
                for bits in range(1 << order):
                    yield order, d, bits

    def closed_form_size(self) -> int:
        """Closed-form dimension; equals :attr:`size`."""
        n, m = self.n, self.max_order
        if m == n:
            return (1 << (n + 2)) - 2 * n - 4
        return (n - m + 2) * (1 << (m + 1)) - 2 * n - 4


def _bits_of(b, order: int) -> int:
    if isinstance(b, BitPattern):
        if b.length != order:
            raise InvalidInputError(f"pattern {b} has length {b.length}, expected {order}")
        return b.bits
    if isinstance(b, str):
        return _bits_of(BitPattern.from_string(b), order)
    return int(b)


def parse_hops(spec: str | Sequence[float], n: int) -> tuple:
    """Parse ``uniform:<v>`` or a comma separated list of ``n-1`` hop rates."""
    if not isinstance(spec, str):
        return tuple(float(v) for v in spec)
    spec = spec.strip()
    if spec.startswith("uniform:"):
        return (float(spec.split(":", 1)[1]),) * (n - 1)
    values = tuple(float(v) for v in spec.split(",") if v.strip())
    if len(values) != n - 1:
        raise InvalidInputError(f"--h lists {len(values)} rates, expected n-1={n - 1}")
    return values
