"""Seeded k-wise independent hash families over the Mersenne field 2**61 - 1.

Evaluation is vectorized over numpy ``uint64`` arrays. Products of two field
elements need 122 bits, so multiplication splits operands into 32-bit halves
and folds using ``2**61 == 1 (mod p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MERSENNE_61 = (1 << 61) - 1
_P = np.uint64(MERSENNE_61)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_MASK64 = (1 << 64) - 1

DEGREE = {"pairwise": 1, "fourwise": 3}


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 finalizer; a bijection on 64-bit words."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *path: int | str) -> int:
    """Derive a child seed from ``master`` along a fixed path of labels.

    Equal master seeds and paths give equal children, so every hash function in
    a sketch is a pure function of the master seed.
    """
    s = splitmix64(master & _MASK64)
    for label in path:
        if isinstance(label, str):
            for ch in label.encode():
                s = splitmix64(s ^ ch)
        else:
            s = splitmix64(s ^ (int(label) & _MASK64))
    return s


def _reduce(x: np.ndarray) -> np.ndarray:
    x = (x & _P) + (x >> np.uint64(61))
    return x - np.where(x >= _P, _P, np.uint64(0))


def mulmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a * b mod (2**61 - 1)`` for uint64 arrays with entries below p."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a_hi, a_lo = a >> np.uint64(32), a & _MASK32
    b_hi, b_lo = b >> np.uint64(32), b & _MASK32
    # a_hi, b_hi < 2**29, so every partial sum below stays under 2**64
    acc = (a_hi * b_hi) << np.uint64(3)  # 2**64 == 8 (mod p)
    mid = a_hi * b_lo
    mid += a_lo * b_hi  # < 2**62
    acc += mid >> np.uint64(29)
    mid &= _MASK29
    mid <<= np.uint64(32)
    acc += mid
    lo = a_lo * b_lo
    acc += lo & _P
    lo >>= np.uint64(61)
    acc += lo
    return _reduce(acc)


def addmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
    return s - np.where(s >= _P, _P, np.uint64(0))


@dataclass(frozen=True)
class HashFamily:
    """A polynomial hash ``h(x) = sum_k c_k x**k mod p`` reduced into ``range``.

    ``pairwise`` uses a degree-1 polynomial, ``fourwise`` a degree-3 one.
    Coefficients are derived deterministically from ``seed``.
    """

    kind: str
    seed: int
    range: int
    coeffs: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in DEGREE:
            raise ValueError(f"unknown hash kind {self.kind!r}")
        if self.range < 1:
            raise ValueError("hash range must be positive")
        degree = DEGREE[self.kind]
        coeffs = []
        s = self.seed
        for k in range(degree + 1):
            s = splitmix64(s ^ (k + 1))
            c = s % MERSENNE_61
            if k == degree and c == 0:
                c = 1  # keep the leading coefficient nonzero
            coeffs.append(c)
        object.__setattr__(self, "coeffs", tuple(coeffs))

    def field_values(self, x) -> np.ndarray:
        """Raw polynomial values in ``[0, p)``."""
        x = np.asarray(x, dtype=np.int64)
        xs = _reduce(x.astype(np.uint64))
        acc = np.full(xs.shape, self.coeffs[-1], dtype=np.uint64)
        for c in reversed(self.coeffs[:-1]):
            acc = addmod(mulmod(acc, xs), np.uint64(c))
        return acc

    def __call__(self, x) -> np.ndarray:
        return (self.field_values(x) % np.uint64(self.range)).astype(np.int64)

    def bits(self, x) -> np.ndarray:
        """A {0, 1} value per input (low bit of the field value)."""
        return (self.field_values(x) & np.uint64(1)).astype(np.int64)

    def signs(self, x) -> np.ndarray:
        """A {-1, +1} value per input."""
        return 1 - 2 * self.bits(x)

    def eval_int(self, x: int) -> int:
        """Scalar reference evaluation with Python integers."""
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * (x % MERSENNE_61) + c) % MERSENNE_61
        return acc


class HashBank:
    """``k`` independent families of one kind, evaluated together.

    Row ``t`` equals ``HashFamily(kind, seeds[t], range)``, but evaluation
    runs as a single broadcast over a ``(k, len(x))`` array.
    """

    def __init__(self, kind: str, seeds, range: int):
        self.families = [HashFamily(kind, int(s), range) for s in seeds]
        self.kind = kind
        self.range = range
        self._coeffs = np.array([f.coeffs for f in self.families], dtype=np.uint64)

    def __len__(self) -> int:
        return len(self.families)

    def field_values(self, x) -> np.ndarray:
        xs = _reduce(np.asarray(x, dtype=np.int64).astype(np.uint64))[None, :]
        c = self._coeffs
        acc = np.repeat(c[:, -1:], xs.shape[1], axis=1)
        for k in range(c.shape[1] - 2, -1, -1):
            acc = addmod(mulmod(acc, xs), c[:, k : k + 1])
        return acc

    def __call__(self, x) -> np.ndarray:
        return (self.field_values(x) % np.uint64(self.range)).astype(np.int64)

    def signs(self, x) -> np.ndarray:
        return 1 - 2 * (self.field_values(x) & np.uint64(1)).astype(np.int64)
