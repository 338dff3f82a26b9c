"""
Hypervector algebra.

Bipolar hypervectors are numpy int8 arrays of +1/-1. Bundles (superpositions) are
float64 accumulators. Every random object is drawn from a PCG64 stream seeded
with a 64-bit integer, so a model only has to persist its seeds.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    UndefinedSimilarityError,
)

DEFAULT_DIM = 1024
N_DIFFERENCES = 39
SEED_TABLE_SIZE = 2 * N_DIFFERENCES
MAX_SEED = 2**64 - 1

type Hypervector = NDArray[np.int8]
type RealVector = NDArray[np.float64]


def _validate_dim(dim: int) -> None:
    if isinstance(dim, bool) or not isinstance(dim, int | np.integer):
        raise InvalidInputError(f"Dimension must be an integer, got {dim!r}")
    if dim < 2:
        raise InvalidInputError(f"Dimension must be >= 2, got {dim}")


def _validate_seed(seed: int, label: str = "rng_seed") -> None:
    if isinstance(seed, bool) or not isinstance(seed, int | np.integer):
        raise InvalidInputError(f"{label} must be an integer, got {seed!r}")
    if not (0 <= seed <= MAX_SEED):
        raise InvalidInputError(f"{label} must fit in 64 unsigned bits, got {seed}")


def _check_same_dim(a: NDArray[np.generic], b: NDArray[np.generic]) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"Vectors must share a dimension, got {a.shape[-1]} and {b.shape[-1]}"
        )


def _frozen[T: np.generic](array: NDArray[T]) -> NDArray[T]:
    array.setflags(write=False)
    return array


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Return a PCG64 generator for a seed (or a seed sequence such as (seed, epoch))."""
    return np.random.Generator(np.random.PCG64(seed))


def random_hypervectors(rng: np.random.Generator, count: int, dim: int) -> NDArray[np.int8]:
    """Draw `count` independent random bipolar vectors as rows of an int8 matrix."""
    _validate_dim(dim)
    bits = rng.integers(0, 2, size=(count, dim), dtype=np.int8)
    return (2 * bits - 1).astype(np.int8)


def is_bipolar(v: NDArray[np.generic]) -> bool:
    """True when every coordinate is exactly +1 or -1."""
    return bool(np.all(np.abs(v) == 1))


@dataclass(frozen=True, eq=False)
class AccumVector:
    """Real-valued superposition of `count` bundled items."""

    coords: RealVector
    count: int = 0

    @property
    def dim(self) -> int:
        return int(self.coords.shape[-1])

    @classmethod
    def zeros(cls, dim: int) -> AccumVector:
        _validate_dim(dim)
        return cls(np.zeros(dim, dtype=np.float64), 0)

    def __add__(self, other: AccumVector) -> AccumVector:
        _check_same_dim(self.coords, other.coords)
        return AccumVector(self.coords + other.coords, self.count + other.count)


@dataclass(frozen=True, eq=False)
class SeedMemory:
    """The 78 seed vectors L_i[b]: i is the bin-difference index 1..39, b the direction."""

    seeds: NDArray[np.int8]
    rng_seed: int

    @property
    def dim(self) -> int:
        return int(self.seeds.shape[-1])

    def __len__(self) -> int:
        return int(self.seeds.shape[0] * self.seeds.shape[1])

    def lookup(self, i: int, b: int) -> Hypervector:
        """Return seed L_i[b] for difference index i in 1..39 and direction b in {0, 1}."""
        if not (1 <= i <= N_DIFFERENCES):
            raise InvalidInputError(f"Difference index must be 1-{N_DIFFERENCES}, got {i}")
        if b not in (0, 1):
            raise InvalidInputError(f"Direction must be 0 or 1, got {b}")
        return self.seeds[i - 1, b]

    def split(self, n_differences: int = N_DIFFERENCES) -> tuple[NDArray[np.int32], NDArray[np.int8]]:
        """Return (sum of the falling seeds, rising minus falling seed per difference).

        For a code c, the slice accumulator is base + c @ delta, which lets a whole
        utterance be encoded with one matrix product.
        """
        if not (1 <= n_differences <= N_DIFFERENCES):
            raise InvalidInputError(
                f"Difference count must be 1-{N_DIFFERENCES}, got {n_differences}"
            )
        falling = self.seeds[:n_differences, 0]
        rising = self.seeds[:n_differences, 1]
        base = falling.sum(axis=0, dtype=np.int32)
        return base, (rising - falling).astype(np.int8)


@dataclass(frozen=True, eq=False)
class Permutation:
    """A fixed random reindexing ρ: permute(v) = v[mapping]."""

    mapping: NDArray[np.intp]
    rng_seed: int

    @property
    def dim(self) -> int:
        return int(self.mapping.shape[0])

    def power(self, k: int) -> NDArray[np.intp]:
        """Index array equal to ρ applied k times (ρ^k, composition, not a new draw)."""
        if k < 0:
            raise InvalidInputError(f"Repetition count must be >= 0, got {k}")
        index = np.arange(self.dim, dtype=np.intp)
        for _ in range(k):
            index = index[self.mapping]
        return index

    def inverse(self) -> Permutation:
        return Permutation(_frozen(np.argsort(self.mapping).astype(np.intp)), self.rng_seed)


def make_seed_memory(rng_seed: int, dim: int = DEFAULT_DIM) -> SeedMemory:
    """Draw the 78-entry seed memory.

    Args:
        rng_seed: 64-bit seed for the PCG64 stream
        dim: Hypervector dimension (>= 2)

    Returns:
        SeedMemory whose table is a pure function of (rng_seed, dim)

    Raises:
        InvalidInputError: If dim < 2 or the seed does not fit in 64 bits
    """
    _validate_dim(dim)
    _validate_seed(rng_seed)
    bits = make_rng(rng_seed).integers(0, 2, size=(N_DIFFERENCES, 2, dim), dtype=np.int8)
    return SeedMemory(_frozen((2 * bits - 1).astype(np.int8)), int(rng_seed))


def make_permutation(rng_seed: int, dim: int = DEFAULT_DIM) -> Permutation:
    """Draw the coordinate shuffle ρ from its own seed."""
    _validate_dim(dim)
    _validate_seed(rng_seed)
    mapping = make_rng(rng_seed).permutation(dim).astype(np.intp)
    return Permutation(_frozen(mapping), int(rng_seed))


def bind(a: Hypervector, b: Hypervector) -> Hypervector:
    """Coordinate-wise product. Self-inverse on bipolar vectors."""
    _check_same_dim(a, b)
    return np.multiply(a, b, dtype=np.int8)


def bundle(
    vectors: Sequence[Hypervector | AccumVector],
    weights: Sequence[float] | None = None,
) -> AccumVector:
    """Weighted coordinate-wise sum, accumulated in input order.

    Args:
        vectors: Bipolar hypervectors and/or accumulators of one dimension
        weights: Optional non-negative finite weight per vector (default 1)

    Returns:
        AccumVector whose count is the number of hypervectors plus the counts of
        any accumulators bundled in

    Raises:
        DimensionMismatchError: If the vectors do not share a dimension
        InvalidInputError: If the input is empty, lengths differ, or a weight is invalid
    """
    if len(vectors) == 0:
        raise InvalidInputError("Cannot bundle an empty sequence")
    if weights is None:
        weights = [1.0] * len(vectors)
    if len(weights) != len(vectors):
        raise InvalidInputError(
            f"Number of weights ({len(weights)}) must match number of vectors ({len(vectors)})"
        )

    first = vectors[0]
    dim = first.dim if isinstance(first, AccumVector) else int(first.shape[-1])
    total = np.zeros(dim, dtype=np.float64)
    count = 0
    for index, (vector, weight) in enumerate(zip(vectors, weights, strict=True)):
        weight = float(weight)
        if not math.isfinite(weight) or weight < 0:
            raise InvalidInputError(f"Weight {index} must be finite and >= 0, got {weight}")
        coords = vector.coords if isinstance(vector, AccumVector) else vector
        if coords.shape[-1] != dim:
            raise DimensionMismatchError(
                f"Vector {index} has dimension {coords.shape[-1]}, expected {dim}"
            )
        total += weight * coords
        count += vector.count if isinstance(vector, AccumVector) else 1
    return AccumVector(total, count)


def threshold(s: AccumVector | NDArray[np.generic]) -> Hypervector:
    """Coordinate-wise sign. A zero coordinate maps to +1."""
    coords = s.coords if isinstance(s, AccumVector) else s
    return np.where(coords < 0, -1, 1).astype(np.int8)


def permute(v: NDArray[np.generic], p: Permutation, k: int = 1) -> NDArray[np.generic]:
    """Apply ρ k times; k = 0 is the identity."""
    if v.shape[-1] != p.dim:
        raise DimensionMismatchError(
            f"Vector dimension {v.shape[-1]} does not match permutation dimension {p.dim}"
        )
    if k == 0:
        return v.copy()
    return v[..., p.power(k)]


def cosine(a: NDArray[np.generic], b: NDArray[np.generic]) -> float:
    """Cosine similarity of two real vectors.

    Raises:
        DimensionMismatchError: If the dimensions differ
        UndefinedSimilarityError: If either vector is all zeros
    """
    _check_same_dim(a, b)
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    norm_a = float(np.linalg.norm(a64))
    norm_b = float(np.linalg.norm(b64))
    if norm_a == 0.0 or norm_b == 0.0:
        raise UndefinedSimilarityError("Cosine is undefined for a zero-norm vector")
    value = float(np.dot(a64, b64)) / (norm_a * norm_b)
    return min(1.0, max(-1.0, value))
