"""Seedable Brownian increment generation with per-path substreams.

Each (master_seed, path_index, stream_tag) triple keys its own counter-based
Philox stream, so paths can be generated in any order or batch size and still
reproduce bit-for-bit. Coarse increments are always obtained by summing fine
ones, never by bridge refinement, so the coarse/fine coupling is a structural
identity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .errors import InvalidArgumentError

_MASK64 = (1 << 64) - 1


class StreamTag(enum.IntEnum):
    PATH = 0
    AUXILIARY = 1


@dataclass(frozen=True)
class SeedSpec:
    """Addresses one substream: a path (or auxiliary draw) of one experiment."""

    master_seed: int
    path_index: int = 0
    stream_tag: StreamTag = StreamTag.PATH

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise InvalidArgumentError("master_seed must fit in 64 bits")
        if self.path_index < 0:
            raise InvalidArgumentError("path_index must be nonnegative")

    def philox_key(self) -> list[int]:
        # word 0 identifies the experiment, word 1 the substream
        return [self.master_seed, (self.path_index << 1) | int(self.stream_tag)]


def derive_seed(master_seed: int, *words: int) -> int:
    """Mix extra words into a master seed (splitmix64-style) for sub-experiments."""
    z = master_seed & _MASK64
    for w in words:
        z = (z + 0x9E3779B97F4A7C15 + (w & _MASK64)) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
    return z


@dataclass
class IncrementGrid:
    """Gaussian increments of one Brownian path on a uniform grid.

    ``increments[k]`` ~ N(0, (T/n_fine) I_d). ``refinement`` records the
    cumulative coarsening factor relative to the originally generated grid
    (1 for a fresh grid).
    """

    d: int
    T: float
    n_fine: int
    increments: np.ndarray
    refinement: int = 1
    seed: SeedSpec | None = field(default=None, compare=False)

    @property
    def dt(self) -> float:
        return self.T / self.n_fine


def generate_increments(seed: SeedSpec, d: int, T: float, n_fine: int) -> IncrementGrid:
    """Draw the n_fine x d increment array for one path."""
    if n_fine < 1:
        raise InvalidArgumentError(f"n_fine must be >= 1, got {n_fine}")
    if T <= 0:
        raise InvalidArgumentError(f"T must be positive, got {T}")
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    gen = Generator(Philox(key=seed.philox_key()))
    inc = gen.standard_normal((n_fine, d)) * np.sqrt(T / n_fine)
    return IncrementGrid(d=d, T=T, n_fine=n_fine, increments=inc, seed=seed)


def coarsen(grid: IncrementGrid, M: int) -> IncrementGrid:
    """Sum blocks of M consecutive fine increments; M must divide n_fine."""
    if M < 1:
        raise InvalidArgumentError(f"refinement must be >= 1, got {M}")
    if grid.n_fine % M != 0:
        raise InvalidArgumentError(
            f"refinement {M} does not divide n_fine={grid.n_fine}"
        )
    if M == 1:
        return IncrementGrid(
            d=grid.d, T=grid.T, n_fine=grid.n_fine, increments=grid.increments,
            refinement=grid.refinement, seed=grid.seed,
        )
    n_coarse = grid.n_fine // M
    coarse = grid.increments.reshape(n_coarse, M, grid.d).sum(axis=1)
    return IncrementGrid(
        d=grid.d, T=grid.T, n_fine=n_coarse, increments=coarse,
        refinement=grid.refinement * M, seed=grid.seed,
    )


class PhiloxCursor:
    """Reusable Philox generator that jumps between substream keys.

    Re-keying through the state dict skips per-path BitGenerator construction
    (about 10x faster) and yields streams bit-identical to fresh construction.
    """

    def __init__(self):
        self._bitgen = Philox(key=[0, 0])
        self._gen = Generator(self._bitgen)
        self._state = self._bitgen.state

    def rekey(self, key0: int, key1: int) -> Generator:
        st = self._state
        st["state"]["key"][0] = key0
        st["state"]["key"][1] = key1
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen

    def for_seed(self, seed: SeedSpec) -> Generator:
        k0, k1 = seed.philox_key()
        return self.rekey(k0, k1)


def increment_batch(
    master_seed: int,
    d: int,
    T: float,
    n_fine: int,
    first_path: int,
    n_paths: int,
    stream_tag: StreamTag = StreamTag.PATH,
) -> np.ndarray:
    """Increments for paths first_path..first_path+n_paths-1, shape (B, n_fine, d).

    Row i is bit-identical to generate_increments for path_index first_path+i.
    """
    if n_fine < 1:
        raise InvalidArgumentError(f"n_fine must be >= 1, got {n_fine}")
    if T <= 0:
        raise InvalidArgumentError(f"T must be positive, got {T}")
    if n_paths < 0:
        raise InvalidArgumentError("n_paths must be nonnegative")
    out = np.empty((n_paths, n_fine, d))
    cursor = PhiloxCursor()
    scale = np.sqrt(T / n_fine)
    tag = int(stream_tag)
    for i in range(n_paths):
        gen = cursor.rekey(master_seed, ((first_path + i) << 1) | tag)
        out[i] = gen.standard_normal((n_fine, d))
    out *= scale
    return out
