"""Reproducible Brownian increments on nested uniform grids.

Each path is an independent counter-based stream: increments are a pure
function of (seed, path_index), generated from a Philox4x64 generator keyed
with the 128-bit value seed * 2**64 + path_index and numpy's ziggurat
``standard_normal``.  Path j therefore never depends on how many other paths
were generated or in which order, which is what makes ensemble runs
deterministic under arbitrary parallel scheduling.

Coarsening sums adjacent increments by repeated pairwise halving, so for
power-of-two ratios the chain property holds bit-for-bit: coarsening to N_b
and then to N_a equals coarsening directly to N_a.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BrownianGrid",
    "generate_path",
    "generate_block",
    "coarsen",
    "coarsen_increments",
    "bridge_value",
    "dump_increments",
    "load_increments",
]

_MASK64 = (1 << 64) - 1


def _path_generator(seed: int, path_index: int) -> np.random.Generator:
    key = ((seed & _MASK64) << 64) | (path_index & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class BrownianGrid:
    """Seeded Brownian increments of one path on the finest grid.

    ``increments`` has shape (N_fine, m); entry k is W_{(k+1)h} - W_{kh}
    with h = T/N_fine, distributed Normal(0, h*I_m) under the stream of
    (seed, path_index).
    """

    T: float
    N_fine: int
    m: int
    seed: int
    path_index: int
    increments: np.ndarray

    def __post_init__(self):
        if self.increments.shape != (self.N_fine, self.m):
            raise ValueError("increments must have shape (N_fine, m)")

    @property
    def h(self) -> float:
        return self.T / self.N_fine


def generate_path(T: float, N_fine: int, m: int, seed: int, path_index: int) -> BrownianGrid:
    """Generate one path's fine-grid increments, deterministically.

    The result depends only on (seed, path_index); calling twice returns
    identical arrays.
    """
    if N_fine < 1:
        raise ValueError("N_fine must be >= 1")
    gen = _path_generator(seed, path_index)
    incr = gen.standard_normal((N_fine, m)) * math.sqrt(T / N_fine)
    return BrownianGrid(T=T, N_fine=N_fine, m=m, seed=seed,
                        path_index=path_index, increments=incr)


def generate_block(T: float, N_fine: int, m: int, seed: int,
                   first_path: int, count: int) -> np.ndarray:
    """Increments of paths [first_path, first_path+count) as one (count, N_fine, m)
    array.  Row j is bit-identical to generate_path(..., first_path + j)."""
    out = np.empty((count, N_fine, m))
    scale = math.sqrt(T / N_fine)
    for j in range(count):
        gen = _path_generator(seed, first_path + j)
        out[j] = gen.standard_normal((N_fine, m))
    out *= scale
    return out


def coarsen_increments(increments: np.ndarray, N_coarse: int) -> np.ndarray:
    """Sum fine increments (..., N_fine, m) into N_coarse blocks.

    The block sums are computed by repeated pairwise halving while the
    remaining ratio is even (exactly reproducible and associativity-stable
    for power-of-two ratios), then a final sequential sum over any odd
    remainder.
    """
    *lead, n_fine, m = increments.shape
    if N_coarse < 1 or n_fine % N_coarse != 0:
        raise ValueError(f"N_coarse {N_coarse} does not divide N_fine {n_fine}")
    q = n_fine // N_coarse
    a = increments.reshape(*lead, N_coarse, q, m)
    while a.shape[-2] > 1 and a.shape[-2] % 2 == 0:
        a = a[..., 0::2, :] + a[..., 1::2, :]
    if a.shape[-2] > 1:
        a = np.add.reduce(a, axis=-2, keepdims=True)
    return a[..., 0, :]


def coarsen(path: BrownianGrid, N_coarse: int) -> np.ndarray:
    """Coarse increments of ``path`` over the N_coarse-subinterval grid."""
    return coarsen_increments(path.increments, N_coarse)


def bridge_value(path: BrownianGrid, k: int, s: float, sub_seed: int) -> np.ndarray:
    """W_{t_k + s} - W_{t_k}, sampled by Brownian-bridge conditioning.

    Conditioned on the stored endpoint increment dW of fine step k the value
    is Normal((s/h)*dW, s*(h-s)/h * I_m); the endpoints s = 0 and s = h are
    returned exactly.  Deterministic given (path identity, k, sub_seed); the
    auxiliary stream is keyed independently of the path streams.
    """
    h = path.h
    if not 0 <= s <= h:
        raise ValueError(f"offset {s} outside [0, {h}]")
    if not 0 <= k < path.N_fine:
        raise IndexError(f"step index {k} out of range")
    dw = path.increments[k]
    if s == 0:
        return np.zeros(path.m)
    if s == h:
        return dw.copy()
    ss = np.random.SeedSequence(entropy=(path.seed, path.path_index, k, sub_seed))
    z = np.random.Generator(np.random.Philox(ss)).standard_normal(path.m)
    return (s / h) * dw + math.sqrt(s * (h - s) / h) * z


_HEADER = struct.Struct("<dqqqq")  # T, N_fine, m, seed, path_index


def dump_increments(path: BrownianGrid, file) -> None:
    """Write a path to a binary file: little-endian header (T, N_fine, m,
    seed, path_index) followed by the increments as row-major float64."""
    close = False
    if isinstance(file, (str, bytes)):
        file = open(file, "wb")
        close = True
    try:
        file.write(_HEADER.pack(path.T, path.N_fine, path.m, path.seed, path.path_index))
        file.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())
    finally:
        if close:
            file.close()


def load_increments(file) -> BrownianGrid:
    """Read a path written by dump_increments; the round trip is exact."""
    close = False
    if isinstance(file, (str, bytes)):
        file = open(file, "rb")
        close = True
    try:
        T, n_fine, m, seed, path_index = _HEADER.unpack(file.read(_HEADER.size))
        data = np.frombuffer(file.read(8 * n_fine * m), dtype="<f8")
        incr = data.reshape(n_fine, m).astype(float)
    finally:
        if close:
            file.close()
    return BrownianGrid(T=T, N_fine=n_fine, m=m, seed=seed,
                        path_index=path_index, increments=incr)
