"""Random UAV movement inside the arena and the range-derived adjacency matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    bits: np.ndarray

    @property
    def n(self):
        return self.bits.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AdjacencyMatrix):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    @classmethod
    def from_edges(cls, n, edges) -> "AdjacencyMatrix":
        bits = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if i == j:
                raise DomainError("self loops are not allowed")
            bits[i, j] = bits[j, i] = True
        return cls(bits)


def random_displacements(n, v_max, step_interval, rng) -> np.ndarray:
    """Uniform direction on the sphere, uniform speed in [0, v_max]."""
    cos_t = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    speed = rng.uniform(0.0, 1.0, n) * v_max
    sin_t = np.sqrt(1.0 - cos_t * cos_t)
    unit = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    return unit * (speed * step_interval)[:, None]


def step_mobility(positions, cfg, arena, rng) -> np.ndarray:
    """Move every node once.

    ``rng`` is a single ``numpy.random.Generator`` or a sequence of one
    generator per node (the engine passes per-node streams).
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    if cfg.v_max == 0:
        return positions.copy()
    if isinstance(rng, np.random.Generator):
        disp = random_displacements(n, cfg.v_max, cfg.step_interval, rng)
    else:
        disp = np.concatenate(
            [random_displacements(1, cfg.v_max, cfg.step_interval, g) for g in rng]
        )
    lo = np.asarray(arena.lo, dtype=float)
    hi = np.asarray(arena.hi, dtype=float)
    return kernels.reflect_into_box(positions + disp, lo, hi)


def build_adjacency(positions, comm_range) -> AdjacencyMatrix:
    if not comm_range > 0:
        raise DomainError("comm_range must be > 0")
    pos = np.ascontiguousarray(positions, dtype=float)
    return AdjacencyMatrix(kernels.adjacency(pos, float(comm_range)))


def find_neighbours(adj, uav) -> frozenset:
    if not 0 <= uav < adj.n:
        raise DomainError(f"UAV {uav} outside 0..{adj.n - 1}")
    return frozenset(np.flatnonzero(adj.bits[uav]).tolist())
