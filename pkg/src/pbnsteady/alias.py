"""Walker/Vose alias tables for O(1) sampling from a finite distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AliasTable:
    prob: np.ndarray  # float64, acceptance threshold of each column
    alias: np.ndarray  # int64, fallback outcome of each column

    @property
    def size(self) -> int:
        return self.prob.size

    def pick(self, u):
        """Map uniform(s) in [0, 1) to outcomes using one draw per sample."""
        u = np.asarray(u, dtype=np.float64)
        x = u * self.size
        col = np.minimum(x.astype(np.int64), self.size - 1)
        return np.where(x - col < self.prob[col], col, self.alias[col])

    def sample(self, rng: np.random.Generator, size=None):
        return self.pick(rng.random(size))

    def distribution(self) -> np.ndarray:
        """Exact distribution realised by the table (decode map)."""
        k = self.size
        out = self.prob / k
        np.add.at(out, self.alias, (1.0 - self.prob) / k)
        return out


def build_alias(dist, atol: float = 1e-9) -> AliasTable:
    """Vose's construction.

    Raises
    ------
    ValueError
        On negative entries or if the entries do not sum to one within ``atol``.
    """
    p = np.asarray(dist, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("empty distribution")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("distribution has negative or non-finite entries")
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"distribution sums to {total!r}, expected 1")

    k = p.size
    scaled = p * (k / total)
    prob = np.ones(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return AliasTable(prob=prob, alias=alias)
