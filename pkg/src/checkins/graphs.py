"""Random social graphs from iterated 2x2 seed products, and ground-truth
parameter draws for synthetic experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams, SocialGraph

# Named 2x2 seeds producing the standard structure families.
SEED_PRESETS: dict[str, list[list[float]]] = {
    "core-periphery": [[0.85, 0.45], [0.45, 0.3]],
    "heterophily": [[0.3, 0.89], [0.89, 0.3]],
    "hierarchical": [[0.9, 0.1], [0.1, 0.9]],
    "homophily": [[0.89, 0.3], [0.3, 0.89]],
    "erdos-renyi": [[0.6, 0.6], [0.6, 0.6]],
}


@dataclass(frozen=True)
class KroneckerSeed:
    """2x2 edge-probability seed raised to `power`, giving 2^power nodes."""

    matrix: tuple[tuple[float, float], tuple[float, float]]
    power: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise ValueError(f"seed matrix must be 2x2, got shape {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("seed entries must be probabilities in [0, 1]")
        if self.power < 1:
            raise ValueError(f"power must be >= 1, got {self.power}")
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in m))

    @classmethod
    def preset(cls, name: str, power: int) -> "KroneckerSeed":
        if name not in SEED_PRESETS:
            raise ValueError(f"unknown seed preset {name!r}; options: {sorted(SEED_PRESETS)}")
        return cls(SEED_PRESETS[name], power)

    @property
    def n_nodes(self) -> int:
        return 2**self.power

    def edge_probabilities(self) -> np.ndarray:
        """Full (2^p, 2^p) matrix of pairwise edge probabilities.

        Entry (i, j) is the product over bit positions of the seed entry
        selected by the corresponding bits of i and j (standard
        bit-decomposition node labeling, no relabeling).
        """
        probs = np.asarray(self.matrix, dtype=float)
        out = probs
        for _ in range(self.power - 1):
            out = np.kron(out, probs)
        return out


def kronecker_graph(seed: KroneckerSeed, rng: np.random.Generator) -> SocialGraph:
    """Sample each directed pair (i, j), diagonal included, independently."""
    probs = seed.edge_probabilities()
    adj = rng.random(probs.shape) < probs
    return SocialGraph.from_adjacency(adj)


@dataclass(frozen=True)
class ParamRanges:
    """Uniform sampling ranges for ground-truth parameters."""

    mu: tuple[float, float] = (0.0, 0.05)
    eta: tuple[float, float] = (0.0, 0.05)
    alpha: tuple[float, float] = (0.0, 0.5)
    beta: tuple[float, float] = (0.0, 0.1)


def sample_ground_truth(
    graph: SocialGraph,
    n_categories: int,
    ranges: ParamRanges | None = None,
    rng: np.random.Generator | None = None,
    ensure_self_loops: bool = False,
) -> ModelParams:
    """Draw parameters uniformly; influence is sampled only on graph edges.

    `ensure_self_loops` additionally samples every diagonal influence entry,
    letting users re-excite their own locations even when the graph has no
    self-edges.
    """
    if ranges is None:
        ranges = ParamRanges()
    if rng is None:
        rng = np.random.default_rng()
    n = graph.n
    mu = rng.uniform(*ranges.mu, size=(n, n_categories))
    beta = rng.uniform(*ranges.beta, size=n)
    eta = rng.uniform(*ranges.eta, size=(n, n_categories))
    support = graph.adjacency_matrix()
    if ensure_self_loops:
        support = support | np.eye(n, dtype=bool)
    alpha = np.zeros((n, n))
    alpha[support] = rng.uniform(*ranges.alpha, size=int(support.sum()))
    return ModelParams(mu, beta, alpha, eta)


def uniform_location_map(n_categories: int, per_category: int) -> np.ndarray:
    """Category ids for `n_categories * per_category` locations, in equal blocks."""
    return np.repeat(np.arange(n_categories, dtype=np.int64), per_category)
