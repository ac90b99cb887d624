"""Attributed degree-corrected stochastic block model (ADC-SBM).

Graph: uniform random memberships over ``k`` blocks, a block matrix of
expected edge counts fixed by the average degree ``d`` and the expected
inter-cluster sub-degree ``d_out``, and power-law degree propensities.
``d_out`` is read per foreign cluster by default (``d_out_scope="per_cluster"``),
so ``d_out = d / k`` is a structureless graph; ``d_out_scope="total"`` reads it
as the whole inter-cluster degree instead.
Edges are drawn per block pair as a Poisson count with endpoints picked
proportionally to the propensities, then collapsed to a simple graph.

Features: an isotropic Gaussian mixture whose cluster labels match, nest
within, or group the graph clusters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from dmon.graph import SparseGraph, save_edge_list, save_features, save_labels

FEATURE_MODES = ("matched", "nested", "grouped")
D_OUT_SCOPES = ("per_cluster", "total")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdcSbmConfig:
    n: int = 1000
    k: int = 4
    d: float = 20.0
    d_out: float = 2.0
    d_min: float = 2.0
    d_max: float = 4.0
    alpha: float = 2.0
    s: int = 32
    k_f: int | None = None
    feature_mode: str = "matched"
    sigma_c: float = 3.0
    sigma: float = 1.0
    d_out_scope: str = "per_cluster"
    seed: int = 0

    @property
    def n_feature_clusters(self) -> int:
        return self.k if self.k_f is None else self.k_f

    @property
    def total_out_degree(self) -> float:
        """Expected number of a node's edges leaving its own cluster."""
        if self.d_out_scope == "per_cluster":
            return self.d_out * (self.k - 1)
        return self.d_out

    def validate(self) -> "AdcSbmConfig":
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.d <= 0 or self.d_out < 0:
            raise ConfigError("degrees must be positive")
        if self.d_out_scope not in D_OUT_SCOPES:
            raise ConfigError(f"d_out_scope must be one of {D_OUT_SCOPES}")
        if self.total_out_degree > self.d:
            raise ConfigError(f"inter-cluster degree {self.total_out_degree} "
                              f"(d_out={self.d_out}, {self.d_out_scope}) exceeds d={self.d}")
        if not 0 < self.d_min <= self.d_max:
            raise ConfigError("need 0 < d_min <= d_max")
        if self.sigma_c < 0 or self.sigma < 0:
            raise ConfigError("standard deviations must be non-negative")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}")
        kf = self.n_feature_clusters
        if self.feature_mode == "matched" and kf != self.k:
            raise ConfigError("matched features need k_f == k")
        if self.feature_mode == "nested" and kf % self.k:
            raise ConfigError("nested features need k_f to be a multiple of k")
        if self.feature_mode == "grouped" and self.k % kf:
            raise ConfigError("grouped features need k to be a multiple of k_f")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["k_f"] = self.n_feature_clusters
        return out


@dataclass
class SyntheticInstance:
    graph: SparseGraph
    features: np.ndarray
    graph_labels: np.ndarray
    feature_labels: np.ndarray
    config: AdcSbmConfig

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        save_edge_list(self.graph, out / "edges.tsv")
        save_features(self.features, out / "features.csv")
        save_labels(self.graph_labels, out / "graph_labels.txt")
        save_labels(self.feature_labels, out / "feature_labels.txt")
        (out / "config.json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n")
        return out


def sample_power_law(size: int, low: float, high: float, alpha: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from ``p(x) ~ x^-alpha`` truncated to ``[low, high]``."""
    u = rng.random(size)
    if low == high:
        return np.full(size, float(low))
    if np.isclose(alpha, 1.0):
        return low * (high / low) ** u
    e = 1.0 - alpha
    return (low ** e + u * (high ** e - low ** e)) ** (1.0 / e)


def block_matrix(sizes: np.ndarray, d: float, d_out: float) -> np.ndarray:
    """Expected edge counts between (and within) blocks.

    ``d_out`` here is the total inter-cluster degree: each node expects
    ``d - d_out`` edges into its own block and ``d_out`` spread evenly over the
    other ``k - 1`` blocks. Diagonal entries count edges inside a block,
    off-diagonal entries edges between a pair.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    k = sizes.size
    per_foreign = d_out / (k - 1)
    dm = per_foreign * (sizes[:, None] + sizes[None, :]) / 2.0
    np.fill_diagonal(dm, sizes * (d - d_out) / 2.0)
    return dm


def sample_graph(labels: np.ndarray, cfg: AdcSbmConfig, rng: np.random.Generator) -> SparseGraph:
    n, k = labels.size, cfg.k
    theta = sample_power_law(n, cfg.d_min, cfg.d_max, cfg.alpha, rng)
    members = [np.flatnonzero(labels == r) for r in range(k)]
    probs = [theta[m] / theta[m].sum() if m.size else None for m in members]
    dm = block_matrix([m.size for m in members], cfg.d, cfg.total_out_degree)
    src, dst = [], []
    for r in range(k):
        for s in range(r, k):
            if members[r].size == 0 or members[s].size == 0:
                continue
            count = rng.poisson(dm[r, s])
            src.append(rng.choice(members[r], size=count, p=probs[r]))
            dst.append(rng.choice(members[s], size=count, p=probs[s]))
    src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    return SparseGraph.from_edges(src, dst, n=n)


def feature_memberships(graph_labels: np.ndarray, cfg: AdcSbmConfig,
                        rng: np.random.Generator) -> np.ndarray:
    kf = cfg.n_feature_clusters
    if cfg.feature_mode == "matched":
        return graph_labels.copy()
    if cfg.feature_mode == "nested":
        per = kf // cfg.k
        return graph_labels * per + rng.integers(per, size=graph_labels.size)
    return graph_labels // (cfg.k // kf)


def sample_features(graph_labels: np.ndarray, cfg: AdcSbmConfig, rng: np.random.Generator):
    """Gaussian-mixture features; returns ``(features, feature_labels)``."""
    cfg.validate()
    feature_labels = feature_memberships(np.asarray(graph_labels), cfg, rng)
    centers = rng.normal(0.0, cfg.sigma_c, size=(cfg.n_feature_clusters, cfg.s))
    noise = rng.normal(0.0, cfg.sigma, size=(feature_labels.size, cfg.s))
    return centers[feature_labels] + noise, feature_labels


def generate(cfg: AdcSbmConfig) -> SyntheticInstance:
    """Sample one instance; bit-reproducible for a fixed ``cfg.seed``.

    Memberships, edges and features use independent RNG streams, so two
    configs differing only in graph parameters share identical features.
    """
    cfg.validate()
    member_ss, graph_ss, feature_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    labels = np.random.default_rng(member_ss).integers(cfg.k, size=cfg.n)
    graph = sample_graph(labels, cfg, np.random.default_rng(graph_ss))
    features, feature_labels = sample_features(labels, cfg, np.random.default_rng(feature_ss))
    return SyntheticInstance(graph, features, labels, feature_labels, cfg)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

SCENARIOS = {
    1: ("d_out", 2.0, 5.0, "linear", {}),
    2: ("sigma_c", 1e-2, 1e1, "log", {"feature_mode": "matched"}),
    3: ("sigma_c", 1e-2, 1e1, "log", {"feature_mode": "nested", "k_f": 8}),
    4: ("sigma_c", 1e-2, 1e1, "log", {"feature_mode": "grouped", "k_f": 2}),
    # total scope keeps d_out=2 feasible down to d=4
    5: ("d", 2.0 ** 2, 2.0 ** 7, "log", {"d_out_scope": "total"}),
    6: ("d_max", 2.0 ** 2, 2.0 ** 10, "log", {}),
}


def scenario_grid(scenario: int, points: int) -> tuple[str, np.ndarray]:
    """Name and values of the swept parameter."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {sorted(SCENARIOS)}, got {scenario}")
    name, lo, hi, spacing, _ = SCENARIOS[scenario]
    if points < 1:
        raise ConfigError("need at least one grid point")
    if points == 1:
        return name, np.array([lo])
    if spacing == "linear":
        return name, np.linspace(lo, hi, points)
    return name, np.geomspace(lo, hi, points)


def scenario_configs(scenario: int, points: int, seeds: int, base: AdcSbmConfig | None = None,
                     seed_offset: int = 0) -> list[tuple[float, AdcSbmConfig]]:
    """``(param value, config)`` for every grid point x seed, grid-major."""
    base = AdcSbmConfig() if base is None else base
    name, values = scenario_grid(scenario, points)
    overrides = SCENARIOS[scenario][4]
    out = []
    for v in values:
        for s in range(seeds):
            cfg = replace(base, **overrides, **{name: float(v)}, seed=seed_offset + s)
            out.append((float(v), cfg.validate()))
    return out


def scenario_sweep(scenario: int, grid_points: int, seeds: int, base: AdcSbmConfig | None = None,
                   seed_offset: int = 0) -> list[tuple[AdcSbmConfig, SyntheticInstance]]:
    return [(cfg, generate(cfg))
            for _, cfg in scenario_configs(scenario, grid_points, seeds, base, seed_offset)]


def detectability_threshold(cfg: AdcSbmConfig) -> float:
    """``d_out`` where ``d_in - d_out = k sqrt(d)``, clamped at 0.

    ``d_in`` is the within-cluster degree, so under total scope
    ``d_out* = (d - k sqrt(d)) / 2`` and under per-cluster scope
    ``d_out* = (d - k sqrt(d)) / k``. Plot annotation for scenario-1 sweeps.
    """
    gap = cfg.d - cfg.k * np.sqrt(cfg.d)
    denom = 2.0 if cfg.d_out_scope == "total" else float(cfg.k)
    return max(0.0, gap / denom)
