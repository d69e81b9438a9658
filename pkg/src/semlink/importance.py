"""Per-patch importance: attention-score profiles and derived weights.

The profile file is the contract with the score extractor:

    {"g": 196, "patch_grid": [14, 14], "scores": [...], "source": "..."}

Weights map scores into [d_c, 1] through a range-normalized power law, so
they are invariant to affine rescaling of the raw scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImportanceProfile",
    "WeightVector",
    "compute_weights",
    "importance_order",
    "topbeta_bits",
    "synthetic_profile",
    "load_profile",
    "save_profile",
]


@dataclass(frozen=True)
class ImportanceProfile:
    g: int
    scores: np.ndarray
    source: str = ""
    patch_grid: tuple[int, int] | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).ravel()
        if scores.size != self.g:
            raise ValueError(f"expected {self.g} scores, got {scores.size}")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    delta: float
    d_c: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)


def compute_weights(profile: ImportanceProfile, delta: float = 1.0, d_c: float = 1e-7) -> WeightVector:
    """Range-normalized importance weights in [d_c, 1].

    A constant-score profile is degenerate (0/0); every patch then gets
    weight 1, matching the uniform-allocation limit.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0 < d_c < 1:
        raise ValueError("d_c must lie in (0, 1)")
    a = profile.scores
    a_min, a_max = float(a.min()), float(a.max())
    if a_max == a_min:
        w = np.ones_like(a)
    else:
        w = (1.0 - d_c) * ((a - a_min) / (a_max - a_min)) ** delta + d_c
    return WeightVector(weights=w, delta=delta, d_c=d_c)


def importance_order(profile: ImportanceProfile) -> np.ndarray:
    """Patch indices sorted by descending score, ties by ascending index."""
    a = profile.scores
    # lexsort is stable; primary key -a (descending score), tie-break on index
    return np.lexsort((np.arange(a.size), -a))


def topbeta_bits(profile: ImportanceProfile, beta_percent: float, b_min: int, b_max: int) -> np.ndarray:
    """Assign ``b_max`` bits to the top beta% of patches, ``b_min`` elsewhere."""
    if b_min > b_max:
        raise ValueError("b_min must not exceed b_max")
    if not 0 <= beta_percent <= 100:
        raise ValueError("beta_percent must lie in [0, 100]")
    g = profile.g
    k = int(np.floor(g * beta_percent / 100.0 + 1e-9))
    bits = np.full(g, b_min, dtype=int)
    bits[importance_order(profile)[:k]] = b_max
    return bits


def synthetic_profile(g: int, kind: str = "ramp", seed: int = 0) -> ImportanceProfile:
    """Synthetic score profiles so the core runs without any ML stack."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 7])))
    if kind == "uniform":
        scores = np.full(g, 0.5)
    elif kind == "ramp":
        scores = np.arange(1, g + 1, dtype=float) / g
    elif kind == "heavytail":
        scores = rng.pareto(2.0, size=g) + 1e-3
    else:
        raise ValueError(f"unknown profile kind: {kind}")
    side = int(round(np.sqrt(g)))
    grid = (side, side) if side * side == g else None
    return ImportanceProfile(g=g, scores=scores, source=f"synthetic:{kind}:seed={seed}", patch_grid=grid)


def save_profile(path, profile: ImportanceProfile) -> None:
    grid = profile.patch_grid
    if grid is None:
        side = int(round(np.sqrt(profile.g)))
        grid = (side, side) if side * side == profile.g else (1, profile.g)
    payload = {
        "g": int(profile.g),
        "patch_grid": [int(grid[0]), int(grid[1])],
        "scores": [float(s) for s in profile.scores],
        "source": profile.source,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_profile(path) -> ImportanceProfile:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("g", "patch_grid", "scores", "source"):
        if key not in payload:
            raise ValueError(f"profile file missing '{key}'")
    grid = tuple(int(x) for x in payload["patch_grid"])
    if len(grid) != 2 or grid[0] * grid[1] != int(payload["g"]):
        raise ValueError("patch_grid does not match g")
    return ImportanceProfile(
        g=int(payload["g"]),
        scores=np.asarray(payload["scores"], dtype=float),
        source=str(payload["source"]),
        patch_grid=grid,
    )
