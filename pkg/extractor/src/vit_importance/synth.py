"""Synthetic importance profiles, so the core runs with no model at hand."""

from __future__ import annotations

import numpy as np

from .extract import write_profile

__all__ = ["synthesize_scores"]

DISTRIBUTIONS = ("uniform", "ramp", "heavytail")


def synthesize_scores(g: int, distribution: str, seed: int, output_path: str) -> dict:
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 7])))
    if distribution == "uniform":
        scores = np.full(g, 0.5)
    elif distribution == "ramp":
        scores = np.arange(1, g + 1, dtype=float) / g
    else:
        scores = rng.pareto(2.0, size=g) + 1e-3
    side = int(round(np.sqrt(g)))
    grid = [side, side] if side * side == g else [1, g]
    profile = {
        "g": int(g),
        "patch_grid": grid,
        "scores": [float(s) for s in scores],
        "source": f"synthetic:{distribution}:seed={seed}",
    }
    write_profile(output_path, profile)
    return profile
