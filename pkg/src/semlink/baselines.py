"""Reference allocation schemes the optimized methods are compared against."""

from __future__ import annotations

import numpy as np

from .ideal import DEFAULT_SETTINGS, SolverSettings, integerize, solve_bits

__all__ = [
    "water_filling",
    "uniform_bits",
    "importance_bits",
    "beta_from_rho",
]


def water_filling(gains, sigma2: float, p_tot: float) -> np.ndarray:
    """Capacity-maximizing power split over parallel subchannels.

    Exact common-water-level solution: channels too weak to reach the level
    are dropped one by one from the worst end. Returns one power per
    subchannel, summing to ``p_tot``.
    """
    gains = np.asarray(gains, dtype=float).ravel()
    inv = sigma2 / gains**2  # noise-to-gain floor per channel
    order = np.argsort(inv)
    inv_sorted = inv[order]
    n = inv.size
    # with k best channels active: level = (p_tot + sum of their floors) / k
    cum = np.cumsum(inv_sorted)
    k_active = n
    for k in range(n, 0, -1):
        level = (p_tot + cum[k - 1]) / k
        if level > inv_sorted[k - 1]:
            k_active = k
            break
    level = (p_tot + cum[k_active - 1]) / k_active
    powers = np.zeros(n)
    powers[order[:k_active]] = level - inv_sorted[:k_active]
    return powers


def uniform_bits(target_pb: int, g: int, b_min: int, b_max: int, scores) -> np.ndarray:
    """Equal split of the patch-bit budget; the remainder goes to the most
    important patches, mirroring the integerization convention."""
    base = target_pb // g
    bits = np.full(g, base, dtype=int)
    return integerize(bits, scores, b_min, b_max, target_pb, 1)


def importance_bits(
    weights,
    scores,
    target_pb: int,
    b_min: int,
    b_max: int,
    u_range: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """Importance-driven quantization depths with no latency coupling.

    The multiplier bisection from the joint solver with the cap pinned at
    ``b_max``, then integerized to meet the budget exactly.
    """
    weights = np.asarray(weights, dtype=float)
    caps = np.full(weights.size, float(b_max))
    bits, _, _ = solve_bits(weights, caps, b_min, target_pb, u_range, settings)
    return integerize(bits, scores, b_min, b_max, target_pb, 1)


def beta_from_rho(target_pb: int, g: int, b_min: int, b_max: int) -> float:
    """Top-percentage implied by a compression ratio for two-level depths."""
    if b_max == b_min:
        return 100.0
    beta = 100.0 * (target_pb / g - b_min) / (b_max - b_min)
    return float(min(max(beta, 0.0), 100.0))
