"""Latency, rate and error-rate figures for allocated transmissions.

Design-time bounds use each block's equivalent gain; inference-time figures
re-evaluate the rate on the actual member subchannels, so by Jensen they can
only be slower. The finite-blocklength penalty appears in two algebraically
identical forms (through the inverse-Q coefficient or through alpha); one
shared routine serves both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .fbl import FblParams, alpha_coeff, dispersion_exact, penalty_coeff
from .ideal import LN2
from .link import ChannelRealization
from .mapping import SubcarrierMapping

__all__ = [
    "LatencyReport",
    "latency_bound",
    "inference_latency",
    "fbl_rate",
    "fbl_inference_latency",
    "ber_from_bler",
    "achieved_bler",
    "achieved_ber",
]


@dataclass(frozen=True)
class LatencyReport:
    per_block_latency: np.ndarray  # seconds, indexed by patch
    worst_case: float
    worst_block: int
    ofdm_symbols_needed: np.ndarray
    coherence_ok: bool

    @classmethod
    def from_latencies(cls, lat: np.ndarray, df0: float, t_coh: int) -> "LatencyReport":
        lat = np.asarray(lat, dtype=float)
        worst = int(np.argmax(lat))
        symbols = np.where(np.isfinite(lat), np.ceil(lat * df0 - 1e-12), np.inf)
        ok = bool(np.all(symbols < t_coh))
        return cls(
            per_block_latency=lat,
            worst_case=float(lat[worst]),
            worst_block=worst,
            ofdm_symbols_needed=symbols,
            coherence_ok=ok,
        )


def latency_bound(bits, powers, eq_gains, d, df, sigma2) -> float:
    """Design-time worst-case latency over the equivalent block gains."""
    bits = np.asarray(bits, dtype=float)
    gamma = np.asarray(powers) * np.asarray(eq_gains) ** 2 / sigma2
    rates = df * np.log2(1.0 + gamma)
    lat = np.where(bits > 0, np.where(rates > 0, d * bits / np.where(rates > 0, rates, 1.0), np.inf), 0.0)
    return float(np.max(lat))


def _member_rates(mapping: SubcarrierMapping, channel: ChannelRealization, powers, df0, sigma2, penalty=None):
    """Per-patch achievable rate summed over the block's member subchannels.

    ``powers`` may be one value per patch (shared by all members) or a
    (G, spb) array of per-subchannel powers in block order.
    """
    gains = mapping.member_gains(channel)  # (G, spb) in block order
    powers = np.asarray(powers, dtype=float)
    if powers.ndim == 1:
        p_block = powers[np.argsort(mapping.patch_to_block)]  # patch power -> block order
        p = p_block[:, None]
    else:
        p = powers
    gamma = p * gains**2 / sigma2
    c = df0 * np.log2(1.0 + gamma)
    if penalty is not None:
        c = np.maximum(c - penalty(gamma), 0.0)
    rates_block = c.sum(axis=1)
    return rates_block[mapping.patch_to_block]  # back to patch order


def inference_latency(
    mapping: SubcarrierMapping,
    channel: ChannelRealization,
    bits,
    powers,
    d,
    df0,
    sigma2,
    t_coh: int,
) -> LatencyReport:
    """Worst-case latency with rates evaluated on the actual member gains."""
    bits = np.asarray(bits, dtype=float)
    rates = _member_rates(mapping, channel, powers, df0, sigma2)
    lat = np.where(bits > 0, np.where(rates > 0, d * bits / np.where(rates > 0, rates, 1.0), np.inf), 0.0)
    return LatencyReport.from_latencies(lat, df0, t_coh)


def fbl_rate(gamma, df, bler, l_c) -> float:
    """Normal-approximation achievable rate; may be negative, callers clamp."""
    gamma = np.asarray(gamma, dtype=float)
    val = df * (np.log2(1.0 + gamma) - penalty_coeff(bler, l_c) * dispersion_exact(gamma))
    return float(val) if val.ndim == 0 else val


def fbl_inference_latency(
    mapping: SubcarrierMapping,
    channel: ChannelRealization,
    bits,
    powers,
    fbl: FblParams,
    d,
    df0,
    sigma2,
    t_coh: int,
) -> LatencyReport:
    """Finite-blocklength latency with per-subchannel penalties, clamped at zero rate."""
    g = mapping.g
    alpha = fbl.alpha if fbl.alpha.size == g else np.full(g, fbl.alpha[0])
    coeff_patch = alpha_coeff(alpha)  # per patch
    coeff_block = coeff_patch[np.argsort(mapping.patch_to_block)]

    def penalty(gamma):
        return df0 * coeff_block[:, None] * dispersion_exact(gamma)

    bits = np.asarray(bits, dtype=float)
    rates = _member_rates(mapping, channel, powers, df0, sigma2, penalty=penalty)
    lat = np.where(bits > 0, np.where(rates > 0, d * bits / np.where(rates > 0, rates, 1.0), np.inf), 0.0)
    return LatencyReport.from_latencies(lat, df0, t_coh)


def ber_from_bler(bler, l_c, gamma_corr: float = 10.0) -> float:
    """Bit error rate implied by a block error rate, clamped into [0, 1]."""
    bler = np.asarray(bler, dtype=float)
    if np.any(bler < 0) or np.any(bler >= 1):
        raise ValueError("bler must lie in [0, 1)")
    if gamma_corr < 0:
        raise ValueError("gamma_corr must be non-negative")
    val = np.clip(gamma_corr * (1.0 - (1.0 - bler) ** (1.0 / l_c)), 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def _normal_approx_z(gamma, rate_per_symbol, l_c):
    """Q-function argument for the achieved block error probability."""
    gamma = np.asarray(gamma, dtype=float)
    r = np.asarray(rate_per_symbol, dtype=float)
    u = dispersion_exact(gamma)
    num = math.sqrt(l_c) * (np.log1p(gamma) - r * LN2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(u > 0, num / u, np.where(num >= 0, np.inf, -np.inf))
    return np.where(r <= 0, np.inf, z)


def achieved_bler(gamma, rate_per_symbol, l_c):
    """Block error probability achieved at a demanded per-symbol rate."""
    z = _normal_approx_z(gamma, rate_per_symbol, l_c)
    val = ndtr(-z)
    return float(val) if val.ndim == 0 else val


def achieved_ber(gamma, rate_per_symbol, l_c, gamma_corr: float = 10.0):
    """Bit error rate of the achieved-reliability model.

    Composes the achieved block error probability with the bit-rate
    conversion entirely in log space, so deeply failed blocks still order
    correctly instead of saturating through floating-point underflow.
    """
    z = _normal_approx_z(gamma, rate_per_symbol, l_c)
    log_success = log_ndtr(z)  # log(1 - bler)
    val = np.clip(gamma_corr * (1.0 - np.exp(log_success / l_c)), 0.0, 1.0)
    return float(val) if val.ndim == 0 else val
