"""Subcarrier mapping: sort-and-slice blocks and patch-to-block assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .importance import ImportanceProfile, importance_order
from .link import ChannelRealization, make_rng

__all__ = [
    "SubcarrierMapping",
    "build_blocks",
    "assign_patches",
    "build_mapping",
    "symbol_placement",
    "mapping_to_json",
]

POLICIES = ("IASM", "RANDOM", "INVERSE")


@dataclass(frozen=True)
class SubcarrierMapping:
    """Partition of all (f, r) subchannels into equal-size blocks.

    Blocks are stored in ascending order of their equivalent gain, so
    ``eq_gains`` is non-decreasing. ``patch_to_block[i]`` is the block that
    carries patch ``i``; importance orientation lives entirely in that
    permutation.
    """

    block_members: np.ndarray  # (G, spb, 2) int, (f, r) coordinates
    eq_gains: np.ndarray  # (G,)
    patch_to_block: np.ndarray  # (G,) int bijection
    policy: str

    @property
    def g(self) -> int:
        return self.eq_gains.size

    def member_gains(self, channel: ChannelRealization) -> np.ndarray:
        """Per-block member gains, shape (G, spb), in block order."""
        f = self.block_members[..., 0]
        r = self.block_members[..., 1]
        return channel.gains[f, r]

    def patch_gains(self) -> np.ndarray:
        """Equivalent gain seen by each patch."""
        return self.eq_gains[self.patch_to_block]


def build_blocks(channel: ChannelRealization, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Sort all subchannel gains ascending and slice into G contiguous blocks.

    Ties are broken lexicographically by (f, r) for reproducibility. Returns
    ``(block_members, eq_gains)`` with eq_gains non-decreasing.
    """
    gains = channel.gains
    n_f, n_s = gains.shape
    total = n_f * n_s
    if total % g != 0:
        raise ValueError(f"g={g} does not divide the {total} subchannels")
    spb = total // g
    f_idx, r_idx = np.divmod(np.arange(total), n_s)
    flat = gains.ravel()
    order = np.lexsort((r_idx, f_idx, flat))
    members = np.stack([f_idx[order], r_idx[order]], axis=-1).reshape(g, spb, 2)
    eq_gains = flat[order].reshape(g, spb).mean(axis=1)
    return members, eq_gains


def assign_patches(eq_gains: np.ndarray, profile: ImportanceProfile, policy: str, seed: int = 0) -> np.ndarray:
    """Patch-to-block permutation for a given mapping policy.

    IASM pairs the k-th most important patch with the k-th best block;
    INVERSE pairs it with the k-th worst; RANDOM draws a seeded bijection.
    """
    g = eq_gains.size
    if profile.g != g:
        raise ValueError("profile size does not match block count")
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    ptb = np.empty(g, dtype=int)
    if policy == "RANDOM":
        ptb[:] = make_rng(seed, 1).permutation(g)
        return ptb
    order = importance_order(profile)
    if policy == "IASM":
        ptb[order] = np.arange(g - 1, -1, -1)  # best block (last) to most important
    else:  # INVERSE
        ptb[order] = np.arange(g)
    return ptb


def build_mapping(
    channel: ChannelRealization,
    profile: ImportanceProfile,
    policy: str = "IASM",
    seed: int = 0,
) -> SubcarrierMapping:
    members, eq_gains = build_blocks(channel, profile.g)
    ptb = assign_patches(eq_gains, profile, policy, seed)
    return SubcarrierMapping(block_members=members, eq_gains=eq_gains, patch_to_block=ptb, policy=policy)


def symbol_placement(mapping: SubcarrierMapping, block: int, n_symbols: int, seed: int = 0) -> np.ndarray:
    """Random member order per OFDM symbol for one block, shape (T, spb, 2)."""
    members = mapping.block_members[block]
    rng = make_rng(seed, 2, block)
    return np.stack([members[rng.permutation(members.shape[0])] for _ in range(n_symbols)])


def mapping_to_json(mapping: SubcarrierMapping) -> str:
    return json.dumps(
        {
            "policy": mapping.policy,
            "eq_gains": [float(x) for x in mapping.eq_gains],
            "patch_to_block": [int(x) for x in mapping.patch_to_block],
        }
    )
