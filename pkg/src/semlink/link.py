"""MIMO-OFDM link model: block-fading channel draws and SVD subchannel gains.

The channel is drawn once per trial and held constant over the coherence
window. All randomness goes through Philox4x64-10 (numpy.random.Philox), a
counter-based generator, so seeds are portable and every draw is replayable
from the integers recorded in the output files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinkConfig",
    "ChannelRealization",
    "make_rng",
    "generate_channel",
    "svd_gains",
    "save_gains",
    "load_gains",
]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for (seed, stream...). Streams keep the channel,
    mapping and error-injection draws independent at the same base seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class LinkConfig:
    """Static link parameters.

    Powers and variances are linear. ``g`` is the number of transmission
    blocks (one per image patch) and must divide ``n_s * f`` so every block
    owns the same number of frequency-antenna subchannels per OFDM symbol.
    """

    n_tx: int = 4
    n_rx: int = 4
    n_s: int = 4
    f: int = 784
    t_coh: int = 50
    df0: float = 15e3
    sigma2: float = 1.0
    sigma_h2: float = 1.0
    p_tot: float = 3136.0
    g: int = 196

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_s", "f", "t_coh", "g"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_s > min(self.n_tx, self.n_rx):
            raise ValueError("n_s must not exceed min(n_tx, n_rx)")
        if (self.n_s * self.f) % self.g != 0:
            raise ValueError("g must divide n_s * f exactly")
        if self.df0 <= 0 or self.sigma2 <= 0 or self.p_tot <= 0 or self.sigma_h2 <= 0:
            raise ValueError("df0, sigma2, sigma_h2 and p_tot must be positive")

    @property
    def n_subchannels(self) -> int:
        return self.n_s * self.f

    @property
    def subchannels_per_block(self) -> int:
        return self.n_subchannels // self.g

    @property
    def block_bandwidth(self) -> float:
        """Effective bandwidth per block in Hz."""
        return self.subchannels_per_block * self.df0

    @property
    def symbol_budget(self) -> int:
        """Maximum semantic symbol length per block over the coherence window."""
        return self.n_subchannels * self.t_coh // self.g

    @property
    def power_sum(self) -> float:
        """Per-subchannel block power sum implied by the total power budget."""
        return self.p_tot * self.g / self.n_subchannels


@dataclass(frozen=True)
class ChannelRealization:
    """Per-subcarrier parallel subchannel gains (top singular values).

    ``gains`` has shape (F, N_s) with every row sorted non-increasing.
    """

    gains: np.ndarray
    seed: int

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        if gains.ndim != 2:
            raise ValueError("gains must be a 2-D array (subcarriers x streams)")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise ValueError("gains must be finite and non-negative")
        if np.any(np.diff(gains, axis=1) > 1e-12 * np.maximum(gains[:, :1], 1.0)):
            raise ValueError("each row of gains must be non-increasing")
        object.__setattr__(self, "gains", gains)

    @property
    def n_subcarriers(self) -> int:
        return self.gains.shape[0]

    @property
    def n_streams(self) -> int:
        return self.gains.shape[1]


def svd_gains(h: np.ndarray, n_s: int) -> np.ndarray:
    """Top ``n_s`` singular values of a channel matrix, non-increasing."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise ValueError("h must be a matrix")
    if n_s > min(h.shape):
        raise ValueError("n_s exceeds min(n_rx, n_tx)")
    s = np.linalg.svd(h, compute_uv=False)
    return s[:n_s]


def generate_channel(config: LinkConfig, seed: int) -> ChannelRealization:
    """Draw F i.i.d. Rayleigh MIMO matrices and keep their top singular values.

    Entries are circularly-symmetric complex Gaussian with variance
    ``sigma_h2`` (real and imaginary parts each carry half of it).
    """
    rng = make_rng(seed, 0)
    scale = np.sqrt(config.sigma_h2 / 2.0)
    shape = (config.f, config.n_rx, config.n_tx)
    h = rng.standard_normal(shape) * scale + 1j * rng.standard_normal(shape) * scale
    s = np.linalg.svd(h, compute_uv=False)  # (F, min(n_rx, n_tx)), descending
    return ChannelRealization(gains=s[:, : config.n_s], seed=int(seed))


def save_gains(path, channel: ChannelRealization) -> None:
    """Dump gains so experiments are replayable without re-running the SVD.

    ``.npy`` stores the raw array; any other suffix writes CSV with one row
    per subcarrier and one column per stream.
    """
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, channel.gains)
    else:
        np.savetxt(path, channel.gains, delimiter=",", header=f"seed={channel.seed}")


def load_gains(path, seed: int = -1) -> ChannelRealization:
    path = str(path)
    if path.endswith(".npy"):
        gains = np.load(path)
    else:
        gains = np.loadtxt(path, delimiter=",", ndmin=2)
    return ChannelRealization(gains=gains, seed=seed)
