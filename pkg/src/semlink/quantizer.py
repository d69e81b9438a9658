"""Patch-wise uniform quantization, bit packing and bit-flip injection.

Layout conventions, fixed so independent implementations interoperate:
patches are indexed row-major over the patch grid; elements within a patch
run row-major over (row, col, channel); codes pack most-significant-bit
first, element after element, patch after patch. The side information
(per-patch depths, u_min, u_max, dimensions) travels in a JSON header ahead
of the packed payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .link import make_rng

__all__ = [
    "PatchImage",
    "QuantizedImage",
    "quantize",
    "dequantize",
    "weighted_error_bound",
    "weighted_distortion",
    "psnr",
    "pack_codes",
    "unpack_codes",
    "inject_bit_errors",
    "serialize_payload",
    "deserialize_payload",
    "load_image",
    "save_image",
]

MAGIC = b"SLQ1"


@dataclass(frozen=True)
class PatchImage:
    """A real image tensor split into square patches."""

    values: np.ndarray  # (H, W, C) float
    patch: int
    u_min: float
    u_max: float

    @classmethod
    def from_array(cls, values: np.ndarray, patch: int) -> "PatchImage":
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise ValueError("image must be (H, W) or (H, W, C)")
        h, w, _ = values.shape
        if h % patch or w % patch:
            raise ValueError("patch size must divide height and width")
        return cls(values=values, patch=patch, u_min=float(values.min()), u_max=float(values.max()))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def g(self) -> int:
        h, w, _ = self.values.shape
        return (h // self.patch) * (w // self.patch)

    @property
    def d(self) -> int:
        return self.patch * self.patch * self.values.shape[2]

    def patches(self) -> np.ndarray:
        """View as (G, D) with the documented element order."""
        h, w, c = self.values.shape
        p = self.patch
        return (
            self.values.reshape(h // p, p, w // p, p, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(self.g, self.d)
        )

    @classmethod
    def from_patches(cls, flat: np.ndarray, shape, patch: int, u_min: float, u_max: float) -> "PatchImage":
        h, w, c = shape
        p = patch
        values = (
            np.asarray(flat, dtype=float)
            .reshape(h // p, w // p, p, p, c)
            .transpose(0, 2, 1, 3, 4)
            .reshape(h, w, c)
        )
        return cls(values=values, patch=p, u_min=u_min, u_max=u_max)


@dataclass(frozen=True)
class QuantizedImage:
    codes: np.ndarray  # (G, D) integer codes
    bits: np.ndarray  # (G,) per-patch depth
    u_min: float
    u_max: float
    shape: tuple[int, int, int]
    patch: int
    packed: bytes

    @property
    def n_bits(self) -> int:
        return int(self.codes.shape[1] * self.bits.sum())

    def block_bit_spans(self) -> np.ndarray:
        """(G, 2) start/stop bit offsets of each patch in the packed stream."""
        lengths = self.codes.shape[1] * self.bits
        stops = np.cumsum(lengths)
        starts = stops - lengths
        return np.stack([starts, stops], axis=1)


def quantize(image: PatchImage, bits) -> QuantizedImage:
    """Uniform mid-rise quantization with per-patch depth.

    The top edge clamps into the last cell; a degenerate image
    (u_min == u_max) quantizes to all-zero codes.
    """
    bits = np.asarray(bits, dtype=int)
    if bits.size != image.g:
        raise ValueError("bits vector length must equal the patch count")
    if np.any(bits < 1):
        raise ValueError("every patch needs at least one bit")
    flat = image.patches()
    u_min, u_max = image.u_min, image.u_max
    levels = np.exp2(bits.astype(float))
    codes = np.empty_like(flat, dtype=np.uint32)
    if u_max == u_min:
        codes[:] = 0
    else:
        delta = (u_max - u_min) / levels
        raw = np.floor((flat - u_min) / delta[:, None])
        codes[:] = np.clip(raw, 0, (levels - 1)[:, None]).astype(np.uint32)
    packed, _ = pack_codes(codes, bits)
    return QuantizedImage(
        codes=codes,
        bits=bits,
        u_min=u_min,
        u_max=u_max,
        shape=image.shape,
        patch=image.patch,
        packed=packed,
    )


def dequantize(q: QuantizedImage) -> PatchImage:
    """Midpoint reconstruction from per-patch codes."""
    levels = np.exp2(q.bits.astype(float))
    if np.any(q.codes >= levels[:, None]):
        raise ValueError("code out of range for its bit depth")
    delta = (q.u_max - q.u_min) / levels
    flat = q.u_min + (q.codes.astype(float) + 0.5) * delta[:, None]
    if q.u_max == q.u_min:
        flat = np.full_like(flat, q.u_min)
    return PatchImage.from_patches(flat, q.shape, q.patch, q.u_min, q.u_max)


def weighted_error_bound(bits, weights, d: int, u_min: float, u_max: float) -> float:
    """Upper bound on the importance-weighted quantization error."""
    w = getattr(weights, "weights", weights)
    bits = np.asarray(bits, dtype=float)
    return float(np.sum(np.asarray(w) * d * (u_max - u_min) ** 2 / 4.0 * 4.0 ** (-bits)))


def weighted_distortion(original: PatchImage, recon: PatchImage, weights) -> float:
    """Measured importance-weighted squared error, patch by patch."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    sse = np.sum((original.patches() - recon.patches()) ** 2, axis=1)
    return float(np.sum(w * sse))


def psnr(original: PatchImage, recon: PatchImage, peak: float | None = None) -> float:
    if peak is None:
        peak = original.u_max - original.u_min
    mse = float(np.mean((original.values - recon.values) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak**2 / mse)


def pack_codes(codes: np.ndarray, bits) -> tuple[bytes, int]:
    """Pack per-patch codes into a big-endian bit stream."""
    bits = np.asarray(bits, dtype=int)
    chunks = []
    for i in range(codes.shape[0]):
        b = int(bits[i])
        if b == 0:
            continue
        shifts = np.arange(b - 1, -1, -1, dtype=np.uint32)
        chunk = (codes[i][:, None] >> shifts[None, :]) & 1
        chunks.append(chunk.ravel().astype(np.uint8))
    stream = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    return np.packbits(stream).tobytes(), int(stream.size)


def unpack_codes(payload: bytes, bits, d: int) -> np.ndarray:
    """Invert :func:`pack_codes` for the given depth table."""
    bits = np.asarray(bits, dtype=int)
    n_bits = int(d * bits.sum())
    stream = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n_bits)
    codes = np.zeros((bits.size, d), dtype=np.uint32)
    pos = 0
    for i in range(bits.size):
        b = int(bits[i])
        if b == 0:
            continue
        chunk = stream[pos : pos + d * b].reshape(d, b).astype(np.uint32)
        weights_pow2 = np.exp2(np.arange(b - 1, -1, -1)).astype(np.uint32)
        codes[i] = chunk @ weights_pow2
        pos += d * b
    return codes


def inject_bit_errors(payload: bytes, n_bits: int, per_block_ber, block_spans, seed: int) -> bytes:
    """Flip each bit of block i independently with probability BER_i."""
    ber = np.asarray(per_block_ber, dtype=float)
    if np.any(ber < 0) or np.any(ber > 1):
        raise ValueError("bit error rates must lie in [0, 1]")
    stream = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n_bits)
    rng = make_rng(seed, 3)
    for i, (start, stop) in enumerate(np.asarray(block_spans, dtype=int)):
        if stop <= start or ber[i] == 0.0:
            continue
        flips = rng.random(stop - start) < ber[i]
        stream[start:stop] ^= flips.astype(np.uint8)
    return np.packbits(stream).tobytes()


def serialize_payload(q: QuantizedImage) -> bytes:
    header = json.dumps(
        {
            "bits": [int(b) for b in q.bits],
            "u_min": q.u_min,
            "u_max": q.u_max,
            "height": q.shape[0],
            "width": q.shape[1],
            "channels": q.shape[2],
            "patch": q.patch,
        }
    ).encode("utf-8")
    return MAGIC + len(header).to_bytes(4, "little") + header + q.packed


def deserialize_payload(blob: bytes) -> QuantizedImage:
    if blob[:4] != MAGIC:
        raise ValueError("not a quantized-image payload")
    hlen = int.from_bytes(blob[4:8], "little")
    header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    bits = np.asarray(header["bits"], dtype=int)
    shape = (header["height"], header["width"], header["channels"])
    d = header["patch"] * header["patch"] * header["channels"]
    payload = blob[8 + hlen :]
    codes = unpack_codes(payload, bits, d)
    return QuantizedImage(
        codes=codes,
        bits=bits,
        u_min=float(header["u_min"]),
        u_max=float(header["u_max"]),
        shape=shape,
        patch=int(header["patch"]),
        packed=payload[: (int(d * bits.sum()) + 7) // 8],
    )


def load_image(path, patch: int = 16) -> PatchImage:
    """Read a PNG (scaled to [0, 1]) or a .npy float tensor."""
    path = str(path)
    if path.endswith(".npy"):
        return PatchImage.from_array(np.load(path), patch)
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("RGB"), dtype=float) / 255.0
    return PatchImage.from_array(arr, patch)


def save_image(path, image: PatchImage) -> None:
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, image.values)
        return
    from PIL import Image

    arr = np.clip(image.values, 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8).squeeze()).save(path)
