import numpy as np
import pytest

from semlink.quantizer import (
    PatchImage,
    dequantize,
    deserialize_payload,
    inject_bit_errors,
    pack_codes,
    psnr,
    quantize,
    serialize_payload,
    unpack_codes,
    weighted_distortion,
    weighted_error_bound,
)


def image_from(values, patch):
    return PatchImage.from_array(np.asarray(values, dtype=float), patch)


def random_image(rng, h=8, w=8, c=1, patch=4):
    return image_from(rng.uniform(0.0, 1.0, (h, w, c)), patch)


def test_two_level_quantizer_example():
    img = image_from(np.array([[0.6, 0.0], [1.0, 0.3]]).reshape(2, 2, 1), 2)
    q = quantize(img, np.array([1]))
    # value 0.6 with one bit lands in the upper cell and reconstructs at 0.75
    recon = dequantize(q)
    assert recon.values[0, 0, 0] == pytest.approx(0.75)
    assert q.codes[0][0] == 1


def test_edge_values_clamp():
    img = image_from(np.linspace(0, 1, 16).reshape(4, 4, 1), 4)
    q = quantize(img, np.array([3]))
    assert q.codes[0][0] == 0
    assert q.codes[0][-1] == 2**3 - 1


def test_roundtrip_error_bound():
    rng = np.random.default_rng(0)
    img = random_image(rng, 16, 16, 3, 4)
    bits = rng.integers(1, 9, img.g)
    recon = dequantize(quantize(img, bits))
    delta = (img.u_max - img.u_min) / np.exp2(bits.astype(float))
    err = np.abs(img.patches() - recon.patches())
    assert np.all(err <= delta[:, None] / 2 + 1e-12)


def test_degenerate_constant_image():
    img = image_from(np.full((4, 4, 1), 0.37), 2)
    q = quantize(img, np.array([2, 2, 2, 2]))
    assert np.all(q.codes == 0)
    recon = dequantize(q)
    assert np.allclose(recon.values, 0.37)


def test_dequantize_examples():
    img = image_from(np.zeros((2, 2, 1)), 2)
    q = quantize(img, np.array([2]))
    q2 = type(q)(codes=np.zeros_like(q.codes), bits=q.bits, u_min=0.0, u_max=1.0,
                 shape=q.shape, patch=q.patch, packed=q.packed)
    assert np.allclose(dequantize(q2).values, 0.125)
    q3 = type(q)(codes=np.full_like(q.codes, 3), bits=q.bits, u_min=0.0, u_max=1.0,
                 shape=q.shape, patch=q.patch, packed=q.packed)
    assert np.allclose(dequantize(q3).values, 0.875)


def test_code_out_of_range_rejected():
    img = image_from(np.zeros((2, 2, 1)), 2)
    q = quantize(img, np.array([2]))
    bad = type(q)(codes=np.full_like(q.codes, 4), bits=q.bits, u_min=0.0, u_max=1.0,
                  shape=q.shape, patch=q.patch, packed=q.packed)
    with pytest.raises(ValueError):
        dequantize(bad)


def test_bits_below_one_rejected():
    img = image_from(np.zeros((2, 2, 1)), 2)
    with pytest.raises(ValueError):
        quantize(img, np.array([0]))


def test_pack_unpack_mixed_depths():
    rng = np.random.default_rng(1)
    bits = np.array([1, 3, 8, 5, 2])
    d = 7
    codes = np.stack([rng.integers(0, 2**b, d) for b in bits]).astype(np.uint32)
    payload, n_bits = pack_codes(codes, bits)
    assert n_bits == d * bits.sum()
    assert len(payload) == (n_bits + 7) // 8
    assert np.array_equal(unpack_codes(payload, bits, d), codes)


def test_packed_length_invariant():
    rng = np.random.default_rng(2)
    img = random_image(rng, 8, 8, 2, 4)
    bits = np.array([1, 4, 8, 2])
    q = quantize(img, bits)
    assert q.n_bits == img.d * bits.sum()
    spans = q.block_bit_spans()
    assert spans[0, 0] == 0
    assert spans[-1, 1] == q.n_bits
    assert np.all(spans[1:, 0] == spans[:-1, 1])


def test_error_bound_direct_value():
    assert weighted_error_bound([1], [1.0], 1, 0.0, 1.0) == pytest.approx(1.0 / 16.0)


def test_error_bound_scaling_law():
    rng = np.random.default_rng(3)
    bits = rng.integers(1, 7, 5)
    w = rng.uniform(0.1, 1.0, 5)
    e1 = weighted_error_bound(bits, w, 4, 0.0, 2.0)
    e2 = weighted_error_bound(bits + 1, w, 4, 0.0, 2.0)
    assert e2 == pytest.approx(e1 / 4.0, rel=1e-12)


def test_measured_distortion_within_bound():
    rng = np.random.default_rng(4)
    for _ in range(20):
        img = random_image(rng, 8, 8, 1, 4)
        bits = rng.integers(1, 9, img.g)
        w = rng.uniform(1e-7, 1.0, img.g)
        recon = dequantize(quantize(img, bits))
        measured = weighted_distortion(img, recon, w)
        bound = weighted_error_bound(bits, w, img.d, img.u_min, img.u_max)
        assert measured <= bound + 1e-12


def test_inject_identity_and_full_flip():
    rng = np.random.default_rng(5)
    img = random_image(rng, 8, 8, 1, 4)
    bits = np.array([2, 3, 1, 4])
    q = quantize(img, bits)
    spans = q.block_bit_spans()
    same = inject_bit_errors(q.packed, q.n_bits, np.zeros(4), spans, seed=0)
    assert same == q.packed
    flipped = inject_bit_errors(q.packed, q.n_bits, np.ones(4), spans, seed=0)
    a = np.unpackbits(np.frombuffer(q.packed, dtype=np.uint8), count=q.n_bits)
    b = np.unpackbits(np.frombuffer(flipped, dtype=np.uint8), count=q.n_bits)
    assert np.all(a ^ b == 1)


def test_inject_rate_statistics():
    # empirical flip rate within 3 sigma of the binomial expectation
    n_bits = 1_000_000
    payload = bytes(n_bits // 8)
    ber = 1.3169e-3
    out = inject_bit_errors(payload, n_bits, [ber], [(0, n_bits)], seed=42)
    flips = int(np.unpackbits(np.frombuffer(out, dtype=np.uint8)).sum())
    sigma = np.sqrt(n_bits * ber * (1 - ber))
    assert abs(flips - n_bits * ber) < 3 * sigma


def test_inject_determinism():
    rng = np.random.default_rng(6)
    img = random_image(rng)
    q = quantize(img, np.array([3, 3, 3, 3]))
    spans = q.block_bit_spans()
    a = inject_bit_errors(q.packed, q.n_bits, np.full(4, 0.3), spans, seed=9)
    b = inject_bit_errors(q.packed, q.n_bits, np.full(4, 0.3), spans, seed=9)
    assert a == b


def test_payload_serialization_roundtrip():
    rng = np.random.default_rng(7)
    img = random_image(rng, 8, 8, 3, 4)
    bits = np.array([1, 8, 4, 2])
    q = quantize(img, bits)
    blob = serialize_payload(q)
    q2 = deserialize_payload(blob)
    assert np.array_equal(q2.codes, q.codes)
    assert np.array_equal(q2.bits, q.bits)
    assert q2.u_min == q.u_min and q2.u_max == q.u_max
    assert np.allclose(dequantize(q2).values, dequantize(q).values)


def test_psnr_improves_with_depth():
    # statistical property on a seeded image: one more bit per patch
    rng = np.random.default_rng(8)
    img = random_image(rng, 16, 16, 3, 8)
    for b in range(1, 7):
        bits = np.full(img.g, b)
        low = psnr(img, dequantize(quantize(img, bits)))
        high = psnr(img, dequantize(quantize(img, bits + 1)))
        assert high > low


def test_psnr_single_patch_depth_bump():
    rng = np.random.default_rng(9)
    img = random_image(rng, 16, 16, 3, 8)
    bits = np.full(img.g, 3)
    base = psnr(img, dequantize(quantize(img, bits)))
    for i in range(img.g):
        bumped = bits.copy()
        bumped[i] += 1
        assert psnr(img, dequantize(quantize(img, bumped))) >= base
