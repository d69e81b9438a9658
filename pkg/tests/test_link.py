import numpy as np
import pytest

from semlink.link import ChannelRealization, LinkConfig, generate_channel, load_gains, save_gains, svd_gains


def test_svd_gains_zero_matrix():
    assert np.allclose(svd_gains(np.zeros((3, 3)), 3), 0.0)


def test_svd_gains_diagonal():
    h = np.diag([3.0, 1.0])
    assert np.allclose(svd_gains(h, 2), [3.0, 1.0])


def test_svd_gains_identity_injection():
    gains = np.array([svd_gains(np.eye(2), 2) for _ in range(4)])
    channel = ChannelRealization(gains=gains, seed=0)
    assert np.allclose(channel.gains, 1.0)


def test_svd_gains_dimension_check():
    with pytest.raises(ValueError):
        svd_gains(np.eye(2), 3)


def test_svd_determinant_identity():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    s = svd_gains(h, 4)
    det = abs(np.linalg.det(h @ h.conj().T))
    assert np.prod(s**2) == pytest.approx(det, rel=1e-8)


def test_scalar_channel_magnitude():
    config = LinkConfig(n_tx=1, n_rx=1, n_s=1, f=8, g=8)
    channel = generate_channel(config, seed=3)
    assert channel.gains.shape == (8, 1)
    assert np.all(channel.gains >= 0)


def test_determinism_bit_identical():
    config = LinkConfig(f=28, g=28)
    a = generate_channel(config, seed=123)
    b = generate_channel(config, seed=123)
    assert np.array_equal(a.gains, b.gains)
    c = generate_channel(config, seed=124)
    assert not np.array_equal(a.gains, c.gains)


def test_mean_frobenius_norm():
    # sum of squared singular values equals the Frobenius norm squared when
    # n_s = min(n_tx, n_rx); 16 unit-variance entries average to 16
    config = LinkConfig(n_tx=4, n_rx=4, n_s=4, f=784, g=196)
    channel = generate_channel(config, seed=0)
    mean_fro2 = float(np.mean(np.sum(channel.gains**2, axis=1)))
    assert abs(mean_fro2 - 16.0) < 1.0


def test_rows_sorted_non_increasing():
    config = LinkConfig(f=56, g=56)
    channel = generate_channel(config, seed=9)
    assert np.all(np.diff(channel.gains, axis=1) <= 1e-12)


def test_unitary_invariance():
    rng = np.random.default_rng(5)
    h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    q1, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    q2, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    assert np.allclose(svd_gains(q1 @ h @ q2, 4), svd_gains(h, 4), atol=1e-8)


def test_svd_reconstruction():
    rng = np.random.default_rng(6)
    h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    err = np.linalg.norm(u @ np.diag(s) @ vh - h) / np.linalg.norm(h)
    assert err < 1e-10


def test_config_validation():
    with pytest.raises(ValueError):
        LinkConfig(n_s=5)  # exceeds min(n_tx, n_rx)
    with pytest.raises(ValueError):
        LinkConfig(g=197)  # does not divide n_s * f
    with pytest.raises(ValueError):
        LinkConfig(sigma2=0.0)


def test_derived_quantities():
    config = LinkConfig()
    assert config.subchannels_per_block == 16
    assert config.block_bandwidth == pytest.approx(240e3)
    assert config.symbol_budget == 800
    assert config.power_sum == pytest.approx(196.0)


def test_dump_load_roundtrip(tmp_path):
    config = LinkConfig(f=28, g=28)
    channel = generate_channel(config, seed=2)
    for name in ("gains.csv", "gains.npy"):
        path = tmp_path / name
        save_gains(path, channel)
        loaded = load_gains(path, seed=2)
        assert np.allclose(loaded.gains, channel.gains, rtol=1e-12)
