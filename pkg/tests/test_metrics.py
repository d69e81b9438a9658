import numpy as np
import pytest

from semlink.fbl import FblParams, alpha_coeff, dispersion_exact, penalty_coeff, q_inverse
from semlink.importance import ImportanceProfile
from semlink.link import ChannelRealization, LinkConfig, generate_channel
from semlink.mapping import build_mapping
from semlink.metrics import (
    achieved_ber,
    achieved_bler,
    ber_from_bler,
    fbl_inference_latency,
    fbl_rate,
    inference_latency,
    latency_bound,
)


def test_latency_bound_simple():
    # gamma = 3 at unit power and bandwidth: 2 / log2(4) = 1 second
    val = latency_bound([2], [1.0], [np.sqrt(3.0)], 1, 1.0, 1.0)
    assert val == pytest.approx(1.0, rel=1e-12)


def test_latency_bound_bandwidth_scaling():
    a = latency_bound([2, 3], [1.0, 2.0], [1.0, 1.5], 2, 1e3, 1.0)
    b = latency_bound([2, 3], [1.0, 2.0], [1.0, 1.5], 2, 2e3, 1.0)
    assert a == pytest.approx(2 * b, rel=1e-12)


def test_latency_bound_worst_block():
    lat1 = latency_bound([1, 4], [1.0, 1.0], [1.0, 1.0], 1, 1.0, 1.0)
    lat4 = latency_bound([4], [1.0], [1.0], 1, 1.0, 1.0)
    assert lat1 == pytest.approx(lat4)


def test_latency_bound_zero_rate_flag():
    assert latency_bound([2], [0.0], [1.0], 1, 1.0, 1.0) == np.inf


def test_inference_equals_bound_for_singleton_blocks():
    channel = ChannelRealization(gains=np.array([[2.0], [1.0], [3.0]]), seed=0)
    profile = ImportanceProfile(g=3, scores=np.array([0.2, 0.5, 0.8]))
    mapping = build_mapping(channel, profile, "IASM")
    bits = np.array([2, 3, 1])
    powers = np.array([1.0, 2.0, 0.5])
    report = inference_latency(mapping, channel, bits, powers, 4, 1e3, 1.0, 50)
    bound = latency_bound(bits, powers, mapping.patch_gains(), 4, 1e3, 1.0)
    assert report.worst_case == pytest.approx(bound, rel=1e-12)


def test_inference_jensen_gap():
    # the rate is concave in the gain only once every member SNR exceeds one,
    # so the averaged-gain bound undershoots the true latency in that regime
    config = LinkConfig(f=98, g=14, n_tx=2, n_rx=2, n_s=2)
    channel = generate_channel(config, seed=1)
    profile = ImportanceProfile(g=14, scores=np.linspace(0, 1, 14))
    mapping = build_mapping(channel, profile, "IASM")
    bits = np.full(14, 3)
    sigma2 = 1e-4
    member_snr = mapping.member_gains(channel) ** 2 * 2.0 / sigma2
    assert np.all(member_snr >= 1.0)
    powers = np.full(14, 2.0)
    report = inference_latency(mapping, channel, bits, powers, 8, config.df0, sigma2, config.t_coh)
    bound = latency_bound(bits, powers, mapping.patch_gains(), 8, config.block_bandwidth, sigma2)
    assert report.worst_case >= bound - 1e-12


def test_reference_block_bandwidth():
    config = LinkConfig()
    assert config.subchannels_per_block == 16
    assert config.block_bandwidth == pytest.approx(240e3)


def test_fbl_rate_shannon_at_half():
    assert fbl_rate(1.0, 1.0, 0.5, 800.0) == pytest.approx(1.0, abs=1e-12)


def test_fbl_rate_large_blocklength_limit():
    shannon = np.log2(2.0)
    assert fbl_rate(1.0, 1.0, 0.01, 1e12) == pytest.approx(shannon, rel=1e-4)


def test_fbl_rate_hand_value():
    # log2(2) - (2.3263/(ln2 sqrt(800))) * sqrt(0.75)
    val = fbl_rate(1.0, 1.0, 0.01, 800.0)
    assert val == pytest.approx(0.89723, abs=5e-5)


def test_fbl_rate_below_shannon():
    rng = np.random.default_rng(0)
    for _ in range(30):
        gamma = rng.uniform(0.01, 100)
        bler = rng.uniform(1e-5, 0.49)
        assert fbl_rate(gamma, 1.0, bler, 500.0) < np.log2(1 + gamma)


def test_penalty_forms_identical():
    rng = np.random.default_rng(1)
    for _ in range(40):
        bler = rng.uniform(1e-6, 0.999)
        l_c = rng.uniform(2, 1e9)
        alpha = 1.0 - 0.5 * q_inverse(bler) / np.sqrt(l_c)
        assert abs(penalty_coeff(bler, l_c) - float(alpha_coeff(alpha))) < 1e-12


def test_fbl_penalty_term_hand_value():
    # per-subchannel penalty at alpha = 0.95887 and gamma = 3
    alpha = 0.95887
    gamma = 3.0
    val = float(alpha_coeff(alpha) * dispersion_exact(gamma))
    assert val == pytest.approx(0.11491, abs=2e-5)


def test_fbl_inference_collapses_at_half():
    config = LinkConfig(f=98, g=14, n_tx=2, n_rx=2, n_s=2)
    channel = generate_channel(config, seed=2)
    profile = ImportanceProfile(g=14, scores=np.linspace(0, 1, 14))
    mapping = build_mapping(channel, profile, "IASM")
    bits = np.full(14, 2)
    powers = np.full(14, 1.0)
    params = FblParams.create(0.5, config.symbol_budget, 14)
    a = fbl_inference_latency(mapping, channel, bits, powers, params, 8, config.df0, 1.0, config.t_coh)
    b = inference_latency(mapping, channel, bits, powers, 8, config.df0, 1.0, config.t_coh)
    assert a.worst_case == pytest.approx(b.worst_case, rel=1e-12)


def test_fbl_inference_clamps_only_up():
    config = LinkConfig(f=98, g=14, n_tx=2, n_rx=2, n_s=2)
    channel = generate_channel(config, seed=3)
    profile = ImportanceProfile(g=14, scores=np.linspace(0, 1, 14))
    mapping = build_mapping(channel, profile, "IASM")
    bits = np.full(14, 2)
    params = FblParams.create(0.01, config.symbol_budget, 14)
    low = fbl_inference_latency(mapping, channel, bits, np.full(14, 1e-6), params, 8, config.df0, 1.0, config.t_coh)
    # weak power clamps some member terms to zero; latency report stays valid
    assert low.worst_case > 0
    assert not low.coherence_ok


def test_ber_from_bler_values():
    assert ber_from_bler(0.0, 800.0) == 0.0
    assert ber_from_bler(0.1, 800.0, 10.0) == pytest.approx(1.3169e-3, abs=2e-7)


def test_ber_monotonicity():
    blers = np.linspace(0.01, 0.9, 20)
    vals = [ber_from_bler(m, 800.0) for m in blers]
    assert np.all(np.diff(vals) > 0)
    assert ber_from_bler(0.1, 1600.0) < ber_from_bler(0.1, 800.0)


def test_achieved_bler_limits():
    # far below capacity: certain failure; far above: certain success
    assert achieved_bler(0.01, 5.0, 800.0) == pytest.approx(1.0)
    assert achieved_bler(1000.0, 0.5, 800.0) == pytest.approx(0.0, abs=1e-12)


def test_achieved_ber_monotone_in_gamma():
    gammas = np.logspace(-3, 3, 50)
    bers = achieved_ber(gammas, 3.84, 800.0, 10.0)
    assert np.all(np.diff(bers) <= 1e-15)
    assert bers[0] == 1.0  # saturated at the clamp for hopeless channels
    assert bers[-1] < 1e-6


def test_swapping_to_weaker_block_never_speeds_a_patch():
    # rate is monotone in the member gains, so moving a patch to a lower-gain
    # block at fixed power cannot reduce that patch's latency
    config = LinkConfig(f=98, g=14, n_tx=2, n_rx=2, n_s=2)
    channel = generate_channel(config, seed=5)
    profile = ImportanceProfile(g=14, scores=np.linspace(0, 1, 14))
    mapping = build_mapping(channel, profile, "IASM")
    bits = np.full(14, 2)
    powers = np.full(14, 1.0)
    report = inference_latency(mapping, channel, bits, powers, 8, config.df0, 1.0, config.t_coh)
    lat_by_block = report.per_block_latency[np.argsort(mapping.patch_to_block)]
    assert np.all(np.diff(lat_by_block) <= 1e-15)  # ascending gain, descending latency


def test_coherence_flag():
    channel = ChannelRealization(gains=np.array([[1.0], [1.0]]), seed=0)
    profile = ImportanceProfile(g=2, scores=np.array([0.1, 0.9]))
    mapping = build_mapping(channel, profile, "IASM")
    fast = inference_latency(mapping, channel, [1, 1], [10.0, 10.0], 1, 15e3, 1e-3, 50)
    assert fast.coherence_ok
    slow = inference_latency(mapping, channel, [8, 8], [0.1, 0.1], 768, 15e3, 1e3, 50)
    assert not slow.coherence_ok
    assert np.all(slow.ofdm_symbols_needed >= 1)
