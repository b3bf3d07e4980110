import numpy as np
import pytest

from rismlab.channel import (
    ChannelRealization,
    PowerDelayProfile,
    RismAttacker,
    cascade_variance_for_gamma,
    draw_reflection,
    effective_cfr,
    gamma_ratio,
    sample_channel,
)
from rismlab.numerics import RandomSource, idft


def make_attacker(seed=1, M=30, enabled=True):
    return RismAttacker(M, enabled, RandomSource(seed).substream("att") if enabled else None)


def stock_pdp():
    return PowerDelayProfile((0, 3, 6, 9, 12, 15, 18), (1 / 7,) * 7, n_subpaths=20)


def test_pdp_validation():
    with pytest.raises(ValueError):
        PowerDelayProfile((0, 1), (1.0,))
    with pytest.raises(ValueError):
        PowerDelayProfile((3, 1), (0.5, 0.5))
    with pytest.raises(ValueError):
        PowerDelayProfile((0, 1), (0.0, 0.0))


def test_sample_channel_zero_cascade():
    ch = sample_channel(stock_pdp(), make_attacker(), 0.0, 7, RandomSource(3), 64)
    assert np.all(ch.cascade_gains == 0)
    assert ch.cascade_power() == 0.0


def test_sample_channel_tap_power():
    pdp = PowerDelayProfile((0,), (1.0,), n_subpaths=20)
    rng = RandomSource(4)
    att = make_attacker(M=0, enabled=False)
    powers = np.empty(100_000)
    for i in range(powers.size):
        ch = sample_channel(pdp, att, 0.0, 5, rng, 8)
        powers[i] = np.abs(ch.direct_taps[0]) ** 2
    assert abs(powers.mean() - 1.0) < 0.02


def test_sample_channel_stock_shape():
    # 7 paths of 20 subpaths each, 30 reflecting elements
    ch = sample_channel(stock_pdp(), make_attacker(M=30), 0.2, 7, RandomSource(5), 64)
    assert ch.n_elements == 30
    assert np.count_nonzero(ch.direct_taps) == 7
    dense = ch.cascade_elements()
    assert dense.shape == (30, 64)
    assert np.all(dense[:, np.arange(64) != 7] == 0)


def test_sample_channel_cascade_power_split():
    rng = RandomSource(6)
    att = make_attacker(M=30)
    total = np.empty(20_000)
    for i in range(total.size):
        ch = sample_channel(stock_pdp(), att, 0.4, 7, rng, 64)
        total[i] = ch.cascade_power()
    assert abs(total.mean() - 0.4) < 0.01


def test_sample_channel_bad_attack_tap():
    with pytest.raises(ValueError):
        sample_channel(stock_pdp(), make_attacker(), 0.1, 64, RandomSource(1), 64)


def test_draw_reflection_unit_modulus_and_mean():
    att = make_attacker(seed=7, M=1)
    draws = np.array([draw_reflection(att)[0] for _ in range(100_000)])
    assert np.max(np.abs(np.abs(draws) - 1.0)) < 1e-12
    assert abs(draws.mean()) < 0.02


def test_draw_reflection_phase_uniformity():
    from scipy.stats import chisquare

    att = make_attacker(seed=8, M=100_000)
    phases = np.angle(draw_reflection(att)) % (2 * np.pi)
    counts, _ = np.histogram(phases, bins=20, range=(0, 2 * np.pi))
    assert chisquare(counts).pvalue > 0.01


def test_draw_reflection_requires_enabled():
    with pytest.raises(ValueError):
        draw_reflection(make_attacker(enabled=False))


def test_effective_cfr_flat_and_shift():
    taps = np.zeros(8, dtype=complex)
    taps[0] = 1.0
    ch = ChannelRealization(taps, np.zeros(0, dtype=complex), 3, 8)
    assert np.allclose(effective_cfr(ch), np.ones(8))

    g = 0.5 - 0.25j
    ch2 = ChannelRealization(np.zeros(8, dtype=complex), np.array([g]), 3, 8)
    cfr = effective_cfr(ch2, np.array([1.0 + 0j]))
    expected = g * np.exp(-2j * np.pi * 3 * np.arange(8) / 8)
    assert np.allclose(cfr, expected)


def test_effective_cfr_absent_theta_equals_zero_elements():
    ch = sample_channel(stock_pdp(), make_attacker(M=30), 0.3, 7, RandomSource(9), 64)
    no_theta = effective_cfr(ch)
    ch_empty = ChannelRealization(ch.direct_taps, np.zeros(0, complex), 7, 64)
    with_zero_elements = effective_cfr(ch_empty, np.zeros(0, complex))
    assert np.array_equal(no_theta, with_zero_elements)


def test_effective_cfr_theta_difference_support():
    att = make_attacker(seed=10, M=30)
    ch = sample_channel(stock_pdp(), att, 0.3, 7, RandomSource(11), 64)
    d1 = effective_cfr(ch, draw_reflection(att))
    d2 = effective_cfr(ch, draw_reflection(att))
    diff_taps = idft(d1 - d2)
    off = np.delete(np.abs(diff_taps), 7)
    assert np.max(off) < 1e-10
    assert abs(diff_taps[7]) > 1e-6


def test_path_domain_sparsity():
    att = make_attacker(seed=12, M=30)
    ch = sample_channel(stock_pdp(), att, 0.3, 7, RandomSource(13), 64)
    taps = idft(effective_cfr(ch, draw_reflection(att)))
    support = set(stock_pdp().tap_delays) | {7}
    off = [abs(taps[i]) for i in range(64) if i not in support]
    assert max(off) < 1e-10


def test_gamma_ratio():
    pdp = stock_pdp()
    assert gamma_ratio(pdp, 0.0) == 0.0
    assert gamma_ratio(PowerDelayProfile((0,), (1.0,)), 1.0) == 0.5
    xi = cascade_variance_for_gamma(pdp, 0.17)
    assert abs(xi - 0.17 / 0.83) < 1e-12
    assert abs(gamma_ratio(pdp, xi) - 0.17) < 1e-12


def test_cross_term_nullity_quick():
    # small-sample version of the three vanishing cross moments
    att = make_attacker(seed=20, M=30)
    rng = RandomSource(21)
    pdp = stock_pdp()
    n = 20_000
    ell = 5
    shift = np.exp(-2j * np.pi * ell * 7 / 64)
    g1a = np.empty(n, complex)
    g1b = np.empty(n, complex)
    g1c = np.empty(n, complex)
    for i in range(n):
        ch = sample_channel(pdp, att, 0.3, 7, rng, 64)
        hd = np.dot(ch.direct_taps[list(pdp.tap_delays)],
                    np.exp(-2j * np.pi * ell * np.array(pdp.tap_delays) / 64))
        sa = np.dot(draw_reflection(att), ch.cascade_gains) * shift
        sb = np.dot(draw_reflection(att), ch.cascade_gains) * shift
        g1a[i] = hd * np.conj(sb)
        g1b[i] = np.conj(hd) * sa
        g1c[i] = np.conj(sb) * sa
    for x in (g1a, g1b, g1c):
        se = np.sqrt(np.mean(np.abs(x) ** 2) / n)
        assert abs(x.mean()) < 3 * se
