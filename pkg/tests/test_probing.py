import numpy as np
import pytest

from rismlab.channel import PowerDelayProfile, RismAttacker, sample_channel
from rismlab.numerics import RandomSource, idft
from rismlab.probing import ProbeSeries, average_cfr, probe_pair, probe_series

PDP = PowerDelayProfile((0, 3, 6, 9, 12, 15, 18), (1 / 7,) * 7, n_subpaths=20)
ATTACK_TAP = 7


def setup_block(seed, gamma=0.17, M=30, enabled=True):
    rng = RandomSource(seed)
    attacker = RismAttacker(M, enabled, rng.substream("att") if enabled else None)
    xi = gamma / (1 - gamma) if enabled else 0.0
    ch = sample_channel(PDP, attacker, xi, ATTACK_TAP, rng.substream("ch"), 64)
    return ch, attacker, rng.substream("noise")


def test_perfect_reciprocity_without_attacker():
    ch, attacker, rng = setup_block(1, enabled=False)
    rec = probe_pair(ch, attacker, 0.0, rng)
    assert np.array_equal(rec.cfr_alice, rec.cfr_bob)
    assert rec.theta_a is None and rec.theta_b is None


def test_attacked_difference_support():
    ch, attacker, rng = setup_block(2)
    rec = probe_pair(ch, attacker, 0.0, rng)
    diff = idft(rec.cfr_alice - rec.cfr_bob)
    off = np.delete(np.abs(diff), ATTACK_TAP)
    assert np.max(off) < 1e-10
    assert abs(diff[ATTACK_TAP]) > 1e-8
    assert not np.array_equal(rec.theta_a, rec.theta_b)


def test_noise_power_in_difference():
    sigma = 0.3
    ch, attacker, rng = setup_block(3, enabled=False)
    vals = np.empty(10_000)
    for i in range(vals.size):
        rec = probe_pair(ch, attacker, sigma, rng)
        vals[i] = np.sum(np.abs(rec.cfr_alice - rec.cfr_bob) ** 2)
    expected = 2 * 64 * sigma
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - expected) < 3 * se


def test_probe_series_basics():
    ch, attacker, rng = setup_block(4)
    series = probe_series(ch, attacker, 0.01, 16, rng)
    assert series.n_rounds == 16
    assert series.cfr_matrix("alice").shape == (16, 64)
    with pytest.raises(ValueError):
        series.cfr_matrix("carol")


def test_probe_series_q1_matches_pair_law():
    ch, attacker, rng = setup_block(5)
    series = probe_series(ch, attacker, 0.0, 1, rng)
    assert series.n_rounds == 1


def test_cadence_budget_enforced():
    ch, attacker, rng = setup_block(6)
    with pytest.raises(ValueError):
        probe_series(ch, attacker, 0.0, 27, rng)  # 27 * 2.8 ms > 75 ms
    records = probe_series(ch, attacker, 0.0, 2, rng).records
    with pytest.raises(ValueError):
        ProbeSeries(records, ch, cadence_ms=40.0, coherence_ms=75.0)


def test_direct_tap_constancy_across_rounds():
    sigma = 0.1
    ch, attacker, rng = setup_block(7)
    series = probe_series(ch, attacker, sigma, 16, rng)
    taps = idft(series.cfr_matrix("bob"))
    direct = taps[:, 0]  # legitimate tap, constant channel within the block
    var = np.mean(np.abs(direct - direct.mean()) ** 2)
    assert abs(var - sigma / 64) < 3 * (sigma / 64) / np.sqrt(8)


def test_average_cfr_identity_and_truth():
    ch, attacker, rng = setup_block(8, enabled=False)
    s1 = probe_series(ch, attacker, 0.0, 1, rng)
    assert np.array_equal(average_cfr(s1, "alice"), s1.records[0].cfr_alice)
    s2 = probe_series(ch, attacker, 0.0, 4, rng)
    from rismlab.channel import effective_cfr

    assert np.allclose(average_cfr(s2, "bob"), effective_cfr(ch), atol=1e-12)


def test_average_cfr_attack_shrinks_like_sqrt_q():
    mags = {q: [] for q in (16, 64)}
    rng = RandomSource(9)
    attacker = RismAttacker(30, True, rng.substream("att"))
    for q in mags:
        for _ in range(300):
            ch = sample_channel(PDP, attacker, 1.0, ATTACK_TAP, rng.substream(f"c{q}"), 64)
            series = probe_series(ch, attacker, 0.0, q, rng, coherence_ms=400.0)
            avg_taps = idft(average_cfr(series, "alice"))
            mags[q].append(abs(avg_taps[ATTACK_TAP]) ** 2)
    ratio = np.mean(mags[64]) / np.mean(mags[16])
    assert 0.15 < ratio < 0.40  # residual power scales like 1/Q


def test_correlation_matches_budget_without_attacker():
    from rismlab.analysis import empirical_correlation

    sigma = 1.0  # SNR 0 dB on a unit-power channel
    rng = RandomSource(10)
    attacker = RismAttacker(0, False, None)
    pairs = np.empty((20_000, 2), complex)
    for i in range(pairs.shape[0]):
        ch = sample_channel(PDP, attacker, 0.0, ATTACK_TAP, rng, 64)
        rec = probe_pair(ch, attacker, sigma, rng)
        pairs[i] = rec.cfr_alice[5], rec.cfr_bob[5]
    rho = empirical_correlation(pairs)
    assert abs(rho - 0.5) < 0.02
