import math

import numpy as np
import pytest

from rismlab.analysis import (
    LinkBudget,
    PathSpectrum,
    empirical_correlation,
    frequency_domain_snr,
    gaussian_pair_bdr,
    per_path_snr,
    reduced_key_rate,
    theoretical_bdr,
    theoretical_correlation,
)
from rismlab.numerics import RandomSource


def test_theoretical_correlation_values():
    assert theoretical_correlation(LinkBudget(1.0, 0.0, 0.0)) == 1.0
    assert theoretical_correlation(LinkBudget(1.0, 1.0, 0.0)) == 0.5
    assert abs(theoretical_correlation(LinkBudget(0.83, 0.17, 0.0)) - 0.83) < 1e-12
    with pytest.raises(ValueError):
        LinkBudget(0.0, 0.0, 0.0)


def test_empirical_correlation_edges():
    z = RandomSource(1).complex_gaussian(1.0, 500)
    assert abs(empirical_correlation(np.stack([z, z], axis=1)) - 1.0) < 1e-12
    assert abs(empirical_correlation(np.stack([z, -z], axis=1)) + 1.0) < 1e-12
    with pytest.raises(ValueError):
        empirical_correlation([(1 + 0j, 1 + 0j)])
    same = np.ones(10, complex)
    with pytest.raises(ValueError):
        empirical_correlation(np.stack([same, same], axis=1))


def test_empirical_matches_theoretical_correlation():
    rng = RandomSource(2)
    rho = 0.83
    n = 200_000
    s = rng.complex_gaussian(rho, n)
    a = s + rng.complex_gaussian(1 - rho, n)
    b = s + rng.complex_gaussian(1 - rho, n)
    est = empirical_correlation(np.stack([a, b], axis=1))
    assert abs(est - rho) < 0.01


@pytest.mark.parametrize("rho", [0.0, 0.25, 0.5, 0.6889, 0.83, 0.99])
def test_pair_bdr_one_bit_closed_form(rho):
    # agreement integral reduces to the orthant probability at m = 1
    assert abs(gaussian_pair_bdr(rho, 1) - math.acos(rho) / math.pi) < 1e-6


def test_pair_bdr_limits():
    assert gaussian_pair_bdr(1.0, 3) == 0.0
    assert abs(gaussian_pair_bdr(0.0, 1) - 0.5) < 1e-9
    with pytest.raises(ValueError):
        gaussian_pair_bdr(0.5, 0)


def test_theoretical_bdr_reference_points():
    # perfect-reciprocity limit
    tiny = theoretical_bdr(LinkBudget(1.0, 0.0, 1e-6), 1)
    assert tiny < 1e-3
    # headline attacked operating point, amplitude cells
    mid = theoretical_bdr(LinkBudget(0.83, 0.17, 0.0), 1)
    assert abs(mid - 0.27) <= 0.02
    # overwhelming attack drives the disagreement to a coin flip
    high = theoretical_bdr(LinkBudget(1.0, 1e6, 0.0), 1)
    assert abs(high - 0.5) <= 0.02


def test_theoretical_bdr_monotonicity_and_range():
    lo = theoretical_bdr(LinkBudget(2.0, 0.3, 0.1), 1)
    hi_xi = theoretical_bdr(LinkBudget(2.0, 0.8, 0.1), 1)
    hi_sd = theoretical_bdr(LinkBudget(3.0, 0.3, 0.1), 1)
    assert hi_xi > lo
    assert hi_sd < lo
    for m in (1, 2, 4):
        v = theoretical_bdr(LinkBudget(1.0, 0.4, 0.2), m)
        assert 0.0 <= v <= 0.5


def test_theoretical_bdr_gaussian_vs_amplitude():
    b = LinkBudget(0.8, 0.2, 0.0)
    assert theoretical_bdr(b, 1, coefficient="gaussian") < theoretical_bdr(b, 1)
    with pytest.raises(ValueError):
        theoretical_bdr(b, 1, coefficient="envelope")


def test_per_path_snr():
    ps = PathSpectrum((1.0, 0.0), 64, 1.0)
    assert per_path_snr(ps, 0) == 64.0
    assert per_path_snr(ps, 1) == 0.0
    assert math.isinf(per_path_snr(PathSpectrum((1.0,), 64, 0.0), 0))
    with pytest.raises(ValueError):
        per_path_snr(ps, 2)


def test_frequency_domain_snr():
    b = LinkBudget(1.0, 0.0, 0.5)
    assert frequency_domain_snr(b, 0, 0.4) == 2.0
    one = frequency_domain_snr(b, 30, 0.4)
    two = frequency_domain_snr(b, 30, 0.8)
    assert abs((two - one) - 0.4 / 0.5) < 1e-12


def test_frequency_domain_snr_empirical():
    from rismlab.channel import PowerDelayProfile, RismAttacker, sample_channel
    from rismlab.probing import probe_pair

    pdp = PowerDelayProfile((0, 3, 6, 9, 12, 15, 18), (1 / 7,) * 7)
    rng = RandomSource(3)
    attacker = RismAttacker(30, True, rng.substream("att"))
    sigma = 0.25
    xi = 0.3
    ratio = np.empty(10_000)
    for i in range(ratio.size):
        ch = sample_channel(pdp, attacker, xi, 7, rng, 64)
        rec = probe_pair(ch, attacker, 0.0, rng)
        ratio[i] = np.mean(np.abs(rec.cfr_bob) ** 2) / sigma
    predicted = frequency_domain_snr(LinkBudget(1.0, xi, sigma), 30, xi)
    assert abs(ratio.mean() - predicted) / predicted < 0.02


def test_reduced_key_rate_values():
    ps = PathSpectrum((1 / 64,), 64, 1.0)  # L*lambda/sigma^2 = 1
    assert reduced_key_rate(ps, []) == 0.0
    assert abs(reduced_key_rate(ps, [0]) - math.log2(4 / 3)) < 1e-12


def test_reduced_key_rate_additivity():
    ps = PathSpectrum((0.5, 0.2, 0.1), 64, 0.3)
    total = reduced_key_rate(ps, [0, 1, 2])
    split = (reduced_key_rate(ps, [0]) + reduced_key_rate(ps, [1])
             + reduced_key_rate(ps, [2]))
    assert abs(total - split) < 1e-12


def test_reduced_key_rate_logdet_oracle_small():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        lam = rng.uniform(0.05, 2.0, n)
        L = int(rng.choice([16, 64, 256]))
        s2 = float(rng.uniform(0.05, 2.0))
        ps = PathSpectrum(tuple(lam), L, s2)
        direct = reduced_key_rate(ps, range(n))

        lam_m = np.diag(lam)
        r = lam_m + (s2 / L) * np.eye(n)
        cov = np.block([[r, lam_m], [lam_m, r]])
        _, logdet_cov = np.linalg.slogdet(cov)
        _, logdet_r = np.linalg.slogdet(r)
        oracle = (2 * logdet_r - logdet_cov) / math.log(2)
        assert abs(direct - oracle) <= 1e-9 * max(1.0, abs(oracle))
