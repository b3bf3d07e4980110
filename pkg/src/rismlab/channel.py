"""Coherence-block channel model.

A tapped-delay-line Rayleigh channel stands in for a full geometric scenario
generator: each direct tap is the sum of ``n_subpaths`` equal-power complex
components, and the reflected cascade collapses onto a single attack tap whose
total variance is split evenly across the M surface elements. Per-tap
variances are therefore controlled exactly, which is all the closed-form
analysis depends on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomSource, as_complex_vector, dft

__all__ = [
    "PowerDelayProfile",
    "ChannelRealization",
    "RismAttacker",
    "sample_channel",
    "draw_reflection",
    "effective_cfr",
    "gamma_ratio",
]


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap-grid delays (units of 1/B) and per-tap variances of the direct channel."""

    tap_delays: tuple[int, ...]
    tap_variances: tuple[float, ...]
    n_subpaths: int = 20

    def __post_init__(self):
        delays = tuple(int(d) for d in self.tap_delays)
        variances = tuple(float(v) for v in self.tap_variances)
        object.__setattr__(self, "tap_delays", delays)
        object.__setattr__(self, "tap_variances", variances)
        if len(delays) != len(variances):
            raise ValueError("tap_delays and tap_variances must have equal length")
        if any(d < 0 for d in delays):
            raise ValueError("tap delays must be nonnegative")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("tap delays must be strictly increasing")
        if any(v < 0 for v in variances):
            raise ValueError("tap variances must be nonnegative")
        total = sum(variances)
        if not (np.isfinite(total) and total > 0):
            raise ValueError("tap variances must sum to a finite positive total")
        if self.n_subpaths < 1:
            raise ValueError("n_subpaths must be >= 1")

    @property
    def total_power(self) -> float:
        return float(sum(self.tap_variances))


@dataclass(frozen=True)
class RismAttacker:
    """Attacker state: element count, enable flag, and a dedicated phase stream.

    A disabled attacker (or one with zero elements) contributes exactly zero
    to every probe.
    """

    n_elements: int
    enabled: bool = True
    phase_rng: RandomSource | None = None

    def __post_init__(self):
        if self.n_elements < 0:
            raise ValueError("n_elements must be >= 0")
        if self.enabled and self.n_elements > 0 and self.phase_rng is None:
            raise ValueError("an enabled attacker needs a phase_rng")


@dataclass(frozen=True)
class ChannelRealization:
    """One coherence-block draw.

    ``direct_taps`` is the length-L tap vector of the legitimate channel
    (nonzero only on the PDP delays). The cascade is stored compactly as the M
    per-element gains at the attack tap; ``cascade_elements()`` materializes
    the per-element length-L tap vectors when the dense view is wanted.
    """

    direct_taps: np.ndarray
    cascade_gains: np.ndarray
    attack_tap_index: int
    n_subcarriers: int

    def __post_init__(self):
        object.__setattr__(
            self, "direct_taps", as_complex_vector(self.direct_taps, self.n_subcarriers)
        )
        object.__setattr__(self, "cascade_gains", as_complex_vector(self.cascade_gains))
        if not (0 <= self.attack_tap_index < self.n_subcarriers):
            raise ValueError("attack_tap_index out of range")

    @property
    def n_elements(self) -> int:
        return int(self.cascade_gains.shape[0])

    def cascade_elements(self) -> np.ndarray:
        """Dense (M, L) view: element m nonzero only at the attack tap."""
        M = self.n_elements
        out = np.zeros((M, self.n_subcarriers), dtype=np.complex128)
        out[:, self.attack_tap_index] = self.cascade_gains
        return out

    def cascade_power(self) -> float:
        return float(np.sum(np.abs(self.cascade_gains) ** 2))


def sample_channel(
    pdp: PowerDelayProfile,
    attacker: RismAttacker,
    cascade_variance_total: float,
    attack_tap: int,
    rng: RandomSource,
    L: int,
) -> ChannelRealization:
    """Draw one coherence-block realization.

    Each direct tap is the coherent sum of ``pdp.n_subpaths`` equal-power
    complex Gaussian components, so E|tap|^2 equals the configured variance.
    The cascade variance is split evenly over the attacker's elements; it is
    zero when the attacker is disabled.
    """
    L = int(L)
    if not (0 <= attack_tap < L):
        raise ValueError(f"attack_tap={attack_tap} outside tap grid of length {L}")
    if cascade_variance_total < 0:
        raise ValueError("cascade_variance_total must be >= 0")
    if max(pdp.tap_delays) >= L:
        raise ValueError("PDP delay exceeds tap grid")

    n_taps = len(pdp.tap_delays)
    sub = rng.standard_normal((2, n_taps, pdp.n_subpaths))
    scale = np.sqrt(np.asarray(pdp.tap_variances) / (2.0 * pdp.n_subpaths))
    gains = scale * (sub[0] + 1j * sub[1]).sum(axis=1)

    direct = np.zeros(L, dtype=np.complex128)
    direct[list(pdp.tap_delays)] = gains

    M = attacker.n_elements
    active = attacker.enabled and M > 0 and cascade_variance_total > 0
    if active:
        cascade = rng.complex_gaussian(cascade_variance_total / M, M)
    else:
        cascade = np.zeros(M, dtype=np.complex128)
    return ChannelRealization(direct, cascade, attack_tap, L)


def draw_reflection(attacker: RismAttacker) -> np.ndarray:
    """Fresh unit-modulus reflection vector with i.i.d. phases in [0, 2*pi).

    Every call draws anew: the attacker flips phases much faster than the
    coherence time, so no two probes see the same reflection state.
    """
    if not attacker.enabled:
        raise ValueError("draw_reflection requires an enabled attacker")
    phases = attacker.phase_rng.uniform_phases(attacker.n_elements)
    return np.exp(1j * phases)


def effective_cfr(ch: ChannelRealization, theta: np.ndarray | None = None) -> np.ndarray:
    """Per-subcarrier frequency response of direct plus reflected channel.

    With ``theta`` absent the cascade contributes nothing (no-attack case,
    identical to an attacker with zero elements).
    """
    taps = ch.direct_taps
    if theta is not None:
        theta = as_complex_vector(theta, ch.n_elements)
        taps = taps.copy()
        taps[ch.attack_tap_index] += np.dot(theta, ch.cascade_gains)
    return dft(taps, ch.n_subcarriers)


def gamma_ratio(pdp: PowerDelayProfile, cascade_variance_total: float) -> float:
    """Attacked-path variance as a fraction of total path variance."""
    total = pdp.total_power + cascade_variance_total
    if total <= 0:
        raise ValueError("total path variance must be positive")
    return float(cascade_variance_total / total)


def cascade_variance_for_gamma(pdp: PowerDelayProfile, gamma: float) -> float:
    """Invert gamma_ratio: the cascade variance that achieves a target ratio."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError("gamma must lie in [0, 1)")
    return pdp.total_power * gamma / (1.0 - gamma)
