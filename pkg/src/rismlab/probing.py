"""TDD channel probing with LS estimation.

One probe pair = one uplink estimate at Bob and one downlink estimate at
Alice within the same coherence block. Pilots are all-ones, so the LS
estimate is the raw received symbol plus noise. When the attacker is active,
the two directions see independently drawn reflection vectors, and so does
every round of a multi-round series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, RismAttacker, draw_reflection, effective_cfr
from .numerics import RandomSource

__all__ = ["ProbeRecord", "ProbeSeries", "probe_pair", "probe_series", "average_cfr"]

ALICE = "alice"
BOB = "bob"


@dataclass(frozen=True)
class ProbeRecord:
    """Paired channel estimates from one probing round."""

    cfr_alice: np.ndarray
    cfr_bob: np.ndarray
    theta_a: np.ndarray | None
    theta_b: np.ndarray | None
    noise_variance: float

    def __post_init__(self):
        if self.cfr_alice.shape != self.cfr_bob.shape:
            raise ValueError("Alice and Bob estimates must have equal length")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")


@dataclass(frozen=True)
class ProbeSeries:
    """Q probing rounds over one constant channel realization.

    ``realization`` is kept as ground truth for oracle checks; the cadence
    constraint Q * cadence_ms <= coherence_ms guards the block-constant
    channel assumption.
    """

    records: tuple[ProbeRecord, ...]
    realization: ChannelRealization
    cadence_ms: float = 2.8
    coherence_ms: float = 75.0

    def __post_init__(self):
        if len(self.records) < 1:
            raise ValueError("a probe series needs at least one round")
        if len(self.records) * self.cadence_ms > self.coherence_ms:
            raise ValueError(
                f"Q={len(self.records)} rounds at {self.cadence_ms} ms exceed "
                f"the {self.coherence_ms} ms coherence budget"
            )

    @property
    def n_rounds(self) -> int:
        return len(self.records)

    def cfr_matrix(self, side: str) -> np.ndarray:
        """(Q, L) matrix of one side's estimates."""
        if side == ALICE:
            return np.stack([r.cfr_alice for r in self.records])
        if side == BOB:
            return np.stack([r.cfr_bob for r in self.records])
        raise ValueError(f"side must be '{ALICE}' or '{BOB}', got {side!r}")


def probe_pair(
    ch: ChannelRealization,
    attacker: RismAttacker,
    noise_variance: float,
    rng: RandomSource,
) -> ProbeRecord:
    """Simulate one uplink/downlink probing round.

    Attacker phases come from the attacker's own stream and estimation noise
    from ``rng``, so swapping the attacker seed never perturbs the noise.
    """
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    L = ch.n_subcarriers
    active = attacker.enabled and attacker.n_elements > 0
    theta_b = draw_reflection(attacker) if active else None
    theta_a = draw_reflection(attacker) if active else None
    cfr_bob = effective_cfr(ch, theta_b) + rng.complex_gaussian(noise_variance, L)
    cfr_alice = effective_cfr(ch, theta_a) + rng.complex_gaussian(noise_variance, L)
    return ProbeRecord(cfr_alice, cfr_bob, theta_a, theta_b, float(noise_variance))


def probe_series(
    ch: ChannelRealization,
    attacker: RismAttacker,
    noise_variance: float,
    Q: int,
    rng: RandomSource,
    cadence_ms: float = 2.8,
    coherence_ms: float = 75.0,
) -> ProbeSeries:
    """Q independent-noise, independent-reflection rounds over one realization."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    records = tuple(probe_pair(ch, attacker, noise_variance, rng) for _ in range(Q))
    return ProbeSeries(records, ch, cadence_ms, coherence_ms)


def average_cfr(series: ProbeSeries, side: str) -> np.ndarray:
    """Entrywise mean of one side's estimates across the series.

    Averaging divides the noise variance by Q on every subcarrier and shrinks
    the attacker's zero-mean contribution like 1/sqrt(Q).
    """
    return series.cfr_matrix(side).mean(axis=0)
