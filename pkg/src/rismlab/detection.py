"""Path separation and per-tap attack detection over a probe series.

Separation is an L-point IDFT per probing round. Detection compares a
per-tap statistic against a threshold over the candidate support: the
mean-power form flags tap i when its Q-averaged power exceeds the candidate
average by alpha, and the variance form replaces mean power with the
across-round sample variance, which is blind to the static component of a
legitimate tap and therefore does not false-flag strong static paths.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .numerics import idft
from .probing import ProbeSeries

__all__ = [
    "TapSeries",
    "DetectionReport",
    "separate_paths",
    "candidate_taps",
    "detect",
    "detect_variance_variant",
    "reconstruct_reciprocal",
]


@dataclass(frozen=True)
class TapSeries:
    """(Q, L) per-round tap estimates for one side."""

    taps: np.ndarray
    side: str

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim != 2:
            raise ValueError("taps must be a (Q, L) matrix")
        object.__setattr__(self, "taps", taps)

    @property
    def n_rounds(self) -> int:
        return int(self.taps.shape[0])

    @property
    def n_taps(self) -> int:
        return int(self.taps.shape[1])

    def mean_power(self) -> np.ndarray:
        """Q-averaged power per tap."""
        return (np.abs(self.taps) ** 2).mean(axis=0)

    def round_variance(self) -> np.ndarray:
        """Across-round sample variance per tap (1/Q normalization)."""
        centered = self.taps - self.taps.mean(axis=0, keepdims=True)
        return (np.abs(centered) ** 2).mean(axis=0)


@dataclass(frozen=True)
class DetectionReport:
    """Per-candidate statistics, the threshold used, and the resulting split."""

    candidate_taps: tuple[int, ...]
    mean_power: np.ndarray
    statistic: np.ndarray
    threshold: float
    attacked_taps: tuple[int, ...]
    kept_taps: tuple[int, ...]
    side: str
    method: str

    def __post_init__(self):
        if set(self.attacked_taps) | set(self.kept_taps) != set(self.candidate_taps):
            raise ValueError("attacked and kept taps must partition the candidates")
        if set(self.attacked_taps) & set(self.kept_taps):
            raise ValueError("attacked and kept taps must be disjoint")
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    def write_csv(self, path) -> None:
        """Serialize as rows of (tap index, statistic, threshold, flag)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tap", "statistic", "threshold", "flag"])
            flagged = set(self.attacked_taps)
            for tap, stat in zip(self.candidate_taps, self.statistic):
                w.writerow([tap, repr(float(stat)), repr(float(self.threshold)),
                            int(tap in flagged)])


def separate_paths(series: ProbeSeries, side: str) -> TapSeries:
    """IDFT every round of one side's estimates into the tap domain."""
    return TapSeries(idft(series.cfr_matrix(side)), side)


def candidate_taps(ts: TapSeries, count: int) -> np.ndarray:
    """The `count` tap indices with largest Q-averaged power, ascending.

    On noise-only input this is just an energy ranking of noise and carries
    no support information; it never fails.
    """
    count = int(count)
    if count > ts.n_taps:
        raise ValueError(f"count={count} exceeds tap grid size {ts.n_taps}")
    power = ts.mean_power()
    picked = np.argsort(-power, kind="stable")[:count]
    return np.sort(picked)


def _split(candidates, statistic, alpha):
    attacked = tuple(int(t) for t, s in zip(candidates, statistic) if s >= alpha)
    kept = tuple(int(t) for t in candidates if t not in attacked)
    return attacked, kept


def detect(ts: TapSeries, candidates: Sequence[int], alpha: float) -> DetectionReport:
    """Mean-power threshold test.

    statistic_i = mean power of tap i minus the candidate-average mean power;
    tap i is flagged as attacked when statistic_i >= alpha. Note the statistic
    of a strong static legitimate tap also exceeds the average, so this form
    trades false alarms against misses through alpha alone.
    """
    cand = tuple(int(c) for c in candidates)
    if not cand:
        raise ValueError("candidate set must be nonempty")
    power = ts.mean_power()[list(cand)]
    statistic = power - power.mean()
    attacked, kept = _split(cand, statistic, alpha)
    return DetectionReport(cand, power, statistic, float(alpha), attacked, kept,
                           ts.side, "mean_power")


def detect_variance_variant(
    ts: TapSeries, candidates: Sequence[int], alpha: float
) -> DetectionReport:
    """Slewing-rate threshold test on across-round sample variance.

    The legitimate channel is constant within the coherence block, so an
    unattacked tap's variance is noise-only while the attacked tap's variance
    approaches the cascade power.
    """
    cand = tuple(int(c) for c in candidates)
    if not cand:
        raise ValueError("candidate set must be nonempty")
    variance = ts.round_variance()[list(cand)]
    statistic = variance - variance.mean()
    attacked, kept = _split(cand, statistic, alpha)
    return DetectionReport(cand, ts.mean_power()[list(cand)], statistic, float(alpha),
                           attacked, kept, ts.side, "variance")


def reconstruct_reciprocal(
    ts_a: TapSeries, ts_b: TapSeries, report: DetectionReport
) -> tuple[np.ndarray, np.ndarray]:
    """Q-averaged kept-tap vectors for both sides, attacked taps removed.

    Both sides drop the same indices, so the outputs are aligned per kept tap
    and contain no attacker contribution beyond residual noise.
    """
    if ts_a.side == ts_b.side:
        raise ValueError("reconstruct_reciprocal needs one series per side")
    if ts_a.taps.shape != ts_b.taps.shape:
        raise ValueError("tap series shapes differ")
    kept = list(report.kept_taps)
    vec_a = ts_a.taps.mean(axis=0)[kept]
    vec_b = ts_b.taps.mean(axis=0)[kept]
    return vec_a, vec_b
