"""Flat key-value experiment configuration.

The default scenario locks the stock operating point: 64 subcarriers at
23.04 MHz, 2 GHz carrier, 7 equal-power paths of 20 subpaths each, a
30-element surface, 16 probing rounds at 2.8 ms cadence inside a 75 ms
coherence time. Path delays are specified on the tap grid of the reference
bandwidth and rescaled for other bandwidths, so lowering the bandwidth to
7.68 MHz makes the attack delay collide with a legitimate path (the
shared-tap scenario) without any further knobs.

Config files are plain ``key = value`` lines; the config hash is a SHA-256
prefix over the sorted canonical rendering, which keeps CSV outputs
bit-stable and language-agnostic to parse.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from ..channel import PowerDelayProfile, cascade_variance_for_gamma

__all__ = ["ExperimentConfig", "load_config", "parse_value", "config_hash"]


@dataclass(frozen=True)
class ExperimentConfig:
    # scenario
    n_subcarriers: int = 64
    bandwidth_mhz: float = 23.04
    reference_bandwidth_mhz: float = 23.04
    carrier_ghz: float = 2.0
    n_paths: int = 7
    n_subpaths: int = 20
    path_delay_taps: tuple = (0, 3, 6, 9, 12, 15, 18)
    attack_delay_tap: int = 7
    total_direct_power: float = 1.0
    n_elements: int = 30
    gamma: float = 0.17
    # probing
    q_rounds: int = 16
    cadence_ms: float = 2.8
    coherence_ms: float = 75.0
    # sweep axes
    snr_db_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    detect_snr_db_list: tuple = (-5.0, 0.0, 5.0, 10.0, 15.0)
    gamma_list: tuple = (0.0, 0.17, 0.5)
    q_list: tuple = (4, 8, 16)
    bandwidth_list: tuple = (23.04, 7.68)
    # detection
    detection_method: str = "variance"
    fa_target: float = 0.005
    calibration_trials: int = 3000
    # key generation
    max_bits: int = 6
    target_ker: float = 1e-3
    ldpc_n: int = 1024
    batch_blocks: int = 64
    # run control
    fig2_blocks: int = 1500
    fig3_blocks: int = 6000
    fig4_trials: int = 1500
    fig5_batches: int = 12
    trials: int = 1500
    seed: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.trials < 1 or self.fig2_blocks < 1 or self.fig3_blocks < 1 \
                or self.fig4_trials < 1 or self.fig5_batches < 1:
            raise ValueError("trial counts must be >= 1")
        for name in ("snr_db_list", "detect_snr_db_list", "gamma_list",
                     "q_list", "bandwidth_list"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        if len(self.path_delay_taps) != self.n_paths:
            raise ValueError("path_delay_taps must list one delay per path")
        for q in (self.q_rounds, *self.q_list):
            if q * self.cadence_ms > self.coherence_ms:
                raise ValueError(
                    f"Q={q} rounds at {self.cadence_ms} ms do not fit the "
                    f"{self.coherence_ms} ms coherence time"
                )
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if self.ldpc_n < 64 or self.ldpc_n % 2:
            raise ValueError("ldpc_n must be even and >= 64")
        # every scenario in the bandwidth sweep must produce a legal tap grid
        for bw in (self.bandwidth_mhz, *self.bandwidth_list):
            self.pdp(bw)

    # ------------------------------------------------------------ scenario

    def scaled_delays(self, bandwidth_mhz: float | None = None) -> tuple:
        """Path delays on the tap grid of the given bandwidth."""
        bw = self.bandwidth_mhz if bandwidth_mhz is None else bandwidth_mhz
        scale = bw / self.reference_bandwidth_mhz
        return tuple(int(round(d * scale)) for d in self.path_delay_taps)

    def attack_tap(self, bandwidth_mhz: float | None = None) -> int:
        bw = self.bandwidth_mhz if bandwidth_mhz is None else bandwidth_mhz
        scale = bw / self.reference_bandwidth_mhz
        return int(round(self.attack_delay_tap * scale))

    def is_shared_tap(self, bandwidth_mhz: float | None = None) -> bool:
        """True when the attack delay collides with a legitimate path."""
        return self.attack_tap(bandwidth_mhz) in self.scaled_delays(bandwidth_mhz)

    def pdp(self, bandwidth_mhz: float | None = None) -> PowerDelayProfile:
        delays = self.scaled_delays(bandwidth_mhz)
        if max(delays) >= self.n_subcarriers:
            raise ValueError("path delay exceeds the tap grid")
        per_tap = self.total_direct_power / self.n_paths
        return PowerDelayProfile(delays, (per_tap,) * self.n_paths, self.n_subpaths)

    def cascade_variance(self, gamma: float | None = None) -> float:
        g = self.gamma if gamma is None else gamma
        return cascade_variance_for_gamma(self.pdp(), g)

    def noise_variance(self, snr_db: float, gamma: float | None = None) -> float:
        """Per-subcarrier noise variance for a target frequency-domain SNR."""
        g = self.gamma if gamma is None else gamma
        total = self.total_direct_power + self.cascade_variance(g)
        return total / 10.0 ** (snr_db / 10.0)


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def parse_value(name: str, raw: str):
    """Parse one config value according to the field's default type."""
    if name not in _FIELD_TYPES:
        raise ValueError(f"unknown config key: {name}")
    default = _FIELD_TYPES[name].default
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"cannot parse boolean {name}={raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [tok for tok in raw.replace(",", " ").split() if tok]
        elem = default[0] if default else 0.0
        cast = int if isinstance(elem, int) else float
        return tuple(cast(tok) for tok in items)
    return raw


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the config file, then explicit overrides."""
    values = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = line.split("=", 1)
                key = key.strip()
                values[key] = parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        values[key] = parse_value(key, raw) if isinstance(raw, str) else raw
    return ExperimentConfig(**values)


def _canonical(cfg: ExperimentConfig) -> str:
    lines = []
    for f in sorted(fields(ExperimentConfig), key=lambda f: f.name):
        lines.append(f"{f.name}={getattr(cfg, f.name)!r}")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """12-hex-char digest of the effective configuration."""
    return hashlib.sha256(_canonical(cfg).encode("utf-8")).hexdigest()[:12]
