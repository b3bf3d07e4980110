"""Monte Carlo laboratory for OFDM physical-layer key generation under
RIS phase-manipulation attacks: channel probing, reciprocity analysis,
attack detection by path separation, and per-path key extraction."""

__version__ = "0.1.0"

from .numerics import RandomSource  # noqa: F401
