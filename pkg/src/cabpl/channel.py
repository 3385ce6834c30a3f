"""BPSK over AWGN: mapping, noise scaling, channel LLRs."""

import numpy as np

from .errors import ConfigurationError


def ebno_to_sigma(ebno_db, rate):
    """Noise standard deviation for unit-energy BPSK at a given Eb/N0.

    Eb/N0 is referred to the payload rate, so sigma**2 =
    1 / (2 * rate * 10**(ebno_db / 10)).
    """
    if not 0.0 < rate <= 1.0:
        raise ConfigurationError("rate must lie in (0, 1]")
    return float(np.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebno_db / 10.0))))


def modulate(bits):
    """BPSK map 0 -> +1, 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def awgn_llrs(bits, sigma, rng):
    """Transmit codeword bits over AWGN and return channel LLRs 2y/sigma**2."""
    y = modulate(bits) + sigma * rng.standard_normal(np.shape(bits))
    return 2.0 * y / (sigma * sigma)
