"""Polar code construction and encoding in natural (non-bit-reversed) order."""

from importlib import resources

import numpy as np

from .errors import ConfigurationError
from .gf2 import kron_power

F2 = np.array([[1, 0], [1, 1]], dtype=np.uint8)


def load_reliability(path=None):
    """Load a reliability sequence: one synthetic-channel index per line,
    '#' comments allowed, most reliable index last.

    With no path the bundled 3GPP TS 38.212 universal sequence for
    N_max = 1024 is used.  The sequence is validated to be a permutation
    of 0..len-1.
    """
    if path is None:
        text = (
            resources.files("cabpl")
            .joinpath("data/reliability_5g_1024.txt")
            .read_text()
        )
    else:
        with open(path) as fh:
            text = fh.read()
    seq = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            seq.append(int(line))
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0 or np.any(np.sort(seq) != np.arange(seq.size)):
        raise ConfigurationError("reliability file must list a permutation of 0..len-1")
    return seq


def bhattacharyya_parameters(n, design_eps):
    """Bhattacharyya parameters of all 2**n synthetic channels of a BEC.

    Each polarization level appends one index bit: the better half of a
    split (new bit 1) squares the parameter, the worse half (new bit 0)
    maps z to 2z - z**2.
    """
    if not 0.0 < design_eps < 1.0:
        raise ConfigurationError("design erasure probability must lie in (0, 1)")
    z = np.array([design_eps], dtype=np.float64)
    for _ in range(n):
        nxt = np.empty(2 * z.size, dtype=np.float64)
        nxt[0::2] = 2.0 * z - z * z
        nxt[1::2] = z * z
        z = nxt
    return z


def polar_transform(u):
    """Apply the transform F^{tensor n} to the last axis of a bit array.

    The transform is an involution: applying it twice returns the input.
    """
    x = np.array(u, dtype=np.uint8)
    n_bits = x.shape[-1]
    n = n_bits.bit_length() - 1
    if 1 << n != n_bits:
        raise ConfigurationError("block length must be a power of two")
    for i in range(n):
        step = 1 << (i + 1)
        half = step >> 1
        for j in range(0, n_bits, step):
            x[..., j : j + half] ^= x[..., j + half : j + step]
    return x


class PolarCode:
    """Block length, information set and encoder for one polar code.

    Parameters
    ----------
    N : int
        Block length, a power of two.
    k_total : int
        Number of information positions (payload plus any outer CRC bits).
    construction : str
        "5g" selects positions from the universal reliability sequence
        (N <= 1024); "bhattacharyya" ranks channels for a design BEC.
    design_eps : float
        Erasure probability for the Bhattacharyya construction.
    reliability_file : str or None
        Optional custom reliability sequence (see load_reliability).
    """

    def __init__(self, N, k_total, construction="5g", design_eps=0.5,
                 reliability_file=None):
        n = int(N).bit_length() - 1
        if N < 2 or (1 << n) != N:
            raise ConfigurationError("N must be a power of two, got %r" % (N,))
        if not 1 <= k_total <= N:
            raise ConfigurationError("k_total must satisfy 1 <= k_total <= N")
        self.N = int(N)
        self.n = n
        self.k_total = int(k_total)
        self.construction = construction

        if construction == "5g":
            seq = load_reliability(reliability_file)
            if N > seq.size:
                raise ConfigurationError(
                    "the reliability sequence covers N <= %d; use the "
                    "bhattacharyya construction for larger blocks" % seq.size
                )
            restricted = seq[seq < N]
            info = restricted[-k_total:]
        elif construction == "bhattacharyya":
            z = bhattacharyya_parameters(n, design_eps)
            order = np.argsort(z, kind="stable")
            info = order[:k_total]
        else:
            raise ConfigurationError("unknown construction %r" % (construction,))

        self.info_set = np.sort(np.asarray(info, dtype=np.int64))
        self.frozen = np.ones(N, dtype=bool)
        self.frozen[self.info_set] = False

    def encode(self, info_bits):
        """Encode information bits (last axis of length k_total) to codewords."""
        bits = np.asarray(info_bits, dtype=np.uint8)
        if bits.shape[-1] != self.k_total:
            raise ConfigurationError(
                "expected %d information bits, got %d"
                % (self.k_total, bits.shape[-1])
            )
        u = np.zeros(bits.shape[:-1] + (self.N,), dtype=np.uint8)
        u[..., self.info_set] = bits
        return polar_transform(u)

    def gmatrix_check(self, u_hat, x_hat):
        """True where re-encoding u_hat (frozen forced to zero) matches x_hat.

        Reduces over the last axis, so batched inputs give a boolean per row.
        """
        u = np.array(u_hat, dtype=np.uint8)
        u[..., self.frozen] = 0
        return np.all(polar_transform(u) == np.asarray(x_hat, dtype=np.uint8),
                      axis=-1)

    def generator_matrix(self):
        """The full N x N transform matrix F^{tensor n}."""
        return kron_power(F2, self.n)

    def __repr__(self):
        return "PolarCode(N=%d, k_total=%d, construction=%r)" % (
            self.N, self.k_total, self.construction)
