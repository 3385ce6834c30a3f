"""CRC codes viewed three ways: shift-register encoder, trellis for soft
decoding, and sparse parity-check matrix for message passing."""

import functools
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigurationError
from .gf2 import matmul, rank

MAX_TRELLIS_BITS = 16


@dataclass(frozen=True)
class CrcSpec:
    """A CRC generator polynomial together with the protected word length.

    g holds the polynomial coefficients constant term first, so
    x**2 + x + 1 is (1, 1, 1).  n_crc is the total codeword length,
    payload plus the r = deg(g) parity bits appended at the end.
    """

    g: tuple
    n_crc: int

    def __post_init__(self):
        g = tuple(int(c) & 1 for c in self.g)
        object.__setattr__(self, "g", g)
        if len(g) < 2 or g[-1] != 1:
            raise ConfigurationError("generator polynomial must have degree >= 1")
        if g[0] != 1:
            raise ConfigurationError("generator polynomial needs a constant term")
        if self.n_crc <= self.r:
            raise ConfigurationError("n_crc must exceed the CRC length r")

    @property
    def r(self):
        return len(self.g) - 1

    @property
    def k(self):
        return self.n_crc - self.r

    @property
    def poly_word(self):
        """Polynomial as an integer with x**r in the top bit (MSB-first)."""
        word = 0
        for c in reversed(self.g):
            word = (word << 1) | c
        return word

    @classmethod
    def from_string(cls, text, n_crc):
        """Parse "6,5,0" (exponent list) or "0x61" (MSB-first word)."""
        text = text.strip()
        if text.lower().startswith("0x"):
            word = int(text, 16)
            if word < 2:
                raise ConfigurationError("polynomial word %r has degree < 1" % text)
            deg = word.bit_length() - 1
            coeffs = [(word >> (deg - i)) & 1 for i in range(deg + 1)]
            return cls(g=tuple(reversed(coeffs)), n_crc=n_crc)
        try:
            exps = sorted({int(t) for t in text.split(",")}, reverse=True)
        except ValueError:
            raise ConfigurationError("cannot parse polynomial %r" % text) from None
        if not exps or min(exps) < 0:
            raise ConfigurationError("polynomial exponents must be >= 0")
        g = [0] * (exps[0] + 1)
        for e in exps:
            g[e] = 1
        return cls(g=tuple(g), n_crc=n_crc)


def _lfsr_sweep(bits, spec):
    """Run the MSB-first division register over the last axis of a bit
    array and return the final remainder states."""
    bits = np.asarray(bits, dtype=np.int64)
    r = spec.r
    mask = (1 << r) - 1
    g_low = spec.poly_word & mask
    state = np.zeros(bits.shape[:-1], dtype=np.int64)
    for i in range(bits.shape[-1]):
        fb = state >> (r - 1)
        state = (((state << 1) & mask) | bits[..., i]) ^ (fb * g_low)
    return state


def crc_encode(payload, spec):
    """Append parity so the whole word is divisible by g (MSB-first).

    Accepts a single payload of length spec.k or a batch (..., k).
    """
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape[-1] != spec.k:
        raise ConfigurationError(
            "expected payload length %d, got %d" % (spec.k, payload.shape[-1]))
    r = spec.r
    padded = np.concatenate(
        [payload, np.zeros(payload.shape[:-1] + (r,), dtype=np.uint8)], axis=-1)
    state = _lfsr_sweep(padded, spec)
    parity = np.empty(payload.shape[:-1] + (r,), dtype=np.uint8)
    for j in range(r):
        parity[..., j] = (state >> (r - 1 - j)) & 1
    return np.concatenate([payload, parity], axis=-1)


def crc_check(bits, spec):
    """True where the word (last axis, length n_crc) is divisible by g."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != spec.n_crc:
        raise ConfigurationError(
            "expected word length %d, got %d" % (spec.n_crc, bits.shape[-1]))
    return _lfsr_sweep(bits, spec) == 0


@dataclass(frozen=True)
class Trellis:
    """Time-invariant state machine of the CRC division register.

    next0/next1 map a state to its successor under input bit 0/1; both are
    permutations of the state set, and prev0/prev1 are their inverses.
    Valid codewords are exactly the length-n_crc paths from state 0 back
    to state 0.
    """

    next0: np.ndarray
    next1: np.ndarray
    prev0: np.ndarray
    prev1: np.ndarray

    @property
    def n_states(self):
        return self.next0.size


@functools.lru_cache(maxsize=32)
def build_trellis(spec):
    if spec.r > MAX_TRELLIS_BITS:
        raise CapabilityError(
            "trellis needs 2**%d states; use spa_decode on the parity-check "
            "matrix for long CRCs" % spec.r)
    r = spec.r
    mask = (1 << r) - 1
    g_low = spec.poly_word & mask
    states = np.arange(1 << r, dtype=np.int64)
    fb = states >> (r - 1)
    next0 = (((states << 1) & mask) | 0) ^ (fb * g_low)
    next1 = (((states << 1) & mask) | 1) ^ (fb * g_low)
    return Trellis(next0=next0, next1=next1,
                   prev0=np.argsort(next0), prev1=np.argsort(next1))


def _lse_pair(x, y):
    """Exact log(exp(x) + exp(y)), elementwise.

    Composed from exp/log1p instead of np.logaddexp because the fused
    ufunc is an order of magnitude slower than the vectorized pieces on
    common hardware.  The only case the composition gets wrong on its
    own is (-inf, -inf), where the difference is NaN; the final where
    pins those entries back to -inf.
    """
    m = np.maximum(x, y)
    with np.errstate(invalid="ignore"):
        r = m + np.log1p(np.exp(-np.abs(x - y)))
    return np.where(np.isfinite(m), r, m)


def _lse_reduce(values, axis):
    """Exact log(sum(exp(values))) along axis, same speed rationale as
    _lse_pair.  Rows whose maximum is not finite (all -inf, or a +inf
    entry) collapse to that maximum, which is the correct limit."""
    m = np.max(values, axis=axis, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = m + np.log(np.sum(np.exp(values - m), axis=axis, keepdims=True))
    r = np.where(np.isfinite(m), r, m)
    return np.squeeze(r, axis=axis)


def maxstar(values, axis=None, max_log=False):
    """Jacobian logarithm ln(sum(exp(values))), or a plain max when
    max_log is set.  Handles -inf entries exactly."""
    values = np.asarray(values, dtype=np.float64)
    if max_log:
        return np.max(values, axis=axis)
    if axis is None:
        return float(_lse_reduce(values.ravel(), axis=0))
    return _lse_reduce(values, axis=axis)


def bcjr_decode(llr_in, spec, max_log=False, dtype=np.float64):
    """Soft-in soft-out MAP decoding of a CRC word on its trellis.

    llr_in holds one LLR per codeword bit (positive favours 0), shape
    (n_crc,) or batched (B, n_crc).  Returns extrinsic LLRs of the same
    shape: the a-posteriori bit LLR minus the intrinsic input, computed
    by excluding the time-i branch metric from the time-i output.

    Forward and backward passes run in the log domain with exact
    log-sum-exp combining (or max only, when max_log is set) and are
    pinned to state 0 at both ends.  Unreachable states carry -inf.
    dtype trades precision for speed; float32 is plenty when the output
    feeds another iterative decoder.
    """
    trellis = build_trellis(spec)
    llr = np.asarray(llr_in, dtype=dtype)
    squeeze = llr.ndim == 1
    if squeeze:
        llr = llr[None, :]
    if llr.shape[-1] != spec.n_crc:
        raise ConfigurationError(
            "expected %d LLRs, got %d" % (spec.n_crc, llr.shape[-1]))
    B, T = llr.shape
    S = trellis.n_states

    # State-major (S, B) layout: the per-step state gathers become
    # contiguous row copies and every reduction over states vectorizes
    # across the batch.  llr rows are transposed once for the same
    # reason.  All heavy ops write into preallocated scratch.
    llr_t = np.ascontiguousarray(llr.T)
    prev01 = np.concatenate([trellis.prev0, trellis.prev1])
    next01 = np.concatenate([trellis.next0, trellis.next1])
    g = np.empty((2 * S, B), dtype=dtype)
    d = np.empty((S, B), dtype=dtype)

    def pair_into(x, y, out):
        # out = log(exp(x) + exp(y)); inputs never hold +inf here, and
        # the one case the composition mishandles, (-inf, -inf), shows
        # up as NaN and is pinned back to -inf at the end.
        if max_log:
            np.maximum(x, y, out=out)
            return
        np.subtract(x, y, out=d)
        np.abs(d, out=d)
        np.negative(d, out=d)
        np.exp(d, out=d)
        np.log1p(d, out=d)
        np.maximum(x, y, out=out)
        out += d
        np.nan_to_num(out, copy=False, nan=-np.inf)

    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.full((T + 1, S, B), -np.inf, dtype=dtype)
        alpha[0, 0] = 0.0
        for i in range(T):
            np.take(alpha[i], prev01, axis=0, out=g)
            g[S:] -= llr_t[i]
            pair_into(g[:S], g[S:], alpha[i + 1])

        out = np.empty((T, B), dtype=dtype)
        beta = np.full((S, B), -np.inf, dtype=dtype)
        beta[0] = 0.0
        s = np.empty((2, S, B), dtype=dtype)
        s2 = s.reshape(2 * S, B)
        for i in range(T - 1, -1, -1):
            np.take(beta, next01, axis=0, out=g)
            s2[:] = g
            np.add(s, alpha[i][None], out=s)
            # The edge sums omit the time-i branch metric, which is what
            # makes the output extrinsic rather than a full posterior.
            m = s.max(axis=1)
            if max_log:
                t01 = m
            else:
                np.subtract(s, m[:, None, :], out=s)
                np.exp(s, out=s)
                t01 = s.sum(axis=1)
                np.log(t01, out=t01)
                t01 += m
                np.nan_to_num(t01, copy=False, nan=-np.inf)
            np.subtract(t01[0], t01[1], out=out[i])
            g[S:] -= llr_t[i]
            pair_into(g[:S], g[S:], beta)
    res = np.ascontiguousarray(out.T)
    return res[0] if squeeze else res


def derive_h(spec):
    """Parity-check matrix of the CRC code in systematic form.

    Encoding the unit payloads gives the systematic generator
    G = [I_k | P]; the returned matrix is H = [P^T | I_r], shape
    (r, n_crc), satisfying G H^T = 0.
    """
    eye = np.eye(spec.k, dtype=np.uint8)
    gen = crc_encode(eye, spec)
    p = gen[:, spec.k:]
    return np.concatenate([p.T, np.eye(spec.r, dtype=np.uint8)], axis=1)


def reduce_density(h):
    """Greedy density reduction that preserves the row space.

    Scans ordered row pairs; whenever the XOR of two rows is lighter than
    the heavier of the pair, that heavier row is replaced (ties replace
    the later row).  Passes repeat until none of the substitutions fires.
    Every replacement is an elementary row operation, so rank and row
    space are untouched, and the total weight strictly decreases, which
    bounds the number of passes.
    """
    h = np.array(h, dtype=np.uint8) & 1
    rows = h.shape[0]
    weights = h.sum(axis=1)
    changed = True
    while changed:
        changed = False
        for i in range(rows):
            for j in range(i + 1, rows):
                s = h[i] ^ h[j]
                w = int(s.sum())
                if w == 0:
                    continue
                if w < max(weights[i], weights[j]):
                    t = i if weights[i] >= weights[j] else j
                    if weights[i] == weights[j]:
                        t = j
                    h[t] = s
                    weights[t] = w
                    changed = True
    return h


def spa_decode(llr_in, h, inner_iters=1, llr_clip=40.0, dtype=np.float64):
    """Sum-product decoding on a parity-check matrix, extrinsic output.

    Stateless: messages start from zero on every call, run inner_iters
    flooding iterations (variable-to-check, then tanh-rule
    check-to-variable), and the returned array is the column sum of the
    final check-to-variable messages, clipped to +-llr_clip.  Shape in
    equals shape out: (n,) or (B, n).  dtype trades precision for speed
    exactly as in bcjr_decode.
    """
    h = np.asarray(h, dtype=np.uint8)
    llr = np.asarray(llr_in, dtype=dtype)
    squeeze = llr.ndim == 1
    if squeeze:
        llr = llr[None, :]
    if llr.shape[-1] != h.shape[1]:
        raise ConfigurationError(
            "expected %d LLRs, got %d" % (h.shape[1], llr.shape[-1]))
    B = llr.shape[0]
    support = h.astype(bool)[None, :, :]
    m_cv = np.zeros((B,) + h.shape, dtype=dtype)

    for _ in range(inner_iters):
        total = llr[:, None, :] + m_cv.sum(axis=1)[:, None, :]
        v2c = np.where(support, total - m_cv, 0.0)
        th = np.where(support, np.tanh(v2c / 2.0), 1.0)
        zero = support & (th == 0.0)
        nz_cnt = zero.sum(axis=2, keepdims=True)
        th_nz = np.where(zero, 1.0, th)
        prod_nz = th_nz.prod(axis=2, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            excl = np.where(
                nz_cnt == 0, prod_nz / th_nz,
                np.where(zero & (nz_cnt == 1), prod_nz, 0.0))
        excl = np.clip(excl, -1.0, 1.0)
        with np.errstate(divide="ignore"):
            m_cv = np.where(support, 2.0 * np.arctanh(excl), 0.0)
        m_cv = np.clip(m_cv, -llr_clip, llr_clip)

    out = m_cv.sum(axis=1)
    out = np.clip(out, -llr_clip, llr_clip)
    return out[0] if squeeze else out


def degree_distribution(h):
    """Edge-perspective degree polynomials (lambda, rho) of a parity-check
    matrix, returned as coefficient arrays indexed by the exponent of Z:
    lambda[d] is the fraction of edges attached to variable nodes of
    degree d + 1, rho[d] the same for check nodes."""
    h = np.asarray(h, dtype=np.uint8)
    col_deg = h.sum(axis=0).astype(np.int64)
    row_deg = h.sum(axis=1).astype(np.int64)
    edges = int(col_deg.sum())
    if edges == 0:
        raise ConfigurationError("parity-check matrix has no edges")
    lam = np.zeros(int(col_deg.max()), dtype=np.float64)
    for d in col_deg:
        if d > 0:
            lam[d - 1] += d
    rho = np.zeros(int(row_deg.max()), dtype=np.float64)
    for d in row_deg:
        if d > 0:
            rho[d - 1] += d
    return lam / edges, rho / edges


def h_has_full_rank(h, spec):
    """Convenience check used in tests: the derived matrix keeps rank r."""
    return rank(h) == spec.r


def codeword_table(spec):
    """All 2**k codewords of a short CRC code, for exhaustive references.

    Guarded to k <= 20 so it stays an oracle-sized tool.
    """
    if spec.k > 20:
        raise CapabilityError("codeword enumeration is limited to k <= 20")
    k = spec.k
    msgs = ((np.arange(1 << k)[:, None] >> np.arange(k - 1, -1, -1)) & 1)
    return crc_encode(msgs.astype(np.uint8), spec)


def parity_consistency(spec):
    """G H^T = 0 for the systematic generator and derived H."""
    eye = np.eye(spec.k, dtype=np.uint8)
    gen = crc_encode(eye, spec)
    h = derive_h(spec)
    return not np.any(matmul(gen, h.T))
