"""Belief propagation on the polar factor graph, with permuted stage
orders reduced to one canonical kernel by relabeling bit indices."""

from dataclasses import dataclass

import numpy as np

from .crc import bcjr_decode, crc_check, derive_h, reduce_density, spa_decode
from .errors import ConfigurationError
from .polar import polar_transform

LLR_MAX = 40.0
MIN_SUM_SCALE = 0.9375


def boxplus(a, b, min_sum=False):
    """Check-node combination of two LLRs, saturated to +-LLR_MAX.

    Exact rule 2*atanh(tanh(a/2)*tanh(b/2)) by default; the min-sum flag
    switches to sign(a)sign(b)min(|a|,|b|) scaled by 0.9375.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if min_sum:
        out = MIN_SUM_SCALE * np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    else:
        with np.errstate(divide="ignore"):
            out = 2.0 * np.arctanh(np.tanh(a / 2.0) * np.tanh(b / 2.0))
    return np.clip(out, -LLR_MAX, LLR_MAX)


def identity_perm(n):
    return tuple(range(n))


def validate_perm(perm, n):
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ConfigurationError(
            "stage order %r is not a permutation of 0..%d" % (perm, n - 1))
    return perm


def stage_bit_map(perm, n):
    """Index relabeling that turns the graph with stage order perm into
    the canonical graph.

    Position s of the permuted graph hosts the butterflies of axis
    perm[s]; moving bit perm[s] of every index into bit position s makes
    that the canonical axis-s stage.  Returns (m, minv) where
    m[i] is the kernel index of code index i and minv is the inverse map.
    """
    perm = validate_perm(perm, n)
    idx = np.arange(1 << n, dtype=np.int64)
    m = np.zeros_like(idx)
    for s, axis in enumerate(perm):
        m |= ((idx >> axis) & 1) << s
    return m, np.argsort(m)


def permute_bits(perm, values, side):
    """Move a length-N vector (last axis) between code and kernel index
    domains for the given stage order.

    side "x" maps code-domain values (channel LLRs, transmitted bits)
    into the kernel domain; side "u" maps kernel-domain results
    (decisions, decision LLRs) back to the code domain.  The two are
    mutually inverse, and the identity stage order leaves values alone.
    """
    values = np.asarray(values)
    n = values.shape[-1].bit_length() - 1
    m, minv = stage_bit_map(perm, n)
    if side == "x":
        return values[..., minv]
    if side == "u":
        return values[..., m]
    raise ConfigurationError("side must be 'x' or 'u', got %r" % (side,))


@dataclass
class DecodeResult:
    """Hard decisions and bookkeeping from one decoded frame.

    u_hat and x_hat are the message-side and code-side hard decisions in
    code-domain order, with frozen positions of u_hat forced to zero.
    left_llrs holds the final message-side decision LLRs (code order).
    """

    u_hat: np.ndarray
    x_hat: np.ndarray
    converged: bool
    iterations_used: int
    left_llrs: np.ndarray = None


def _stage_indices(n):
    """Per-stage (top, bottom) butterfly index arrays for the canonical
    graph: stage s pairs i with i + 2**s for every i whose bit s is 0."""
    N = 1 << n
    idx = np.arange(N)
    stages = []
    for s in range(n):
        top = idx[(idx >> s) & 1 == 0]
        stages.append((top, top + (1 << s)))
    return stages


def _clip(a):
    return np.clip(a, -LLR_MAX, LLR_MAX, out=a)


def _make_hook(hook, crc_spec, spa_inner_iters):
    if hook is None:
        return None
    if crc_spec is None:
        raise ConfigurationError("a CRC hook needs a crc_spec")
    if hook == "bcjr":
        # Exact combining in float32: single precision is plenty for
        # priors that feed straight back into message passing, and it
        # runs on the vectorized exp/log paths.
        return lambda llrs: bcjr_decode(llrs, crc_spec, dtype=np.float32)
    if hook == "spa":
        h = reduce_density(derive_h(crc_spec))
        return lambda llrs: spa_decode(llrs, h, inner_iters=spa_inner_iters,
                                       dtype=np.float32)
    if callable(hook):
        return hook
    raise ConfigurationError("crc_hook must be 'bcjr', 'spa' or callable")


def _run_kernel(llrs, frozen, max_iters, stopping="gmatrix", crc_spec=None,
                info_idx=None, hook_fn=None, min_sum=False, record=None):
    """Flooding BP on the canonical kernel for a batch of rows.

    llrs (B, N) are channel LLRs in kernel order; frozen (B, N) is the
    per-row frozen mask; info_idx (B, k) lists each row's information
    positions in outer-codeword order (needed for the crc stopping rule
    and for the hook).  Returns (u_hat, x_hat, converged, iters,
    left_llrs) with rows in the original batch order.

    A row that satisfies the stopping rule is frozen at that iteration
    and dropped from the active set; remaining rows keep iterating.
    """
    if stopping not in ("none", "gmatrix", "crc"):
        raise ConfigurationError("unknown stopping rule %r" % (stopping,))
    if stopping == "crc" and crc_spec is None:
        raise ConfigurationError("crc stopping needs a crc_spec")
    if max_iters < 1:
        raise ConfigurationError("max_iters must be >= 1")

    llrs = np.asarray(llrs, dtype=np.float64)
    B, N = llrs.shape
    n = N.bit_length() - 1
    stages = _stage_indices(n)

    L = np.zeros((n + 1, B, N))
    R = np.zeros((n + 1, B, N))
    R[0][frozen] = LLR_MAX
    L[n] = np.clip(llrs, -LLR_MAX, LLR_MAX)

    u_hat = np.zeros((B, N), dtype=np.uint8)
    x_hat = np.zeros((B, N), dtype=np.uint8)
    left = np.zeros((B, N))
    converged = np.zeros(B, dtype=bool)
    iters = np.full(B, max_iters, dtype=np.int64)

    active = np.arange(B)
    for it in range(1, max_iters + 1):
        for s in range(n - 1, -1, -1):
            top, bot = stages[s]
            lt = L[s + 1][:, top]
            lb = L[s + 1][:, bot]
            rb = R[s][:, bot]
            rt = R[s][:, top]
            L[s][:, top] = boxplus(lt, lb + rb, min_sum)
            L[s][:, bot] = _clip(boxplus(rt, lt, min_sum) + lb)

        if hook_fn is not None:
            l0_info = np.take_along_axis(L[0], info_idx, axis=1)
            ext = np.clip(hook_fn(l0_info), -LLR_MAX, LLR_MAX)
            np.put_along_axis(R[0], info_idx, ext, axis=1)

        for s in range(n):
            top, bot = stages[s]
            lt = L[s + 1][:, top]
            lb = L[s + 1][:, bot]
            rb = R[s][:, bot]
            rt = R[s][:, top]
            R[s + 1][:, top] = boxplus(rt, lb + rb, min_sum)
            R[s + 1][:, bot] = _clip(boxplus(rt, lt, min_sum) + rb)

        u_dec = (L[0] + R[0] < 0).astype(np.uint8)
        x_dec = (L[n] + R[n] < 0).astype(np.uint8)

        if record is not None:
            record(it, L, R)

        if stopping == "none":
            done = np.zeros(u_dec.shape[0], dtype=bool)
        else:
            u_chk = u_dec.copy()
            u_chk[frozen] = 0
            done = np.all(polar_transform(u_chk) == x_dec, axis=-1)
            if stopping == "crc":
                # A bare CRC hit on interim decisions is no convergence
                # signal (the feedback steers toward CRC-valid patterns),
                # so the codeword consistency check is required as well.
                bits = np.take_along_axis(u_dec, info_idx, axis=1)
                done &= crc_check(bits, crc_spec)

        last = it == max_iters
        flush = done | last
        if np.any(flush):
            rows = active[flush]
            u_final = u_dec[flush].copy()
            u_final[frozen[flush]] = 0
            u_hat[rows] = u_final
            x_hat[rows] = x_dec[flush]
            left[rows] = (L[0] + R[0])[flush]
            converged[rows] = done[flush]
            iters[rows] = it
        if last or np.all(flush):
            break
        if np.any(done):
            keep = ~done
            active = active[keep]
            L = L[:, keep]
            R = R[:, keep]
            frozen = frozen[keep]
            if info_idx is not None:
                info_idx = info_idx[keep]

    return u_hat, x_hat, converged, iters, left


def _kernel_inputs(code, perms, channel_llrs):
    """Relabel one frame's channel LLRs into kernel order for every stage
    order in perms; returns (llrs_k, frozen_k, info_idx, maps)."""
    n = code.n
    rows = len(perms)
    N = code.N
    llrs_k = np.empty((rows, N))
    frozen_k = np.empty((rows, N), dtype=bool)
    info_idx = np.empty((rows, code.k_total), dtype=np.int64)
    maps = []
    for r, perm in enumerate(perms):
        m, minv = stage_bit_map(perm, n)
        llrs_k[r] = channel_llrs[minv]
        frozen_k[r] = code.frozen[minv]
        info_idx[r] = m[code.info_set]
        maps.append(m)
    return llrs_k, frozen_k, info_idx, maps


def bp_decode(channel_llrs, code, perm=None, max_iters=200, stopping="gmatrix",
              crc_spec=None, crc_hook=None, min_sum=False, spa_inner_iters=1,
              dump_file=None):
    """Decode one frame with BP on a (possibly permuted) factor graph.

    channel_llrs has length N in code order.  perm is a stage order
    (permutation of 0..n-1, default identity).  stopping is "none",
    "gmatrix" (re-encode check) or "crc" (re-encode check plus the outer
    code check on the information bits; needs crc_spec).  crc_hook
    ("bcjr", "spa" or a callable mapping (B, n_crc) LLRs to extrinsic
    LLRs) turns plain BP into a CRC-aided decoder by overwriting the
    message-side priors of the information positions after every
    leftward sweep.

    Setting dump_file writes the final L and R message matrices to a
    text file, one stage per row, tab-separated.
    """
    channel_llrs = np.asarray(channel_llrs, dtype=np.float64)
    if channel_llrs.shape != (code.N,):
        raise ConfigurationError("expected %d channel LLRs" % code.N)
    if perm is None:
        perm = identity_perm(code.n)
    perm = validate_perm(perm, code.n)
    hook_fn = _make_hook(crc_hook, crc_spec, spa_inner_iters)

    llrs_k, frozen_k, info_idx, maps = _kernel_inputs(code, [perm], channel_llrs)

    dump = {}
    record = None
    if dump_file is not None:
        record = lambda it, L, R: dump.update(L=L.copy(), R=R.copy())

    u_k, x_k, conv, iters, left_k = _run_kernel(
        llrs_k, frozen_k, max_iters, stopping=stopping, crc_spec=crc_spec,
        info_idx=info_idx, hook_fn=hook_fn, min_sum=min_sum, record=record)

    m = maps[0]
    result = DecodeResult(
        u_hat=u_k[0][m],
        x_hat=x_k[0][m],
        converged=bool(conv[0]),
        iterations_used=int(iters[0]),
        left_llrs=left_k[0][m],
    )
    if dump_file is not None:
        with open(dump_file, "w") as fh:
            for name in ("L", "R"):
                fh.write("# %s matrix, row = stage, column = kernel bit index\n"
                         % name)
                for row in dump[name][:, 0, :]:
                    fh.write("\t".join("%.6f" % v for v in row) + "\n")
    return result
