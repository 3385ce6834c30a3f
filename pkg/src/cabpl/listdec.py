"""List decoders: parallel BP over permuted factor graphs, successive
cancellation (plain and list), and an ordered-statistics ML bound."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bp import (DecodeResult, _kernel_inputs, _make_hook, _run_kernel,
                 identity_perm, stage_bit_map, validate_perm)
from .crc import crc_check, crc_encode
from .errors import CapabilityError, ConfigurationError
from .gf2 import row_reduce
from .polar import polar_transform


@dataclass(frozen=True)
class PermSet:
    """An ordered set of factor-graph stage orders for list decoding."""

    n: int
    perms: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "perms", tuple(validate_perm(p, self.n) for p in self.perms))
        if len(self.perms) == 0:
            raise ConfigurationError("a permutation set cannot be empty")

    def __len__(self):
        return len(self.perms)

    def __iter__(self):
        return iter(self.perms)

    def __getitem__(self, i):
        return self.perms[i]

    @property
    def contains_default(self):
        return identity_perm(self.n) in self.perms

    @classmethod
    def default(cls, n):
        return cls(n=n, perms=(identity_perm(n),))

    @classmethod
    def cyclic_shifts(cls, n, size):
        """The first `size` left rotations of the identity stage order,
        starting with the identity itself."""
        if not 1 <= size <= n:
            raise ConfigurationError(
                "only %d distinct rotations exist for n = %d" % (n, n))
        perms = tuple(tuple((s + j) % n for s in range(n)) for j in range(size))
        return cls(n=n, perms=perms)

    @classmethod
    def random(cls, n, size, seed, include_default=True):
        """Distinct stage orders drawn uniformly; the identity order is
        placed first unless include_default is false."""
        if size > math.factorial(n):
            raise ConfigurationError("asked for more stage orders than n! = %d"
                                     % math.factorial(n))
        rng = np.random.default_rng(seed)
        chosen = []
        seen = set()
        if include_default:
            ident = identity_perm(n)
            chosen.append(ident)
            seen.add(ident)
        while len(chosen) < size:
            p = tuple(int(v) for v in rng.permutation(n))
            if p not in seen:
                seen.add(p)
                chosen.append(p)
        return cls(n=n, perms=tuple(chosen[:size]))

    @classmethod
    def all_orders(cls, n):
        """Every one of the n! stage orders, identity first, lexicographic."""
        return cls(n=n, perms=tuple(itertools.permutations(range(n))))

    @classmethod
    def from_file(cls, path):
        """Read stage orders, one per line as comma-separated indices."""
        perms = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    perms.append(tuple(int(t) for t in line.split(",")))
        if not perms:
            raise ConfigurationError("no stage orders found in %s" % path)
        return cls(n=len(perms[0]), perms=tuple(perms))

    def save(self, path):
        with open(path, "w") as fh:
            for p in self.perms:
                fh.write(",".join(str(v) for v in p) + "\n")

    def union(self, other):
        """This set followed by the members of `other` not already present."""
        if other.n != self.n:
            raise ConfigurationError("stage-order lengths differ")
        extra = tuple(p for p in other.perms if p not in self.perms)
        return PermSet(n=self.n, perms=self.perms + extra)


@dataclass
class ListOutcome:
    """Winner plus per-candidate diagnostics from one list-decoded frame.

    result holds the selected candidate in code-domain order; its
    converged flag says whether any candidate passed the validity rule,
    and its iterations_used is the largest iteration count across the
    parallel decoders (they run side by side, so the slowest one sets
    the latency).  The arrays are indexed like the permutation set.
    """

    result: DecodeResult
    winner: int
    valid: np.ndarray
    metrics: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    gmatrix_ok: np.ndarray


def _list_decode_frames(frames, code, perm_set, max_iters, stopping,
                        crc_spec=None, crc_hook=None, min_sum=False,
                        spa_inner_iters=1, validity="gmatrix"):
    """Decode F frames with one BP kernel call of F * L rows.

    frames has shape (F, N) in code order.  validity selects which
    candidates may win: "gmatrix", "crc", or "both".  Returns a dict of
    arrays; hard outputs are already mapped back to code order.
    """
    frames = np.asarray(frames, dtype=np.float64)
    F, N = frames.shape
    L = len(perm_set)
    n = code.n
    hook_fn = _make_hook(crc_hook, crc_spec, spa_inner_iters)

    llrs_k = np.empty((F * L, N))
    frozen_k = np.empty((F * L, N), dtype=bool)
    info_idx = np.empty((F * L, code.k_total), dtype=np.int64)
    m_all = np.empty((L, N), dtype=np.int64)
    for l, perm in enumerate(perm_set):
        m, minv = stage_bit_map(perm, n)
        m_all[l] = m
        llrs_k[l::L] = frames[:, minv]
        frozen_k[l::L] = code.frozen[minv]
        info_idx[l::L] = m[code.info_set]

    u_k, x_k, conv, iters, left_k = _run_kernel(
        llrs_k, frozen_k, max_iters, stopping=stopping, crc_spec=crc_spec,
        info_idx=info_idx, hook_fn=hook_fn, min_sum=min_sum)

    # Candidates are judged and emitted on the re-encoding of their
    # message decisions, which is a codeword by construction; the raw
    # code-side hard decisions only feed the consistency diagnostic.
    x_enc = polar_transform(u_k)
    gmx = np.all(x_enc == x_k, axis=-1)
    if crc_spec is not None:
        bits = np.take_along_axis(u_k, info_idx, axis=1)
        crc_ok = crc_check(bits, crc_spec)
    else:
        crc_ok = None

    if validity == "crc" and crc_ok is None:
        raise ConfigurationError("crc validity needs a crc_spec")
    if validity == "gmatrix":
        valid = gmx if crc_ok is None else (gmx & crc_ok)
    elif validity == "crc":
        # The message decisions are emitted re-encoded, so a candidate
        # whose decisions pass the CRC is a fair contender even when its
        # two hard-decision sides still disagree at max_iters.
        valid = crc_ok
    else:
        raise ConfigurationError("unknown validity rule %r" % (validity,))

    metrics = ((1.0 - 2.0 * x_enc) * llrs_k).sum(axis=1)

    valid = valid.reshape(F, L)
    metrics = metrics.reshape(F, L)
    conv = conv.reshape(F, L)
    iters = iters.reshape(F, L)
    gmx = gmx.reshape(F, L)

    masked = np.where(valid, metrics, -np.inf)
    any_valid = valid.any(axis=1)
    winner = np.where(any_valid,
                      np.argmax(masked, axis=1),
                      np.argmax(metrics, axis=1))

    rows = np.arange(F)
    u_sel = u_k.reshape(F, L, N)[rows, winner]
    x_sel = x_enc.reshape(F, L, N)[rows, winner]
    left_sel = left_k.reshape(F, L, N)[rows, winner]
    m_sel = m_all[winner]
    u_code = np.take_along_axis(u_sel, m_sel, axis=1)
    x_code = np.take_along_axis(x_sel, m_sel, axis=1)
    left_code = np.take_along_axis(left_sel, m_sel, axis=1)

    return dict(u_hat=u_code, x_hat=x_code, left_llrs=left_code,
                winner=winner, any_valid=any_valid, valid=valid,
                metrics=metrics, converged=conv, iterations=iters,
                gmatrix_ok=gmx)


def _single_outcome(res):
    out = DecodeResult(
        u_hat=res["u_hat"][0],
        x_hat=res["x_hat"][0],
        converged=bool(res["any_valid"][0]),
        iterations_used=int(res["iterations"][0].max()),
        left_llrs=res["left_llrs"][0],
    )
    return ListOutcome(
        result=out,
        winner=int(res["winner"][0]),
        valid=res["valid"][0],
        metrics=res["metrics"][0],
        converged=res["converged"][0],
        iterations=res["iterations"][0],
        gmatrix_ok=res["gmatrix_ok"][0],
    )


def bpl_decode(channel_llrs, code, perm_set, max_iters=200, crc_spec=None,
               min_sum=False):
    """Plain BP list decoding: one BP decoder per stage order, no soft
    CRC feedback.

    Candidates stop on the re-encoding check, tightened by the CRC check
    when a crc_spec is supplied; the same conditions make a candidate
    valid.  Among valid candidates the one whose re-encoded decision has
    the largest correlation against the channel wins; ties keep the
    lowest index.  With no valid candidate the best-metric one is
    returned with converged = False.
    """
    frames = np.asarray(channel_llrs, dtype=np.float64)[None, :]
    stopping = "crc" if crc_spec is not None else "gmatrix"
    res = _list_decode_frames(frames, code, perm_set, max_iters, stopping,
                              crc_spec=crc_spec, min_sum=min_sum,
                              validity="gmatrix")
    return _single_outcome(res)


def ca_bpl_decode(channel_llrs, code, perm_set, crc_spec, max_iters=200,
                  crc_hook="bcjr", min_sum=False, spa_inner_iters=1):
    """CRC-aided BP list decoding.

    Every candidate decoder feeds the message-side information LLRs
    through a soft-in soft-out CRC decoder ("bcjr" on the CRC trellis or
    "spa" on its reduced parity-check matrix) after each leftward sweep
    and uses the extrinsic output as the new information priors.
    Candidates stop once their decisions re-encode consistently and pass
    the CRC, which is also the validity rule; both flags are kept per
    candidate as diagnostics.
    """
    if crc_spec is None:
        raise ConfigurationError("ca_bpl_decode needs a crc_spec")
    frames = np.asarray(channel_llrs, dtype=np.float64)[None, :]
    res = _list_decode_frames(frames, code, perm_set, max_iters, "crc",
                              crc_spec=crc_spec, crc_hook=crc_hook,
                              min_sum=min_sum, spa_inner_iters=spa_inner_iters,
                              validity="crc")
    return _single_outcome(res)


def _f_exact(a, b):
    # ln((1+e^(a+b)) / (e^a+e^b)) via the correction-term form, which
    # stays finite for any argument magnitude
    m = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    return (m + np.log1p(np.exp(-np.abs(a + b)))
            - np.log1p(np.exp(-np.abs(a - b))))


def sc_decode(channel_llrs, code):
    """Successive cancellation decoding, natural order, exact f rule."""
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (code.N,):
        raise ConfigurationError("expected %d channel LLRs" % code.N)
    frozen = code.frozen
    u_out = np.zeros(code.N, dtype=np.uint8)

    def rec(llr, start):
        span = llr.size
        if span == 1:
            if frozen[start]:
                bit = np.uint8(0)
            else:
                bit = np.uint8(1 if llr[0] < 0 else 0)
            u_out[start] = bit
            return np.array([bit], dtype=np.uint8)
        half = span // 2
        f1, f2 = llr[:half], llr[half:]
        x_left = rec(_f_exact(f1, f2), start)
        x_right = rec((1.0 - 2.0 * x_left) * f1 + f2, start + half)
        return np.concatenate([x_left ^ x_right, x_right])

    x_hat = rec(llrs, 0)
    return DecodeResult(u_hat=u_out, x_hat=x_hat, converged=True,
                        iterations_used=1, left_llrs=None)


def _scl_run(llrs, frozen, list_size):
    """Successive cancellation list decoding over all paths at once.

    Path metrics use the exact penalty ln(1 + exp(-(1-2u)L)), so with a
    list large enough to avoid pruning the metric equals the negative
    log-probability of the path given the channel outputs.  Pruning uses
    a stable sort: metric ties keep bit 0 and earlier paths.

    Returns (u, x, pm) for the surviving paths, best metric first
    within what a stable ordering guarantees at the final prune.
    """
    state = {"pm": np.zeros(1)}

    def rec(llr, start):
        span = llr.shape[1]
        if span == 1:
            col = llr[:, 0]
            pen0 = np.logaddexp(0.0, -col)
            if frozen[start]:
                state["pm"] = state["pm"] + pen0
                P = col.size
                z = np.zeros((P, 1), dtype=np.uint8)
                return z, z, np.arange(P)
            pen1 = np.logaddexp(0.0, col)
            pm_all = np.concatenate([state["pm"] + pen0, state["pm"] + pen1])
            P = col.size
            if 2 * P <= list_size:
                order = np.arange(2 * P)
            else:
                order = np.argsort(pm_all, kind="stable")[:list_size]
            state["pm"] = pm_all[order]
            bits = (order >= P).astype(np.uint8)[:, None]
            return bits, bits, order % P

        half = span // 2
        f1, f2 = llr[:, :half], llr[:, half:]
        u_l, x_l, anc_l = rec(_f_exact(f1, f2), start)
        f1, f2 = f1[anc_l], f2[anc_l]
        u_r, x_r, anc_r = rec((1.0 - 2.0 * x_l) * f1 + f2, start + half)
        u = np.concatenate([u_l[anc_r], u_r], axis=1)
        x = np.concatenate([x_l[anc_r] ^ x_r, x_r], axis=1)
        return u, x, anc_l[anc_r]

    u, x, _ = rec(llrs, 0)
    return u, x, state["pm"]


def ca_scl_decode(channel_llrs, code, list_size, crc_spec=None):
    """Successive cancellation list decoding, CRC-aided when a spec is
    given.

    The survivor is the lowest-metric path whose information bits pass
    the CRC; if none passes (or no CRC is in use) the lowest-metric path
    wins and converged reports whether the CRC was satisfied.  With
    list_size >= 2**k_total no path is ever pruned and the returned
    survivor is the exact maximum-likelihood codeword subject to the CRC.
    """
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (code.N,):
        raise ConfigurationError("expected %d channel LLRs" % code.N)
    if list_size < 1:
        raise ConfigurationError("list_size must be >= 1")
    u, x, pm = _scl_run(llrs[None, :], code.frozen, list_size)

    order = np.argsort(pm, kind="stable")
    pick = order[0]
    passed = crc_spec is None
    if crc_spec is not None:
        ok = crc_check(u[:, code.info_set], crc_spec)
        good = order[ok[order]]
        if good.size:
            pick = good[0]
            passed = True
    return DecodeResult(u_hat=u[pick], x_hat=x[pick], converged=bool(passed),
                        iterations_used=1, left_llrs=None)


def outer_generator(code, crc_spec):
    """Generator of the serial CRC-then-polar code: row i is the polar
    codeword of the CRC codeword of unit payload i, shape (k, N)."""
    if crc_spec.n_crc != code.k_total:
        raise ConfigurationError(
            "CRC codeword length %d must equal the polar information count %d"
            % (crc_spec.n_crc, code.k_total))
    eye = np.eye(crc_spec.k, dtype=np.uint8)
    return code.encode(crc_encode(eye, crc_spec))


def osd_bound(channel_llrs, generator, order):
    """Ordered statistics decoding of the code spanned by `generator`.

    Columns are ranked by |LLR| (stable on ties); Gauss-Jordan
    elimination walks that ranking and skips dependent columns, so the
    pivots form the most reliable basis.  The base candidate re-encodes
    the hard decisions on the basis; reprocessing XORs in every
    combination of up to `order` reduced rows.  The winner minimizes the
    soft discrepancy sum(|LLR|) over positions where it disagrees with
    the hard decision, which makes this an ML performance bound once the
    order is large enough.

    The returned u_hat is the inverse polar transform of the winning
    codeword, so for a CRC-plus-polar generator the outer codeword sits
    at the information positions.
    """
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    gen = np.asarray(generator, dtype=np.uint8)
    k, N = gen.shape
    if llrs.shape != (N,):
        raise ConfigurationError("expected %d channel LLRs" % N)
    if not 0 <= order <= 4:
        raise CapabilityError("reprocessing orders above 4 are not supported")

    ranking = np.argsort(-np.abs(llrs), kind="stable")
    red, pivots = row_reduce(gen, column_order=ranking)
    if len(pivots) < k:
        raise ConfigurationError("generator does not have full row rank")
    red = red[:k]
    pivots = np.asarray(pivots, dtype=np.int64)

    hard = (llrs < 0).astype(np.uint8)
    weights = np.abs(llrs)
    base = (hard[pivots].astype(np.uint32) @ red & 1).astype(np.uint8)

    best_cand = base
    best_metric = float(weights[base != hard].sum())

    chunk = 1 << 14
    for t in range(1, order + 1):
        combos = itertools.combinations(range(k), t)
        while True:
            block = np.fromiter(itertools.chain.from_iterable(
                itertools.islice(combos, chunk)), dtype=np.int64)
            if block.size == 0:
                break
            block = block.reshape(-1, t)
            flips = np.bitwise_xor.reduce(red[block], axis=1)
            cands = flips ^ base
            metrics = (cands != hard) @ weights
            i = int(np.argmin(metrics))
            if metrics[i] < best_metric:
                best_metric = float(metrics[i])
                best_cand = cands[i].copy()

    u_hat = polar_transform(best_cand)
    return DecodeResult(u_hat=u_hat, x_hat=best_cand, converged=True,
                        iterations_used=1, left_llrs=None)
