"""Monte-Carlo BLER/BER measurement with reproducible per-frame seeding.

Every frame draws its payload and noise from a generator seeded by
(master seed, SNR index, frame index), so runs are paired across
decoders and independent of batch size and worker count.  Stop rules are
only evaluated at batch boundaries in frame order, which keeps the
emitted rows byte-identical however the batches were computed.
"""

import csv
import io
import multiprocessing
import time
from dataclasses import dataclass, fields

import numpy as np

from .bp import _run_kernel
from .channel import ebno_to_sigma
from .crc import CrcSpec, crc_encode
from .errors import ConfigurationError
from .listdec import (PermSet, _list_decode_frames, ca_scl_decode,
                      osd_bound, outer_generator, sc_decode)
from .polar import PolarCode

CSV_FIELDS = ["decoder", "snr_db", "frames", "block_errors", "bit_errors",
              "bler", "ber", "avg_iters", "seconds"]

DECODER_NAMES = ("bp", "bpl", "ca-bpl-bcjr", "ca-bpl-spa", "sc", "ca-scl",
                 "osd")


def make_crc_spec(poly_text, k_payload):
    """CRC spec whose codeword is the payload plus its parity bits."""
    probe = CrcSpec.from_string(poly_text, n_crc=10 ** 6)
    return CrcSpec.from_string(poly_text, n_crc=k_payload + probe.r)


@dataclass
class SimConfig:
    """Everything a worker needs to rebuild the experiment."""

    N: int = 128
    k_payload: int = 64
    crc: str = None
    construction: str = "5g"
    design_eps: float = 0.5
    snrs: tuple = (4.0,)
    decoders: tuple = ("bp",)
    list_size: int = 8
    max_iters: int = 200
    min_sum: bool = False
    spa_inner_iters: int = 1
    osd_order: int = 2
    perm_file: str = None
    seed: int = 0
    batch: int = 128
    min_block_errors: int = 100
    min_frames: int = 0
    max_frames: int = 1_000_000
    workers: int = 1

    def __post_init__(self):
        self.snrs = tuple(float(s) for s in self.snrs)
        self.decoders = tuple(self.decoders)
        if len(self.snrs) == 0:
            raise ConfigurationError("need at least one SNR point")
        if len(set(self.snrs)) != len(self.snrs):
            raise ConfigurationError("SNR points must be distinct")
        if list(self.snrs) != sorted(self.snrs):
            raise ConfigurationError("SNR points must be increasing")
        if len(self.snrs) > 1:
            steps = np.diff(self.snrs)
            if np.any(steps <= 0):
                raise ConfigurationError("SNR step must be positive")
        for name in self.decoders:
            if name not in DECODER_NAMES:
                raise ConfigurationError(
                    "unknown decoder %r (choose from %s)"
                    % (name, ", ".join(DECODER_NAMES)))
        if self.batch < 1 or self.max_frames < 1:
            raise ConfigurationError("batch and max_frames must be >= 1")
        if self.min_block_errors < 0 or self.min_frames < 0:
            raise ConfigurationError("stop thresholds must be >= 0")


def build_system(cfg):
    """(code, crc_spec) for a config; k_total includes the CRC bits."""
    crc_spec = make_crc_spec(cfg.crc, cfg.k_payload) if cfg.crc else None
    k_total = cfg.k_payload + (crc_spec.r if crc_spec else 0)
    code = PolarCode(cfg.N, k_total, construction=cfg.construction,
                     design_eps=cfg.design_eps)
    return code, crc_spec


def resolve_perm_set(cfg, code):
    """The stage-order set used by the list decoders.

    A perm file wins; otherwise the first list_size cyclic rotations, or
    a seeded random set (identity first) when list_size exceeds n.
    """
    if cfg.perm_file:
        ps = PermSet.from_file(cfg.perm_file)
        if ps.n != code.n:
            raise ConfigurationError(
                "perm file is for n=%d graphs, code has n=%d" % (ps.n, code.n))
        return ps
    if cfg.list_size <= code.n:
        return PermSet.cyclic_shifts(code.n, cfg.list_size)
    return PermSet.random(code.n, cfg.list_size, seed=(cfg.seed, 0x9e3779b9),
                          include_default=True)


def _payload_of(code, crc_spec, u_rows):
    k = crc_spec.k if crc_spec else code.k_total
    return u_rows[:, code.info_set[:k]]


def make_decoders(cfg, code, crc_spec):
    """name -> adapter(llr_rows) returning (payload_rows, iters_rows)."""
    # only the list decoders need a stage-order set; resolving it eagerly
    # would reject e.g. plain bp at N=8 whenever list_size > n!
    if any(d in ("bpl", "ca-bpl-bcjr", "ca-bpl-spa") for d in cfg.decoders):
        perm_set = resolve_perm_set(cfg, code)
    else:
        perm_set = None
    adapters = {}

    def bp_run(llrs):
        frozen = np.broadcast_to(code.frozen, llrs.shape).copy()
        u, _, _, iters, _ = _run_kernel(llrs, frozen, cfg.max_iters,
                                        stopping="gmatrix", min_sum=cfg.min_sum)
        return _payload_of(code, crc_spec, u), iters

    def list_run(llrs, validity, hook):
        stopping = "crc" if crc_spec is not None else "gmatrix"
        res = _list_decode_frames(
            llrs, code, perm_set, cfg.max_iters, stopping, crc_spec=crc_spec,
            crc_hook=hook, min_sum=cfg.min_sum,
            spa_inner_iters=cfg.spa_inner_iters, validity=validity)
        return (_payload_of(code, crc_spec, res["u_hat"]),
                res["iterations"].max(axis=1))

    def per_frame(decode_one):
        def run(llrs):
            pay = np.empty((llrs.shape[0], crc_spec.k if crc_spec
                            else code.k_total), dtype=np.uint8)
            for i, row in enumerate(llrs):
                r = decode_one(row)
                pay[i] = _payload_of(code, crc_spec, r.u_hat[None, :])[0]
            return pay, np.ones(llrs.shape[0], dtype=np.int64)
        return run

    for name in cfg.decoders:
        if name == "bp":
            adapters[name] = bp_run
        elif name == "bpl":
            adapters[name] = lambda llrs: list_run(llrs, "gmatrix", None)
        elif name == "ca-bpl-bcjr":
            _need_crc(crc_spec, name)
            adapters[name] = lambda llrs: list_run(llrs, "crc", "bcjr")
        elif name == "ca-bpl-spa":
            _need_crc(crc_spec, name)
            adapters[name] = lambda llrs: list_run(llrs, "crc", "spa")
        elif name == "sc":
            adapters[name] = per_frame(lambda row: sc_decode(row, code))
        elif name == "ca-scl":
            adapters[name] = per_frame(
                lambda row: ca_scl_decode(row, code, cfg.list_size, crc_spec))
        elif name == "osd":
            if crc_spec is not None:
                gen = outer_generator(code, crc_spec)
            else:
                gen = code.encode(np.eye(code.k_total, dtype=np.uint8))
            adapters[name] = per_frame(
                lambda row, g=gen: osd_bound(row, g, cfg.osd_order))
    return adapters


def _need_crc(crc_spec, name):
    if crc_spec is None:
        raise ConfigurationError("decoder %s needs --crc" % name)


def generate_frames(cfg, code, crc_spec, snr_index, start, size):
    """Payloads and channel LLRs for frames start..start+size-1 of one
    SNR point, each from its own (seed, snr_index, frame) stream."""
    k = crc_spec.k if crc_spec else code.k_total
    rate = cfg.k_payload / cfg.N
    sigma = ebno_to_sigma(cfg.snrs[snr_index], rate)
    payloads = np.empty((size, k), dtype=np.uint8)
    noise = np.empty((size, cfg.N))
    for i in range(size):
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, snr_index, start + i)))
        payloads[i] = rng.integers(0, 2, size=k, dtype=np.uint8)
        noise[i] = rng.standard_normal(cfg.N)
    info = crc_encode(payloads, crc_spec) if crc_spec is not None else payloads
    x = code.encode(info)
    llrs = 2.0 * ((1.0 - 2.0 * x) + sigma * noise) / (sigma * sigma)
    return payloads, llrs


_WORKER = {}


def _init_worker(cfg):
    code, crc_spec = build_system(cfg)
    _WORKER.update(cfg=cfg, code=code, crc_spec=crc_spec,
                   adapters=make_decoders(cfg, code, crc_spec))


def _run_batch(job):
    snr_index, start, size = job
    cfg = _WORKER["cfg"]
    code = _WORKER["code"]
    crc_spec = _WORKER["crc_spec"]
    payloads, llrs = generate_frames(cfg, code, crc_spec, snr_index, start, size)
    out = {}
    for name, adapter in _WORKER["adapters"].items():
        t0 = time.perf_counter()
        decoded, iters = adapter(llrs)
        secs = time.perf_counter() - t0
        wrong = decoded != payloads
        out[name] = (int(wrong.any(axis=1).sum()), int(wrong.sum()),
                     int(np.sum(iters)), secs)
    return snr_index, start, size, out


class _Tally:
    def __init__(self, names):
        self.frames = 0
        self.blk = {n: 0 for n in names}
        self.bits = {n: 0 for n in names}
        self.iters = {n: 0 for n in names}
        self.secs = {n: 0.0 for n in names}

    def add(self, size, stats):
        self.frames += size
        for name, (blk, bits, iters, secs) in stats.items():
            self.blk[name] += blk
            self.bits[name] += bits
            self.iters[name] += iters
            self.secs[name] += secs

    def satisfied(self, cfg):
        if self.frames < cfg.min_frames:
            return False
        return all(v >= cfg.min_block_errors for v in self.blk.values())


def run_snr_point(cfg, snr_index, pool=None, progress=None):
    """Simulate one SNR point to its stop condition; returns a _Tally.

    Batches are fixed-size and consumed strictly in frame order; a wave
    of batches may be computed in parallel, but any batch after the one
    that satisfies the stop rule is discarded, so the tally never
    depends on the worker count.
    """
    tally = _Tally(cfg.decoders)
    start = 0
    wave = max(1, cfg.workers)
    while True:
        jobs = []
        for _ in range(wave):
            if start >= cfg.max_frames:
                break
            size = min(cfg.batch, cfg.max_frames - start)
            jobs.append((snr_index, start, size))
            start += size
        if not jobs:
            break
        if pool is None:
            results = [_run_batch(j) for j in jobs]
        else:
            results = pool.map(_run_batch, jobs)
        stop = False
        for _, _, size, stats in results:
            tally.add(size, stats)
            if tally.satisfied(cfg):
                stop = True
                break
        if progress:
            progress(snr_index, tally)
        if stop:
            break
    return tally


def rows_from_tally(cfg, snr_index, tally):
    rows = []
    for name in cfg.decoders:
        frames = tally.frames
        blk = tally.blk[name]
        bits = tally.bits[name]
        rows.append({
            "decoder": name,
            "snr_db": "%g" % cfg.snrs[snr_index],
            "frames": str(frames),
            "block_errors": str(blk),
            "bit_errors": str(bits),
            "bler": "%.8e" % (blk / frames),
            "ber": "%.8e" % (bits / (frames * cfg.k_payload)),
            "avg_iters": "%.4f" % (tally.iters[name] / frames),
            "seconds": "%.3f" % tally.secs[name],
        })
    return rows


def run(cfg, out_csv=None, progress=None):
    """Run all SNR points and return the result rows (list of dicts in
    CSV field order).  When out_csv is set, rows are appended to the file
    as each SNR point completes."""
    _init_worker(cfg)

    writer = None
    fh = None
    if out_csv is not None:
        fh = open(out_csv, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        fh.flush()

    pool = None
    try:
        if cfg.workers > 1:
            pool = multiprocessing.get_context("fork").Pool(
                cfg.workers, initializer=_init_worker, initargs=(cfg,))
        all_rows = []
        for snr_index in range(len(cfg.snrs)):
            tally = run_snr_point(cfg, snr_index, pool=pool, progress=progress)
            for row in rows_from_tally(cfg, snr_index, tally):
                all_rows.append(row)
                if writer is not None:
                    writer.writerow(row)
                    fh.flush()
        return all_rows
    finally:
        if pool is not None:
            pool.close()
            pool.join()
        if fh is not None:
            fh.close()


def rows_to_csv_text(rows):
    """Render rows exactly as run() writes them, for comparisons."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def frame_error_flags(cfg, snr_index=0, frames=1000):
    """Per-frame block error indicators for each configured decoder, on
    the exact frames a run() at this seed and SNR index would see.
    Returns dict name -> bool array plus the iteration counts."""
    code, crc_spec = build_system(cfg)
    adapters = make_decoders(cfg, code, crc_spec)
    flags = {name: np.zeros(frames, dtype=bool) for name in adapters}
    iters = {name: np.zeros(frames, dtype=np.int64) for name in adapters}
    for start in range(0, frames, cfg.batch):
        size = min(cfg.batch, frames - start)
        payloads, llrs = generate_frames(cfg, code, crc_spec, snr_index,
                                         start, size)
        for name, adapter in adapters.items():
            decoded, its = adapter(llrs)
            flags[name][start:start + size] = (decoded != payloads).any(axis=1)
            iters[name][start:start + size] = its
    return flags, iters


def _parse_value(name, text, kind):
    text = text.strip()
    if kind in (str, "str"):
        return None if text.lower() in ("", "none") else text
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError("config key %s wants a boolean, got %r"
                                 % (name, text))
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigurationError("config key %s: cannot parse %r"
                                 % (name, text)) from None
    if kind is tuple:
        return tuple(t.strip() for t in text.split(",") if t.strip())
    raise ConfigurationError("config key %s has unsupported type" % name)


def config_from_dict(d):
    """Build a SimConfig from string key/value pairs (CLI or file).

    Values are parsed by the field's declared type; the snrs entry takes
    a comma list of floats, decoders a comma list of names.
    """
    kwargs = {}
    valid = {f.name: f for f in fields(SimConfig)}
    for key, val in d.items():
        if key not in valid:
            raise ConfigurationError("unknown config key %r" % key)
        if isinstance(val, str):
            val = _parse_value(key, val, valid[key].type)
            if key == "snrs" and val is not None:
                val = tuple(float(v) for v in val)
        kwargs[key] = val
    return SimConfig(**kwargs)
