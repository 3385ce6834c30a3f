"""Command line front end: Monte-Carlo runs, encoding utilities, and the
offline stage-order selection workflow."""

import argparse
import os
import sys

import numpy as np

from . import permopt, sim
from .bp import bp_decode
from .crc import crc_encode
from .errors import CapabilityError, ConfigurationError
from .listdec import (PermSet, bpl_decode, ca_bpl_decode, ca_scl_decode,
                      osd_bound, outer_generator, sc_decode)


def _add_code_args(p, concrete_defaults=True):
    d = (lambda v: v) if concrete_defaults else (lambda v: None)
    p.add_argument("--n", type=int, default=d(128), dest="N",
                   help="block length (power of two, default 128)")
    p.add_argument("--k", type=int, default=d(64), dest="k_payload",
                   help="payload bits per block (default 64)")
    p.add_argument("--crc", default=None,
                   help="CRC polynomial, e.g. '6,5,0' or '0x61' (omit for none)")
    p.add_argument("--construction", default=d("5g"),
                   choices=["5g", "bhattacharyya"])
    p.add_argument("--design-eps", type=float, default=d(0.5))


def _add_sim_args(p, many_decoders):
    # Defaults stay None here so a --config file can supply any of these;
    # an explicit flag still wins, and SimConfig fills what remains.
    _add_code_args(p, concrete_defaults=False)
    if many_decoders:
        p.add_argument("--decoders", required=True,
                       help="comma list, e.g. bp,bpl,ca-bpl-bcjr")
    else:
        p.add_argument("--decoder", required=True, choices=sim.DECODER_NAMES)
    p.add_argument("--snr", default=None,
                   help="comma list of Eb/N0 points, or start:stop:step "
                        "(default 4.0)")
    p.add_argument("--list-size", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--min-sum", action="store_true", default=None)
    p.add_argument("--spa-inner-iters", type=int, default=None)
    p.add_argument("--osd-order", type=int, default=None)
    p.add_argument("--perm-file", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--min-block-errors", type=int, default=None)
    p.add_argument("--min-frames", type=int, default=None)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="key=value file; explicit flags override it")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--no-plot", action="store_true",
                   help="skip the PNG next to the CSV")


def _parse_snrs(text):
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError("SNR range wants start:stop:step")
        start, stop, step = (float(v) for v in parts)
        if step <= 0:
            raise ConfigurationError("SNR step must be positive")
        pts = []
        v = start
        while v <= stop + 1e-9:
            pts.append(round(v, 9))
            v += step
        return tuple(pts)
    return tuple(float(t) for t in text.split(",") if t.strip())


def _read_config_file(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError("config line %r is not key=value" % line)
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _build_config(args, decoders):
    base = {}
    if args.config:
        base = _read_config_file(args.config)
    override = dict(
        N=args.N, k_payload=args.k_payload, crc=args.crc,
        construction=args.construction, design_eps=args.design_eps,
        snrs=_parse_snrs(args.snr) if args.snr else None,
        decoders=tuple(decoders),
        list_size=args.list_size, max_iters=args.iters,
        min_sum=args.min_sum, spa_inner_iters=args.spa_inner_iters,
        osd_order=args.osd_order, perm_file=args.perm_file, seed=args.seed,
        batch=args.batch, min_block_errors=args.min_block_errors,
        min_frames=args.min_frames, max_frames=args.max_frames,
        workers=args.workers)
    base.update({k: v for k, v in override.items() if v is not None})
    return sim.config_from_dict(base)


def _cmd_simulate(args):
    cfg = _build_config(args, [args.decoder])
    return _run_and_report(cfg, args)


def _cmd_compare(args):
    names = [t.strip() for t in args.decoders.split(",") if t.strip()]
    cfg = _build_config(args, names)
    return _run_and_report(cfg, args)


def _run_and_report(cfg, args):
    def progress(snr_index, tally):
        worst = max(cfg.decoders, key=lambda n: -tally.blk[n])
        print("  %.2f dB: %d frames, fewest errors %d (%s)"
              % (cfg.snrs[snr_index], tally.frames, tally.blk[worst], worst),
              file=sys.stderr)

    rows = sim.run(cfg, out_csv=args.out, progress=progress)
    print("wrote %s (%d rows)" % (args.out, len(rows)))
    if not args.no_plot:
        from .plotting import plot_rows
        png = os.path.splitext(args.out)[0] + ".png"
        plot_rows(rows, png)
        print("wrote %s" % png)
    return 0


def _bits_arg(text, length, seed):
    if text == "random":
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2, size=length, dtype=np.uint8)
    bits = np.array([int(c) for c in text.strip()], dtype=np.uint8)
    if bits.size != length or np.any(bits > 1):
        raise ConfigurationError("expected %d bits of 0/1" % length)
    return bits


def _cmd_encode(args):
    cfg = sim.config_from_dict(dict(N=args.N, k_payload=args.k_payload,
                                    crc=args.crc,
                                    construction=args.construction,
                                    design_eps=args.design_eps))
    code, crc_spec = sim.build_system(cfg)
    payload = _bits_arg(args.payload, cfg.k_payload, args.seed)
    info = crc_encode(payload, crc_spec) if crc_spec else payload
    x = code.encode(info)
    print("payload  %s" % "".join(map(str, payload)))
    print("infoword %s" % "".join(map(str, info)))
    print("codeword %s" % "".join(map(str, x)))
    return 0


def _cmd_decode_one(args):
    cfg = sim.config_from_dict(dict(
        N=args.N, k_payload=args.k_payload, crc=args.crc,
        construction=args.construction, design_eps=args.design_eps,
        decoders=(args.decoder,), list_size=args.list_size,
        max_iters=args.iters, min_sum=args.min_sum,
        spa_inner_iters=args.spa_inner_iters,
        osd_order=args.osd_order, perm_file=args.perm_file, seed=args.seed))
    code, crc_spec = sim.build_system(cfg)
    if args.llrs is None and args.llr_file is None:
        raise ConfigurationError("decode-one needs --llrs or --llr-file")
    if args.llr_file:
        with open(args.llr_file) as fh:
            llrs = np.array([float(t) for t in fh.read().split()])
    else:
        llrs = np.array([float(t) for t in args.llrs.split(",")])
    if llrs.shape != (cfg.N,):
        raise ConfigurationError("expected %d LLRs" % cfg.N)

    name = args.decoder
    if name in ("bpl", "ca-bpl-bcjr", "ca-bpl-spa"):
        perm_set = sim.resolve_perm_set(cfg, code)
    if name == "bp":
        res = bp_decode(llrs, code, max_iters=cfg.max_iters,
                        min_sum=cfg.min_sum)
    elif name == "bpl":
        res = bpl_decode(llrs, code, perm_set, max_iters=cfg.max_iters,
                         crc_spec=crc_spec, min_sum=cfg.min_sum).result
    elif name in ("ca-bpl-bcjr", "ca-bpl-spa"):
        if crc_spec is None:
            raise ConfigurationError("decoder %s needs --crc" % name)
        res = ca_bpl_decode(llrs, code, perm_set, crc_spec,
                            max_iters=cfg.max_iters, min_sum=cfg.min_sum,
                            crc_hook="bcjr" if name.endswith("bcjr") else "spa",
                            spa_inner_iters=cfg.spa_inner_iters).result
    elif name == "sc":
        res = sc_decode(llrs, code)
    elif name == "ca-scl":
        res = ca_scl_decode(llrs, code, cfg.list_size, crc_spec)
    else:
        gen = outer_generator(code, crc_spec) if crc_spec else \
            code.encode(np.eye(code.k_total, dtype=np.uint8))
        res = osd_bound(llrs, gen, cfg.osd_order)

    k = crc_spec.k if crc_spec else code.k_total
    payload = res.u_hat[code.info_set[:k]]
    print("payload   %s" % "".join(map(str, payload)))
    print("codeword  %s" % "".join(map(str, res.x_hat)))
    print("converged %s after %d iterations"
          % (res.converged, res.iterations_used))
    return 0


def _cmd_collect_failures(args):
    cfg = sim.config_from_dict(dict(N=args.N, k_payload=args.k_payload,
                                    crc=args.crc,
                                    construction=args.construction,
                                    design_eps=args.design_eps))
    code, crc_spec = sim.build_system(cfg)
    ds = permopt.collect_failures(
        code, args.snr, args.count, max_iters=args.iters, seed=args.seed,
        crc_spec=crc_spec, max_frames=args.max_frames)
    ds.save(args.out)
    print("wrote %s (%d failures at %.2f dB)" % (args.out, ds.count, args.snr))
    return 0


def _load_pool(args, n):
    if args.pool == "all":
        return PermSet.all_orders(n)
    if args.pool.startswith("cyclic:"):
        return PermSet.cyclic_shifts(n, int(args.pool.split(":", 1)[1]))
    return PermSet.from_file(args.pool)


def _cmd_eval_perms(args):
    cfg = sim.config_from_dict(dict(N=args.N, k_payload=args.k_payload,
                                    crc=args.crc,
                                    construction=args.construction,
                                    design_eps=args.design_eps))
    code, _ = sim.build_system(cfg)
    ds = permopt.FailureDataset.load(args.dataset)
    pool = _load_pool(args, code.n)
    mat = permopt.evaluate_pool(ds, pool, code, max_iters=args.iters)
    mat.save(args.out)
    fixed = mat.success.any(axis=0).mean()
    print("wrote %s (%d x %d; %.1f%% of frames fixed by someone)"
          % (args.out, mat.shape[0], mat.shape[1], 100 * fixed))
    return 0


def _cmd_select_perms(args):
    mat = permopt.ConvergenceMatrix.load(args.matrix)
    n = None
    if args.pool == "all" or args.pool.startswith("cyclic:"):
        if args.N is None:
            raise ConfigurationError(
                "pool '%s' needs --n to size the graph" % args.pool)
        n = int(args.N).bit_length() - 1
        if args.N < 2 or (1 << n) != args.N:
            raise ConfigurationError(
                "N must be a power of two, got %r" % (args.N,))
    pool = _load_pool(args, n)
    if permopt.pool_hash(pool) != mat.pool_hash:
        raise ConfigurationError(
            "pool file does not match the matrix (hash mismatch)")
    try:
        default_index = pool.perms.index(tuple(range(pool.n)))
        exclude = (default_index,)
    except ValueError:
        exclude = ()
    params = permopt.GaParams(population=args.population,
                              generations=args.generations,
                              tournament=args.tournament,
                              mutation_rate=args.mutation_rate,
                              elites=args.elites)
    res = permopt.genetic_select(mat, args.list_size - 1,
                                 train_fraction=args.train_fraction,
                                 params=params, seed=args.seed,
                                 exclude=exclude)
    chosen = permopt.selected_perm_set(pool, res.indices)
    chosen.save(args.out)
    print("wrote %s" % args.out)
    print("train joint failure %.4f, validation %.4f"
          % (res.train_failure, res.val_failure))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cabpl",
        description="CRC-aided belief-propagation list decoding of polar "
                    "codes: simulation, utilities and stage-order selection.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="BLER/BER curve for one decoder")
    _add_sim_args(p, many_decoders=False)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("compare", help="paired curves for several decoders")
    _add_sim_args(p, many_decoders=True)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("encode", help="encode one payload")
    _add_code_args(p)
    p.add_argument("--payload", default="random",
                   help="bit string, or 'random' with --seed")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("decode-one", help="decode one LLR vector")
    _add_code_args(p)
    p.add_argument("--decoder", required=True, choices=sim.DECODER_NAMES)
    p.add_argument("--llrs", default=None,
                   help="comma-separated LLRs; write --llrs=-4.1,... when "
                        "the first value is negative")
    p.add_argument("--llr-file", default=None, help="whitespace-separated file")
    p.add_argument("--list-size", type=int, default=8)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--min-sum", action="store_true")
    p.add_argument("--spa-inner-iters", type=int, default=1)
    p.add_argument("--osd-order", type=int, default=2)
    p.add_argument("--perm-file", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_decode_one)

    p = sub.add_parser("collect-failures",
                       help="gather frames the default graph cannot decode")
    _add_code_args(p)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-frames", type=int, default=2_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_collect_failures)

    p = sub.add_parser("eval-perms",
                       help="decode a failure dataset with a whole pool")
    _add_code_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", required=True,
                   help="perm file, 'all', or 'cyclic:SIZE'")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_eval_perms)

    p = sub.add_parser("select-perms",
                       help="genetic search over a convergence matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--pool", required=True,
                   help="perm file, 'all', or 'cyclic:SIZE'")
    p.add_argument("--n", type=int, default=None, dest="N",
                   help="block length, needed for 'all' and 'cyclic:SIZE'")
    p.add_argument("--list-size", type=int, required=True,
                   help="total decoders incl. the default graph")
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--tournament", type=int, default=4)
    p.add_argument("--mutation-rate", type=float, default=0.1)
    p.add_argument("--elites", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_select_perms)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 2
    except CapabilityError as exc:
        print("capability error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
