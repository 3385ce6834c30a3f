import numpy as np
import pytest

from cabpl import PolarCode, SimConfig, awgn_llrs, crc_encode, \
    ebno_to_sigma, make_crc_spec, run
from cabpl.errors import ConfigurationError
from cabpl.sim import CSV_FIELDS, build_system, config_from_dict, \
    frame_error_flags, generate_frames, make_decoders, resolve_perm_set, \
    rows_to_csv_text


def test_sigma_matches_the_ebno_definition():
    # Eb/N0 = 1 / (2 R sigma^2) for unit-energy BPSK
    got = ebno_to_sigma(4.0, 0.5) ** 2
    assert got == pytest.approx(10.0 ** -0.4, rel=1e-12)
    assert ebno_to_sigma(0.0, 0.5) == pytest.approx(1.0)
    # halving the rate buys the same sigma 3.01 dB earlier
    assert ebno_to_sigma(3.0102999566, 0.25) == pytest.approx(
        ebno_to_sigma(0.0, 0.5), rel=1e-9)


def test_channel_llr_statistics():
    sigma = 0.8
    rng = np.random.default_rng(0)
    bits = np.zeros(1_000_000, dtype=np.uint8)
    llrs = awgn_llrs(bits, sigma, rng)
    assert llrs.mean() == pytest.approx(2.0 / sigma ** 2, rel=5e-3)
    assert llrs.std() == pytest.approx(2.0 / sigma, rel=5e-3)


def test_make_crc_spec_appends_parity_to_the_payload():
    spec = make_crc_spec("6,5,0", 64)
    assert spec.r == 6
    assert spec.k == 64
    assert spec.n_crc == 70
    assert make_crc_spec("0x61", 64).g == spec.g


def test_build_system_sizes():
    cfg = SimConfig(N=64, k_payload=24, crc="6,5,0")
    code, crc_spec = build_system(cfg)
    assert code.N == 64
    assert code.k_total == 30
    assert crc_spec.n_crc == 30
    code2, none_spec = build_system(SimConfig(N=64, k_payload=24))
    assert none_spec is None
    assert code2.k_total == 24


def test_frames_do_not_depend_on_batch_splits():
    cfg = SimConfig(N=16, k_payload=8, snrs=(1.0, 3.0), seed=9)
    code, crc_spec = build_system(cfg)
    pay_all, llr_all = generate_frames(cfg, code, crc_spec, 0, 0, 100)
    pay_a, llr_a = generate_frames(cfg, code, crc_spec, 0, 0, 37)
    pay_b, llr_b = generate_frames(cfg, code, crc_spec, 0, 37, 63)
    np.testing.assert_array_equal(pay_all, np.vstack([pay_a, pay_b]))
    np.testing.assert_array_equal(llr_all, np.vstack([llr_a, llr_b]))

    # a different SNR index reuses neither payloads nor noise
    pay_snr1, llr_snr1 = generate_frames(cfg, code, crc_spec, 1, 0, 100)
    assert not np.array_equal(pay_snr1, pay_all)
    assert not np.array_equal(np.sign(llr_snr1), np.sign(llr_all))

    # and a different master seed changes everything too
    cfg2 = SimConfig(N=16, k_payload=8, snrs=(1.0, 3.0), seed=10)
    pay_c, _ = generate_frames(cfg2, code, crc_spec, 0, 0, 100)
    assert not np.array_equal(pay_c, pay_all)


def test_resolve_perm_set_paths(tmp_path):
    cfg = SimConfig(N=16, k_payload=8, list_size=4)
    code, _ = build_system(cfg)
    ps = resolve_perm_set(cfg, code)
    assert len(ps) == 4
    assert ps[1] == (1, 2, 3, 0)

    big = SimConfig(N=16, k_payload=8, list_size=10)
    ps_big = resolve_perm_set(big, code)
    assert len(ps_big) == 10
    assert ps_big[0] == (0, 1, 2, 3)
    assert len(set(ps_big.perms)) == 10

    path = tmp_path / "orders.txt"
    path.write_text("3,2,1,0\n0,1,2,3\n")
    cfg_file = SimConfig(N=16, k_payload=8, perm_file=str(path))
    ps_file = resolve_perm_set(cfg_file, code)
    assert ps_file.perms == ((3, 2, 1, 0), (0, 1, 2, 3))

    path.write_text("2,1,0\n")
    with pytest.raises(ConfigurationError):
        resolve_perm_set(SimConfig(N=16, k_payload=8, perm_file=str(path)),
                         code)


def test_decoder_adapters_recover_clean_payloads():
    cfg = SimConfig(N=32, k_payload=10, crc="2,1,0", list_size=4,
                    decoders=("bp", "bpl", "ca-bpl-bcjr", "ca-bpl-spa",
                              "sc", "ca-scl", "osd"),
                    osd_order=1)
    code, crc_spec = build_system(cfg)
    adapters = make_decoders(cfg, code, crc_spec)
    assert set(adapters) == set(cfg.decoders)
    payloads, _ = generate_frames(cfg, code, crc_spec, 0, 0, 6)
    x = code.encode(crc_encode(payloads, crc_spec))
    llrs = 20.0 * (1.0 - 2.0 * x.astype(np.float64))
    for name, adapter in adapters.items():
        decoded, iters = adapter(llrs)
        assert decoded.shape == payloads.shape
        assert iters.shape == (6,)
        np.testing.assert_array_equal(decoded, payloads)


def test_crc_decoders_refuse_to_run_without_a_crc():
    cfg = SimConfig(N=32, k_payload=16, decoders=("ca-bpl-bcjr",))
    code, crc_spec = build_system(cfg)
    with pytest.raises(ConfigurationError):
        make_decoders(cfg, code, crc_spec)


def tiny_run_config(**over):
    base = dict(N=32, k_payload=16, snrs=(2.0,), decoders=("bp", "bpl"),
                list_size=4, max_iters=40, seed=11, batch=64,
                min_block_errors=8, max_frames=2048)
    base.update(over)
    return SimConfig(**base)


def test_rows_do_not_depend_on_worker_count(tmp_path):
    cfg1 = tiny_run_config(workers=1)
    cfg3 = tiny_run_config(workers=3)
    csv1 = tmp_path / "w1.csv"
    csv3 = tmp_path / "w3.csv"
    rows1 = run(cfg1, out_csv=str(csv1))
    rows3 = run(cfg3, out_csv=str(csv3))

    def strip_seconds(rows):
        return [{k: v for k, v in r.items() if k != "seconds"} for r in rows]

    assert strip_seconds(rows1) == strip_seconds(rows3)
    assert csv1.read_bytes().decode() == rows_to_csv_text(rows1)

    def strip_csv(text):
        lines = text.strip().split("\n")
        return [",".join(ln.split(",")[:-1]) for ln in lines]

    assert strip_csv(csv1.read_text()) == strip_csv(csv3.read_text())


def test_non_list_decoders_run_without_a_stage_order_set():
    # list_size 8 exceeds 3! = 6 stage orders at N=8, which must only
    # matter when a list decoder is actually requested
    cfg = tiny_run_config(N=8, k_payload=4, decoders=("bp", "sc"),
                          list_size=8, max_iters=20, batch=32,
                          min_block_errors=2, max_frames=256)
    rows = run(cfg)
    assert sorted(r["decoder"] for r in rows) == ["bp", "sc"]


def test_stop_rule_lands_on_batch_boundaries():
    rows = run(tiny_run_config())
    frames = int(rows[0]["frames"])
    assert frames % 64 == 0
    assert 0 < frames <= 2048
    for row in rows:
        assert int(row["frames"]) == frames
        assert int(row["block_errors"]) >= 8 or frames == 2048


def test_row_arithmetic_is_consistent():
    rows = run(tiny_run_config())
    for row in rows:
        frames = int(row["frames"])
        blk = int(row["block_errors"])
        bits = int(row["bit_errors"])
        assert float(row["bler"]) == pytest.approx(blk / frames, rel=1e-6)
        assert float(row["ber"]) == pytest.approx(bits / (frames * 16),
                                                  rel=1e-6)
        assert float(row["ber"]) <= float(row["bler"])
        assert bits <= blk * 16
        assert float(row["avg_iters"]) > 0


def test_min_frames_keeps_the_run_going():
    rows = run(tiny_run_config(min_block_errors=0, min_frames=256,
                               max_frames=512))
    assert int(rows[0]["frames"]) == 256


def test_row_counts_match_the_flag_helper():
    cfg = tiny_run_config(min_block_errors=0, min_frames=256, max_frames=256)
    rows = run(cfg)
    flags, iters = frame_error_flags(cfg, snr_index=0, frames=256)
    by_name = {r["decoder"]: r for r in rows}
    for name in cfg.decoders:
        assert int(by_name[name]["block_errors"]) == int(flags[name].sum())
        assert float(by_name[name]["avg_iters"]) == pytest.approx(
            iters[name].mean(), abs=1e-4)


def test_csv_text_shape():
    rows = run(tiny_run_config(min_block_errors=0, min_frames=64,
                               max_frames=64))
    text = rows_to_csv_text(rows)
    lines = text.strip().split("\n")
    assert lines[0].rstrip("\r") == ",".join(CSV_FIELDS)
    assert len(lines) == 1 + len(rows)
    assert lines[1].startswith("bp,2,64,")


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(snrs=())
    with pytest.raises(ConfigurationError):
        SimConfig(snrs=(2.0, 1.0))
    with pytest.raises(ConfigurationError):
        SimConfig(snrs=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        SimConfig(decoders=("warp",))
    with pytest.raises(ConfigurationError):
        SimConfig(batch=0)
    with pytest.raises(ConfigurationError):
        SimConfig(min_block_errors=-1)


def test_config_from_dict_parsing():
    cfg = config_from_dict({
        "N": "64", "k_payload": "30", "crc": "6,5,0",
        "snrs": "1.0,2.0,3.5", "decoders": "bp,bpl", "min_sum": "true",
        "design_eps": "0.4", "workers": "2",
    })
    assert cfg.N == 64
    assert cfg.k_payload == 30
    assert cfg.snrs == (1.0, 2.0, 3.5)
    assert cfg.decoders == ("bp", "bpl")
    assert cfg.min_sum is True
    assert cfg.design_eps == pytest.approx(0.4)
    assert cfg.workers == 2
    assert config_from_dict({"crc": "none"}).crc is None

    with pytest.raises(ConfigurationError):
        config_from_dict({"no_such_key": "1"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"min_sum": "around"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"N": "sixty-four"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"snrs": "3.0,1.0"})
