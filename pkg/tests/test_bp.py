import numpy as np
import pytest

from cabpl import LLR_MAX, PolarCode, awgn_llrs, boxplus, bp_decode, \
    crc_check, ebno_to_sigma, identity_perm, permute_bits, stage_bit_map
from cabpl.bp import MIN_SUM_SCALE, _run_kernel, validate_perm
from cabpl.crc import CrcSpec, bcjr_decode, crc_encode
from cabpl.errors import ConfigurationError
from refimpl import permuted_graph_bp


def test_boxplus_known_value():
    assert boxplus(1.0, 1.0) == pytest.approx(0.4337808304830271, abs=1e-15)


def test_boxplus_identities():
    rng = np.random.default_rng(0)
    x = rng.uniform(-10, 10, size=200)
    y = rng.uniform(-10, 10, size=200)
    np.testing.assert_allclose(boxplus(x, 0.0), 0.0, atol=1e-15)
    np.testing.assert_allclose(boxplus(x, y), boxplus(y, x), atol=1e-15)
    assert np.all(np.abs(boxplus(x, y))
                  <= np.minimum(np.abs(x), np.abs(y)) + 1e-12)
    assert np.all(np.sign(boxplus(x, y)) == np.sign(x) * np.sign(y))


def test_boxplus_saturates():
    assert boxplus(500.0, 300.0) == LLR_MAX
    assert boxplus(-500.0, 300.0) == -LLR_MAX
    assert np.isfinite(boxplus(np.inf, 3.0))


def test_boxplus_min_sum_rule():
    rng = np.random.default_rng(1)
    x = rng.uniform(-20, 20, size=100)
    y = rng.uniform(-20, 20, size=100)
    want = MIN_SUM_SCALE * np.sign(x) * np.sign(y) * np.minimum(np.abs(x),
                                                                np.abs(y))
    np.testing.assert_allclose(boxplus(x, y, min_sum=True), want, atol=1e-12)


def test_stage_maps_are_inverse_permutations():
    rng = np.random.default_rng(2)
    for n in (2, 3, 5):
        perm = tuple(int(v) for v in rng.permutation(n))
        m, minv = stage_bit_map(perm, n)
        np.testing.assert_array_equal(m[minv], np.arange(1 << n))
        np.testing.assert_array_equal(minv[m], np.arange(1 << n))
    m, minv = stage_bit_map(identity_perm(4), 4)
    np.testing.assert_array_equal(m, np.arange(16))


def test_permute_bits_round_trip():
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((6, 16))
    perm = (2, 0, 3, 1)
    there = permute_bits(perm, vals, "x")
    back = permute_bits(perm, there, "u")
    np.testing.assert_array_equal(back, vals)
    np.testing.assert_array_equal(permute_bits(identity_perm(4), vals, "x"),
                                  vals)
    with pytest.raises(ConfigurationError):
        permute_bits(perm, vals, "both")


def test_validate_perm_rejects_non_permutations():
    for bad in ((0, 0, 1), (0, 1, 3), (1, 2, 3)):
        with pytest.raises(ConfigurationError):
            validate_perm(bad, 3)


def test_noiseless_frame_decodes_in_one_iteration():
    code = PolarCode(32, 16)
    rng = np.random.default_rng(4)
    info = rng.integers(0, 2, size=16, dtype=np.uint8)
    x = code.encode(info)
    llrs = 20.0 * (1.0 - 2.0 * x.astype(np.float64))
    res = bp_decode(llrs, code)
    assert res.converged
    assert res.iterations_used == 1
    np.testing.assert_array_equal(res.x_hat, x)
    np.testing.assert_array_equal(res.u_hat[code.info_set], info)
    assert not res.u_hat[code.frozen].any()


def test_decoding_survives_moderate_noise():
    code = PolarCode(128, 64)
    sigma = ebno_to_sigma(6.0, 0.5)
    rng = np.random.default_rng(5)
    errors = 0
    for _ in range(200):
        info = rng.integers(0, 2, size=64, dtype=np.uint8)
        x = code.encode(info)
        llrs = awgn_llrs(x, sigma, rng)
        res = bp_decode(llrs, code, max_iters=60)
        errors += not np.array_equal(res.u_hat[code.info_set], info)
    assert errors <= 2


def test_converged_means_reencoding_consistency():
    code = PolarCode(64, 32)
    sigma = ebno_to_sigma(2.0, 0.5)
    rng = np.random.default_rng(6)
    saw_converged = saw_stuck = False
    for _ in range(60):
        info = rng.integers(0, 2, size=32, dtype=np.uint8)
        llrs = awgn_llrs(code.encode(info), sigma, rng)
        res = bp_decode(llrs, code, max_iters=30)
        if res.converged:
            saw_converged = True
            assert code.gmatrix_check(res.u_hat, res.x_hat)
            assert res.iterations_used <= 30
        else:
            saw_stuck = True
            assert res.iterations_used == 30
    assert saw_converged and saw_stuck


def test_crc_stopping_adds_the_outer_check():
    crc = CrcSpec.from_string("2,1,0", n_crc=16)
    code = PolarCode(32, 16)
    sigma = ebno_to_sigma(2.5, 14.0 / 32.0)
    rng = np.random.default_rng(7)
    for _ in range(40):
        payload = rng.integers(0, 2, size=14, dtype=np.uint8)
        x = code.encode(crc_encode(payload, crc))
        llrs = awgn_llrs(x, sigma, rng)
        res = bp_decode(llrs, code, max_iters=30, stopping="crc",
                        crc_spec=crc)
        if res.converged:
            assert code.gmatrix_check(res.u_hat, res.x_hat)
            assert crc_check(res.u_hat[code.info_set], crc)


def test_unknown_stopping_rule_raises():
    code = PolarCode(8, 4)
    with pytest.raises(ConfigurationError):
        bp_decode(np.zeros(8), code, stopping="never")
    with pytest.raises(ConfigurationError):
        bp_decode(np.zeros(8), code, stopping="crc")  # no crc_spec
    with pytest.raises(ConfigurationError):
        bp_decode(np.zeros(4), code)  # wrong length


def test_huge_llrs_stay_finite():
    code = PolarCode(16, 8)
    llrs = np.full(16, 1e9)
    res = bp_decode(llrs, code, max_iters=5)
    assert np.all(np.isfinite(res.left_llrs))
    assert np.all(np.abs(res.left_llrs) <= 2 * LLR_MAX)


def test_permuted_decode_equals_explicit_graph():
    """The bit-relabeling trick must reproduce a decoder that builds the
    permuted graph for real, message for message."""
    rng = np.random.default_rng(8)
    for N, k in ((8, 4), (16, 8), (32, 20)):
        code = PolarCode(N, k)
        n = code.n
        sigma = ebno_to_sigma(2.0, k / N)
        perms = [identity_perm(n), tuple(reversed(range(n)))]
        perms += [tuple(int(v) for v in rng.permutation(n)) for _ in range(2)]
        info = rng.integers(0, 2, size=(30, k), dtype=np.uint8)
        frames = awgn_llrs(code.encode(info), sigma, rng)
        for perm in perms:
            ru, rx, rconv, riters, rleft = permuted_graph_bp(
                frames, code.frozen, perm, max_iters=12)
            for i in range(frames.shape[0]):
                res = bp_decode(frames[i], code, perm=perm, max_iters=12)
                np.testing.assert_array_equal(res.u_hat, ru[i])
                np.testing.assert_array_equal(res.x_hat, rx[i])
                assert res.converged == rconv[i]
                assert res.iterations_used == riters[i]
                np.testing.assert_allclose(res.left_llrs, rleft[i],
                                           atol=1e-12)


def test_permuted_decode_with_crc_hook_equals_explicit_graph():
    """Same equivalence with the soft CRC feedback active: the hook sees
    the information positions in outer order on both sides."""
    crc = CrcSpec.from_string("2,1,0", n_crc=10)
    code = PolarCode(16, 10)
    rng = np.random.default_rng(9)
    sigma = ebno_to_sigma(2.0, 8.0 / 16.0)
    payload = rng.integers(0, 2, size=(20, 8), dtype=np.uint8)
    frames = awgn_llrs(code.encode(crc_encode(payload, crc)), sigma, rng)
    perm = (3, 1, 0, 2)
    hook = lambda llrs: bcjr_decode(llrs, crc)

    # reference: explicit graph plus the same hook spliced into the sweep
    def reference(rows):
        B, N = rows.shape
        n = 4
        idx = np.arange(N)
        pairs = []
        for s in range(n):
            axis = perm[s]
            top = idx[(idx >> axis) & 1 == 0]
            pairs.append((top, top + (1 << axis)))
        L = np.zeros((n + 1, B, N))
        R = np.zeros((n + 1, B, N))
        R[0][:, code.frozen] = LLR_MAX
        L[n] = np.clip(rows, -LLR_MAX, LLR_MAX)
        for _ in range(8):
            for s in range(n - 1, -1, -1):
                top, bot = pairs[s]
                lt, lb = L[s + 1][:, top], L[s + 1][:, bot]
                rt, rb = R[s][:, top], R[s][:, bot]
                L[s][:, top] = boxplus(lt, lb + rb)
                L[s][:, bot] = np.clip(boxplus(rt, lt) + lb,
                                       -LLR_MAX, LLR_MAX)
            ext = np.clip(hook(L[0][:, code.info_set]), -LLR_MAX, LLR_MAX)
            R[0][:, code.info_set] = ext
            for s in range(n):
                top, bot = pairs[s]
                lt, lb = L[s + 1][:, top], L[s + 1][:, bot]
                rt, rb = R[s][:, top], R[s][:, bot]
                R[s + 1][:, top] = boxplus(rt, lb + rb)
                R[s + 1][:, bot] = np.clip(boxplus(rt, lt) + rb,
                                           -LLR_MAX, LLR_MAX)
        return L[0] + R[0]

    want_left = reference(frames)
    for i in range(frames.shape[0]):
        res = bp_decode(frames[i], code, perm=perm, max_iters=8,
                        stopping="none", crc_spec=crc, crc_hook=hook)
        np.testing.assert_allclose(res.left_llrs, want_left[i], atol=1e-12)


def test_kernel_results_do_not_depend_on_batch_composition():
    code = PolarCode(32, 16)
    rng = np.random.default_rng(10)
    sigma = ebno_to_sigma(2.0, 0.5)
    info = rng.integers(0, 2, size=(24, 16), dtype=np.uint8)
    frames = awgn_llrs(code.encode(info), sigma, rng)
    frozen = np.broadcast_to(code.frozen, frames.shape).copy()
    u_all, x_all, conv_all, it_all, left_all = _run_kernel(
        frames, frozen, 25, stopping="gmatrix")
    u_one = np.empty_like(u_all)
    for i in range(frames.shape[0]):
        u_one[i] = _run_kernel(frames[i: i + 1], frozen[i: i + 1], 25,
                               stopping="gmatrix")[0][0]
    np.testing.assert_array_equal(u_all, u_one)


def test_dump_file_holds_all_stages(tmp_path):
    code = PolarCode(8, 4)
    rng = np.random.default_rng(11)
    llrs = rng.standard_normal(8) * 4
    path = tmp_path / "messages.txt"
    bp_decode(llrs, code, max_iters=3, dump_file=str(path))
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if not ln.startswith("#")]
    assert len(comments) == 2
    assert len(data) == 2 * (code.n + 1)
    widths = {len(ln.split("\t")) for ln in data}
    assert widths == {8}
