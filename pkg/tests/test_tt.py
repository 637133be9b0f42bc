import numpy as np
import pytest

from conftest import crandn, random_blocktt
from ttqst import pauli
from ttqst.tt import (BlockTT, DensifyLimitError, TTMatrix, apply_operator,
                      densify, factor_matrix, frob_norm, ginibre_blocktt, inner,
                      left_orthogonalize, load_tt, save_blocktt, save_ttmatrix,
                      shift_block, tt_add, tt_scale, tt_svd, ttm_matrix)


def dense_rel_err(a, b):
    x, y = densify(a), densify(b)
    return np.linalg.norm(x - y) / max(np.linalg.norm(y), 1e-300)


def entry_product(a, idx):
    """Per-index core-slice product, the densify oracle."""
    vec = np.ones(1, dtype=np.complex128)
    ptr = 0
    for i, core in enumerate(a.cores):
        if i == a.block:
            sl = core[:, idx[ptr], idx[ptr + 1], :]
            ptr += 2
        else:
            sl = core[:, idx[ptr], :]
            ptr += 1
        vec = vec @ sl
    return vec[0]


def assert_left_orthogonal(a, tol=1e-12):
    for core in a.cores[:-1]:
        mat = core.reshape(-1, core.shape[-1])
        gram = mat.conj().T @ mat
        assert np.linalg.norm(gram - np.eye(mat.shape[1])) < tol


class TestConstruction:
    def test_bond_mismatch_rejected(self, rng):
        cores = [crandn((1, 2, 2), rng), crandn((3, 2, 2, 1), rng)]
        with pytest.raises(ValueError, match="bond"):
            BlockTT(cores)

    def test_exactly_one_block_core(self, rng):
        with pytest.raises(ValueError):
            BlockTT([crandn((1, 2, 2), rng), crandn((2, 2, 1), rng)])
        with pytest.raises(ValueError):
            BlockTT([crandn((1, 2, 2, 2), rng), crandn((2, 2, 2, 1), rng)])

    def test_boundary_ranks(self, rng):
        with pytest.raises(ValueError, match="boundary"):
            BlockTT([crandn((2, 2, 2, 2), rng), crandn((2, 2, 2), rng)])


class TestDensify:
    def test_all_ones_cores(self):
        cores = [np.ones((1, 2, 1)), np.ones((1, 2, 1, 1))]
        assert np.array_equal(densify(BlockTT(cores)), np.ones((2, 2, 1)))

    def test_zz_ttmatrix(self):
        e = pauli.pauli_ttm(pauli.PauliString("ZZ"))
        assert np.array_equal(ttm_matrix(e), np.diag([1, -1, -1, 1]).astype(complex))

    def test_entries_match_core_slice_products(self, rng):
        a = random_blocktt(3, 2, [1, 2, 3, 1], 1, rng)
        x = densify(a)
        for _ in range(50):
            idx = tuple(rng.integers(0, d) for d in x.shape)
            assert abs(x[idx] - entry_product(a, idx)) < 1e-12

    def test_limit_enforced(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        with pytest.raises(DensifyLimitError):
            densify(a, limit=4)


class TestLeftOrthogonalize:
    def test_product_state_unit_fibers(self, rng):
        a = random_blocktt(4, 2, 1, 2, rng)
        b = left_orthogonalize(a)
        assert dense_rel_err(b, a) < 1e-12
        for core in b.cores[:-1]:
            assert abs(np.linalg.norm(core) - 1.0) < 1e-12

    def test_idempotent(self, rng):
        a = left_orthogonalize(random_blocktt(4, 2, 2, 2, rng))
        b = left_orthogonalize(a)
        assert dense_rel_err(b, a) < 1e-12

    def test_preserves_dense_form(self, rng):
        a = random_blocktt(4, 3, [1, 2, 2, 2, 1], 2, rng)
        b = left_orthogonalize(a)
        assert b.left_orthogonal
        assert dense_rel_err(b, a) < 1e-12
        assert_left_orthogonal(b)


class TestTTSVD:
    def test_exact_rank_round_trip(self, rng):
        a = random_blocktt(3, 2, [1, 2, 2, 1], 1, rng)
        b, err = tt_svd(a, max_ranks=(1, 2, 2, 1), tol=0.0)
        assert dense_rel_err(b, a) < 1e-12
        assert err == 0.0
        assert_left_orthogonal(b)

    def test_outer_product_has_unit_ranks(self, rng):
        vecs = [crandn((2,), rng) for _ in range(4)]
        vecs = [v / np.linalg.norm(v) for v in vecs]
        x = vecs[0]
        for v in vecs[1:]:
            x = np.multiply.outer(x, v)
        x = x[:, :, :, np.newaxis, :]  # block axis K=1 at site 2
        b, _ = tt_svd(np.ascontiguousarray(x), block=2)
        assert b.ranks == (1, 1, 1, 1, 1)

    def test_truncation_error_matches_sequential_dense_oracle(self, rng):
        x = crandn((2, 2, 2, 2), rng)  # N=3 sites, block axis K=2 at site 1
        b, err = tt_svd(x, max_ranks=(1, 1, 1, 1), tol=0.0, block=1)

        # independent oracle: the same sequential truncation on dense unfoldings
        merged_dims = (2, 2 * 2, 2)
        mat = x.reshape(1, -1)
        rank, discarded = 1, 0.0
        for d in merged_dims[:-1]:
            mat = mat.reshape(rank * d, -1)
            _, s, vh = np.linalg.svd(mat, full_matrices=False)
            discarded += float(np.sum(s[1:] ** 2))
            mat = s[:1, np.newaxis] * vh[:1]
            rank = 1
        expected = float(np.sqrt(discarded))

        assert abs(err - expected) < 1e-12
        assert np.linalg.norm(densify(b) - x) <= err * (1 + 1e-10)

    def test_round_trip_through_dense(self, rng):
        for shape in ([1, 2, 4, 2, 1], [1, 2, 2, 2, 1], [1, 1, 1, 1, 1]):
            a = random_blocktt(4, 2, shape, 1, rng)
            b, err = tt_svd(densify(a), max_ranks=a.ranks, tol=0.0, block=a.block)
            assert np.linalg.norm(densify(b) - densify(a)) \
                < 1e-12 * np.linalg.norm(densify(a))
            assert err < 1e-12

    def test_tolerance_budget_truncates(self, rng):
        a = random_blocktt(5, 2, 4, 3, rng)
        b, err = tt_svd(a, tol=0.3)
        actual = np.linalg.norm(densify(b) - densify(a))
        assert actual <= 0.3 * frob_norm(a) * 1.0001
        assert err == pytest.approx(actual, rel=1e-8)


class TestAddScaleNorm:
    def test_additive_inverse(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        z = tt_add(a, tt_scale(a, -1.0))
        assert frob_norm(z) < 1e-12 * frob_norm(a)

    def test_rank_addition_exact(self, rng):
        a = random_blocktt(3, 2, [1, 2, 2, 1], 1, rng)
        b = random_blocktt(3, 2, [1, 3, 2, 1], 1, rng)
        assert tt_add(a, b).ranks == (1, 5, 4, 1)

    def test_dense_sum(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        b = random_blocktt(3, 2, 3, 1, rng)
        s = densify(tt_add(a, b))
        ref = densify(a) + densify(b)
        assert np.abs(s - ref).max() < 1e-12 * np.abs(ref).max()

    def test_scale_zero(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        assert frob_norm(tt_scale(a, 0.0)) == 0.0

    def test_left_orthogonal_norm_reads_last_core(self, rng):
        a = left_orthogonalize(random_blocktt(4, 2, 2, 2, rng))
        direct = np.sqrt(inner(a, a).real)
        assert abs(frob_norm(a) - direct) < 1e-12 * direct

    def test_scaling_homogeneity(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        assert frob_norm(tt_scale(a, 2.0)) == pytest.approx(2 * frob_norm(a),
                                                            rel=1e-12)

    def test_norm_matches_dense(self, rng):
        a = random_blocktt(4, 3, [1, 2, 4, 2, 1], 2, rng)
        assert frob_norm(a) == pytest.approx(np.linalg.norm(densify(a)), rel=1e-12)

    def test_linearity(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        b = random_blocktt(3, 2, 2, 1, rng)
        alpha = 1.7 - 0.3j
        lhs = densify(tt_add(tt_scale(a, alpha), b))
        rhs = alpha * densify(a) + densify(b)
        assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()


class TestApplyOperator:
    def test_identity_operator(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        e = pauli.pauli_ttm(pauli.PauliString("III"))
        assert dense_rel_err(apply_operator(e, a), a) < 1e-12

    def test_single_site_bit_flip(self):
        zero = BlockTT([np.array([1, 0], dtype=complex).reshape(1, 2, 1, 1)])
        e = pauli.pauli_ttm(pauli.PauliString("X"))
        out = densify(apply_operator(e, zero))[:, 0]
        assert np.array_equal(out, np.array([0, 1], dtype=complex))

    def test_matches_dense_matvec(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        p = pauli.PauliString("YZX")
        lhs = factor_matrix(apply_operator(pauli.pauli_ttm(p), a))
        rhs = pauli.pauli_dense(p) @ factor_matrix(a)
        assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()

    def test_rank1_operator_preserves_ranks(self, rng):
        a = random_blocktt(4, 2, [1, 2, 3, 2, 1], 1, rng)
        e = pauli.pauli_ttm(pauli.PauliString("XYZI"))
        assert apply_operator(e, a).ranks == a.ranks

    def test_site_count_mismatch(self, rng):
        a = random_blocktt(3, 2, 2, 1, rng)
        with pytest.raises(ValueError):
            apply_operator(pauli.pauli_ttm(pauli.PauliString("XX")), a)


class TestShiftBlock:
    def test_round_trip_lossless(self, rng):
        a = random_blocktt(4, 2, 2, 1, rng)
        b, e1 = shift_block(a, "right", 16)
        c, e2 = shift_block(b, "left", 16)
        assert b.block == 2 and c.block == 1
        assert max(e1, e2) < 1e-12
        # the factor matrix tracks the block mode through the permutation
        assert np.abs(factor_matrix(c) - factor_matrix(a)).max() < 1e-12

    def test_product_state_rank1_exact(self, rng):
        # K = 1: a genuinely rank-1 chain, so the merged core splits exactly
        a = random_blocktt(3, 1, 1, 1, rng)
        b, err = shift_block(a, "right", 1)
        assert err < 1e-12
        assert np.abs(factor_matrix(b) - factor_matrix(a)).max() < 1e-12

    def test_truncation_error_matches_merged_svd(self, rng):
        a = random_blocktt(4, 2, 3, 1, rng)
        blk, nxt = a.cores[1], a.cores[2]
        merged = np.tensordot(blk, nxt, axes=(3, 0)).transpose(0, 1, 3, 2, 4)
        s = np.linalg.svd(merged.reshape(merged.shape[0] * 2, -1),
                          compute_uv=False)
        expected = float(np.sqrt(np.sum(s[2:] ** 2)))
        _, err = shift_block(a, "right", 2)
        assert err == pytest.approx(expected, rel=1e-10, abs=1e-14)

    def test_shift_past_end_rejected(self, rng):
        a = random_blocktt(3, 2, 2, 2, rng)
        with pytest.raises(ValueError):
            shift_block(a, "right", 2)
        b = random_blocktt(3, 2, 2, 0, rng)
        with pytest.raises(ValueError):
            shift_block(b, "left", 2)


class TestGinibre:
    def test_unit_norm_and_orthogonal(self):
        a = ginibre_blocktt(5, 2, 2, 3, seed=9)
        assert abs(frob_norm(a) - 1.0) < 1e-12
        assert_left_orthogonal(a)

    def test_deterministic(self):
        a = ginibre_blocktt(4, 2, 2, 2, seed=5)
        b = ginibre_blocktt(4, 2, 2, 2, seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a.cores, b.cores))


class TestFileFormat:
    def test_blocktt_bit_exact_round_trip(self, rng, tmp_path):
        a = random_blocktt(4, 3, [1, 2, 4, 2, 1], 2, rng)
        path = tmp_path / "a.ttqs"
        save_blocktt(a, path)
        b = load_tt(path)
        assert isinstance(b, BlockTT) and b.block == a.block
        assert all(np.array_equal(x, y) for x, y in zip(a.cores, b.cores))
        # byte-identical when written again
        save_blocktt(b, tmp_path / "b.ttqs")
        assert (tmp_path / "a.ttqs").read_bytes() == (tmp_path / "b.ttqs").read_bytes()

    def test_ttmatrix_round_trip(self, tmp_path):
        e = pauli.pauli_ttm(pauli.PauliString("XYZI"))
        save_ttmatrix(e, tmp_path / "e.ttqs")
        e2 = load_tt(tmp_path / "e.ttqs")
        assert isinstance(e2, TTMatrix)
        assert all(np.array_equal(x, y) for x, y in zip(e.cores, e2.cores))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ttqs"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="TTQS"):
            load_tt(path)
