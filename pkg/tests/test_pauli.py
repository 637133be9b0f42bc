import itertools

import numpy as np
import pytest

from ttqst.pauli import (PauliSet, PauliString, load_pauli_set, pauli_dense,
                         pauli_ttm, sample_pauli_set, save_pauli_set)
from ttqst.tt import ttm_matrix


def kron_oracle(letters):
    """Direct entrywise Kronecker product from the matrix definitions."""
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1.0, -1.0])}
    n = len(letters)
    d = 2**n
    out = np.zeros((d, d), dtype=complex)
    for row in range(d):
        for col in range(d):
            val = 1.0 + 0.0j
            for site, c in enumerate(letters):
                shift = n - 1 - site
                val *= mats[c][(row >> shift) & 1, (col >> shift) & 1]
            out[row, col] = val
    return out


class TestPauliString:
    def test_single_z(self):
        assert np.array_equal(pauli_dense(PauliString("Z")), np.diag([1.0, -1.0]))

    def test_identity_word(self):
        assert np.array_equal(pauli_dense(PauliString("III")), np.eye(8))

    def test_xy_matches_kron_oracle(self):
        assert np.array_equal(pauli_dense(PauliString("XY")), kron_oracle("XY"))

    @pytest.mark.parametrize("word", ["X", "ZY", "XIZ", "YYXZ"])
    def test_dense_matches_oracle(self, word):
        assert np.abs(pauli_dense(PauliString(word)) - kron_oracle(word)).max() == 0

    def test_index_bijection_exhaustive(self):
        for idx in range(4**3):
            p = PauliString.from_index(3, idx)
            assert p.index == idx
        assert PauliString.from_index(2, 0).letters == "II"
        assert PauliString.from_index(2, 4).letters == "XI"  # letter 0 is MSB

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            PauliString.from_index(2, 16)

    def test_invalid_letters(self):
        with pytest.raises(ValueError):
            PauliString("XQ")

    def test_hermitian_involutory_traceless(self, rng):
        words = ["".join(w) for w in itertools.product("IXYZ", repeat=2)]
        words += ["".join("IXYZ"[c] for c in rng.integers(0, 4, size=6))
                  for _ in range(20)]
        for word in words:
            e = pauli_dense(PauliString(word))
            assert np.abs(e - e.conj().T).max() == 0
            assert np.abs(e @ e - np.eye(e.shape[0])).max() < 1e-14
            if set(word) != {"I"}:
                assert abs(np.trace(e)) < 1e-14


class TestPauliTTM:
    def test_identity_cores(self):
        e = pauli_ttm(PauliString("III"))
        assert np.array_equal(ttm_matrix(e), np.eye(8))

    def test_zz_diagonal(self):
        e = pauli_ttm(PauliString("ZZ"))
        assert np.array_equal(ttm_matrix(e), np.diag([1.0, -1.0, -1.0, 1.0]))

    def test_all_bond_dims_one(self):
        assert pauli_ttm(PauliString("XYZIX")).ranks == (1,) * 6

    def test_exhaustive_agreement_n3(self):
        for idx in range(4**3):
            p = PauliString.from_index(3, idx)
            dev = np.abs(ttm_matrix(pauli_ttm(p)) - pauli_dense(p)).max()
            assert dev == 0

    def test_randomized_agreement_n6(self, rng):
        for _ in range(100):
            p = PauliString.from_codes(rng.integers(0, 4, size=6))
            dev = np.abs(ttm_matrix(pauli_ttm(p)) - pauli_dense(p)).max()
            assert dev < 1e-14


class TestSampling:
    def test_full_enumeration(self):
        pset = sample_pauli_set(2, 16, seed=3)
        assert {p.letters for p in pset.strings} == {
            "".join(w) for w in itertools.product("IXYZ", repeat=2)}

    def test_single_draw_deterministic(self):
        a = sample_pauli_set(5, 1, seed=11)
        b = sample_pauli_set(5, 1, seed=11)
        assert a.strings == b.strings

    def test_distinct(self):
        pset = sample_pauli_set(3, 40, seed=1)
        assert len({p.letters for p in pset.strings}) == 40

    def test_too_many_rejected(self):
        with pytest.raises(ValueError):
            sample_pauli_set(2, 17, seed=0)

    def test_identity_excluded_when_asked(self):
        pset = sample_pauli_set(2, 15, seed=5, allow_identity=False)
        assert "II" not in {p.letters for p in pset.strings}
        with pytest.raises(ValueError):
            sample_pauli_set(2, 16, seed=5, allow_identity=False)

    def test_inclusion_frequencies_uniform(self):
        # N=2, m=8 of 16: inclusion probability 1/2 per word
        draws = 10_000
        counts = {}
        for rep in range(draws):
            for p in sample_pauli_set(2, 8, seed=rep).strings:
                counts[p.letters] = counts.get(p.letters, 0) + 1
        expect = draws * 8 / 16
        sigma = np.sqrt(draws * 0.5 * 0.5)
        for word, count in counts.items():
            assert abs(count - expect) < 3 * sigma, (word, count)

    def test_duplicate_detection(self):
        with pytest.raises(ValueError):
            PauliSet((PauliString("XX"), PauliString("XX")), 2)


class TestTextFormat:
    def test_round_trip(self, tmp_path):
        pset = sample_pauli_set(4, 12, seed=9)
        path = tmp_path / "pauli.txt"
        save_pauli_set(pset, path)
        text = path.read_text().splitlines()
        assert text[0] == "# n_qubits=4 seed=9"
        loaded = load_pauli_set(path)
        assert loaded.strings == pset.strings
        assert loaded.n_qubits == 4 and loaded.seed == 9
