"""N-qubit Pauli words in dense and rank-1 TT-matrix form, plus sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tt import DENSIFY_LIMIT, TTMatrix, check_dense_size

LETTERS = "IXYZ"

SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)
SIGMA.setflags(write=False)


@dataclass(frozen=True)
class PauliString:
    """Word over {I, X, Y, Z}; letter 0 is the most significant site."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in LETTERS for c in self.letters):
            raise ValueError(f"invalid Pauli word {self.letters!r}")

    @classmethod
    def from_index(cls, n_qubits, index):
        """Inverse of ``index``: base-4 digits, site 0 most significant."""
        if not 0 <= index < 4**n_qubits:
            raise ValueError(f"index {index} out of range for {n_qubits} qubits")
        letters = []
        for _ in range(n_qubits):
            letters.append(LETTERS[index % 4])
            index //= 4
        return cls("".join(reversed(letters)))

    @classmethod
    def from_codes(cls, codes):
        return cls("".join(LETTERS[int(c)] for c in codes))

    @property
    def n_qubits(self):
        return len(self.letters)

    @property
    def index(self):
        val = 0
        for c in self.letters:
            val = 4 * val + LETTERS.index(c)
        return val

    def codes(self):
        return np.array([LETTERS.index(c) for c in self.letters], dtype=np.uint8)

    def __str__(self):
        return self.letters


@dataclass(frozen=True)
class PauliSet:
    """Distinct Pauli words plus the seed they were drawn with."""

    strings: tuple
    n_qubits: int
    seed: int | None = None
    _codes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(set(s.letters for s in self.strings)) != len(self.strings):
            raise ValueError("PauliSet contains duplicates")
        if any(s.n_qubits != self.n_qubits for s in self.strings):
            raise ValueError("mixed word lengths in PauliSet")

    def __len__(self):
        return len(self.strings)

    def codes_matrix(self):
        """(M, N) uint8 matrix of letter codes."""
        if self._codes is None:
            codes = np.zeros((len(self.strings), self.n_qubits), dtype=np.uint8)
            for i, s in enumerate(self.strings):
                codes[i] = s.codes()
            object.__setattr__(self, "_codes", codes)
        return self._codes


def pauli_dense(p, limit=DENSIFY_LIMIT):
    """Kronecker product of the single-qubit matrices in letter order."""
    check_dense_size(4**p.n_qubits, limit)
    out = SIGMA[LETTERS.index(p.letters[0])]
    for c in p.letters[1:]:
        out = np.kron(out, SIGMA[LETTERS.index(c)])
    return out


def pauli_ttm(p):
    """Rank-1 TT-matrix of a Pauli word.

    With site 0 stored first and flattened slowest, the sitewise cores
    reproduce the Kronecker product in letter order exactly.
    """
    return TTMatrix([SIGMA[LETTERS.index(c)][np.newaxis, :, :, np.newaxis]
                     for c in p.letters])


def sample_pauli_set(n_qubits, m, seed, allow_identity=True):
    """Draw m distinct Pauli words uniformly without replacement."""
    total = 4**n_qubits - (0 if allow_identity else 1)
    if m > total:
        raise ValueError(f"cannot draw {m} distinct words from {total}")
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    identity = "I" * n_qubits
    if 2 * m >= total:
        # Dense enumeration; only reachable when 4**n_qubits is small.
        pool = [PauliString.from_index(n_qubits, i) for i in range(4**n_qubits)]
        if not allow_identity:
            pool = [p for p in pool if p.letters != identity]
        order = rng.permutation(len(pool))
        strings = tuple(pool[i] for i in order[:m])
    else:
        seen = set()
        out = []
        while len(out) < m:
            batch = rng.integers(0, 4, size=(max(2 * (m - len(out)), 64), n_qubits),
                                 dtype=np.uint8)
            for row in batch:
                word = "".join(LETTERS[c] for c in row)
                if word in seen or (not allow_identity and word == identity):
                    continue
                seen.add(word)
                out.append(PauliString(word))
                if len(out) == m:
                    break
        strings = tuple(out)
    return PauliSet(strings, n_qubits, seed)


def save_pauli_set(pset, path):
    with open(path, "w") as fh:
        fh.write(f"# n_qubits={pset.n_qubits} seed={pset.seed}\n")
        for s in pset.strings:
            fh.write(s.letters + "\n")


def load_pauli_set(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError("missing PauliSet header line")
        fields = dict(kv.split("=") for kv in header[1:].split())
        n_qubits = int(fields["n_qubits"])
        seed = None if fields.get("seed") in (None, "None") else int(fields["seed"])
        strings = tuple(PauliString(line.strip()) for line in fh if line.strip())
    return PauliSet(strings, n_qubits, seed)
