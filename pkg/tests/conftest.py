import numpy as np
import pytest

from ttqst.tt import BlockTT


def crandn(shape, rng):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_blocktt(n, block_dim, ranks, block, rng):
    """Unnormalized random BlockTT with the given bond dimensions."""
    if isinstance(ranks, int):
        ranks = [1] + [ranks] * (n - 1) + [1]
    cores = []
    for i in range(n):
        shape = ((ranks[i], 2, block_dim, ranks[i + 1]) if i == block
                 else (ranks[i], 2, ranks[i + 1]))
        cores.append(crandn(shape, rng))
    return BlockTT(cores)


def basis_state_blocktt(n, bits=None, block=None):
    """Rank-1 factor for a computational basis state (K = 1)."""
    bits = bits or [0] * n
    block = block if block is not None else max(n - 2, 0)
    cores = []
    for i, b in enumerate(bits):
        vec = np.zeros((1, 2, 1), dtype=np.complex128)
        vec[0, b, 0] = 1.0
        if i == block:
            vec = vec[:, :, np.newaxis, :]
        cores.append(vec)
    return BlockTT(cores)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
