"""Deterministic seed derivation.

Child seeds are a pure function of ``(master seed, role, index)``: the role
string is hashed with CRC-32 and, together with the index, used as the
spawn key of a :class:`numpy.random.SeedSequence` rooted at the master
seed. No global RNG state is touched, so any scheduler (serial, threaded)
reproduces the same streams.
"""

import zlib

import numpy as np

MAX_SEED = 2**31 - 1


def derive_seed(master: int, role: str, index: int) -> int:
    """31-bit child seed for the ``index``-th task of kind ``role``."""
    ss = np.random.SeedSequence(
        entropy=int(master), spawn_key=(zlib.crc32(role.encode("utf-8")), int(index))
    )
    return int(ss.generate_state(1, dtype=np.uint32)[0] >> 1)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0] >> 1)
