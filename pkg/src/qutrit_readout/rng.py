"""Counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 generator
(``numpy.random.Philox``).  A stream is addressed by a 128-bit key:

* key word 0 = a 64-bit seed
* key word 1 = the stream index (shot number, restart number, ...)

with the counter starting at zero.  Because the key fully determines the
stream, shot ``i`` can be regenerated in isolation, in any order, on any
worker.

Independent subsystems (simulation, dataset split, clustering, training)
get their own 64-bit seed from :func:`derive_seed`, which hashes the run
seed together with the subsystem name using BLAKE2b.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_NAME = "philox4x64-10"
_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, name: str) -> int:
    """Return a 64-bit seed for subsystem ``name`` derived from ``seed``.

    The digest is BLAKE2b(8 bytes) over ``b"<seed>:<name>"``, read as a
    little-endian unsigned integer.
    """
    payload = f"{int(seed) & _MASK64}:{name}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for substream ``index`` of ``seed``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    key = (int(seed) & _MASK64) | ((int(index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
