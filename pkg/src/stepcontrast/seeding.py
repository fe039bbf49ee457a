"""Deterministic sub-seed derivation.

All randomness in a run flows from one root seed. Components that need their
own stream (data shuffling, parameter init, probe subsampling, negative
shuffling) get a named sub-seed so that changing one consumer does not
perturb the others.
"""

import hashlib


def derive_seed(root_seed: int, *names: object) -> int:
    """Derive a stable 32-bit sub-seed from a root seed and a name path.

    Stable across processes and platforms (sha256, not Python's salted
    hash). Examples: derive_seed(0, "init"), derive_seed(7, "shuffle", 3).
    """
    key = ":".join([str(int(root_seed))] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
