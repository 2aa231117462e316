"""Per-task RNG seeds derived from a master seed.

Seeds depend only on (master seed, disorder id, task kind), never on which
worker runs the task, so results do not change with the worker count.
"""
from __future__ import annotations

import hashlib


def derive_seed(master_seed: int, disorder_id: int, task_kind: str) -> int:
    """64-bit seed from a keyed BLAKE2b hash of the task coordinates."""
    msg = f"{int(master_seed)}:{int(disorder_id)}:{task_kind}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8, person=b"dgff-lab").digest(), "little")
