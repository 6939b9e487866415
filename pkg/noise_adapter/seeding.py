import hashlib
from typing import Union

import numpy as np


def stream_key(name: str) -> int:
    '''Stable 32-bit integer for a stream name (independent of PYTHONHASHSEED)'''
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def derive_rng(seed: int, stream: Union[str, int]) -> np.random.Generator:
    """Independent generator for (seed, stream).

    Different stream names give statistically independent sequences for the
    same run seed, so shuffling, dropout and shot selection never share state.
    """
    key = stream_key(stream) if isinstance(stream, str) else int(stream)
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
