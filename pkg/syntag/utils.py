import hashlib
from time import perf_counter

import numpy as np


class Timer:
    def __enter__(self):
        self._time = perf_counter()
        return self

    def __exit__(self, type, value, traceback):
        self._time = perf_counter() - self._time

    @property
    def dt(self):
        return self._time


def make_rng(seed, *keys):
    """Returns an independent generator for the stream identified by
    ``(seed, *keys)``.

    Streams are derived through ``numpy.random.SeedSequence`` entropy, so
    ``make_rng(7, 3, 12)`` always yields the same numbers no matter which
    thread asks for it or in which order. Training keys dropout masks by
    (epoch, sentence index) with this.

    Parameters
    ----------
    seed : int
    *keys : int
        Non-negative integers naming the stream.

    Returns
    -------
    numpy.random.Generator
    """

    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def get_hash(b):
    """sha256 digest of bytes (or of a string encoded as utf8)."""

    h = hashlib.new("sha256")
    if isinstance(b, str):
        b = b.encode("utf8")
    h.update(b)
    return h.digest()
