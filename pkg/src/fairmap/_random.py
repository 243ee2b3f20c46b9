"""Seed fan-out: every consumer draws from a named substream of one root seed."""

import zlib

import numpy as np


def substream(seed, name, *extra):
    """Return a ``Generator`` for the stream ``name`` under root ``seed``.

    Streams with different names (or different ``extra`` integers, e.g. a
    trial index) are statistically independent, and each one is reproducible
    on its own.
    """
    key = [zlib.crc32(name.encode("utf-8"))] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def child_seed(seed, name, *extra):
    """Derive a plain integer seed (for libraries that take ``random_state``)."""
    return int(substream(seed, name, *extra).integers(0, 2**31 - 1))
