"""
Miscellaneous functions useful in at least two places unrelated to each other
"""
import hashlib

import numpy as np
import pluggy

from timelyrec import hooks


def get_plugin_manager():
    """
    Return plugin manager instance
    """
    pm = pluggy.PluginManager("timelyrec")
    pm.add_hookspecs(hooks)
    pm.load_setuptools_entrypoints("timelyrec")

    return pm


def derive_rng(seed, *keys):
    """
    Return a numpy Generator whose stream depends only on seed and keys.

    keys are non-negative integers (epoch, positive index, ...). The same
    (seed, keys) always yields the same draws, whatever order callers
    ask for them in. keys act as a spawn key, so (seed, 5) and
    (seed, 5, 0) are unrelated streams.
    """
    spawn_key = tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def sha256_lines(lines):
    """Return the sha256 of newline joined strings, e.g. a vocabulary"""
    hasher = hashlib.sha256()
    for line in lines:
        hasher.update(line.encode("utf-8"))
        hasher.update(b"\n")
    return hasher.hexdigest()


def sha256_arrays(arrays):
    """
    Return the sha256 over a mapping of name -> numpy array.

    Names are visited in sorted order so the digest is independent of
    insertion order.
    """
    hasher = hashlib.sha256()
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype="<f8")
        hasher.update(name.encode("utf-8"))
        hasher.update(repr(value.shape).encode("utf-8"))
        hasher.update(value.tobytes())
    return hasher.hexdigest()
