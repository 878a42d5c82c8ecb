"""Reproducible, independent random streams for parallel trials.

Each stream is a Philox-4x64 counter-based generator. The key is the master
seed and the upper half of the 256-bit counter holds a 128-bit digest of the
stream id, so streams for distinct ids never share counter blocks in practice
and any stream can be recreated without touching the others.

Samplers are written out explicitly so the mapping from raw 64-bit words to
variates is fixed and documented:

* uniform: ``(word >> 11) * 2**-53``, in [0, 1)
* normal: Box-Muller on two uniforms, the first shifted into (0, 1]
* Rademacher: ``+1`` if a uniform is at least 1/2, else ``-1``
"""
import hashlib
import struct

import numpy as np

_TWO_M53 = 2.0 ** -53
_MASK64 = (1 << 64) - 1


def _digest(stream_id):
    h = hashlib.blake2b(digest_size=16, person=b"shlw-landscape")
    for part in stream_id:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8") + b"\0")
        else:
            h.update(b"i" + struct.pack("<q", int(part)))
    lo, hi = struct.unpack("<QQ", h.digest())
    return lo, hi


class Stream:
    """A random stream identified by ``(master_seed, *stream_id)``.

    Parameters
    ----------
    master_seed : int
        Non-negative integer below 2**128.
    *stream_id : int or str
        Path naming the stream, e.g. ``("sweep", 7, "init", 3)``.
    """

    def __init__(self, master_seed, *stream_id):
        master_seed = int(master_seed)
        if not 0 <= master_seed < 1 << 128:
            raise ValueError("master_seed must be in [0, 2**128)")
        self.master_seed = master_seed
        self.stream_id = tuple(stream_id)
        lo, hi = _digest(self.stream_id)
        counter = np.array([0, 0, lo, hi], dtype=np.uint64)
        key = np.array([master_seed & _MASK64, master_seed >> 64], dtype=np.uint64)
        self._bitgen = np.random.Philox(counter=counter, key=key)

    def spawn(self, *sub_id):
        """Child stream whose id extends this one's."""
        return Stream(self.master_seed, *self.stream_id, *sub_id)

    def raw(self, count):
        return self._bitgen.random_raw(int(count))

    def uniform(self, shape=()):
        count = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(count) >> np.uint64(11)).astype(np.float64) * _TWO_M53
        return u.reshape(shape)

    def normal(self, shape=()):
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u1 = ((self.raw(pairs) >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
        u2 = (self.raw(pairs) >> np.uint64(11)).astype(np.float64) * _TWO_M53
        rad = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = rad * np.cos(theta)
        z[1::2] = rad * np.sin(theta)
        return z[:count].reshape(shape)

    def rademacher(self, shape=()):
        return np.where(self.uniform(shape) >= 0.5, 1.0, -1.0)

    def integers(self, high, shape=()):
        """Integers in ``[0, high)`` by rejection-free multiply-shift on 53-bit uniforms."""
        return np.floor(self.uniform(shape) * high).astype(np.int64)
