"""Deterministic random streams.

The generator is counter-based splitmix64: state advances by the 64-bit
golden-ratio constant and each output is the xorshift-multiply finalizer of
the counter. The raw integer stream (and the uniforms derived from it by
taking the top 53 bits) is therefore bit-identical for a given seed on any
platform; draws vectorize as a pure function of the counter range.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = np.uint64(11)
_TWO53 = float(1 << 53)


def _mix(z):
    # modular 64-bit wrapping is the point; silence numpy's overflow warning
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _fold_tag(tag):
    # FNV-1a over the tag bytes; avoids Python's randomized str hash
    h = np.uint64(0xCBF29CE484222325)
    with np.errstate(over="ignore"):
        for b in tag.encode("utf-8"):
            h = (h ^ np.uint64(b)) * np.uint64(0x100000001B3)
    return h


class RngState:
    """Seeded stream; identical seeds yield identical streams."""

    ALGORITHM = "splitmix64-counter"

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def spawn(self, tag):
        """Derive an independent child stream from a string tag."""
        child = RngState(0)
        child.seed = int(_mix(np.uint64(self.seed) ^ _mix(_fold_tag(tag))))
        return child

    def _raw(self, n):
        with np.errstate(over="ignore"):
            base = np.uint64(self.seed) + _GOLDEN * (
                np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
            )
        self._counter += n
        return _mix(base)

    def uniform(self, size=None):
        """Floats in [0, 1) from the top 53 bits of the stream."""
        if size is None:
            return float(self._raw(1)[0] >> _U53) / _TWO53
        n = int(np.prod(size)) if not np.isscalar(size) else int(size)
        out = (self._raw(n) >> _U53).astype(np.float64) / _TWO53
        return out.reshape(size)

    def normal(self, size=None, std=1.0, dtype=np.float64):
        """Box-Muller normals with the given standard deviation."""
        scalar = size is None
        shape = (1,) if scalar else ((size,) if np.isscalar(size) else tuple(size))
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u1 = 1.0 - (self._raw(pairs) >> _U53).astype(np.float64) / _TWO53
        u2 = (self._raw(pairs) >> _U53).astype(np.float64) / _TWO53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n] * std
        z = z.astype(dtype).reshape(shape)
        return z[0] if scalar else z

    def integers(self, low, high, size=None):
        """Ints in [low, high); bias from the floor map is < 2**-40 here."""
        span = high - low
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high})")
        if size is None:
            return low + int(self.uniform() * span)
        u = self.uniform(size)
        return low + np.minimum((u * span).astype(np.int64), span - 1)

    def choice(self, seq):
        return seq[self.integers(0, len(seq))]

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")
