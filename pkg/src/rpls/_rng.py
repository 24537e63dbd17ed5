"""Portable pseudo-random generator: xoshiro256** seeded through splitmix64.

Every random decision in the package (splits, synthetic data, the
multi-data resample) goes through :class:`Xoshiro256`, so a seed yields the
same stream on any platform and in any language that implements the two
reference algorithms.
"""

import math

_MASK = (1 << 64) - 1


def splitmix64(state):
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** with the four state words filled by splitmix64(seed)."""

    def __init__(self, seed):
        seed = int(seed) & _MASK
        words = []
        for _ in range(4):
            seed, out = splitmix64(seed)
            words.append(out)
        self._s = words
        self._spare_normal = None

    def next_u64(self):
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self):
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n):
        """Unbiased integer in [0, n) by rejection on the 64-bit range."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % n

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle of a list; returns the list."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def permutation(self, n):
        return self.shuffle(list(range(n)))

    def standard_normal(self):
        # Marsaglia polar method; the second deviate is cached.
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        while True:
            u = 2.0 * self.random() - 1.0
            v = 2.0 * self.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare_normal = v * f
        return u * f
