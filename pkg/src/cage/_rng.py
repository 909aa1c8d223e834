"""Counter-based random streams.

Every stream is keyed by ``(seed, *counters)`` through :class:`numpy.random.SeedSequence`,
so the draws for outer iteration ``i`` (or data block ``b``) never depend on how
many other iterations ran before it or on which worker ran it.
"""

import numpy as np

# rows per independently seeded block when sampling large tables
BLOCK_ROWS = 4096


def stream(seed, *counters):
    """Return a generator keyed by the master seed and a tuple of counters."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(c) for c in counters]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def blocked_standard_normal(seed, n, d, tag=0):
    """Standard normal ``(n, d)`` table built from per-block streams."""
    out = np.empty((n, d))
    for b, start in enumerate(range(0, n, BLOCK_ROWS)):
        stop = min(start + BLOCK_ROWS, n)
        out[start:stop] = stream(seed, tag, b).standard_normal((stop - start, d))
    return out
