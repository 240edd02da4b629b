"""Seeded noise streams.

Every (run, node, iteration-block) triple owns an independent Philox stream
keyed as ``SeedSequence(master_seed, spawn_key=(run, node, block))``.  Blocks
are ``BLOCK_SIZE`` iterations long, so the noise vector consumed by node ``i``
at iteration ``t`` of run ``r`` depends only on (master_seed, r, i, t) and is
shared by every algorithm simulated under the same master seed.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .noise import NoiseModel, build_truncated_sampler, sample

BLOCK_SIZE = 1024


def node_stream(master_seed: int, run: int, node: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(run), int(node), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def problem_stream(seed: int) -> np.random.Generator:
    """Generator used for problem generation; disjoint from the noise streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(2**32 - 1,))))


class NoiseSource:
    """Produces the (steps, n, d) noise array for consecutive iterations of one run."""

    def __init__(self, model: NoiseModel, master_seed: int, run: int, n: int, d: int,
                 block_size: int = BLOCK_SIZE):
        if model.cdf is None:
            model = build_truncated_sampler(model)
        self.model = model
        self.master_seed = int(master_seed)
        self.run = int(run)
        self.n, self.d = int(n), int(d)
        self.block_size = int(block_size)
        self._digest = hashlib.sha256()
        self._cache_block = -1
        self._cache = None

    def block(self, b: int) -> np.ndarray:
        if b != self._cache_block:
            out = np.empty((self.block_size, self.n, self.d))
            for i in range(self.n):
                rng = node_stream(self.master_seed, self.run, i, b)
                out[:, i, :] = sample(self.model, rng, (self.block_size, self.d))
            self._cache_block, self._cache = b, out
        return self._cache

    def window(self, t0: int, steps: int) -> np.ndarray:
        """Noise for iterations t0 .. t0+steps-1 (may straddle blocks)."""
        parts = []
        t = t0
        end = t0 + steps
        while t < end:
            b, off = divmod(t, self.block_size)
            take = min(end - t, self.block_size - off)
            parts.append(self.block(b)[off:off + take])
            t += take
        out = parts[0] if len(parts) == 1 else np.concatenate(parts)
        self._digest.update(np.ascontiguousarray(out).tobytes())
        return out

    def at(self, t: int) -> np.ndarray:
        return self.window(t, 1)[0]

    @property
    def checksum(self) -> str:
        """SHA-256 over every noise value handed out so far, in order."""
        return self._digest.hexdigest()
