"""
Seedable, splittable random streams.

A stream is a numpy Philox generator keyed by ``(seed, stream)``: the low
64 key bits hold the seed, the high 64 bits the stream index. Two streams
with different indices never share draws.

Each stream can be read two ways:

* sequentially, through ``uniform`` / ``uniforms``;
* as fixed-width pulse slots: pulse ``i`` owns draws ``[8i, 8i + 8)``.
  ``pulse_block(start, stop)`` returns those draws for a whole range in one
  call and ``pulse(i)`` returns a stream limited to one slot. Both give the
  same numbers, so a session can be cut into any partition of pulses.
  ``pulse_rows(indices)`` gathers the slots of scattered pulses.

A given stream object should be read one way or the other, not both.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError

PULSE_WIDTH = 8
# Philox4x64 emits four 64-bit words per counter step.
_WORDS_PER_BLOCK = 4
_BLOCKS_PER_PULSE = PULSE_WIDTH // _WORDS_PER_BLOCK
_SEED_LIMIT = 2**64
_DOUBLE_SCALE = 2.0**-53


def _to_unit(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit words onto [0, 1) with 53 bits of resolution."""
    return (raw >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE


class RandomStream:
    """Deterministic uniform draws for one (seed, stream) pair."""

    def __init__(self, seed: int, stream: int = 0, *, _counter: int = 0, _budget: Optional[int] = None):
        if not 0 <= seed < _SEED_LIMIT:
            raise ConfigurationError(f"seed {seed} is not a 64-bit unsigned integer")
        if not 0 <= stream < _SEED_LIMIT:
            raise ConfigurationError(f"stream index {stream} is out of range")
        self._seed = int(seed)
        self._stream = int(stream)
        self._bitgen = np.random.Philox(key=self._key, counter=_counter)
        self._budget = _budget
        self._drawn = 0

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream(self) -> int:
        return self._stream

    @property
    def _key(self) -> int:
        return (self._stream << 64) | self._seed

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniform draws on [0, 1)."""
        if self._budget is not None and self._drawn + n > self._budget:
            raise RuntimeError(
                f"pulse slot exhausted: {self._drawn + n} draws requested, {self._budget} available"
            )
        self._drawn += n
        return _to_unit(self._bitgen.random_raw(n))

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def skip(self, n: int) -> None:
        """Consume ``n`` draws without using them."""
        self.uniforms(n)

    def choice_index(self, k: int) -> int:
        """Uniform index in ``range(k)`` from one draw."""
        return min(int(self.uniform() * k), k - 1)

    def spawn(self, stream: int) -> RandomStream:
        """Independent stream for the same seed."""
        return RandomStream(self._seed, stream)

    def pulse(self, index: int) -> RandomStream:
        """Stream restricted to the draws owned by pulse ``index``."""
        if index < 0:
            raise ConfigurationError(f"pulse index {index} is negative")
        return RandomStream(
            self._seed,
            self._stream,
            _counter=index * _BLOCKS_PER_PULSE,
            _budget=PULSE_WIDTH,
        )

    def pulse_block(self, start: int, stop: int) -> np.ndarray:
        """
        Draws for pulses ``start .. stop - 1``.

        Returns:
            Array of shape (stop - start, PULSE_WIDTH); row ``j`` equals the
            draws of ``pulse(start + j)``.
        """
        if not 0 <= start <= stop:
            raise ConfigurationError(f"bad pulse range [{start}, {stop})")
        bitgen = np.random.Philox(key=self._key, counter=start * _BLOCKS_PER_PULSE)
        raw = bitgen.random_raw((stop - start) * PULSE_WIDTH)
        return _to_unit(np.asarray(raw, dtype=np.uint64)).reshape(stop - start, PULSE_WIDTH)

    def pulse_rows(self, indices: Sequence[int]) -> np.ndarray:
        """
        Draws for arbitrary pulse indices, one row per entry of ``indices``.

        Only the slots actually named are generated, one ``pulse_block`` per
        run of consecutive indices, so sparse indices stay cheap.
        """
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            return np.empty((0, PULSE_WIDTH), dtype=np.float64)
        if idx.min() < 0:
            raise ConfigurationError(f"pulse index {int(idx.min())} is negative")
        unique = np.unique(idx)
        runs = np.split(unique, np.flatnonzero(np.diff(unique) != 1) + 1)
        table = np.concatenate([self.pulse_block(int(run[0]), int(run[-1]) + 1) for run in runs])
        return table[np.searchsorted(unique, idx)]

    def __repr__(self) -> str:
        return f"RandomStream(seed={self._seed}, stream={self._stream})"
