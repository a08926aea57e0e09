"""Simulated external memory: a value array read through an LRU block cache."""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass
class IOStats:
    block_loads: int = 0
    block_evictions: int = 0
    logical_reads: int = 0
    logical_writes: int = 0

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


class BlockStore:
    """Row-major value array split into blocks of ``block_size`` values.

    At most ``cache_blocks`` blocks are resident. Touching a non-resident
    block counts one load (evicting the least recently used block if the
    cache is full). Writes allocate their block and are written back on
    eviction, so they cost the same load as a read.
    """

    def __init__(self, values: np.ndarray, block_size: int, cache_blocks: int):
        if block_size < 1 or cache_blocks < 1:
            raise ValueError("block size and cache size must be positive")
        self.data = np.asarray(values).reshape(-1)
        self.block_size = int(block_size)
        self.cache_blocks = int(cache_blocks)
        self.stats = IOStats()
        self._cache: OrderedDict[int, bool] = OrderedDict()  # block -> dirty

    @classmethod
    def empty(cls, n: int, block_size: int, cache_blocks: int, dtype=np.float32) -> BlockStore:
        return cls(np.zeros(n, dtype=dtype), block_size, cache_blocks)

    def __len__(self) -> int:
        return self.data.size

    @property
    def num_blocks(self) -> int:
        return -(-self.data.size // self.block_size)

    def _touch(self, block: int, dirty: bool) -> None:
        cache = self._cache
        if block in cache:
            cache.move_to_end(block)
            if dirty:
                cache[block] = True
            return
        self.stats.block_loads += 1
        if len(cache) >= self.cache_blocks:
            cache.popitem(last=False)
            self.stats.block_evictions += 1
        cache[block] = dirty

    def read(self, index: int) -> float:
        if not 0 <= index < self.data.size:
            raise IndexError(f"index {index} outside store of {self.data.size} values")
        self._touch(index // self.block_size, False)
        self.stats.logical_reads += 1
        return self.data[index]

    def write(self, index: int, value: float) -> None:
        if not 0 <= index < self.data.size:
            raise IndexError(f"index {index} outside store of {self.data.size} values")
        self._touch(index // self.block_size, True)
        self.stats.logical_writes += 1
        self.data[index] = value

    def _touch_range(self, start: int, stop: int, dirty: bool) -> None:
        if not 0 <= start <= stop <= self.data.size:
            raise IndexError(f"range [{start}, {stop}) outside store of {self.data.size} values")
        if start == stop:
            return
        for block in range(start // self.block_size, (stop - 1) // self.block_size + 1):
            self._touch(block, dirty)

    def read_range(self, start: int, stop: int) -> np.ndarray:
        """Read a contiguous run; same cache behaviour as reading it value by value."""
        self._touch_range(start, stop, False)
        self.stats.logical_reads += stop - start
        return self.data[start:stop].copy()

    def write_range(self, start: int, values: np.ndarray) -> None:
        values = np.asarray(values).reshape(-1)
        stop = start + values.size
        self._touch_range(start, stop, True)
        self.stats.logical_writes += values.size
        self.data[start:stop] = values

    def reset_stats(self) -> None:
        """Zero the counters; cache contents are kept."""
        self.stats = IOStats()

    def flush(self) -> None:
        """Write back and drop every cached block (evictions are not counted)."""
        self._cache.clear()

    def flushed_stats(self) -> IOStats:
        self.flush()
        return self.stats


def export_stats_csv(rows: dict[str, IOStats] | IOStats, path: str | Path) -> None:
    """Write one CSV row per named store."""
    if isinstance(rows, IOStats):
        rows = {"store": rows}
    fields = ["store", *IOStats().as_dict().keys()]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for name, st in rows.items():
            writer.writerow({"store": name, **st.as_dict()})
