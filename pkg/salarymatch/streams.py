"""Reproducible random streams and chunked parallel execution.

Work is split into fixed-size chunks and chunk k always draws from the Philox
stream spawned from (seed, k), so results do not depend on how many threads
run the chunks.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .checks import check_at_least

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 1000


def chunk_rng(seed, k):
    """Generator for chunk k of a run seeded with seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def chunk_sizes(total, chunk=DEFAULT_CHUNK):
    """Sizes of consecutive chunks covering total items."""
    check_at_least("chunk size", chunk, 1)
    full, rest = divmod(int(total), int(chunk))
    return [int(chunk)] * full + ([rest] if rest else [])


def default_threads():
    return min(8, os.cpu_count() or 1)


def map_chunks(fn, sizes, seed, threads=None, label="chunk"):
    """Runs fn(rng, size, k) for every chunk and returns results in chunk order.

    Arguments:
        fn::callable- work on one chunk
        sizes::list- chunk sizes from chunk_sizes
        seed::int- run seed
        threads::int- worker cap, defaults to default_threads()
        label::str- name used in progress logs

    Returns:
        list- fn results ordered by chunk index
    """
    threads = default_threads() if threads is None else int(threads)
    check_at_least("threads", threads, 1)

    def run(k):
        out = fn(chunk_rng(seed, k), sizes[k], k)
        logger.debug("%s %d/%d done", label, k + 1, len(sizes))
        return out

    if threads == 1 or len(sizes) <= 1:
        results = [run(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(sizes))))
    logger.info("%s: %d items in %d chunks", label, sum(sizes), len(sizes))
    return results
