"""Ordered parallel map over fixed work chunks.

Chunk boundaries never depend on the thread count and results are merged in
chunk order, so output is identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor


def chunk_ranges(total: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, total)) for s in range(0, total, chunk)]


def ordered_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
