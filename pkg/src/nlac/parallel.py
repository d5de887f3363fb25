"""Fixed-order chunked map over thread workers.

Work is split into chunks whose boundaries depend only on the problem
size, never on the worker count, and results are concatenated in chunk
order. This keeps every assembled array bit-identical for any
``NLAC_THREADS`` setting.
"""
from concurrent.futures import ThreadPoolExecutor
import os

CHUNK = 128


def thread_count():
    raw = os.environ.get("NLAC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NLAC_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def chunks(n, size=CHUNK):
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def ordered_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
