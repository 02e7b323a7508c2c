from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

ENV_THREADS = "DYSMOOTH_THREADS"


def worker_count() -> int:
    """Worker cap from ``DYSMOOTH_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError(f"{ENV_THREADS} must be >= 0")
    return n or (os.cpu_count() or 1)


def pmap(fn, items, workers: int | None = None) -> list:
    """Order-preserving map; threads only help because numpy releases the GIL."""
    items = list(items)
    workers = min(workers or worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
