"""Small shared helpers: ordered parallel map, hashing, deterministic JSON."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Map fn over items, preserving item order in the result.

    Work units must be independent and deterministic; the numba kernels
    release the GIL, so threads give real parallelism on the hot paths.
    Results are identical for any thread count.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def content_hash(*arrays: np.ndarray | bytes | str) -> str:
    """sha256 over the raw bytes of the inputs (order-sensitive)."""
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, np.ndarray):
            h.update(np.ascontiguousarray(a).tobytes())
        elif isinstance(a, bytes):
            h.update(a)
        else:
            h.update(str(a).encode("utf-8"))
    return h.hexdigest()


def dump_json(obj, path: str | Path) -> None:
    """Write JSON with a stable layout (byte-identical for equal payloads)."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def load_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_curve_csv(path: str | Path, ts: Iterable, values: Iterable) -> None:
    """Two-column CSV (t, value) for plotting."""
    lines = ["t,value"]
    for t, v in zip(ts, values):
        lines.append(f"{int(t)},{repr(float(v))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
