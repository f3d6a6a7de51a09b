"""Shared plumbing: named errors, seeded substreams, deterministic parallel map, stable file emission."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class DivergenceError(RuntimeError):
    """Raised when a training iterate contains NaN/Inf; message names the step."""


class OracleExhausted(RuntimeError):
    """Raised when an example stream runs dry before the requested step count."""


def _label_to_int(label) -> int:
    """Map a label (str/int) to a stable 64-bit integer for stream derivation."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Derive an independent generator from a master seed and a label path.

    The same (seed, labels) always yields the same stream, regardless of how
    many other substreams were created or on which thread this runs.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_to_int(x) for x in labels])
    return np.random.Generator(np.random.PCG64(ss))


def thread_count(explicit: int | None = None) -> int:
    """Worker count: explicit arg, else NTKLAB_THREADS, else machine parallelism."""
    if explicit is not None and explicit >= 1:
        return int(explicit)
    env = os.environ.get("NTKLAB_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"NTKLAB_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def pmap(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Apply fn to each item, possibly in parallel; results in input order.

    Results are collected by index, so the output is independent of scheduling.
    Each item must carry its own rng substream for this to be deterministic.
    """
    workers = thread_count(threads)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fingerprint(*arrays: np.ndarray) -> str:
    """Short stable hex digest of array contents (dtype/shape sensitive)."""
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dump output is stable."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def fmt_g17(x: float) -> str:
    """Fixed 17-significant-digit decimal rendering used by every CSV column."""
    return format(float(x), ".17g")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    """Write rows with fmt_g17 formatting for floats; ints rendered plainly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(fmt_g17(v))
            fh.write(",".join(cells) + "\n")
