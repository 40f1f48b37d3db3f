import re

import numpy as np


def parse_int_list(text: str):
    """'4096, 2048 1024' -> [4096, 2048, 1024]. Raises ValueError on junk."""
    items = [t for t in re.split(r"[,\s]+", str(text).strip()) if t]
    if not items:
        raise ValueError("empty list")
    return [int(t) for t in items]


def parse_float_pair(text: str):
    """'-20,20' -> (-20.0, 20.0)."""
    items = [t for t in re.split(r"[,\s]+", str(text).strip()) if t]
    if len(items) != 2:
        raise ValueError(f"expected two numbers, got {len(items)}")
    return float(items[0]), float(items[1])


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def default_p_values(n: int):
    """N followed by every power of two below N, descending (N=4096 -> 4096, 2048, ..., 1)."""
    values = [n]
    p = 1
    while p * 2 < n:
        p *= 2
    while p >= 1 and p < n:
        values.append(p)
        p //= 2
    return values


def relative_change(previous, current) -> float:
    """
    Largest component-wise relative change between two estimate vectors. Components
    that were exactly zero fall back to absolute change.
    """
    a = np.asarray(previous, dtype=float).reshape(-1)
    b = np.asarray(current, dtype=float).reshape(-1)
    diff = np.abs(b - a)
    scale = np.abs(a)
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(np.max(rel)) if rel.size else 0.0


def format_float(x: float) -> str:
    """Round-trip exact decimal text for CSV cells."""
    return format(float(x), ".17g")
