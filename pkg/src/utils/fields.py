"""
Annotated field types shared by the configuration models.

Configuration files carry vectors as comma-separated text; these types accept
either that text or a proper list.
"""
from typing import Annotated, Any, List

from pydantic import BeforeValidator


def split_floats(value: Any) -> Any:
    """Turn "1, 2.5,3" into [1.0, 2.5, 3.0]; scalars become one-element lists."""
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",")]
        return [float(part) for part in parts if part]
    if isinstance(value, (int, float)):
        return [float(value)]
    return value


def split_ints(value: Any) -> Any:
    if isinstance(value, str):
        return [int(part.strip()) for part in value.split(",") if part.strip()]
    if isinstance(value, int):
        return [value]
    return value


def split_intervals(value: Any) -> Any:
    """
    Parse "lo:hi, v, lo:hi" into [[lo, hi], [v, v], [lo, hi]].

    A bare value denotes a degenerate interval (a fixed coordinate).
    """
    if not isinstance(value, str):
        return value
    intervals = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":", 1)
            intervals.append([float(lo), float(hi)])
        else:
            intervals.append([float(part), float(part)])
    return intervals


def split_words(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(split_floats)]
IntList = Annotated[List[int], BeforeValidator(split_ints)]
IntervalList = Annotated[List[List[float]], BeforeValidator(split_intervals)]
StrList = Annotated[List[str], BeforeValidator(split_words)]
