"""Fixed numeric formatting for CSV output."""
from __future__ import annotations

import math


def fmt(x) -> str:
    """9 significant digits; booleans and ints pass through unchanged."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if x == 0.0:
        return "0"
    if math.isnan(x):
        return "nan"
    return format(x, ".9g")
