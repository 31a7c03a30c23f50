import math
from enum import Enum

import numpy as np


def json_set_default(obj):
    if isinstance(obj, set):
        return sorted(obj)
    if isinstance(obj, tuple):
        return list(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def finite_or_none(value: float):
    """JSON has no infinities; unlimited quantities are written as null."""
    value = float(value)
    return value if math.isfinite(value) else None
