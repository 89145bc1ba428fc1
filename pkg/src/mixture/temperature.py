import math
from typing import Sequence, Union

import numpy as np
from scipy.special import softmax

from errors import InvalidConfigError

Tau = Union[float, int]


def parse_tau(value) -> float:
    """
    Accepts a positive number, ``inf`` or the strings "inf"/"infinity"/"∞".
    """
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "∞", "+inf"):
            return math.inf
        try:
            value = float(value)
        except ValueError as exc:
            raise InvalidConfigError(f"tau must be a number or inf: {value!r}") from exc
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfigError(f"tau must be a number or inf: {value!r}")
    if math.isnan(value) or value <= 0:
        raise InvalidConfigError(f"tau must be positive: {value!r}")
    return float(value)


def temperature_distribution(sizes: Sequence[int], tau: Tau) -> np.ndarray:
    """
    Static sampling prior q_tau(i) proportional to (M_i / sum M)^(1/tau).
    tau=1 is proportional sampling and tau=inf the exact uniform vector.
    """
    if len(sizes) == 0:
        raise InvalidConfigError("At least one subset size is required")
    if any(s <= 0 for s in sizes):
        raise InvalidConfigError(f"Subset sizes must be positive: {list(sizes)}")
    tau = parse_tau(tau)
    count = len(sizes)
    if math.isinf(tau):
        return np.full(count, 1.0 / count)
    log_q = np.log(np.asarray(sizes, dtype=np.float64))
    log_q -= np.log(np.sum(np.asarray(sizes, dtype=np.float64)))
    return softmax(log_q / tau)
