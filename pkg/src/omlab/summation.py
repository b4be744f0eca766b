"""Fixed-order compensated summation.

Every sum in the package is a Neumaier (improved Kahan) sum taken over a row
in row-major order.  Rows are reduced independently, so a row produces the
same bits whether it is summed alone or inside a batch, at any thread count.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def neumaier(row) -> float:
    s = 0.0
    c = 0.0
    for x in row:
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


@njit(cache=True)
def _row_sums(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = neumaier(x[i])
    return out


def row_sums(x) -> np.ndarray:
    """Compensated sums along the last axis."""
    a = np.asarray(x, dtype=np.float64)
    lead = a.shape[:-1]
    if a.shape[-1] == 0:
        return np.zeros(lead)
    flat = np.ascontiguousarray(a.reshape((-1, a.shape[-1])))
    return _row_sums(flat).reshape(lead)


def compensated_sum(values) -> float:
    """Compensated sum of a flat sequence, in row-major order."""
    a = np.ascontiguousarray(np.ravel(np.asarray(values, dtype=np.float64)))
    return float(_row_sums(a.reshape(1, -1))[0]) if a.size else 0.0
