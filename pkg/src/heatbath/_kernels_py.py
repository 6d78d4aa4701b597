"""Pure numpy fallback for the compiled kernels in ``_core``."""
import numpy as np


def deposit_project(buf, start, F, c_now, c_prev, h):
    """Deposit source terms and project the window onto the basis.

    Cell ``start + i`` receives ``F[i] @ c_now + F[i - 1] @ c_prev`` (the
    second term reaches cell ``start + m``); returns the grid projection of the
    ``m`` updated window cells.
    """
    m, d, k = F.shape
    if start < 0 or start + m >= buf.shape[0]:
        raise IndexError("window outside the grid")
    if buf.shape[1] != d or c_now.shape[0] != k or c_prev.shape[0] != k:
        raise ValueError("shape mismatch")
    Ff = F.reshape(m * d, k)
    if np.any(c_now):
        buf[start : start + m] += (Ff @ c_now).reshape(m, d)
    if np.any(c_prev):
        buf[start + 1 : start + m + 1] += (Ff @ c_prev).reshape(m, d)
    return h * (buf[start : start + m].reshape(m * d) @ Ff)
