"""Bessel-family evaluations used by the interaction model.

Thin wrappers over :mod:`scipy.special` with argument checks and the
derivative rules needed for the basis-transformation matrices.
"""

import numpy as np
from scipy import special

KINDS = ("J", "Y", "H1", "I", "K")


def bessel_eval(kind, n, x):
    """Evaluate ``J_n``, ``Y_n``, ``H1_n = J_n + i Y_n``, ``I_n`` or ``K_n`` at ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("Bessel arguments must be positive")
    n = np.asarray(n)
    if kind == "J":
        return special.jv(n, x)
    if kind == "Y":
        return special.yv(n, x)
    if kind == "H1":
        return special.hankel1(n, x)
    if kind == "I":
        return special.iv(n, x)
    if kind == "K":
        return special.kv(n, x)
    raise ValueError(f"unknown Bessel kind {kind!r}; expected one of {KINDS}")


def hankel1_prime(n, x):
    """``dH1_n/dx = (H1_{n-1} - H1_{n+1}) / 2``."""
    return 0.5 * (bessel_eval("H1", n - 1, x) - bessel_eval("H1", n + 1, x))


def kv_prime(n, x):
    """``dK_n/dx = -(K_{n-1} + K_{n+1}) / 2``."""
    return -0.5 * (bessel_eval("K", n - 1, x) + bessel_eval("K", n + 1, x))
