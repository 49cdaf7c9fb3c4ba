"""Lower real branch of the Lambert W function."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError, DomainError

BRANCH_POINT = -1.0 / math.e
RESIDUAL_RTOL = 1e-12
MAX_ITER = 100


def lambert_w_m1(z):
    """Solve ``w * exp(w) = z`` for ``w <= -1`` with ``z`` in ``[-1/e, 0)``.

    Halley iteration started from the asymptotic guess
    ``ln(-z) - ln(-ln(-z))``, which already lies on the lower branch for
    every admissible ``z``. Accepts scalars or arrays; returns the same shape.

    Raises:
        DomainError: if any ``z`` lies outside ``[-1/e, 0)``.
        ConvergenceError: if the relative residual stays above 1e-12.
    """
    scalar = np.ndim(z) == 0
    shape = np.shape(z)
    z = np.asarray(z, dtype=float).reshape(-1)
    if np.any(~np.isfinite(z)) or np.any(z < BRANCH_POINT) or np.any(z >= 0):
        raise DomainError("lambert_w_m1 requires -1/e <= z < 0")

    lz = np.log(-z)
    w = np.minimum(lz - np.log(-lz), -1.0)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(MAX_ITER):
        ew = np.exp(w[active])
        wa = w[active]
        f = wa * ew - z[active]
        wp1 = wa + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
            step = np.where((f == 0) | (denom == 0), 0.0, f / denom)
        new = np.minimum(wa - step, -1.0)
        w[active] = new
        done = np.abs(new - wa) <= 4 * np.finfo(float).eps * np.abs(new)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break

    resid = np.abs(w * np.exp(w) - z)
    bad = resid > RESIDUAL_RTOL * np.abs(z)
    if np.any(bad):
        worst = int(np.argmax(np.where(bad, resid / np.abs(z), 0)))
        raise ConvergenceError(
            f"lambert_w_m1 did not converge for z={z[worst]!r}", [float(w[worst])]
        )
    return float(w[0]) if scalar else w.reshape(shape)
