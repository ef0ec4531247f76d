"""Hermite functions and Laguerre polynomials.

Everything here is evaluated by three-term recurrences on *normalized*
quantities, so nothing overflows for indices up to a few hundred.
"""
import numpy as np
from scipy.special import gammaln

PSI_BOUND = 1.0865  # Cramer: |psi_k(x)| <= pi^(-1/4) for every k, x
_RESCALE = 1e150


def eval_psi(k_max, x):
    """Return ``psi_0(x) .. psi_{k_max}(x)`` as an array of shape ``(k_max + 1,) + x.shape``.

    ``psi_k(x) = H_k(x) exp(-x^2 / 2)`` with ``||psi_k||_2 = 1``.  The
    Gaussian factor is carried in log form and folded in at the end, which
    keeps the recurrence finite for large ``|x|``.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    out = np.empty((k_max + 1,) + x.shape)
    log_scale = -0.5 * x**2
    prev = np.zeros_like(x)
    cur = np.full_like(x, np.pi**-0.25)
    out[0] = cur
    for k in range(k_max):
        nxt = x * np.sqrt(2.0 / (k + 1)) * cur - np.sqrt(k / (k + 1)) * prev
        big = np.abs(nxt) > _RESCALE
        if np.any(big):
            # renormalize diverging columns; earlier rows keep their own scale
            nxt = np.where(big, nxt / _RESCALE, nxt)
            cur = np.where(big, cur / _RESCALE, cur)
            out[: k + 1] = np.where(big, out[: k + 1] / _RESCALE, out[: k + 1])
            log_scale = log_scale + np.where(big, np.log(_RESCALE), 0.0)
        prev, cur = cur, nxt
        out[k + 1] = cur
    with np.errstate(under="ignore"):
        return out * np.exp(log_scale)


def eval_psi_row(k_max, x):
    """Basis row ``[psi_0(x), ..., psi_{k_max}(x)]`` at a single point."""
    if not np.isfinite(x):
        raise ValueError("x must be finite")
    return eval_psi(k_max, float(x))


def eval_laguerre(j, d, t):
    """Generalized Laguerre polynomial ``L_j^d(t)``.

    Convention: orthogonal for the weight ``exp(-t) t^d`` on the half line,
    ``L_0^d = 1`` and ``L_1^d(t) = 1 + d - t``.
    """
    if j < 0 or d < 0:
        raise ValueError("j and d must be nonnegative")
    t = np.asarray(t, dtype=float)
    prev = np.zeros_like(t)
    cur = np.ones_like(t)
    for m in range(j):
        prev, cur = cur, ((2 * m + 1 + d - t) * cur - (m + d) * prev) / (m + 1)
    return cur if cur.ndim else float(cur)


def laguerre_functions(j_max, d, u):
    """Normalized Laguerre functions for ``j = 0 .. j_max`` at ``u >= 0``.

    ``l_j^d(u) = sqrt(j!/(j+d)!) u^(d/2) exp(-u/2) L_j^d(u)``; these are the
    Fock matrix elements of a displacement and stay bounded by one.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty((j_max + 1,) + u.shape)
    if d == 0:
        log0 = -0.5 * u
    else:
        with np.errstate(divide="ignore"):
            log0 = 0.5 * d * np.log(u) - 0.5 * u - 0.5 * gammaln(d + 1)
    prev = np.zeros_like(u)
    cur = np.exp(log0)
    out[0] = cur
    for m in range(j_max):
        nxt = ((2 * m + 1 + d - u) * cur - np.sqrt(m * (m + d)) * prev) / np.sqrt((m + 1) * (m + 1 + d))
        prev, cur = cur, nxt
        out[m + 1] = cur
    return out


def hermite_gauss(n):
    """Gauss-Hermite nodes/weights for integrals of ``g(x)`` (weight already divided out)."""
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    return nodes, weights * np.exp(nodes**2)
