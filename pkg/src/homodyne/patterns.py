"""Pattern functions: the dual basis used by every projection estimator.

For ``j <= k`` and ``d = k - j`` the (complex-basis) pattern function is

    f_jk(x) = 2 \\int_0^inf r l_j^d(r^2) exp((1 - eta) r^2 / (2 eta))
                  cos(sqrt(2 / eta) r x - d pi / 2) dr

with ``l_j^d`` the normalized Laguerre function, so that
``rho_jk = E[f_jk(X) exp(i (j - k) Phi)]`` under the joint density.  For
``eta < 1`` the Gaussian factor of the integrand widens, which is the
deconvolution of the detection noise; it is integrable only for ``eta > 1/2``.

The duals of the real Hermitian basis ``e_jk`` are

* ``j == k``: ``f_jj(x)``
* ``j <  k``: ``sqrt(2) f_jk(x) cos((k - j) phi)``
* ``j >  k``: ``-sqrt(2) f_kj(x) sin((j - k) phi)``
"""
import hashlib
import json
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .fock import laguerre_functions, eval_psi
from .forward import NoiseParams

SAFETY = 1e-6


def _check(eta):
    NoiseParams(eta).require_invertible()


def radial_cutoff(k_max, eta):
    """Upper integration limit: past the Laguerre turning point plus a Gaussian tail below 1e-16."""
    s = (2 * eta - 1) / eta
    return np.sqrt(2 * (2 * k_max + 1)) + np.sqrt(2 * 40.0 / s) + 1.0


def radial_nodes(k_max, eta, x_abs_max, nodes=400):
    R = radial_cutoff(k_max, eta)
    # resolve the cosine over the widest |x| requested plus the Laguerre oscillations
    need = int(R * (np.sqrt(2 / eta) * x_abs_max + 2 * np.sqrt(2 * k_max + 1)) / np.pi * 1.5) + 40
    n = max(nodes, need)
    t, w = leggauss(n)
    return 0.5 * R * (t + 1), 0.5 * R * w


def _radial_weights(j_max, d, eta, r, w):
    """``2 r l_j^d(r^2) exp((1-eta) r^2 / (2 eta)) * w`` for ``j = 0..j_max``."""
    ell = laguerre_functions(j_max, d, r**2)
    return 2 * ell * (r * w * np.exp((1 - eta) * r**2 / (2 * eta)))


def pattern(j, k, x, eta=1.0, nodes=400):
    """Pattern function ``f_jk`` (symmetric in ``j, k``) at points ``x``."""
    _check(eta)
    if j < 0 or k < 0:
        raise ValueError("indices must be nonnegative")
    j, k = min(j, k), max(j, k)
    d = k - j
    x = np.asarray(x, dtype=float)
    r, w = radial_nodes(k, eta, float(np.max(np.abs(x), initial=0.0)), nodes)
    coef = _radial_weights(j, d, eta, r, w)[j]
    arg = np.sqrt(2 / eta) * np.multiply.outer(x, r) - 0.5 * d * np.pi
    out = np.cos(arg) @ coef
    return float(out) if out.ndim == 0 else out


def pattern_all(N, x, eta=1.0, nodes=400):
    """All ``f_jk`` for ``j, k < N`` at points ``x``; shape ``(N, N, len(x))``, symmetric."""
    _check(eta)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r, w = radial_nodes(N - 1, eta, float(np.max(np.abs(x), initial=0.0)), nodes)
    arg = np.sqrt(2 / eta) * np.outer(x, r)
    trig = [np.cos(arg), np.sin(arg), -np.cos(arg), -np.sin(arg)]  # cos(a - d pi/2) for d mod 4
    out = np.empty((N, N, x.size))
    for d in range(N):
        coef = _radial_weights(N - 1 - d, d, eta, r, w)
        vals = trig[d % 4] @ coef.T
        for j in range(N - d):
            out[j, j + d] = vals[:, j]
            out[j + d, j] = vals[:, j]
    return out


def real_dual_from(fjk, j, k, phi):
    """Combine a complex-basis pattern value with the phase into the real dual."""
    if j == k:
        return fjk * np.ones_like(phi)
    if j < k:
        return np.sqrt(2) * fjk * np.cos((k - j) * phi)
    return -np.sqrt(2) * fjk * np.sin((j - k) * phi)


def real_dual(j, k, x, phi, eta=1.0):
    """Dual ``f~_jk(x, phi)`` of the real basis element ``e_jk``."""
    return real_dual_from(pattern(j, k, x, eta), j, k, np.asarray(phi, dtype=float))


def _refined_extreme(grid, vals, sign):
    """Largest ``sign * vals`` with a three-point parabolic correction."""
    v = sign * vals
    i = int(np.argmax(v))
    best = v[i]
    if 0 < i < len(v) - 1:
        a, b, c = v[i - 1], v[i], v[i + 1]
        den = a - 2 * b + c
        if den < 0:
            best = b - 0.125 * (a - c) ** 2 / den
    return sign * best


def noisy_product(l, m, y, eta, nodes=96):
    """``psi_l psi_m`` pushed through the detection noise, as a density in ``y``."""
    y = np.asarray(y, dtype=float)
    if eta == 1.0:
        psi = eval_psi(max(l, m), y)
        return psi[l] * psi[m]
    t, w = np.polynomial.hermite.hermgauss(nodes)
    x = y[..., None] / np.sqrt(eta) + t * np.sqrt((1 - eta) / eta)
    psi = eval_psi(max(l, m), x)
    return (psi[l] * psi[m]) @ w / np.sqrt(np.pi * eta)


def duality_error(values, grid, eta, n_cert):
    """``max |<T(E_{l,l+d}), f_{j,j+d}> - delta_lj|`` over indices below ``n_cert``.

    After the phase integral only pairs with equal offset ``d`` interact, so
    each check is a 1-D integral on the table grid.
    """
    h = grid[1] - grid[0]
    w = np.full(grid.size, h)
    w[[0, -1]] *= 0.5
    prods = {}
    err = 0.0
    for d in range(n_cert):
        for l in range(n_cert - d):
            prods[l, d] = noisy_product(l, l + d, grid, eta) * w
        for j in range(n_cert - d):
            f = values[j, j + d]
            for l in range(n_cert - d):
                err = max(err, abs(prods[l, d] @ f - (l == j)))
    return err


@dataclass
class PatternTable:
    """Pattern functions tabulated on a uniform grid, with sup-norms and ranges.

    ``sup_norm[j, k]`` and ``range_[j, k]`` refer to the complex-basis
    ``f_jk``; :meth:`real_sup` and :meth:`real_range` give the corresponding
    quantities for the real duals over ``R x [0, pi)``.
    """

    N: int
    eta: float
    grid: np.ndarray
    values: np.ndarray
    sup_norm: np.ndarray
    f_max: np.ndarray
    f_min: np.ndarray
    certificate: float = float("nan")

    @property
    def range_(self):
        return self.f_max - self.f_min

    def real_sup(self, j, k):
        return self.sup_norm[j, k] * (1.0 if j == k else np.sqrt(2))

    def real_range(self, j, k):
        if j == k:
            return self.f_max[j, j] - self.f_min[j, j]
        return 2 * np.sqrt(2) * self.sup_norm[j, k]

    def grid_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.grid).tobytes()).hexdigest()[:16]

    def _spline(self):
        if getattr(self, "_cs", None) is None:
            iu = np.triu_indices(self.N)
            self._iu = iu
            self._cs = CubicSpline(self.grid, self.values[iu].T, axis=0)
        return self._cs

    def evaluate(self, x):
        """All ``f_jk(x)`` at sample points; shape ``(N, N, len(x))``.

        Points inside the grid are spline-interpolated; points outside fall
        back to direct quadrature.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((self.N, self.N, x.size))
        inside = (x >= self.grid[0]) & (x <= self.grid[-1])
        cs = self._spline()
        vals = cs(x[inside])
        tri = np.empty((len(self._iu[0]), x.size))
        tri[:, inside] = vals.T
        if np.any(~inside):
            far = pattern_all(self.N, x[~inside], self.eta)
            tri[:, ~inside] = far[self._iu]
        out[self._iu] = tri
        out[self._iu[1], self._iu[0]] = tri
        return out

    def real_duals(self, x, phi):
        """Real duals ``f~_jk(x_l, phi_l)`` for all ``j, k < N``; shape ``(N, N, n)``."""
        f = self.evaluate(x)
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        N = self.N
        out = np.empty_like(f)
        for j in range(N):
            out[j, j] = f[j, j]
            for k in range(j + 1, N):
                out[j, k] = np.sqrt(2) * f[j, k] * np.cos((k - j) * phi)
                out[k, j] = -np.sqrt(2) * f[j, k] * np.sin((k - j) * phi)
        return out

    def to_json(self):
        return json.dumps({
            "N": self.N, "eta": self.eta, "grid_hash": self.grid_hash(),
            "grid": [float(self.grid[0]), float(self.grid[-1]), int(self.grid.size)],
            "values": self.values.tolist(), "certificate": self.certificate,
        })

    @classmethod
    def from_json(cls, text, n_cert=None, tol=1e-5):
        """Rebuild a cached table; the duality certificate is recomputed and checked."""
        obj = json.loads(text)
        lo, hi, size = obj["grid"]
        grid = np.linspace(lo, hi, size)
        table = _finish(int(obj["N"]), float(obj["eta"]), grid, np.asarray(obj["values"]),
                        n_cert=n_cert)
        if table.grid_hash() != obj["grid_hash"]:
            raise ValueError("grid hash mismatch in cached pattern table")
        if table.certificate > tol:
            raise ValueError(f"cached table fails duality check ({table.certificate:.2e})")
        return table


def _finish(N, eta, grid, values, n_cert=None):
    sup = np.empty((N, N))
    fmax = np.empty((N, N))
    fmin = np.empty((N, N))
    for j in range(N):
        for k in range(j, N):
            hi = _refined_extreme(grid, values[j, k], 1)
            lo = _refined_extreme(grid, values[j, k], -1)
            fmax[j, k] = fmax[k, j] = hi + SAFETY * abs(hi)
            fmin[j, k] = fmin[k, j] = lo - SAFETY * abs(lo)
            sup[j, k] = sup[k, j] = max(abs(hi), abs(lo)) * (1 + SAFETY)
    n_cert = min(N, 6) if n_cert is None else min(n_cert, N)
    cert = duality_error(values, grid, eta, n_cert) if n_cert > 0 else float("nan")
    return PatternTable(N, eta, grid, values, sup, fmax, fmin, cert)


def default_half_width(N):
    return max(10.0, np.sqrt(2 * N) + 5.0)


def build_table(N, eta=1.0, half_width=None, dx=0.01, n_cert=None):
    """Tabulate ``f_jk`` for ``j, k < N`` on ``[-L, L]`` with spacing ``dx``."""
    if not 1 <= N <= 64:
        raise ValueError("N must lie in [1, 64]")
    _check(eta)
    L = default_half_width(N) if half_width is None else half_width
    grid = np.linspace(-L, L, int(round(2 * L / dx)) + 1)
    return _finish(N, eta, grid, pattern_all(N, grid, eta), n_cert=n_cert)


@lru_cache(maxsize=16)
def cached_table(N, eta=1.0):
    """Memoized :func:`build_table` with default grid settings."""
    return build_table(N, eta)
