"""Seedable generation of homodyne and photocounter-calibration samples.

Randomness comes from one root seed split into fixed-size blocks: block ``b``
draws from ``SeedSequence(seed, spawn_key=(b,))``.  The output therefore does
not depend on how blocks are scheduled across threads.
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson

from .fock import eval_psi
from .forward import NoiseParams
from .states import FockDensityMatrix

BLOCK = 1 << 16
GRID = 4096
REFINE = 8
NORM_TOL = 1e-6


def block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


def _blocks(n):
    return [(b, b * BLOCK, min(n, (b + 1) * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]


def _run_blocks(fn, n, threads):
    parts = _blocks(n)
    if threads and threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, parts))
    return [fn(p) for p in parts]


@dataclass
class TomographyDataset:
    x: np.ndarray
    phi: np.ndarray
    eta: float = 1.0
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.x.shape != self.phi.shape:
            raise ValueError("x and phi must have the same length")
        if np.any(self.phi < 0) or np.any(self.phi >= np.pi):
            raise ValueError("phases must lie in [0, pi)")

    @property
    def n(self):
        return self.x.size

    def metadata(self):
        return {"kind": "tomography", "n": self.n, "eta": self.eta, "seed": self.seed, "source": self.source}

    def to_csv(self, path):
        _write_csv(path, "phi,x", self.phi, self.x, self.metadata())

    @classmethod
    def from_csv(cls, path):
        cols, meta = _read_csv(path, "phi,x")
        return cls(x=cols[:, 1], phi=cols[:, 0], eta=meta.get("eta", 1.0),
                   seed=meta.get("seed", 0), source=meta.get("source", ""))


@dataclass
class CalibDataset:
    i: np.ndarray
    x: np.ndarray
    seed: int = 0
    b2: np.ndarray = field(default_factory=lambda: np.ones(1))
    source: str = ""
    eta: float = 1.0

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)

    @property
    def n(self):
        return self.x.size

    def metadata(self):
        return {"kind": "calibration", "n": self.n, "seed": self.seed,
                "b2": [float(v) for v in self.b2], "source": self.source, "eta": self.eta}

    def to_csv(self, path):
        _write_csv(path, "i,x", self.i, self.x, self.metadata(), int_first=True)

    @classmethod
    def from_csv(cls, path):
        cols, meta = _read_csv(path, "i,x")
        return cls(i=cols[:, 0].astype(np.int64), x=cols[:, 1], seed=meta.get("seed", 0),
                   b2=np.asarray(meta.get("b2", [1.0])), source=meta.get("source", ""),
                   eta=meta.get("eta", 1.0))


def _write_csv(path, header, first, second, meta, int_first=False):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fmt = "{:d},{:.17g}\n" if int_first else "{:.17g},{:.17g}\n"
        fh.writelines(fmt.format(a, b) for a, b in zip(first.tolist(), second.tolist()))
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _read_csv(path, header):
    with open(path) as fh:
        first = fh.readline().strip()
        if first != header:
            raise ValueError(f"expected header {header!r}, found {first!r}")
        cols = np.loadtxt(fh, delimiter=",", ndmin=2)
    try:
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    return cols.reshape(-1, 2), meta


def x_grid(N, size=GRID):
    x_max = np.sqrt(2 * N) + 5.0
    return np.linspace(-x_max, x_max, size)


@lru_cache(maxsize=8)
def _cumulative_table(N, lo, hi, size):
    fine = np.linspace(lo, hi, (size - 1) * REFINE + 1)
    psi = eval_psi(N - 1, fine)
    prod = psi[:, None, :] * psi[None, :, :]
    cum = cumulative_simpson(prod, dx=fine[1] - fine[0], axis=-1, initial=0.0)[..., ::REFINE]
    cum.setflags(write=False)
    return cum


def _cumulative_products(N, grid):
    """``\\int_{-x_max}^{x} psi_j psi_k`` on ``grid`` for all ``j, k < N`` (read-only, cached)."""
    return _cumulative_table(N, float(grid[0]), float(grid[-1]), grid.size)


class PhaseCDF:
    """``C(x | phi) = sum_d A_d(x) exp(-i d phi)`` tabulated on an x-grid.

    Evaluating a handful of harmonics per lookup keeps the per-sample CDF
    exact in ``phi`` while the x-direction uses the tabulated grid.
    """

    def __init__(self, rho, size=GRID):
        m = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
        N = m.shape[0]
        self.grid = x_grid(N, size)
        cum = _cumulative_products(N, self.grid)
        # harmonic d >= 0 collects rho_{j, j+d}-type terms; negative d are conjugates
        self.harm = np.zeros((N, self.grid.size), dtype=complex)
        for d in range(N):
            for j in range(N - d):
                if d == 0:
                    self.harm[0] += m[j, j].real * cum[j, j]
                else:
                    # rho_{j+d, j} exp(-i d phi) + conj: coefficient of exp(-i d phi)
                    self.harm[d] += 2 * m[j + d, j] * cum[j + d, j]
        end = self.harm[:, -1]
        err = abs(end[0].real - 1) + np.abs(end[1:]).sum()
        if err > NORM_TOL:
            raise ArithmeticError(f"tabulated CDF misses unit mass by {err:.2e}")

    def cdf_at(self, idx, phi):
        d = np.arange(self.harm.shape[0])
        rot = np.exp(-1j * np.outer(phi, d))
        return np.einsum("nd,dn->n", rot, self.harm[:, idx]).real

    def invert(self, u, phi):
        lo = np.zeros(u.size, dtype=np.int64)
        hi = np.full(u.size, self.grid.size - 1, dtype=np.int64)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            below = self.cdf_at(mid, phi) <= u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        c_lo = self.cdf_at(lo, phi)
        c_hi = self.cdf_at(hi, phi)
        frac = np.clip((u - c_lo) / np.where(c_hi > c_lo, c_hi - c_lo, 1.0), 0.0, 1.0)
        return self.grid[lo] + frac * (self.grid[hi] - self.grid[lo])


def add_detection_noise(x, eta, rng):
    if eta == 1.0:
        return x
    return np.sqrt(eta) * x + np.sqrt((1 - eta) / 2) * rng.standard_normal(x.size)


def sample_tomography(rho, n, eta=1.0, seed=0, source="", threads=None):
    """Draw ``n`` homodyne samples ``(x, phi)`` from ``rho`` at efficiency ``eta``."""
    if n < 1:
        raise ValueError("n must be positive")
    NoiseParams(eta)
    cdf = PhaseCDF(rho)

    def block(part):
        b, start, stop = part
        rng = block_rng(seed, b)
        m = stop - start
        phi = np.pi * rng.random(m)
        u = rng.random(m)
        x = cdf.invert(u, phi)
        return phi, add_detection_noise(x, eta, rng)

    parts = _run_blocks(block, n, threads)
    phi = np.concatenate([p[0] for p in parts])
    x = np.concatenate([p[1] for p in parts])
    phi = np.where(phi >= np.pi, 0.0, phi)
    return TomographyDataset(x=x, phi=phi, eta=eta, seed=seed, source=source)


def sample_photocounter(P, b2, n, seed=0, eta=1.0, source="", threads=None):
    """Draw ``(i, x)``: ``k ~ b2``, then ``i ~ P[:, k]`` and ``x ~ psi_k^2``."""
    P = np.asarray(getattr(P, "P", P), dtype=float)
    b2 = np.asarray(b2, dtype=float)
    if abs(b2.sum() - 1) > 1e-10 or np.any(b2 < 0):
        raise ValueError("source weights b_k^2 must be nonnegative and sum to one")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=0) - 1) > 1e-10):
        raise ValueError("photocounter columns must be probability vectors")
    K = b2.size
    if P.shape[1] < K:
        raise ValueError("photocounter has fewer columns than source levels")
    NoiseParams(eta)
    grid = x_grid(K)
    cum = _cumulative_products(K, grid)
    diag = np.stack([cum[k, k] for k in range(K)])
    if np.abs(diag[:, -1] - 1).max() > NORM_TOL:
        raise ArithmeticError("Fock CDF tables are not normalized")
    col_cdf = np.cumsum(P[:, :K], axis=0)

    def block(part):
        b, start, stop = part
        rng = block_rng(seed, b)
        m = stop - start
        k = rng.choice(K, size=m, p=b2)
        ui = rng.random(m)
        i = np.minimum((ui[:, None] > col_cdf[:, k].T).sum(axis=1), P.shape[0] - 1)
        u = rng.random(m)
        lo = np.zeros(m, dtype=np.int64)
        hi = np.full(m, grid.size - 1, dtype=np.int64)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            below = diag[k, mid] <= u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        c_lo, c_hi = diag[k, lo], diag[k, hi]
        frac = np.clip((u - c_lo) / np.where(c_hi > c_lo, c_hi - c_lo, 1.0), 0.0, 1.0)
        x = grid[lo] + frac * (grid[hi] - grid[lo])
        return i, add_detection_noise(x, eta, rng)

    parts = _run_blocks(block, n, threads)
    return CalibDataset(i=np.concatenate([p[0] for p in parts]), x=np.concatenate([p[1] for p in parts]),
                        seed=seed, b2=b2, source=source, eta=eta)
