"""Penalized projection estimators in the real Fock basis.

Both the empirical contrast ``gamma_n(rho_m) = -sum_{i in m} rhohat_i^2`` and
the penalties are sums over indices, so the penalized argmin over all
subsets reduces to keeping index ``i`` iff ``rhohat_i^2 > pen_i``.
"""
import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .states import from_real_coeffs, physicalize, to_real_coeffs, dump_matrix

CHUNK = 1 << 15


@dataclass
class PenaltyConfig:
    eps: float = 1.0
    delta: float = 0.5
    N_max: int = 8
    kappa: float = 2.0
    penalty_kind: str = "hoeffding"
    weight_offset: float | None = None  # None: choose so that sigma == 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.penalty_kind not in ("hoeffding", "bernstein"):
            raise ValueError(f"unknown penalty kind {self.penalty_kind!r}")

    def weights(self):
        """Weights ``2 ln(2 + j + k) + c`` on ``j, k < N_max`` and ``sigma = sum exp(-w)``."""
        j, k = np.indices((self.N_max, self.N_max))
        base = 2 * np.log(2.0 + j + k)
        c = np.log(np.exp(-base).sum()) if self.weight_offset is None else self.weight_offset
        w = base + c
        return w, float(np.exp(-w).sum())


def _table_eta_check(data, table):
    if not np.isclose(data.eta, table.eta):
        raise ValueError(f"pattern table built for eta={table.eta}, data has eta={data.eta}")


def empirical_moments(data, table, N=None):
    """Sample means of ``f~_jk`` and of ``f~_jk^2`` for ``j, k < N``."""
    _table_eta_check(data, table)
    N = table.N if N is None else N
    s1 = np.zeros((N, N))
    s2 = np.zeros((N, N))
    for s in range(0, data.n, CHUNK):
        f = table.real_duals(data.x[s:s + CHUNK], data.phi[s:s + CHUNK])[:N, :N]
        s1 += f.sum(axis=-1)
        s2 += (f**2).sum(axis=-1)
    n = max(data.n, 1)
    return s1 / n, s2 / n


def empirical_coeff(data, j, k, table):
    """Sample mean of ``f~_jk`` over the dataset."""
    _table_eta_check(data, table)
    f = table.real_duals(data.x, data.phi)[j, k]
    return float(f.mean())


def hoeffding_threshold(range_i, x_i, eps, n, notes=None):
    """Threshold ``sqrt((1+eps)(ln M + x/2)) M / sqrt(n)`` with ``M`` the range of the dual.

    ``ln M`` is floored at zero when ``M <= 1``; a note is appended to ``notes``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    log_m = np.log(range_i)
    if range_i <= 1:
        msg = f"range {range_i:.4g} <= 1: ln M floored at 0"
        if notes is not None:
            notes.append(msg)
        else:
            warnings.warn(msg)
        log_m = 0.0
    return float(np.sqrt((1 + eps) * (log_m + 0.5 * x_i)) * range_i / np.sqrt(n))


def bernstein_terms(second_moment, sup, y_i, eps, delta, n, factor=1.0):
    """Data-driven penalty ``pen_i`` and its weight ``x_i = 2 ln sup + y_i``.

    ``factor`` multiplies the whole penalty (the calibration variant uses 2).
    """
    x_i = 2 * np.log(sup) + y_i
    x_pos = max(x_i, 0.0)
    inner = 2 * x_pos / (1 - delta) * (second_moment + sup**2 * (1 / 3 + 1 / delta) * x_pos / n)
    pen = factor * (1 + eps) / n * (np.sqrt(inner) + sup * x_pos / (3 * np.sqrt(n))) ** 2
    return float(pen), float(x_i)


def bernstein_penalty(data, j, k, table, cfg):
    """``pen_i`` for a single index (``inf`` when the index is inadmissible, ``x_i > n``)."""
    _, m2 = empirical_moments(data, table, N=max(j, k) + 1)
    w, _ = PenaltyConfig(**{**asdict(cfg), "N_max": max(cfg.N_max, j + 1, k + 1)}).weights()
    pen, x_i = bernstein_terms(m2[j, k], table.real_sup(j, k), w[j, k], cfg.eps, cfg.delta, data.n)
    return pen if x_i <= data.n else float("inf")


def penalties(data, cfg, table, second_moments=None):
    """Per-index penalties on ``j, k < N_max`` plus the admissibility mask."""
    N = cfg.N_max
    if table.N < N:
        raise ValueError(f"pattern table has N={table.N} < N_max={N}")
    w, _ = cfg.weights()
    pen = np.empty((N, N))
    admissible = np.ones((N, N), dtype=bool)
    notes = []
    for j in range(N):
        for k in range(N):
            if cfg.penalty_kind == "hoeffding":
                pen[j, k] = hoeffding_threshold(table.real_range(j, k), w[j, k], cfg.eps, data.n, notes) ** 2
            else:
                p, x_i = bernstein_terms(second_moments[j, k], table.real_sup(j, k), w[j, k],
                                         cfg.eps, cfg.delta, data.n)
                pen[j, k] = p
                if x_i > data.n:
                    admissible[j, k] = False
    return pen, admissible, notes


def select_indices(coeffs, pen, admissible=None):
    """Keep ``i`` iff ``coeffs_i^2 > pen_i`` (ties dropped) and ``i`` is admissible."""
    keep = coeffs**2 > pen
    if admissible is not None:
        keep &= admissible
    return keep


def penalized_criterion(coeffs, pen, subset):
    """``gamma_n(rho_m) + pen(m)`` for an explicit boolean mask ``subset``."""
    return float(np.sum((pen - coeffs**2)[subset]))


@dataclass
class ProjectionReport:
    kept: list
    coeffs: np.ndarray
    penalties: np.ndarray
    admissible: np.ndarray
    sigma: float
    raw: np.ndarray
    physical: np.ndarray | None
    config: dict
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "kind": "projection",
            "config": self.config,
            "kept": [list(map(int, p)) for p in self.kept],
            "coefficients": self.coeffs.tolist(),
            "penalties": self.penalties.tolist(),
            "thresholds": np.sqrt(self.penalties).tolist(),
            "excluded": [[int(j), int(k)] for j, k in zip(*np.nonzero(~self.admissible))],
            "sigma": self.sigma,
            "raw": json.loads(dump_matrix(self.raw)),
            "physical": None if self.physical is None else json.loads(dump_matrix(self.physical)),
            "notes": self.notes,
        }, indent=2)


def estimate_projection(data, cfg, table):
    """Hard-thresholded projection estimate and its report.

    The raw estimate (thresholded real coefficients mapped back to a
    Hermitian matrix) is kept alongside the physicalized density matrix.
    """
    coeffs, m2 = empirical_moments(data, table, N=cfg.N_max)
    pen, admissible, notes = penalties(data, cfg, table, m2)
    keep = select_indices(coeffs, pen, admissible)
    raw = from_real_coeffs(np.where(keep, coeffs, 0.0))
    try:
        phys = physicalize(raw)
    except ValueError as exc:
        phys = None
        notes.append(f"physicalize failed: {exc}")
    _, sigma = cfg.weights()
    report = ProjectionReport(
        kept=[(int(j), int(k)) for j, k in zip(*np.nonzero(keep))], coeffs=coeffs, penalties=pen,
        admissible=admissible, sigma=sigma, raw=raw, physical=None if phys is None else phys.entries,
        config=asdict(cfg), notes=notes,
    )
    return phys, report


def truncation_bias(rho, N):
    """Squared L2 distance from ``rho`` to the span of ``e_jk``, ``j, k < N``."""
    v = to_real_coeffs(rho)
    return float((v**2).sum() - (v[:N, :N] ** 2).sum())


def oracle_bound(rho, pen, cfg, n, sigma=None, remainder=None):
    """Right side of the oracle inequality minimized over truncation models.

    ``inf_N (1 + 2/eps) d^2(rho, m_N) + 2 pen(m_N) + remainder`` with
    ``remainder = (1 + eps) sigma / n`` by default.
    """
    if sigma is None:
        _, sigma = cfg.weights()
    if remainder is None:
        remainder = (1 + cfg.eps) * sigma / n
    best = np.inf
    for N in range(1, cfg.N_max + 1):
        val = (1 + 2 / cfg.eps) * truncation_bias(rho, N) + 2 * pen[:N, :N].sum()
        best = min(best, val)
    return float(best + remainder)
