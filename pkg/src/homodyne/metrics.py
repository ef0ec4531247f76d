"""Distances between states and their homodyne densities, and a Monte-Carlo risk harness."""
import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from numpy.polynomial.legendre import leggauss

from .forward import density_pdf
from .states import FockDensityMatrix

NORM_TOL = 1e-4


def _mat(rho):
    return rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)


def _pad_pair(a, b):
    n = max(a.shape[0], b.shape[0])
    out = []
    for m in (a, b):
        z = np.zeros((n, n), dtype=complex)
        z[: m.shape[0], : m.shape[0]] = m
        out.append(z)
    return out


def l2_distance(rho, tau, pad=False):
    """Frobenius distance; ``pad=True`` embeds the smaller matrix in the larger space."""
    a, b = _mat(rho), _mat(tau)
    if a.shape != b.shape:
        if not pad:
            raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
        a, b = _pad_pair(a, b)
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class QuadratureSpec:
    n_phi: int = 64
    n_x: int = 512
    x_max: float | None = None  # default: sqrt(2N) + 6 for the larger state

    def grid(self, N):
        x_max = self.x_max if self.x_max is not None else np.sqrt(2 * N) + 6
        x = np.linspace(-x_max, x_max, self.n_x)
        t, w = leggauss(self.n_phi)
        phi = 0.5 * np.pi * (t + 1)
        wx = np.full(self.n_x, x[1] - x[0])
        wx[[0, -1]] *= 0.5
        return x, phi, np.outer(wx, 0.5 * np.pi * w)


def _densities(rho, tau, spec):
    spec = spec or QuadratureSpec()
    a, b = _mat(rho), _mat(tau)
    x, phi, w = spec.grid(max(a.shape[0], b.shape[0]))
    X, PHI = np.meshgrid(x, phi, indexing="ij")
    p, q = density_pdf(a, X, PHI), density_pdf(b, X, PHI)
    for name, d in (("first", p), ("second", q)):
        mass = float((d * w).sum())
        if abs(mass - 1) > NORM_TOL:
            raise ArithmeticError(f"{name} density integrates to {mass:.6f} on the quadrature grid")
    return p, q, w


def density_distances(rho, tau, spec=None):
    """Hellinger, Kullback and L1 distances from a single pair of density evaluations."""
    p, q, w = _densities(rho, tau, spec)
    pos = p > 0
    if np.any(pos & (q <= 0)):
        kl = float("inf")
    else:
        r = np.where(pos, p * np.log(np.where(pos, p, 1.0) / np.where(pos, q, 1.0)), 0.0)
        kl = float(max((r * w).sum(), 0.0))
    return {"hellinger_sq": float(0.5 * ((np.sqrt(p) - np.sqrt(q)) ** 2 * w).sum()),
            "kullback": kl, "l1": float((np.abs(p - q) * w).sum())}


def hellinger_sq(rho, tau, spec=None):
    """``h^2 = 1/2 int (sqrt p - sqrt q)^2`` over ``R x [0, pi)``."""
    p, q, w = _densities(rho, tau, spec)
    return float(0.5 * ((np.sqrt(p) - np.sqrt(q)) ** 2 * w).sum())


def kullback(rho, tau, spec=None):
    """``int p ln(p/q)``; ``inf`` when ``q`` vanishes where ``p`` does not."""
    return density_distances(rho, tau, spec)["kullback"]


def l1_density(rho, tau, spec=None):
    p, q, w = _densities(rho, tau, spec)
    return float((np.abs(p - q) * w).sum())


@dataclass
class EstimatorSpec:
    """Which estimator a risk run applies; ``run(data)`` returns ``(matrix, report)``."""
    kind: str = "projection"
    penalty: object = None  # PenaltyConfig
    N_range: tuple = (1, 2, 3, 4)
    mle: object = None  # MleConfig
    use_raw: bool = False  # projection only: measure loss on the pre-physicalize matrix
    table: object = None

    def run(self, data):
        if self.kind == "projection":
            from .patterns import cached_table
            from .projection import PenaltyConfig, estimate_projection
            cfg = self.penalty or PenaltyConfig()
            table = self.table or cached_table(cfg.N_max, data.eta)
            est, rep = estimate_projection(data, cfg, table)
            if self.use_raw:
                return rep.raw, rep
            if est is None:
                raise ArithmeticError("projection estimate could not be physicalized")
            return est, rep
        if self.kind == "mle":
            from .mle import MleConfig, mle_select
            _, fit, rep = mle_select(data, self.N_range, self.mle or MleConfig())
            return fit.rho_hat, rep
        raise ValueError(f"unknown estimator kind {self.kind!r}")

    def describe(self):
        d = {"kind": self.kind, "use_raw": self.use_raw, "N_range": list(self.N_range)}
        if self.penalty is not None:
            d["penalty"] = asdict(self.penalty)
        if self.mle is not None:
            d["mle"] = asdict(self.mle)
        return d


@dataclass
class RiskReport:
    replicates: int
    losses: np.ndarray
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)

    @property
    def ok(self):
        return self.losses[np.isfinite(self.losses)]

    @property
    def mean(self):
        return float(self.ok.mean()) if self.ok.size else float("nan")

    @property
    def median(self):
        return float(np.median(self.ok)) if self.ok.size else float("nan")

    @property
    def se(self):
        m = self.ok.size
        return float(self.ok.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")

    def to_json(self):
        return json.dumps({"replicates": self.replicates, "losses": [None if not np.isfinite(v) else float(v)
                                                                     for v in self.losses],
                           "failures": self.failures, "mean": self.mean, "median": self.median,
                           "se": self.se, "config": self.config}, indent=2)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "loss"])
        for r, v in enumerate(self.losses):
            w.writerow([r, repr(float(v))])
        return buf.getvalue()


LOSSES = {
    "l2sq": lambda est, rho: l2_distance(est, rho, pad=True) ** 2,
    "l2": lambda est, rho: l2_distance(est, rho, pad=True),
    "hellinger_sq": lambda est, rho: hellinger_sq(*_pad_pair(_mat(est), _mat(rho))),
}


def replicate_seed(seed, r):
    """Seed for replicate ``r``; depends only on ``(seed, r)`` so prefixes are stable."""
    return int(np.random.SeedSequence(seed, spawn_key=(r,)).generate_state(1, dtype=np.uint64)[0])


def risk_monte_carlo(true_state, estimator, n, reps, seed=0, eta=1.0, loss="l2sq", threads=None,
                     keep_reports=False):
    """Run ``estimator`` on ``reps`` independent datasets and collect losses.

    Failed replicates are recorded with a ``nan`` loss and excluded from the statistics.
    """
    from .sampling import sample_tomography

    if reps < 1:
        raise ValueError("reps must be at least 1")
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    rho = true_state if isinstance(true_state, FockDensityMatrix) else FockDensityMatrix(true_state)

    def one(r):
        data = sample_tomography(rho, n, eta=eta, seed=replicate_seed(seed, r), threads=1)
        try:
            est, rep = estimator.run(data)
            return LOSSES[loss](est, rho), None, rep
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return float("nan"), f"replicate {r}: {exc}", None

    with ThreadPoolExecutor(max_workers=threads or 1) as pool:
        out = list(pool.map(one, range(reps)))
    config = {"n": n, "reps": reps, "seed": seed, "eta": eta, "loss": loss,
              "estimator": estimator.describe(), "state_dim": rho.dim}
    return RiskReport(
        replicates=reps, losses=np.array([o[0] for o in out]),
        failures=[o[1] for o in out if o[1] is not None], config=config,
        reports=[o[2] for o in out] if keep_reports else [],
    )
