"""Calibration of the diagonal of a photon-counter POVM.

A calibration sample is a pair ``(l, x)``: the counter reading and a
homodyne measurement on the same Fock-diagonal source with level weights
``b_k^2``. Weighted entries ``E_i^k = a_k P_i^k`` are estimated either by
hard-thresholded projections or by penalized maximum likelihood.
"""
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import comb

from .fock import eval_psi
from .forward import noisy_pdf
from .projection import bernstein_terms, hoeffding_threshold, select_indices
from .states import fock_state, dump_matrix

STOCH_TOL = 1e-10


@dataclass
class PhotocounterMatrix:
    P: np.ndarray
    raw: bool = False

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if not self.raw:
            if self.P.min() < -STOCH_TOL or self.P.max() > 1 + STOCH_TOL:
                raise ValueError("photocounter entries must lie in [0, 1]")
            if np.abs(self.P.sum(axis=0) - 1).max() > STOCH_TOL:
                raise ValueError("photocounter columns must sum to one")

    @property
    def I_dim(self):
        return self.P.shape[0]

    @property
    def K_dim(self):
        return self.P.shape[1]


def ideal_counter(dim):
    return PhotocounterMatrix(np.eye(dim))


def binomial_counter(eff, dim):
    """``P_i^k = C(k, i) eff^i (1 - eff)^(k - i)`` for ``i, k < dim``."""
    i, k = np.indices((dim, dim))
    P = np.where(i <= k, comb(k, i) * eff**i * (1 - eff) ** np.clip(k - i, 0, None), 0.0)
    return PhotocounterMatrix(P)


def geometric_b2(K_max, xi=0.5):
    """Source weights ``b_k^2`` proportional to ``xi^k`` on ``k <= K_max``."""
    w = xi ** np.arange(K_max + 1, dtype=float)
    return w / w.sum()


@dataclass
class CalibConfig:
    b2: np.ndarray
    distance: str = "d2"
    a: np.ndarray | None = None
    eps: float = 1.0
    delta: float = 0.5
    I_max: int = 8
    K_max: int = 8
    kappa: float = 2.0
    weight_offset: float | None = None
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self):
        self.b2 = np.asarray(self.b2, dtype=float)
        if np.any(self.b2 < 0) or abs(self.b2.sum() - 1) > 1e-10:
            raise ValueError("b2 must be nonnegative and sum to one")
        if self.distance not in ("d1", "d2"):
            raise ValueError("distance must be 'd1' or 'd2'")
        if self.a is None:
            self.a = np.sqrt(self.b2) if self.distance == "d2" else self.b2.copy()
        self.a = np.asarray(self.a, dtype=float)
        total = (self.a**2).sum() if self.distance == "d2" else self.a.sum()
        if np.any(self.a < 0) or abs(total - 1) > 1e-10:
            raise ValueError(f"weights a are not normalized for {self.distance}")
        if self.K_max + 1 > self.b2.size:
            raise ValueError("K_max exceeds the number of source levels")

    def weights(self):
        """``y_{i,k} = 2 ln(2 + i + k) + c`` with ``sum exp(-y) = 1`` by default."""
        i, k = np.indices((self.I_max + 1, self.K_max + 1))
        base = 2 * np.log(2.0 + i + k)
        c = np.log(np.exp(-base).sum()) if self.weight_offset is None else self.weight_offset
        y = base + c
        return y, float(np.exp(-y).sum())

    def to_dict(self):
        d = asdict(self)
        d["b2"] = self.b2.tolist()
        d["a"] = self.a.tolist()
        return d


def _check_eta(data, table):
    if not np.isclose(getattr(data, "eta", 1.0), table.eta):
        raise ValueError(f"pattern table built for eta={table.eta}, data has eta={data.eta}")


def _diag_patterns(table, x, K):
    vals = table.evaluate(x)
    return np.stack([vals[k, k] for k in range(K + 1)]) if x.size else np.zeros((K + 1, 0))


def calib_empirical(data, i, k, table):
    """``P^_i^k = mean(f_kk(x) 1{l = i}) / b_k^2`` (independent of the weights ``a``)."""
    _check_eta(data, table)
    if k >= data.b2.size or data.b2[k] <= 0:
        raise ValueError(f"source level {k} is not probed (b_k = 0)")
    if data.n == 0:
        return 0.0
    hit = data.i == i
    if not hit.any():
        return 0.0
    f = table.evaluate(data.x[hit])[k, k]
    return float(f.sum() / data.n / data.b2[k])


def calib_moments(data, table, I_max, K_max):
    """Matrices of ``P^_i^k`` and of ``mean((f_kk(x) 1{l=i} / b_k^2)^2)``."""
    _check_eta(data, table)
    b2 = data.b2[: K_max + 1]
    if b2.size < K_max + 1 or np.any(b2 <= 0):
        raise ValueError("every level k <= K_max must be probed (b_k > 0)")
    s1 = np.zeros((I_max + 1, K_max + 1))
    s2 = np.zeros_like(s1)
    if data.n == 0:
        return s1, s2
    f = _diag_patterns(table, data.x, K_max) / b2[:, None]
    for i in range(I_max + 1):
        hit = data.i == i
        s1[i] = f[:, hit].sum(axis=1)
        s2[i] = (f[:, hit] ** 2).sum(axis=1)
    return s1 / data.n, s2 / data.n


@dataclass
class CalibReport:
    kind: str
    raw: np.ndarray
    stochastic: np.ndarray
    kept: list = field(default_factory=list)
    penalties: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    models: list = field(default_factory=list)
    selected: tuple | None = None
    truth: dict | None = None
    notes: list = field(default_factory=list)

    def compare(self, P_true, a):
        P_true = np.asarray(getattr(P_true, "P", P_true), dtype=float)
        raw, stoch = pad_to(self.raw, P_true.shape), pad_to(self.stochastic, P_true.shape)
        self.truth = {
            "d1_raw": d1_distance(P_true, raw, a), "d2_raw": d2_distance(P_true, raw, a),
            "d1": d1_distance(P_true, stoch, a), "d2": d2_distance(P_true, stoch, a),
        }
        return self.truth

    def to_json(self):
        return json.dumps({
            "kind": self.kind, "config": self.config,
            "raw": self.raw.tolist(), "stochastic": self.stochastic.tolist(),
            "kept": [list(map(int, p)) for p in self.kept],
            "penalties": None if self.penalties is None else self.penalties.tolist(),
            "models": self.models, "selected": self.selected,
            "truth": self.truth, "notes": self.notes,
        }, indent=2)


def stochasticize(P):
    """Clip to ``[0, 1]`` and renormalize columns; an all-zero column becomes uniform."""
    P = np.clip(np.asarray(getattr(P, "P", P), dtype=float), 0.0, 1.0)
    s = P.sum(axis=0)
    P = np.where(s > 0, P / np.where(s > 0, s, 1.0), 1.0 / P.shape[0])
    return PhotocounterMatrix(P)


def calib_penalties(cfg, table, n, second=None, kind="hoeffding"):
    """Per-index penalties on the weighted entries ``E_i^k`` and an admissibility mask."""
    y, _ = cfg.weights()
    pen = np.zeros_like(y)
    ok = np.ones(y.shape, dtype=bool)
    notes = []
    scale = cfg.a[: cfg.K_max + 1] / cfg.b2[: cfg.K_max + 1]
    for i in range(cfg.I_max + 1):
        for k in range(cfg.K_max + 1):
            f_hi = max(table.f_max[k, k], 0.0)
            f_lo = min(table.f_min[k, k], 0.0)
            if kind == "hoeffding":
                pen[i, k] = hoeffding_threshold(scale[k] * (f_hi - f_lo), y[i, k], cfg.eps, n, notes) ** 2
            elif kind == "bernstein":
                sup = scale[k] * table.sup_norm[k, k]
                m2 = cfg.a[k] ** 2 * second[i, k]
                pen[i, k], x_ik = bernstein_terms(m2, sup, y[i, k], cfg.eps, cfg.delta, n, factor=2.0)
                ok[i, k] = x_ik <= n
            else:
                raise ValueError(f"unknown penalty kind {kind!r}")
    return pen, ok, notes


def calib_projection(data, cfg, table, kind="hoeffding"):
    """Hard-thresholded projection estimate of ``P`` (raw) and its report."""
    if table.N < cfg.K_max + 1:
        raise ValueError("pattern table too small for K_max")
    shape = (cfg.I_max + 1, cfg.K_max + 1)
    if data.n == 0:
        raw = np.zeros(shape)
        return PhotocounterMatrix(raw, raw=True), CalibReport(
            kind=f"projection-{kind}", raw=raw, stochastic=stochasticize(raw).P,
            config=cfg.to_dict(), notes=["empty dataset"])
    p1, p2 = calib_moments(data, table, cfg.I_max, cfg.K_max)
    a = cfg.a[: cfg.K_max + 1]
    E = a * p1
    pen, ok, notes = calib_penalties(cfg, table, data.n, p2, kind)
    keep = select_indices(E, pen, ok)
    raw = np.where(keep, p1, 0.0)
    report = CalibReport(
        kind=f"projection-{kind}", raw=raw, stochastic=stochasticize(raw).P,
        kept=[(int(i), int(k)) for i, k in zip(*np.nonzero(keep))], penalties=pen,
        config=cfg.to_dict(), notes=notes,
    )
    return PhotocounterMatrix(raw, raw=True), report


def calib_mle_penalty(I, K, n_I, kappa, x_IK=None):
    """``kappa ((I+1)(K+1) ln(n_I)/n_I + x_{I,K}/n_I)`` with ``x_{I,K} = I + K + 1`` by default."""
    x_IK = I + K + 1 if x_IK is None else x_IK
    return float(kappa * ((I + 1) * (K + 1) * np.log(n_I) / n_I + x_IK / n_I))


def level_densities(x, b2, eta=1.0):
    """``b_k^2 psi_k(x)^2`` per sample (noisy version when ``eta < 1``), shape ``(n, K)``."""
    K = b2.size
    if eta == 1.0:
        psi2 = eval_psi(K - 1, x) ** 2
    else:
        psi2 = np.stack([np.pi * noisy_pdf(fock_state(k, K), eta, x, np.zeros_like(x)) for k in range(K)])
    return (b2[:, None] * psi2).T


def _project_simplex(v, total):
    """Euclidean projection of each column of ``v`` onto ``{p >= 0, sum p = total}``."""
    m = v.shape[0]
    u = -np.sort(-v, axis=0)
    css = np.cumsum(u, axis=0) - total
    idx = np.arange(1, m + 1)[:, None]
    cond = u - css / idx > 0
    r = m - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[r, np.arange(v.shape[1])] / (r + 1)
    return np.maximum(v - theta, 0.0)


def _fit_model(phi_by_i, n_I, I, K, I_max, tol, max_iter):
    """Maximize the restricted log-likelihood over ``m_{I,K}`` in P-space.

    Returns ``(P, mean_nll, iterations, converged)``; ``P`` has shape
    ``(I_max + 1, K_total)``. Infeasible models give ``nll = inf``.
    """
    K_tot = phi_by_i[0].shape[1]
    P = np.zeros((I_max + 1, K_tot))
    P[:, K + 1:] = 1.0 / (I_max + 1)
    free = P[: I + 1, : K + 1]
    free[:] = 1.0 / (I + 1)

    def nll(P):
        tot = 0.0
        for i, phi in enumerate(phi_by_i):
            if phi.shape[0] == 0:
                continue
            q = phi @ P[i]
            if np.any(q <= 0):
                return np.inf
            tot -= np.log(q).sum()
        return tot / n_I

    def grad(P):
        g = np.zeros((I + 1, K + 1))
        for i in range(I + 1):
            phi = phi_by_i[i]
            if phi.shape[0]:
                g[i] = -(phi[:, : K + 1] / (phi @ P[i])[:, None]).sum(axis=0) / n_I
        return g

    f = nll(P)
    if not np.isfinite(f):
        return P, np.inf, 0, False
    # accelerated projected gradient with backtracking and adaptive restart
    step = 1.0
    prev = P.copy()
    t_mom = 1.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_mom**2))
        Y = P.copy()
        Y[: I + 1, : K + 1] += (t_mom - 1) / t_next * (P - prev)[: I + 1, : K + 1]
        fy = nll(Y)
        if not np.isfinite(fy):
            Y, fy, t_next = P, f, 1.0
        g = grad(Y)
        while True:
            cand = Y.copy()
            cand[: I + 1, : K + 1] = _project_simplex(Y[: I + 1, : K + 1] - step * g, 1.0)
            d = cand[: I + 1, : K + 1] - Y[: I + 1, : K + 1]
            fc = nll(cand)
            if fc <= fy + np.sum(g * d) + np.sum(d**2) / (2 * step) or step < 1e-14:
                break
            step *= 0.5
        if fc > f:
            # momentum overshot: restart from the current iterate
            t_mom, prev = 1.0, P.copy()
            continue
        change = np.abs(cand - P).max()
        prev, P, f, t_mom = P, cand, fc, t_next
        step *= 1.2
        if change < tol:
            converged = True
            break
    return P, float(f), it, converged


def calib_mle(data, cfg, I_range=None, K_range=None):
    """Penalized MLE over models ``m_{I,K}`` on samples with reading ``l <= I_max``.

    Columns ``k <= K`` are free probability vectors supported on ``i <= I``;
    columns ``k > K`` are pinned to ``1/(I_max + 1)``. The estimate covers
    ``i <= I_max`` and every source level; the report has every model's score.
    """
    I_range = range(cfg.I_max + 1) if I_range is None else I_range
    K_range = range(cfg.K_max + 1) if K_range is None else K_range
    if not len(I_range) or not len(K_range):
        raise ValueError("I_range and K_range must be nonempty")
    keep = data.i <= cfg.I_max
    n_I = int(keep.sum())
    if n_I == 0:
        raise ValueError("no samples with reading <= I_max")
    if n_I < 2:
        raise ValueError("need at least two retained samples")
    phi = level_densities(data.x[keep], cfg.b2, getattr(data, "eta", 1.0))
    l = data.i[keep]
    phi_by_i = [phi[l == i] for i in range(cfg.I_max + 1)]
    rows = []
    best = None
    for I in I_range:
        for K in K_range:
            P, f, it, conv = _fit_model(phi_by_i, n_I, I, K, cfg.I_max, cfg.tol, cfg.max_iter)
            pen = calib_mle_penalty(I, K, n_I, cfg.kappa)
            crit = f + pen
            rows.append({"I": int(I), "K": int(K), "nll": f, "penalty": pen, "criterion": crit,
                         "iterations": it, "converged": conv})
            if np.isfinite(crit) and (best is None or crit < best[0]):
                best = (crit, (int(I), int(K)), P)
    if best is None:
        raise ArithmeticError("every calibration model has infinite likelihood contrast")
    _, sel, P = best
    report = CalibReport(kind="mle", raw=P, stochastic=P, config=cfg.to_dict(), models=rows,
                         selected=sel, notes=[f"retained {n_I} of {data.n} samples"])
    return PhotocounterMatrix(P), report


def pad_to(P, shape):
    P = np.asarray(getattr(P, "P", P), dtype=float)
    if P.shape[0] > shape[0] or P.shape[1] > shape[1]:
        raise ValueError(f"cannot pad {P.shape} to {shape}")
    out = np.zeros(shape)
    out[: P.shape[0], : P.shape[1]] = P
    return out


def _pair(P, Q, a):
    P = np.asarray(getattr(P, "P", P), dtype=float)
    Q = np.asarray(getattr(Q, "P", Q), dtype=float)
    if P.shape != Q.shape:
        raise ValueError(f"dimension mismatch {P.shape} vs {Q.shape}")
    a = np.asarray(a, dtype=float)
    if a.size != P.shape[1]:
        raise ValueError("weight vector length must match the number of columns")
    return P, Q, a


def d1_distance(P, Q, a):
    P, Q, a = _pair(P, Q, a)
    return float((a * np.abs(P - Q)).sum())


def d2_distance(P, Q, a):
    P, Q, a = _pair(P, Q, a)
    return float(np.sqrt((a**2 * (P - Q) ** 2).sum()))


def outcome_weights(P, a):
    """``w_i = sum_k a_k P_i^k``."""
    P = np.asarray(getattr(P, "P", P), dtype=float)
    return P @ np.asarray(a, dtype=float)


def restricted_kullback(P_true, P_hat, b2, I_max, x_half=12.0, nx=4001):
    """Kullback divergence between restricted laws on ``[0, I_max] x R`` by trapezoid quadrature."""
    P_true = np.asarray(getattr(P_true, "P", P_true), dtype=float)[: I_max + 1]
    P_hat = np.asarray(getattr(P_hat, "P", P_hat), dtype=float)[: I_max + 1]
    K = min(P_true.shape[1], P_hat.shape[1], b2.size)
    x = np.linspace(-x_half, x_half, nx)
    dens = level_densities(x, b2[:K])
    p = np.einsum("xk,ik->ix", dens, P_true[:, :K])
    q = np.einsum("xk,ik->ix", dens, P_hat[:, :K])
    p /= np.trapezoid(p.sum(axis=0), x)
    q /= np.trapezoid(q.sum(axis=0), x)
    mask = p > 0
    if np.any(mask & (q <= 0)):
        return float("inf")
    integrand = np.where(mask, p * np.log(np.where(mask, p, 1.0) / np.where(q > 0, q, 1.0)), 0.0)
    return float(np.trapezoid(integrand.sum(axis=0), x))
