"""Penalized maximum likelihood over truncated state models ``Q(N)``.

States are parametrized as ``tau = G G^H / tr(G G^H)``. For a sample with
phase vector ``u`` the unnormalized likelihood is ``|G^H u|^2``; detection
noise is handled exactly by pushing ``u`` through the adjoint loss channel,
which turns one design matrix into one per Kraus operator.
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.optimize import minimize

from .forward import loss_kraus, noisy_pdf, conditional_pdf, phase_vectors
from .states import FockDensityMatrix, physicalize

N_LIMIT = 32


@dataclass
class MleOptions:
    tol: float = 1e-6
    max_iter: int = 5000
    method: str = "lbfgs"  # or "gd": gradient descent with backtracking
    seed: int = 0
    starts: tuple = ("identity", "projection", "random")


@dataclass
class MleConfig:
    kappa: float = 2.0
    options: MleOptions = field(default_factory=MleOptions)
    threads: int | None = None

    def x_weight(self, N):
        return float(N)


@dataclass
class MleFitResult:
    rho_hat: FockDensityMatrix
    nll: float
    iterations: int
    converged: bool
    grad_norm: float
    start: str = ""


def neg_log_likelihood(tau, data):
    """Mean of ``-ln p_tau`` over the samples; ``inf`` if any sample has ``p_tau <= 0``."""
    if data.n == 0:
        raise ValueError("empty dataset")
    if data.eta == 1.0:
        p = conditional_pdf(tau, data.x, data.phi) / np.pi
    else:
        p = noisy_pdf(tau, data.eta, data.x, data.phi)
    if np.any(p <= 0):
        return float("inf")
    return float(-np.mean(np.log(p)))


def design(data, N):
    """Per-Kraus design matrices whose rows give ``p_tau`` as ``sum |row @ conj(G)|^2 / (pi tr)``."""
    u = phase_vectors(N, data.x, data.phi)
    if data.eta == 1.0:
        return [u]
    return [u @ a for a in loss_kraus(N, data.eta)]


class _Objective:
    def __init__(self, mats, N):
        self.mats = mats
        self.N = N
        self.n = mats[0].shape[0]

    def unpack(self, v):
        return (v[: self.N**2] + 1j * v[self.N**2:]).reshape(self.N, self.N)

    def pack(self, g):
        return np.concatenate([g.real.ravel(), g.imag.ravel()])

    def value_grad(self, v):
        g = self.unpack(v)
        t = np.vdot(g, g).real
        ws = [u @ g.conj() for u in self.mats]
        p = sum((np.abs(w) ** 2).sum(axis=1) for w in ws)
        if np.any(p <= 0) or t <= 0:
            return np.inf, np.zeros_like(v)
        val = -np.mean(np.log(p)) + np.log(t) + np.log(np.pi)
        dg = g / t - sum(u.T @ (w.conj() / p[:, None]) for u, w in zip(self.mats, ws)) / self.n
        return float(val), 2 * self.pack(dg)


def _state(g):
    m = g @ g.conj().T
    return FockDensityMatrix(m / np.trace(m).real)


def _factor(rho):
    w, v = np.linalg.eigh(rho)
    return v * np.sqrt(np.clip(w, 1e-6, None))


def _gd(obj, v, tol, max_iter):
    f, g = obj.value_grad(v)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gn = np.linalg.norm(g)
        if gn < tol:
            return v, f, it - 1, True
        while True:
            cand = v - step * g
            fc, gc = obj.value_grad(cand)
            if fc <= f - 0.5 * step * gn**2:
                break
            step *= 0.5
            if step < 1e-16:
                return v, f, it, False
        v, f, g = cand, fc, gc
        step *= 2.0
    return v, f, it, np.linalg.norm(g) < tol


def _start_points(data, N, opts):
    rng = np.random.default_rng(opts.seed)
    for name in opts.starts:
        if name == "identity":
            yield name, np.eye(N, dtype=complex) / np.sqrt(N)
        elif name == "random":
            yield name, (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2 * N)
        elif name == "projection":
            g = _projection_start(data, N)
            if g is not None:
                yield name, g


def _projection_start(data, N):
    """Factor of the physicalized unpenalized projection estimate, or ``None``."""
    from .patterns import cached_table
    from .projection import empirical_moments
    from .states import from_real_coeffs

    if data.eta <= 0.5:
        return None
    coeffs, _ = empirical_moments(data, cached_table(N, data.eta), N)
    try:
        rho = physicalize(from_real_coeffs(coeffs))
    except ValueError:
        return None
    return _factor(rho.entries)


def mle_fit(data, N, opts=None):
    """Approximate maximizer of the likelihood over ``Q(N)``; best of several starts."""
    opts = opts or MleOptions()
    if not 1 <= N <= N_LIMIT:
        raise ValueError(f"N must lie in [1, {N_LIMIT}]")
    if data.n == 0:
        raise ValueError("empty dataset")
    if N == 1:
        tau = FockDensityMatrix(np.ones((1, 1)))
        return MleFitResult(tau, neg_log_likelihood(tau, data), 0, True, 0.0, "trivial")
    obj = _Objective(design(data, N), N)
    best = None
    for name, g0 in _start_points(data, N, opts):
        v0 = obj.pack(g0 / np.linalg.norm(g0))
        if opts.method == "gd":
            v, f, it, _ = _gd(obj, v0, opts.tol, opts.max_iter)
        elif opts.method == "lbfgs":
            res = minimize(obj.value_grad, v0, jac=True, method="L-BFGS-B",
                           options={"maxiter": opts.max_iter, "gtol": opts.tol * 1e-2, "ftol": 1e-15})
            v, f, it = res.x, res.fun, res.nit
        else:
            raise ValueError(f"unknown method {opts.method!r}")
        # the objective is scale invariant; report the gradient at unit norm
        v = v / np.linalg.norm(v)
        f, grad = obj.value_grad(v)
        gn = float(np.linalg.norm(grad))
        fit = MleFitResult(_state(obj.unpack(v)), float(f), int(it), gn < opts.tol, gn, name)
        if best is None or fit.nll < best.nll:
            best = fit
    return best


def mle_penalty(N, n, x_N, kappa):
    """``kappa (N^2/n (1 + max(0, ln(n/N))) + x_N/n)``."""
    if n < 1:
        raise ValueError("n must be positive")
    return float(kappa * (N**2 / n * (1 + max(0.0, np.log(n / N))) + x_N / n))


@dataclass
class MleReport:
    N_hat: int
    rows: list
    config: dict

    def to_json(self):
        return json.dumps({"kind": "mle", "N_hat": self.N_hat, "config": self.config,
                           "models": self.rows}, indent=2)


def mle_select(data, N_range, cfg=None):
    """Pick ``N`` minimizing ``nll + pen(N)``; ties go to the smaller ``N``."""
    cfg = cfg or MleConfig()
    Ns = sorted(set(int(N) for N in N_range))
    if not Ns:
        raise ValueError("N_range is empty")
    with ThreadPoolExecutor(max_workers=cfg.threads or 1) as pool:
        fits = list(pool.map(lambda N: mle_fit(data, N, cfg.options), Ns))
    rows = []
    best = None
    for N, fit in zip(Ns, fits):
        pen = mle_penalty(N, data.n, cfg.x_weight(N), cfg.kappa)
        crit = fit.nll + pen
        rows.append({"N": N, "nll": fit.nll, "penalty": pen, "criterion": crit,
                     "iterations": fit.iterations, "converged": fit.converged,
                     "grad_norm": fit.grad_norm})
        if best is None or crit < best[0]:
            best = (crit, N, fit)
    _, N_hat, fit = best
    report = MleReport(N_hat, rows, {**asdict(cfg), "N_range": Ns})
    return N_hat, fit, report
