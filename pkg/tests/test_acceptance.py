"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""
import itertools
import time

import numpy as np
from scipy.integrate import cumulative_trapezoid

from conftest import gauss_legendre_phi
from homodyne.forward import linear_pdf, noisy_pdf, radon_check, wigner
from homodyne.metrics import (
    EstimatorSpec, density_distances, l2_distance, replicate_seed, risk_monte_carlo,
)
from homodyne.mle import MleConfig, _Objective, design, mle_select
from homodyne.patterns import build_table, cached_table
from homodyne.photocounter import (
    CalibConfig, PhotocounterMatrix, binomial_counter, calib_mle, calib_projection, d1_distance,
    d2_distance, geometric_b2, ideal_counter, outcome_weights, pad_to,
)
from homodyne.projection import (
    PenaltyConfig, empirical_moments, estimate_projection, oracle_bound, penalized_criterion,
    penalties, select_indices,
)
from homodyne.sampling import sample_photocounter, sample_tomography
from homodyne.states import (
    FockDensityMatrix, coherent_state, fock_state, from_real_coeffs, random_density, thermal_state,
)

KINDS = ("hoeffding", "bernstein")


def test_criterion_1_duality(record):
    t0 = time.perf_counter()
    N = 6
    x = np.linspace(-10, 10, 1001)
    phi, w_phi = gauss_legendre_phi(16)
    X, PH = np.meshgrid(x, phi, indexing="ij")
    worst = {}
    for eta in (1.0, 0.9, 0.7):
        duals = cached_table(N, eta).real_duals(X.ravel(), PH.ravel()).reshape(N, N, *X.shape)
        dx = np.full(x.size, x[1] - x[0])
        dx[[0, -1]] /= 2
        weights = dx[:, None] * w_phi[None, :]
        err = 0.0
        for j, k in itertools.product(range(N), repeat=2):
            unit = np.zeros((N, N))
            unit[j, k] = 1.0
            image = linear_pdf(from_real_coeffs(unit), X, PH, eta)
            pairing = np.einsum("abxp,xp->ab", duals, image * weights)
            err = max(err, np.abs(pairing - unit).max())
        worst[eta] = err
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and elapsed < 60
    detail = ", ".join(f"eta={e}: {v:.1e}" for e, v in worst.items())
    record(1, ok, f"max |pairing - delta| {detail} (tol 1e-5), {elapsed:.0f} s")
    assert ok


def test_criterion_2_forward_model(record):
    rng = np.random.default_rng(2)
    states = {"vacuum": fock_state(0, 3), "fock1": fock_state(1, 3), "fock2": fock_state(2, 3),
              "coherent(0.8)": coherent_state(0.8, 16)}
    radon_err = 0.0
    for rho in states.values():
        W = wigner(rho)
        for x, ph in zip(rng.uniform(-3, 3, 20), rng.uniform(0, np.pi, 20)):
            lhs, rhs = radon_check(rho, W, x, ph)
            radon_err = max(radon_err, abs(lhs - rhs))
    iso_err = 0.0
    for _ in range(10):
        a, b = random_density(8, rng), random_density(8, rng)
        wa, wb = wigner(a, nq=181, np_=181), wigner(b, nq=181, np_=181)
        lhs = np.sum((wa.values - wb.values) ** 2) * wa.cell_area
        rhs = np.sum(np.abs(a.entries - b.entries) ** 2) / (2 * np.pi)
        iso_err = max(iso_err, abs(lhs / rhs - 1))
    ok = radon_err < 1e-3 and iso_err < 0.01
    record(2, ok, f"radon max err {radon_err:.1e} (tol 1e-3), isometry max rel err {iso_err:.1e} (tol 1e-2)")
    assert ok


def ks_distance(samples, rho, eta):
    y = np.linspace(-10, 10, 4001)
    phi, w = gauss_legendre_phi(16)
    Y, PH = np.meshgrid(y, phi, indexing="ij")
    cdf = cumulative_trapezoid(noisy_pdf(rho, eta, Y, PH) @ w, y, initial=0.0)
    s = np.sort(samples)
    F = np.interp(s, y, cdf)
    n = s.size
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


def test_criterion_3_sampler(record):
    n = 10**5
    band = 1.63 / np.sqrt(n)
    results = {}
    for name, rho in (("vacuum", fock_state(0, 1)), ("coherent(0.5)", coherent_state(0.5, 10))):
        for eta in (1.0, 0.8):
            d = sample_tomography(rho, n, eta=eta, seed=303)
            results[(name, eta)] = ks_distance(d.x, rho, eta)
    ok = max(results.values()) < band
    detail = ", ".join(f"{s}@{e}: {v:.4f}" for (s, e), v in results.items())
    record(3, ok, f"KS {detail} (band {band:.4f})")
    assert ok


def test_criterion_4_sup_norm_growth(record):
    t0 = time.perf_counter()
    ratios = {}
    for N in (4, 8, 16):
        t = build_table(N)
        total = sum(t.real_sup(j, k) ** 2 for j in range(N) for k in range(N))
        ratios[N] = total / N ** (7 / 3)
    spread = max(ratios.values()) / min(ratios.values())
    elapsed = time.perf_counter() - t0
    ok = spread < 3 and elapsed < 300
    record(4, ok, "sum M^2 / N^(7/3) = " + ", ".join(f"{v:.2f} (N={N})" for N, v in ratios.items())
           + f"; spread {spread:.2f} (tol 3), {elapsed:.1f} s")
    assert ok


def test_criterion_5_oracle_inequality(record):
    n, reps = 10**4, 50
    table = cached_table(8)
    parts, ok = [], True
    for name, rho in (("vacuum", fock_state(0, 1)), ("coherent(0.5)", coherent_state(0.5, 10))):
        losses = {k: [] for k in KINDS}
        bounds = {k: [] for k in KINDS}
        for r in range(reps):
            data = sample_tomography(rho, n, seed=replicate_seed(55, r))
            for kind in KINDS:
                cfg = PenaltyConfig(N_max=8, penalty_kind=kind)
                _, rep = estimate_projection(data, cfg, table)
                losses[kind].append(l2_distance(rep.raw, rho.entries, pad=True) ** 2)
                bounds[kind].append(oracle_bound(rho, rep.penalties, cfg, n))
        for kind in KINDS:
            eps = 1.0
            lhs = eps / (2 + eps) * np.mean(losses[kind])
            rhs = np.mean(bounds[kind])
            ok &= lhs <= rhs
            parts.append(f"{name}/{kind}: {lhs:.2e} <= {rhs:.2e}")
    record(5, ok, "; ".join(parts))
    assert ok


def _projection_losses(rho, n, reps, seed):
    table = cached_table(8)
    out = {k: [] for k in KINDS}
    for r in range(reps):
        data = sample_tomography(rho, n, seed=replicate_seed(seed, r))
        for kind in KINDS:
            _, rep = estimate_projection(data, PenaltyConfig(N_max=8, penalty_kind=kind), table)
            out[kind].append(l2_distance(rep.raw, rho.entries, pad=True) ** 2)
    return {k: np.median(v) for k, v in out.items()}


def test_criterion_6_risk_decreases(record):
    rho = coherent_state(0.5, 10)
    small = _projection_losses(rho, 10**3, 20, 61)
    large = _projection_losses(rho, 10**5, 20, 62)
    ok = all(large[k] < small[k] for k in KINDS)
    parts = [f"coherent {k}: {small[k]:.2e} -> {large[k]:.2e}" for k in KINDS]
    ns = np.array([1e3, 1e4, 1e5])
    thermal = thermal_state(1.0, 20)
    meds = [_projection_losses(thermal, int(m), 20, 63 + i) for i, m in enumerate(ns)]
    for kind in KINDS:
        y = np.log([m[kind] for m in meds])
        coef, cov = np.polyfit(np.log(ns), y, 1, cov="unscaled")
        resid = y - np.polyval(coef, np.log(ns))
        se = np.sqrt(cov[0, 0] * max(resid @ resid, 1e-300))  # one residual degree of freedom
        ok &= coef[0] <= -0.3 + se
        parts.append(f"thermal {kind} slope {coef[0]:.2f} +- {se:.2f}")
    record(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_mle(record):
    parts, ok = [], True
    # exhaustive enumeration of all 2^9 models at N_max = 3
    data = sample_tomography(coherent_state(0.5, 10), 2000, seed=71)
    table = cached_table(3)
    for kind in KINDS:
        cfg = PenaltyConfig(N_max=3, penalty_kind=kind)
        coeffs, m2 = empirical_moments(data, table, N=3)
        pen, adm, _ = penalties(data, cfg, table, m2)
        keep = select_indices(coeffs, pen, adm)
        best = min(
            (penalized_criterion(coeffs, pen, np.array(bits).reshape(3, 3)), bits)
            for bits in itertools.product([False, True], repeat=9)
            if not np.any(np.array(bits).reshape(3, 3) & ~adm)
        )
        same = np.array_equal(np.array(best[1]).reshape(3, 3), keep)
        ok &= same
        parts.append(f"enumeration ({kind}) {'agrees' if same else 'DIFFERS'}")
    # gradient check
    rng = np.random.default_rng(7)
    worst = 0.0
    for eta in (1.0, 0.8):
        d = sample_tomography(coherent_state(0.5, 8), 300, eta=eta, seed=72)
        obj = _Objective(design(d, 3), 3)
        v = rng.standard_normal(18)
        _, g = obj.value_grad(v)
        h = 1e-6
        fd = np.array([(obj.value_grad(v + h * e)[0] - obj.value_grad(v - h * e)[0]) / (2 * h)
                       for e in np.eye(v.size)])
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    ok &= worst < 1e-5
    parts.append(f"gradient rel err {worst:.1e}")
    # vacuum selection
    hits = 0
    for r in range(20):
        d = sample_tomography(fock_state(0, 1), 10**4, seed=replicate_seed(73, r))
        hits += mle_select(d, range(1, 5), MleConfig())[0] == 1
    ok &= hits >= 18
    parts.append(f"vacuum N_hat=1 in {hits}/20")
    # Hellinger risk
    spec = EstimatorSpec(kind="mle", N_range=(1, 2, 3, 4, 5))
    rho = coherent_state(0.5, 10)
    small = risk_monte_carlo(rho, spec, 10**3, 20, seed=74, loss="hellinger_sq")
    large = risk_monte_carlo(rho, spec, 10**5, 20, seed=75, loss="hellinger_sq")
    ok &= large.median < small.median and not small.failures and not large.failures
    parts.append(f"hellinger median {small.median:.2e} -> {large.median:.2e}")
    record(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_photocounter(record):
    b2 = geometric_b2(8)
    table = cached_table(9)
    parts, ok = [], True
    cfg = CalibConfig(b2=b2)
    ideal = ideal_counter(9)
    data = sample_photocounter(ideal, b2, 10**5, seed=81)
    P, _ = calib_projection(data, cfg, table, kind="bernstein")
    d2_ideal = d2_distance(ideal.P, P.P, cfg.a)
    ok &= d2_ideal < 0.1
    parts.append(f"ideal d2 {d2_ideal:.3f} (tol 0.1)")

    cfg1 = CalibConfig(b2=b2, distance="d1", I_max=4, K_max=4)
    Pm, rep = calib_mle(data, cfg1)
    w = outcome_weights(ideal.P, cfg1.a)
    tol = 0.1 + 2 * w[5:].sum()
    d1_mle = d1_distance(ideal.P, pad_to(Pm, ideal.P.shape), cfg1.a)
    ok &= d1_mle < tol
    parts.append(f"MLE d1 {d1_mle:.3f} (tol {tol:.3f}, model {rep.selected})")

    binom = binomial_counter(0.8, 9)
    Pb, _ = calib_projection(sample_photocounter(binom, b2, 10**5, seed=82), cfg, table, kind="bernstein")
    d2_binom = d2_distance(binom.P, Pb.P, cfg.a)
    ok &= d2_binom < 0.2
    parts.append(f"binomial(0.8) d2 {d2_binom:.3f} (tol 0.2)")

    errs = {"ideal": [], "binomial(0.6)": []}
    for r in range(20):
        for name, counter in (("ideal", ideal), ("binomial(0.6)", binomial_counter(0.6, 9))):
            d = sample_photocounter(counter, b2, 10**4, seed=replicate_seed(83, r))
            est, _ = calib_projection(d, cfg, table, kind="bernstein")
            errs[name].append(d2_distance(counter.P, est.P, cfg.a))
    med = {k: np.median(v) for k, v in errs.items()}
    ok &= med["ideal"] <= med["binomial(0.6)"]
    parts.append(f"median d2 ideal {med['ideal']:.3f} <= binomial(0.6) {med['binomial(0.6)']:.3f}")
    record(8, ok, "; ".join(parts))
    assert ok


def test_criterion_9_invariants(record):
    rng = np.random.default_rng(9)
    checked = 0
    data = sample_tomography(coherent_state(0.5, 10), 5000, seed=91)
    for kind in KINDS:
        est, _ = estimate_projection(data, PenaltyConfig(N_max=8, penalty_kind=kind), cached_table(8))
        FockDensityMatrix(est.entries)
        checked += 1
    _, fit, _ = mle_select(data, range(1, 4))
    FockDensityMatrix(fit.rho_hat.entries)
    checked += 1
    b2 = geometric_b2(8)
    calib = sample_photocounter(binomial_counter(0.7, 9), b2, 20000, seed=92)
    for kind in KINDS:
        _, rep = calib_projection(calib, CalibConfig(b2=b2), cached_table(9), kind=kind)
        PhotocounterMatrix(rep.stochastic)
        checked += 1
    Pm, _ = calib_mle(calib, CalibConfig(b2=b2, distance="d1", I_max=3, K_max=3), I_range=[3], K_range=[3])
    PhotocounterMatrix(Pm.P)
    checked += 1

    violations = 0
    for _ in range(100):
        N = int(rng.integers(2, 7))
        a, b = random_density(N, rng), random_density(N, rng)
        d = density_distances(a, b)
        h, K, l1 = d["hellinger_sq"], d["kullback"], d["l1"]
        violations += not (h <= K / 2 + 1e-12 and l1**2 / 8 <= h + 1e-12 and h <= l1 / 2 + 1e-12)
    ok = violations == 0
    record(9, ok, f"{checked} estimator outputs valid; distance-bound violations {violations}/100"
           " (suite time in summary below)")
    assert ok
