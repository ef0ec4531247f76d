"""Forward map from density matrices to homodyne densities, Wigner functions and noise.

Conventions (fixed by the Fock functions ``psi_k(x) = H_k(x) exp(-x^2/2)``):

* quadrature ``X_phi = cos(phi) Q + sin(phi) P`` with ``[Q, P] = i``, vacuum variance 1/2;
* ``p(x | phi) = sum_jk rho_jk psi_j(x) psi_k(x) exp(-i (j - k) phi)``;
* joint density on ``R x [0, pi)`` is ``p(x | phi) / pi`` (phase drawn uniformly);
* characteristic function ``chi(u, v) = tr(rho exp(-i u Q - i v P))`` is the 2-D
  Fourier transform of ``W`` with kernel ``exp(-i (u q + v p))``, so
  ``W(q, p) = (2 pi)^-2 \\iint chi(u, v) exp(i (u q + v p)) du dv``.  With these
  choices ``\\int W = 1`` and ``||W_rho - W_tau||^2 = ||rho - tau||^2 / (2 pi)``;
* detection efficiency ``eta``: ``y = sqrt(eta) x + sqrt((1 - eta) / 2) xi``.
"""
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .fock import eval_psi, laguerre_functions, hermite_gauss
from .states import FockDensityMatrix

NEG_CLAMP = 1e-12
CHUNK = 1 << 16


@dataclass(frozen=True)
class NoiseParams:
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    def require_invertible(self):
        if self.eta <= 0.5:
            raise ValueError(
                f"eta={self.eta}: deconvolved pattern functions exist only for eta > 1/2 "
                "(the Gaussian deconvolution factor is not integrable otherwise)"
            )


def _matrix(rho):
    return rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)


def phase_vectors(N, x, phi):
    """Rows ``u_k = psi_k(x) exp(i k phi)``, shape ``(n, N)``; ``p(x|phi) = u^H rho u``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), x.shape)
    psi = eval_psi(N - 1, x).T.astype(complex)
    z = np.exp(1j * phi)
    power = np.ones_like(z)
    for k in range(1, N):
        power *= z
        psi[:, k] *= power
    return psi


def conditional_pdf(rho, x, phi):
    """``p(x | phi)`` for broadcastable arrays (no range checks, no clamping)."""
    m = _matrix(rho)
    x, phi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(phi, dtype=float))
    xf, pf = x.ravel(), phi.ravel()
    val = np.empty(xf.size)
    for s in range(0, xf.size, CHUNK):
        u = phase_vectors(m.shape[0], xf[s:s + CHUNK], pf[s:s + CHUNK])
        val[s:s + CHUNK] = np.einsum("nj,nj->n", u.conj() @ m, u).real
    return val.reshape(x.shape)


def _check_phi(phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0) or np.any(phi >= np.pi):
        raise ValueError("phi must lie in [0, pi)")


def _clamp(p):
    if np.any(p < -NEG_CLAMP):
        raise ArithmeticError(f"density went negative ({p.min():.3e}); state is not physical")
    return np.maximum(p, 0.0)


def density_pdf(rho, x, phi):
    """Joint density ``p_rho(x, phi)`` on ``R x [0, pi)``."""
    _check_phi(phi)
    p = _clamp(conditional_pdf(rho, x, phi) / np.pi)
    return float(p) if p.ndim == 0 else p


def linear_pdf(m, x, phi, eta=1.0, nodes=96):
    """Forward map applied to any Hermitian matrix ``m`` (no positivity checks).

    Linear in ``m``; for a density matrix it equals :func:`noisy_pdf`.
    """
    if eta == 1.0:
        return conditional_pdf(m, x, phi) / np.pi
    x, phi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(phi, dtype=float))
    t, w = np.polynomial.hermite.hermgauss(nodes)
    pts = x[..., None] / np.sqrt(eta) + t * np.sqrt((1 - eta) / eta)
    return conditional_pdf(m, pts, phi[..., None]) @ w / np.sqrt(np.pi * eta) / np.pi


def noisy_pdf(rho, noise, y, phi, nodes=96):
    """Joint density of the detected quadrature under efficiency ``noise.eta``.

    Gaussian convolution evaluated by Gauss-Hermite quadrature in the
    standardized variable; ``eta == 1`` short-circuits to :func:`density_pdf`.
    """
    eta = noise.eta if isinstance(noise, NoiseParams) else NoiseParams(float(noise)).eta
    if eta == 1.0:
        return density_pdf(rho, y, phi)
    _check_phi(phi)
    p = _clamp(linear_pdf(_matrix(rho), y, phi, eta, nodes))
    return float(p) if p.ndim == 0 else p


def loss_kraus(N, eta):
    """Kraus operators ``A_l`` of the loss channel on the first ``N`` Fock levels (real)."""
    from scipy.special import comb

    n = np.arange(N)
    ops = []
    for loss in range(N):
        a = np.zeros((N, N))
        keep = n >= loss
        a[n[keep] - loss, n[keep]] = np.sqrt(comb(n[keep], loss) * eta ** (n[keep] - loss) * (1 - eta) ** loss)
        ops.append(a)
    return ops


def loss_channel(rho, eta):
    """Density matrix after a beam splitter of transmissivity ``eta``.

    Its noiseless homodyne density equals the ``eta``-noisy density of ``rho``;
    used as an independent check of :func:`noisy_pdf`.
    """
    m = _matrix(rho)
    out = sum(a @ m @ a.T for a in loss_kraus(m.shape[0], eta))
    return FockDensityMatrix(out / np.trace(out).real)


def displacement_elements(N, beta):
    """``D[m, n] = <m| exp(beta a^+ - conj(beta) a) |n>`` for a flat array of ``beta``."""
    beta = np.asarray(beta, dtype=complex).ravel()
    mod2 = np.abs(beta) ** 2
    ang = np.angle(beta)
    out = np.empty((N, N, beta.size), dtype=complex)
    for d in range(N):
        ell = laguerre_functions(N - 1 - d, d, mod2)
        for n in range(N - d):
            out[n + d, n] = ell[n] * np.exp(1j * d * ang)
            if d:
                out[n, n + d] = ell[n] * (-1) ** d * np.exp(-1j * d * ang)
    return out


def characteristic(rho, u, v):
    """``chi(u, v) = tr(rho exp(-i u Q - i v P))``."""
    m = _matrix(rho)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    beta = (v - 1j * u) / np.sqrt(2)
    D = displacement_elements(m.shape[0], beta)
    return np.einsum("jk,kjs->s", m, D).reshape(u.shape)


@dataclass
class WignerGrid:
    q_min: float
    q_max: float
    p_min: float
    p_max: float
    values: np.ndarray
    warnings: list = field(default_factory=list)
    imag_residue: float = 0.0

    @property
    def nq(self):
        return self.values.shape[0]

    @property
    def np(self):
        return self.values.shape[1]

    @property
    def q(self):
        return np.linspace(self.q_min, self.q_max, self.nq)

    @property
    def p(self):
        return np.linspace(self.p_min, self.p_max, self.np)

    @property
    def cell_area(self):
        return (self.q_max - self.q_min) / (self.nq - 1) * (self.p_max - self.p_min) / (self.np - 1)

    def integral(self):
        return float(self.values.sum() * self.cell_area)

    def interpolator(self):
        return RectBivariateSpline(self.q, self.p, self.values, kx=3, ky=3)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# q_min={self.q_min!r} q_max={self.q_max!r} p_min={self.p_min!r} "
                  f"p_max={self.p_max!r} nq={self.nq} np={self.np}\n")
        np.savetxt(buf, self.values, delimiter=",", fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        head, body = text.split("\n", 1)
        spec = dict(item.split("=") for item in head.lstrip("# ").split())
        vals = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        if vals.shape != (int(spec["nq"]), int(spec["np"])):
            raise ValueError("grid shape does not match header")
        return cls(float(spec["q_min"]), float(spec["q_max"]),
                   float(spec["p_min"]), float(spec["p_max"]), vals)


def wigner(rho, q_range=(-6.0, 6.0), p_range=(-6.0, 6.0), nq=241, np_=241,
           freq_max=16.0, n_freq=256):
    """Wigner function on a rectangular grid by inverse Fourier transform of ``chi``.

    The frequency integral uses the trapezoid rule on ``[-freq_max, freq_max]^2``;
    the output grid may be chosen freely.
    """
    u = np.linspace(-freq_max, freq_max, n_freq)
    w = np.full(n_freq, u[1] - u[0])
    w[[0, -1]] *= 0.5
    uu, vv = np.meshgrid(u, u, indexing="ij")
    chi = characteristic(rho, uu, vv)
    q = np.linspace(*q_range, nq)
    p = np.linspace(*p_range, np_)
    eq = np.exp(1j * np.outer(q, u)) * w
    ep = np.exp(1j * np.outer(p, u)) * w
    W = eq @ chi @ ep.T / (4 * np.pi**2)
    grid = WignerGrid(q_range[0], q_range[1], p_range[0], p_range[1], W.real,
                      imag_residue=float(np.abs(W.imag).max()))
    edge = np.concatenate([W.real[0], W.real[-1], W.real[:, 0], W.real[:, -1]])
    if np.abs(edge).max() > 1e-4:
        grid.warnings.append(f"boundary |W| = {np.abs(edge).max():.2e}: grid does not cover the state")
    if grid.imag_residue > 1e-9:
        grid.warnings.append(f"imaginary residue {grid.imag_residue:.2e}")
    return grid


def radon_line(W, x, phi, n_points=4001):
    """Integral of the gridded ``W`` along ``{q cos(phi) + p sin(phi) = x}``."""
    c, s = np.cos(phi), np.sin(phi)
    half = min(W.q_max, -W.q_min, W.p_max, -W.p_min)
    if abs(x) >= half:
        raise ValueError("line foot lies outside the Wigner grid")
    # parameter range keeping (q, p) inside the box
    lo, hi = -np.inf, np.inf
    for foot, direction, a, b in ((x * c, s, W.q_min, W.q_max), (x * s, -c, W.p_min, W.p_max)):
        if abs(direction) > 1e-15:
            t1, t2 = sorted(((a - foot) / direction, (b - foot) / direction))
            lo, hi = max(lo, t1), min(hi, t2)
    y = np.linspace(lo, hi, n_points)
    vals = W.interpolator().ev(x * c + y * s, x * s - y * c)
    return float(np.trapezoid(vals, y))


def radon_check(rho, W, x, phi):
    """Both sides of the Radon relation: (line integral of W, pi * joint density)."""
    _check_phi(phi)
    return radon_line(W, x, phi), float(np.pi * density_pdf(rho, x, phi))


def hermite_quadrature_normalization(rho, nodes=120):
    """``\\int p(x | phi) dx`` for a few phases, by Gauss-Hermite (diagnostic)."""
    t, w = hermite_gauss(nodes)
    return np.array([conditional_pdf(rho, t, ph) @ w for ph in (0.0, 1.0, 2.0)])
