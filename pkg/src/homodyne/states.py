"""Reference density matrices in the truncated Fock basis and their invariants."""
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

HERMITIAN_TOL = 0.0
TRACE_TOL = 1e-12
PSD_TOL = -1e-10


@dataclass(frozen=True)
class FockDensityMatrix:
    """Hermitian, PSD, trace-one matrix ``rho[j, k] = <psi_j, rho psi_k>``."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        # exact hermiticity by construction
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        check_density(m)

    @property
    def dim(self):
        return self.entries.shape[0]

    def energy(self):
        """Mean energy ``1/2 + sum_j j rho_jj``."""
        return 0.5 + float(np.sum(np.arange(self.dim) * self.entries.diagonal().real))

    def padded(self, n):
        """Same state embedded in a larger truncation."""
        if n < self.dim:
            raise ValueError("cannot pad to a smaller dimension")
        out = np.zeros((n, n), dtype=complex)
        out[: self.dim, : self.dim] = self.entries
        return FockDensityMatrix(out)

    def to_json(self):
        return dump_matrix(self.entries)

    @classmethod
    def from_json(cls, text):
        return cls(load_matrix(text))


def check_density(m, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    if not np.array_equal(m, m.conj().T):
        raise ValueError("matrix is not Hermitian")
    tr = np.trace(m).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr!r} differs from 1")
    lam = np.linalg.eigvalsh(m)[0]
    if lam < psd_tol:
        raise ValueError(f"smallest eigenvalue {lam:.3e} is negative")


def dump_matrix(m):
    m = np.asarray(m, dtype=complex)
    return json.dumps({
        "dim": int(m.shape[0]),
        "re": [float(v) for v in m.real.ravel()],
        "im": [float(v) for v in m.imag.ravel()],
    })


def load_matrix(text):
    obj = json.loads(text) if isinstance(text, str) else text
    n = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=float).reshape(n, n)
    im = np.asarray(obj["im"], dtype=float).reshape(n, n)
    return re + 1j * im


def _normalized(m):
    m = np.asarray(m, dtype=complex)
    return FockDensityMatrix(m / np.trace(m).real)


def fock_state(n, N):
    if not 0 <= n < N:
        raise ValueError(f"need 0 <= n < N, got n={n}, N={N}")
    m = np.zeros((N, N), dtype=complex)
    m[n, n] = 1.0
    return FockDensityMatrix(m)


def coherent_amplitudes(alpha, N):
    """Unnormalized Fock amplitudes ``exp(-|a|^2/2) a^k / sqrt(k!)``."""
    k = np.arange(N)
    alpha = complex(alpha)
    if alpha == 0:
        amp = np.zeros(N, dtype=complex)
        amp[0] = 1.0
        return amp
    logmag = k * np.log(abs(alpha)) - 0.5 * gammaln(k + 1) - 0.5 * abs(alpha) ** 2
    return np.exp(logmag) * np.exp(1j * k * np.angle(alpha))


def coherent_state(alpha, N, max_tail=1e-8):
    """Coherent state truncated at ``N`` levels and renormalized.

    Raises if the discarded Poisson mass exceeds ``max_tail``; the message
    names the smallest truncation that would do.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    amp = coherent_amplitudes(alpha, N)
    tail = 1.0 - float(np.sum(np.abs(amp) ** 2))
    if tail > max_tail:
        need = N
        while 1.0 - float(np.sum(np.abs(coherent_amplitudes(alpha, need)) ** 2)) > max_tail:
            need += 1
        raise ValueError(f"truncation mass {tail:.2e} too large for N={N}; use N >= {need}")
    return _normalized(np.outer(amp, amp.conj()))


def thermal_state(mean_n, N):
    if mean_n < 0:
        raise ValueError("mean photon number must be nonnegative")
    if mean_n == 0:
        return fock_state(0, N)
    q = mean_n / (1.0 + mean_n)
    return _normalized(np.diag(q ** np.arange(N)))


def real_index_pairs(N):
    return [(j, k) for j in range(N) for k in range(N)]


def to_real_coeffs(rho):
    """Coefficients on the orthonormal Hermitian basis ``e_{j,k}``.

    Diagonal: ``rho_jj``; ``j < k``: ``sqrt(2) Re rho_jk``;
    ``j > k``: ``sqrt(2) Im rho_kj``.  Returned as an ``N x N`` real array
    indexed by ``(j, k)``.
    """
    m = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
    N = m.shape[0]
    out = np.empty((N, N))
    upper = np.triu_indices(N, 1)
    out[np.diag_indices(N)] = m.diagonal().real
    out[upper] = np.sqrt(2) * m[upper].real
    out[upper[1], upper[0]] = np.sqrt(2) * m[upper].imag
    return out


def from_real_coeffs(v):
    """Inverse of :func:`to_real_coeffs` (no positivity or trace enforced)."""
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    m = np.zeros((N, N), dtype=complex)
    upper = np.triu_indices(N, 1)
    m[np.diag_indices(N)] = v.diagonal()
    m[upper] = (v[upper] + 1j * v[upper[1], upper[0]]) / np.sqrt(2)
    m[upper[1], upper[0]] = m[upper].conj()
    return m


def physicalize(m):
    """Clip negative eigenvalues to zero and renormalize the trace."""
    m = np.asarray(m, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    lam, vec = np.linalg.eigh(m)
    lam = np.clip(lam, 0.0, None)
    if lam.sum() <= 0:
        raise ValueError("no positive eigenvalue left after clipping")
    out = (vec * (lam / lam.sum())) @ vec.conj().T
    return FockDensityMatrix(out)


def random_density(N, rng, rank=None):
    """Random density matrix (Ginibre construction), for tests and sweeps."""
    rank = N if rank is None else rank
    g = rng.standard_normal((N, rank)) + 1j * rng.standard_normal((N, rank))
    return _normalized(g @ g.conj().T)


def parse_state(spec):
    """Build a state from a short descriptor.

    ``"vacuum:N"``, ``"fock:n:N"``, ``"coherent:re:im:N"`` (or ``coherent:a:N``),
    ``"thermal:mean:N"``.  The truncation ``N`` defaults to 8 when omitted.
    """
    parts = spec.split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "vacuum":
            return fock_state(0, int(args[0]) if args else 8)
        if kind == "fock":
            return fock_state(int(args[0]), int(args[1]) if len(args) > 1 else max(8, int(args[0]) + 1))
        if kind == "coherent":
            if len(args) == 3:
                return coherent_state(complex(float(args[0]), float(args[1])), int(args[2]))
            return coherent_state(float(args[0]), int(args[1]) if len(args) > 1 else 16)
        if kind == "thermal":
            return thermal_state(float(args[0]), int(args[1]) if len(args) > 1 else 32)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad state spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown state kind {kind!r}")
