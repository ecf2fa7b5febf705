"""Krylov-chain representation of the single-excitation Hamiltonian.

Basis: Phi_0 = one photon, Phi_1 = bright spin state, Phi_p (p >= 2) the
dark states generated by repeated action of the spin detunings. In that
basis the Hamiltonian is real symmetric tridiagonal. Everything is stored
in the frame rotating at the weighted mean spin frequency.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .ensemble import EnsembleMoments, EnsembleSpec, compute_moments
from .errors import NotExplicit, TruncationTooSmall

DEFAULT_M = 128
BREAKDOWN_RTOL = 1e-12


class ChainOrigin(str, Enum):
    ANALYTIC_GAUSSIAN = "AnalyticGaussian"
    LANCZOS = "Lanczos"


@dataclass(frozen=True, eq=False)
class KrylovChain:
    """Tridiagonal chain: ``alpha`` (length m) and ``beta`` (length m-1).

    ``alpha[0]`` is a placeholder for the cavity detuning, which is supplied
    per protocol segment. ``beta[0]`` is g_eff and ``beta[1]`` the spread.
    """

    alpha: np.ndarray
    beta: np.ndarray
    origin: ChainOrigin

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if alpha.size < 2:
            raise TruncationTooSmall(f"chain needs m >= 2, got {alpha.size}")
        if beta.size != alpha.size - 1:
            raise ValueError("beta must have length m - 1")
        if np.any(beta < 0):
            raise ValueError("off-diagonal chain couplings must be >= 0")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def g_eff(self) -> float:
        return float(self.beta[0])

    @property
    def sigma(self) -> float:
        return float(self.beta[1]) if self.m > 2 else 0.0

    def with_m(self, m):
        """Truncate (or return unchanged if already shorter)."""
        if m < 2:
            raise TruncationTooSmall(f"chain needs m >= 2, got {m}")
        if m >= self.m:
            return self
        return KrylovChain(self.alpha[:m], self.beta[: m - 1], self.origin)

    def to_json(self) -> str:
        return json.dumps({
            "m": self.m,
            "alpha": [float(a) for a in self.alpha],
            "beta": [float(b) for b in self.beta],
            "origin": self.origin.value,
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        chain = cls(d["alpha"], d["beta"], ChainOrigin(d["origin"]))
        if chain.m != d["m"]:
            raise ValueError(f"m={d['m']} disagrees with len(alpha)={chain.m}")
        return chain


def gaussian_chain(moments: EnsembleMoments, m: int = DEFAULT_M) -> KrylovChain:
    """Analytic chain for Gaussian broadening: beta = [g_eff, sigma*sqrt(p)...]."""
    if m < 2:
        raise TruncationTooSmall(f"chain needs m >= 2, got {m}")
    if moments.sigma < 0:
        raise ValueError("sigma must be >= 0")
    beta = np.empty(m - 1)
    beta[0] = moments.g_eff
    beta[1:] = np.sqrt(np.arange(1, m - 1)) * moments.sigma
    return KrylovChain(np.zeros(m), beta, ChainOrigin.ANALYTIC_GAUSSIAN)


def lanczos_chain(spec: EnsembleSpec, m: int = DEFAULT_M) -> KrylovChain:
    """Tridiagonalize an explicit ensemble starting from the photon state.

    The photon couples only to the bright vector, so after the first step
    the recursion runs on the diagonal detuning operator seeded with the
    bright vector. Full reorthogonalization; the chain stops early when the
    Krylov space is exhausted.
    """
    if not spec.is_explicit:
        raise NotExplicit("lanczos_chain needs an explicit spin list")
    if m < 2:
        raise TruncationTooSmall(f"chain needs m >= 2, got {m}")
    mom = compute_moments(spec)
    d = spec.omegas - mom.omega_bar
    n = d.size
    scale = mom.sigma if mom.sigma > 0 else mom.g_eff
    tol = BREAKDOWN_RTOL * scale

    alpha = [0.0]
    beta = [mom.g_eff]
    q = spec.couplings / mom.g_eff
    q = q / np.linalg.norm(q)
    Q = np.empty((min(m - 1, n), n))
    Q[0] = q
    k = 0
    while True:
        w = d * Q[k]
        a = float(Q[k] @ w)
        alpha.append(a)
        if len(alpha) == m or k + 1 == n:
            break
        # two passes of classical Gram-Schmidt against every previous vector
        for _ in range(2):
            w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        b = float(np.linalg.norm(w))
        if b < tol:
            break
        beta.append(b)
        k += 1
        Q[k] = w / b
    return KrylovChain(alpha, beta, ChainOrigin.LANCZOS)


@dataclass(frozen=True, eq=False)
class FullSpaceHamiltonian:
    """Arrowhead single-excitation Hamiltonian: photon row/column plus spins."""

    diag: np.ndarray
    coupling: np.ndarray
    bright_vector: np.ndarray

    @property
    def dim(self):
        return self.diag.size

    def to_sparse(self):
        n = self.coupling.size
        rows = np.concatenate([np.arange(n + 1), np.zeros(n, int), np.arange(1, n + 1)])
        cols = np.concatenate([np.arange(n + 1), np.arange(1, n + 1), np.zeros(n, int)])
        vals = np.concatenate([self.diag, self.coupling, self.coupling])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))

    def to_dense(self):
        return self.to_sparse().toarray()


def full_space_hamiltonian(spec: EnsembleSpec, delta: float = 0.0,
                           coupled: bool = True) -> FullSpaceHamiltonian:
    """Exact (N+1)-dimensional single-excitation Tavis-Cummings block.

    Index 0 is the photon (energy ``delta``), index j the j-th spin excited.
    ``coupled=False`` removes the photon-spin exchange (free ensemble).
    """
    if not spec.is_explicit:
        raise NotExplicit("full_space_hamiltonian needs an explicit spin list")
    mom = compute_moments(spec)
    diag = np.concatenate([[float(delta)], spec.omegas - mom.omega_bar])
    coupling = np.array(spec.couplings, dtype=float) if coupled else np.zeros(spec.n_spins)
    bright = spec.couplings / mom.g_eff
    return FullSpaceHamiltonian(diag, coupling, bright / np.linalg.norm(bright))


def full_space_survival(spec: EnsembleSpec, times, delta=0.0, coupled=True):
    """<bright| exp(-i H t) |bright> in the full space via sparse expm_multiply."""
    from scipy.sparse.linalg import expm_multiply

    times = np.asarray(times, dtype=float)
    fh = full_space_hamiltonian(spec, delta, coupled)
    H = fh.to_sparse().astype(complex)
    psi0 = np.concatenate([[0.0], fh.bright_vector]).astype(complex)
    if times.size > 1 and np.allclose(np.diff(times), times[1] - times[0]):
        states = expm_multiply(-1j * H, psi0, start=times[0], stop=times[-1],
                               num=times.size, endpoint=True)
    else:
        states = np.array([expm_multiply(-1j * t * H, psi0) for t in times])
    return states[:, 1:] @ fh.bright_vector


def chain_survival(chain: KrylovChain, times, delta=0.0, coupled=True):
    """<Phi_1| exp(-i H t) |Phi_1> for the tridiagonal chain."""
    from scipy.linalg import eigh_tridiagonal

    d = np.array(chain.alpha, dtype=float)
    e = np.array(chain.beta, dtype=float)
    d[0] = delta
    if not coupled:
        e[0] = 0.0
    w, v = eigh_tridiagonal(d, e)
    weights = v[1] ** 2
    times = np.asarray(times, dtype=float)
    return np.exp(-1j * np.outer(times, w)) @ weights


def truncation_bound(sigma, t, tol=1e-12, m_max=4096):
    """Smallest m whose free-chain population beyond m stays below ``tol``.

    For Gaussian broadening the free dark-chain occupation is Poisson with
    mean (sigma t)**2; the cavity only slows the spreading.
    """
    from scipy.stats import poisson

    lam = (sigma * t) ** 2
    m = int(poisson.isf(tol, lam)) + 3 if lam > 0 else 2
    return max(2, min(m, m_max))
