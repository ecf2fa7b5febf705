"""Inhomogeneous spin ensembles and their coupling-weighted moments.

All frequencies are angular frequencies. Moments are weighted by g_j**2,
so the bright state (amplitudes g_j / g_eff) sets both the mean and the
spread.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import EmptyEnsemble, InvalidCount, NonPositiveCoupling


class EnsembleKind(str, Enum):
    EXPLICIT = "Explicit"
    GAUSSIAN = "GaussianParametric"


@dataclass(frozen=True)
class EnsembleSpec:
    kind: EnsembleKind
    omegas: np.ndarray | None = None
    couplings: np.ndarray | None = None
    mean: float = 0.0
    width: float = 0.0
    g_eff: float = 0.0
    n_spins: int = 0
    rng_seed: int = 0

    @classmethod
    def explicit(cls, omegas, couplings, rng_seed=0):
        omegas = np.asarray(omegas, dtype=float).ravel()
        couplings = np.asarray(couplings, dtype=float).ravel()
        if omegas.size == 0:
            raise EmptyEnsemble("explicit ensemble needs at least one spin")
        if omegas.shape != couplings.shape:
            raise ValueError("omegas and couplings must have equal length")
        if np.any(couplings <= 0):
            raise NonPositiveCoupling("all couplings g_j must be > 0")
        omegas.setflags(write=False)
        couplings.setflags(write=False)
        return cls(EnsembleKind.EXPLICIT, omegas, couplings,
                   n_spins=omegas.size, rng_seed=rng_seed)

    @classmethod
    def gaussian(cls, mean, width, g_eff, n_spins=10_000, rng_seed=0):
        if g_eff <= 0:
            raise NonPositiveCoupling("g_eff must be > 0")
        if width < 0:
            raise ValueError("width must be >= 0")
        return cls(EnsembleKind.GAUSSIAN, mean=float(mean), width=float(width),
                   g_eff=float(g_eff), n_spins=int(n_spins), rng_seed=int(rng_seed))

    @property
    def is_explicit(self):
        return self.kind == EnsembleKind.EXPLICIT


@dataclass(frozen=True)
class EnsembleMoments:
    omega_bar: float
    g_eff: float
    sigma: float
    t_sigma: float = field(init=False)
    t_pi: float = field(init=False)

    def __post_init__(self):
        t_sigma = 2 * math.pi / self.sigma if self.sigma > 0 else math.inf
        object.__setattr__(self, "t_sigma", t_sigma)
        object.__setattr__(self, "t_pi", math.pi / self.g_eff)


def compute_moments(spec: EnsembleSpec) -> EnsembleMoments:
    """g**2-weighted mean frequency, collective coupling and spread."""
    if not spec.is_explicit:
        if spec.g_eff <= 0:
            raise NonPositiveCoupling("g_eff must be > 0")
        return EnsembleMoments(spec.mean, spec.g_eff, spec.width)

    w, g = spec.omegas, spec.couplings
    if w is None or w.size == 0:
        raise EmptyEnsemble("explicit ensemble has no spins")
    if np.any(g <= 0):
        raise NonPositiveCoupling("all couplings g_j must be > 0")
    g2 = g * g
    g2_sum = math.fsum(g2)
    omega_bar = math.fsum(g2 * w) / g2_sum
    var = math.fsum(g2 * (w - omega_bar) ** 2) / g2_sum
    return EnsembleMoments(omega_bar, math.sqrt(g2_sum), math.sqrt(var))


def gaussian_stream(n: int, seed: int) -> np.ndarray:
    """n standard normal deviates from a counter-based stream.

    Philox4x64-10 keyed by ``seed`` yields 64-bit words w_k; each becomes
    u_k = ((w_k >> 11) + 0.5) * 2**-53 in (0, 1) and z_k = Phi^{-1}(u_k).
    Reproducible across platforms and implementations of Philox.
    """
    raw = np.random.Philox(key=int(seed)).random_raw(int(n))
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_explicit(mean, width, g_eff, n, seed) -> EnsembleSpec:
    """Draw n Gaussian spin frequencies with equal couplings g_eff/sqrt(n)."""
    if n < 1:
        raise InvalidCount(f"need n >= 1 spins, got {n}")
    if width < 0:
        raise ValueError("width must be >= 0")
    if g_eff <= 0:
        raise NonPositiveCoupling("g_eff must be > 0")
    omegas = mean + width * gaussian_stream(n, seed)
    couplings = np.full(n, g_eff / math.sqrt(n))
    return EnsembleSpec.explicit(omegas, couplings, rng_seed=seed)


def load_spins_csv(path) -> EnsembleSpec:
    """Read an explicit ensemble from a CSV with header ``omega,g``."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["omega", "g"]:
            raise ValueError(f"expected header 'omega,g', got {','.join(header)!r}")
        rows = [(float(a), float(b)) for a, b in reader if a.strip()]
    if not rows:
        raise EmptyEnsemble(f"{path}: no spins")
    w, g = zip(*rows)
    return EnsembleSpec.explicit(w, g)


def save_spins_csv(spec: EnsembleSpec, path):
    with open(Path(path), "w", newline="") as fh:
        fh.write("omega,g\n")
        for w, g in zip(spec.omegas, spec.couplings):
            fh.write(f"{float(w)!r},{float(g)!r}\n")
