"""Grid search over protocol timings and lifetime fitting."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BothRatesZero, EmptyGrid, InsufficientData, NonDecayingTrace
from .evolve import FidelityTrace, PropagatorCache, period_propagator
from .floquet import floquet_hamiltonian, stroboscopic_fidelity
from .krylov import KrylovChain, truncation_bound
from .protocol import symmetric_protocol

log = logging.getLogger(__name__)


class ObjectiveKind(str, Enum):
    FLOQUET_F1 = "FloquetF1"
    FLOQUET_FN = "FloquetFn"
    LINDBLAD_FN = "LindbladFn"
    LINDBLAD_RATE = "LindbladRate"


@dataclass(frozen=True)
class Objective:
    """What a grid cell scores.

    FloquetF1/FloquetFn: stroboscopic bright-state fidelity under the
    first-order Floquet Hamiltonian after 1 or ``n`` periods.
    LindbladFn: bright-state fidelity after ``n`` periods with cavity decay.
    LindbladRate: the same fidelity converted to a per-time figure,
    F(nT) ** (t_ref / (n T)), so that protocols with different periods
    compare at equal storage time. ``t_ref`` defaults to 1/sigma.
    """

    kind: ObjectiveKind = ObjectiveKind.FLOQUET_F1
    n: int = 1
    gamma: float = 0.0
    t_ref: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectiveKind(self.kind))
        if self.n < 1:
            raise ValueError("objective needs n >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class GridSpec:
    t_on_values: np.ndarray
    t_0_values: np.ndarray
    objective: Objective = Objective()
    delta: float = math.inf

    def __post_init__(self):
        for name in ("t_on_values", "t_0_values"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.size == 0:
                raise EmptyGrid(f"{name} is empty")
            if np.any(v <= 0) or np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be strictly positive and ascending")
            object.__setattr__(self, name, v)

    @classmethod
    def default(cls, t_pi, t_sigma, objective=Objective(), delta=math.inf,
                n_t_on=79, n_t_0=60):
        """t_on over [0.1, 4] t_pi and t_0 over [0.01, 1] T_sigma."""
        return cls(np.linspace(0.1, 4.0, n_t_on) * t_pi,
                   np.linspace(0.01, 1.0, n_t_0) * t_sigma, objective, delta)


@dataclass
class OptimizationResult:
    best_t_on: float
    best_t_0: float
    best_fidelity: float
    surface: np.ndarray
    t_on_values: np.ndarray
    t_0_values: np.ndarray

    def rows(self):
        """(t_on, t_0, fidelity) triples, row-major over (t_0, t_on)."""
        for i, t0 in enumerate(self.t_0_values):
            for j, ton in enumerate(self.t_on_values):
                yield float(ton), float(t0), float(self.surface[i, j])


def evaluate_objective(chain: KrylovChain, objective: Objective, t_on, t_0, delta=math.inf):
    schedule = symmetric_protocol(t_0, t_on, delta)
    kind = objective.kind
    if kind in (ObjectiveKind.FLOQUET_F1, ObjectiveKind.FLOQUET_FN):
        n = 1 if kind == ObjectiveKind.FLOQUET_F1 else objective.n
        return stroboscopic_fidelity(floquet_hamiltonian(chain, schedule), n)
    U = period_propagator(chain, schedule, objective.gamma, PropagatorCache(chain))
    psi = np.zeros(chain.m, complex)
    psi[1] = 1.0
    for _ in range(objective.n):
        psi = U @ psi
    f = float(abs(psi[1]) ** 2)
    if kind == ObjectiveKind.LINDBLAD_FN:
        return f
    t_ref = objective.t_ref
    if t_ref is None:
        t_ref = 1.0 / chain.sigma if chain.sigma > 0 else 1.0
    if f <= 0.0:
        return 0.0
    return float(math.exp(math.log(f) * t_ref / (objective.n * schedule.period)))


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("SPINVAULT_THREADS", "1") or 1)
    return max(1, int(threads))


def grid_search(chain: KrylovChain, grid: GridSpec, threads=None) -> OptimizationResult:
    """Score every (t_0, t_on) cell; ties go to the smaller t_0, then t_on."""
    cells = [(i, j) for i in range(grid.t_0_values.size) for j in range(grid.t_on_values.size)]
    if not cells:
        raise EmptyGrid("grid has no cells")

    def score(cell):
        i, j = cell
        return evaluate_objective(chain, grid.objective, grid.t_on_values[j],
                                  grid.t_0_values[i], grid.delta)

    n = 1 if grid.objective.kind == ObjectiveKind.FLOQUET_F1 else grid.objective.n
    longest = n * (grid.t_0_values[-1] + grid.t_on_values[-1])
    needed = truncation_bound(chain.sigma, longest)
    if chain.m < needed:
        log.warning("chain m=%d is below the light-cone bound m=%d for t=%.3g; "
                    "long-period cells may show truncation revivals", chain.m, needed, longest)

    threads = resolve_threads(threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(score, cells))
    else:
        values = [score(c) for c in cells]
    surface = np.array(values).reshape(grid.t_0_values.size, grid.t_on_values.size)
    # np.argmax returns the first maximum in row-major order
    flat = int(np.argmax(surface))
    i, j = divmod(flat, grid.t_on_values.size)
    return OptimizationResult(float(grid.t_on_values[j]), float(grid.t_0_values[i]),
                              float(surface[i, j]), surface, grid.t_on_values, grid.t_0_values)


def local_maxima(values):
    """Indices of interior strict-or-plateau local maxima of a 1-D sequence."""
    v = np.asarray(values)
    return [k for k in range(1, v.size - 1) if v[k] >= v[k - 1] and v[k] > v[k + 1]]


@dataclass
class LifetimeFit:
    tau: float
    amplitude: float
    residual: float
    n_points: int = 0
    meta: dict = field(default_factory=dict)


def fit_lifetime(trace: FidelityTrace, threshold=0.05, min_samples=8) -> LifetimeFit:
    """Fit F(t) = A exp(-t / tau) by least squares on log F.

    Only samples with F > ``threshold`` enter the fit. A flat trace returns
    tau = inf; a growing one raises ``NonDecayingTrace``.
    """
    t = np.asarray(trace.times, dtype=float)
    f = np.asarray(trace.values, dtype=float)
    if t.size < min_samples:
        raise InsufficientData(f"need >= {min_samples} samples, got {t.size}")
    keep = f > threshold
    if keep.sum() < 2:
        raise InsufficientData(f"fewer than two samples above F = {threshold}")
    tk, yk = t[keep], np.log(f[keep])
    A = np.vstack([tk, np.ones_like(tk)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, yk, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icept]) - yk) ** 2)))
    span = float(tk.max() - tk.min())
    if abs(slope) * span < 1e-12:
        return LifetimeFit(math.inf, float(math.exp(icept)), resid, int(keep.sum()))
    if slope > 0:
        raise NonDecayingTrace(f"fitted decay rate is negative (slope {slope:.3g})")
    return LifetimeFit(float(-1.0 / slope), float(math.exp(icept)), resid, int(keep.sum()))


def improvement_factor(tau, sigma, gamma) -> float:
    """tau over the longer of the bare lifetimes 1/sigma and 1/gamma (zero rates ignored)."""
    bare = [1.0 / r for r in (sigma, gamma) if r > 0]
    if not bare:
        raise BothRatesZero("need sigma > 0 or gamma > 0")
    return float(tau / max(bare))
