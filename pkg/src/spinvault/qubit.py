"""Logical qubit stored in span{|G>, Phi_1} and its retrieval fidelity.

The photonic qubit a|0> + b|1> is assumed already written into the
ensemble as a|G> + b|Phi_1>. Each resonant pulse multiplies the bright
amplitude by a known phase (-1 for a pi pulse). Retrieval targets carry
that phase by default; ``raw=True`` compares against the bare input.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NotNormalized
from .evolve import (FidelityTrace, PropagatorCache, ReducedState, SectorState,
                     propagate_reduced, propagate_unitary)
from .krylov import ChainOrigin, KrylovChain
from .optimize import resolve_threads
from .protocol import DetuningSchedule

BRIGHT_INDEX = 1


@dataclass(frozen=True)
class LogicalQubit:
    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        n = abs(a) ** 2 + abs(b) ** 2
        if abs(n - 1.0) > 1e-12:
            raise NotNormalized(f"|alpha|^2 + |beta|^2 = {n!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def pauli_states() -> dict[str, LogicalQubit]:
    """The six Pauli eigenstates; z+ is the bright state, z- the ground state."""
    r = 1 / math.sqrt(2)
    return {
        "z+": LogicalQubit(0, 1),
        "z-": LogicalQubit(1, 0),
        "x+": LogicalQubit(r, r),
        "x-": LogicalQubit(r, -r),
        "y+": LogicalQubit(r, 1j * r),
        "y-": LogicalQubit(r, -1j * r),
    }


def encode(q: LogicalQubit, m: int) -> SectorState:
    ex = np.zeros(m, complex)
    ex[BRIGHT_INDEX] = q.beta
    return SectorState(q.alpha, ex)


def target_vector(q: LogicalQubit, m: int, phase: complex = 1.0) -> np.ndarray:
    """Ideal stored state in the (m+1)-dim sector, bright amplitude rotated by ``phase``."""
    v = np.zeros(m + 1, complex)
    v[0] = q.alpha
    v[1 + BRIGHT_INDEX] = q.beta * phase
    return v


def retrieval_fidelity(q: LogicalQubit, rho, phase: complex = 1.0) -> float:
    """<psi_L| rho |psi_L> for a density matrix or a ``ReducedState``."""
    if isinstance(rho, ReducedState):
        # only the G and Phi_1 entries of rho are needed
        a, b = q.alpha, q.beta * phase
        u1 = rho.ex_amps[BRIGHT_INDEX]
        c1 = rho.coherence[BRIGHT_INDEX]
        f = (abs(a) ** 2 * rho.p_G + abs(b) ** 2 * abs(u1) ** 2
             + 2 * (np.conj(b) * c1 * a).real)
        return float(f)
    rho = np.asarray(rho)
    v = target_vector(q, rho.shape[0] - 1, phase)
    return float(np.vdot(v, rho @ v).real)


def parity_phases(g_eff, schedule: DetuningSchedule, n_periods, samples_per_period=1):
    """Bright-state phase of the homogeneous, lossless two-level reference.

    Returns (times, phases). A vanishing reference amplitude (mid-pulse)
    has no defined phase; 1 is used there.
    """
    ref = KrylovChain(np.zeros(2), np.array([float(g_eff)]), ChainOrigin.ANALYTIC_GAUSSIAN)
    out = propagate_unitary(ref, schedule, SectorState.bright(2), n_periods, samples_per_period)
    times = np.array([t for t, _ in out])
    amps = np.array([s.ex_amps[BRIGHT_INDEX] for _, s in out])
    mag = np.abs(amps)
    phases = np.where(mag > 1e-9, amps / np.where(mag > 0, mag, 1.0), 1.0)
    return times, phases


def qubit_trace(chain: KrylovChain, schedule: DetuningSchedule, gamma, q: LogicalQubit,
                n_periods, samples_per_period=1, raw=False, cache=None) -> FidelityTrace:
    samples = propagate_reduced(chain, schedule, gamma, encode(q, chain.m), n_periods,
                                samples_per_period, cache)
    times = np.array([t for t, _ in samples])
    if raw:
        phases = np.ones(times.size, complex)
    else:
        _, phases = parity_phases(chain.g_eff, schedule, n_periods, samples_per_period)
    vals = np.array([retrieval_fidelity(q, s, p) for (_, s), p in zip(samples, phases)])
    return FidelityTrace(times, vals, schedule.period, {"raw": raw})


def assembled_fidelity(q: LogicalQubit, bright_samples, phases) -> np.ndarray:
    """Fidelity of ``q`` rebuilt from the evolution of the bare bright state.

    ``bright_samples`` are ReducedStates of the (0, 1) run. Linearity of the
    excited-block propagator gives ex(t) = beta * u(t), hence
    F = |a|^2 (1 - |b|^2 |u|^2) + |b|^4 |u_1|^2 + 2 |a|^2 |b|^2 Re(conj(p) u_1).
    """
    a2, b2 = abs(q.alpha) ** 2, abs(q.beta) ** 2
    out = np.empty(len(bright_samples))
    for k, (s, p) in enumerate(zip(bright_samples, phases)):
        u = s.ex_amps
        u1 = u[BRIGHT_INDEX]
        s2 = float(np.vdot(u, u).real)
        out[k] = a2 * (1 - b2 * s2) + b2 * b2 * abs(u1) ** 2 + 2 * a2 * b2 * (np.conj(p) * u1).real
    return out


@dataclass
class PauliTraces:
    modulated: FidelityTrace
    unmodulated: FidelityTrace


def pauli_suite(chain: KrylovChain, schedule: DetuningSchedule, gamma, n_periods,
                reference: DetuningSchedule | None = None, samples_per_period=1,
                raw=False, threads=None, states=None) -> dict[str, PauliTraces]:
    """Fidelity traces of the Pauli eigenstates, with and without modulation.

    ``reference`` is the unmodulated schedule (defaults to an always-resonant
    cavity sampled with the same period). States run in parallel over
    shared propagator caches.
    """
    from .protocol import unmodulated

    reference = reference or unmodulated(schedule.period)
    states = states or pauli_states()
    caches = (PropagatorCache(chain), PropagatorCache(chain))

    def run(label):
        q = states[label]
        mod = qubit_trace(chain, schedule, gamma, q, n_periods, samples_per_period, raw, caches[0])
        unm = qubit_trace(chain, reference, gamma, q, n_periods, samples_per_period, raw, caches[1])
        return label, PauliTraces(mod, unm)

    threads = resolve_threads(threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return dict(pool.map(run, list(states)))
    return dict(run(k) for k in states)
