"""Floquet-Magnus effective Hamiltonian of the modulated chain.

The modulation is treated as switching the photon-bright coupling on for
t_on and off for t_0 each period. Zeroth order averages the coupling;
first order adds a Phi_0-Phi_2 term proportional to g_eff * sigma.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedKind
from .evolve import PropagatorCache, period_propagator
from .krylov import KrylovChain
from .protocol import DetuningSchedule, ScheduleKind, phase_integral


def sigma_x(m, i, j):
    s = np.zeros((m, m), complex)
    s[i, j] = s[j, i] = 1.0
    return s


def sigma_y(m, k, i):
    """-i(|k><i| - |i><k|)."""
    s = np.zeros((m, m), complex)
    s[k, i] = -1j
    s[i, k] = 1j
    return s


def spin_chain_part(chain: KrylovChain) -> np.ndarray:
    """Dark-chain Hamiltonian: every coupling except photon-bright."""
    m = chain.m
    h = np.zeros((m, m), complex)
    idx = np.arange(1, m)
    h[idx, idx] = chain.alpha[1:]
    k = np.arange(1, m - 1)
    h[k, k + 1] = chain.beta[1:]
    h[k + 1, k] = chain.beta[1:]
    return h


def _require_symmetric(schedule):
    if schedule.kind != ScheduleKind.SYMMETRIC:
        raise UnsupportedKind(f"Floquet terms need a Symmetric schedule, got {schedule.kind.value}")


def floquet_h0(chain: KrylovChain, schedule: DetuningSchedule, exact_phase=False) -> np.ndarray:
    """Period-averaged Hamiltonian.

    By default the large-detuning form: coupling weight t_on/T, phase factor
    dropped. ``exact_phase`` keeps the full phase integral instead.
    """
    _require_symmetric(schedule)
    T = schedule.period
    h = spin_chain_part(chain)
    if exact_phase:
        c = chain.g_eff * phase_integral(schedule) / T
        h[0, 1] += c
        h[1, 0] += np.conj(c)
    else:
        h += (chain.g_eff * schedule.t_on / T) * sigma_x(chain.m, 0, 1)
    return h


def floquet_h1(chain: KrylovChain, schedule: DetuningSchedule) -> np.ndarray:
    """First-order term g_eff sigma t_on^2 / (8 T^2) * sigma^y_02 (not times T)."""
    _require_symmetric(schedule)
    m = chain.m
    if m < 3:
        return np.zeros((m, m), complex)
    T = schedule.period
    coeff = chain.g_eff * chain.sigma * schedule.t_on ** 2 / (8 * T * T)
    return coeff * sigma_y(m, 0, 2)


@dataclass(frozen=True, eq=False)
class FloquetHamiltonian:
    h0: np.ndarray
    h1: np.ndarray
    period: float

    @property
    def h_eff(self):
        return self.h0 + self.period * self.h1

    def truncated(self, order):
        return self.h0 if order == 0 else self.h_eff

    def to_json(self):
        def enc(a):
            return {"re": a.real.tolist(), "im": a.imag.tolist()}
        return json.dumps({"period": self.period, "h0": enc(self.h0), "h1": enc(self.h1)})


def floquet_hamiltonian(chain, schedule) -> FloquetHamiltonian:
    return FloquetHamiltonian(floquet_h0(chain, schedule), floquet_h1(chain, schedule),
                              schedule.period)


def _expm_herm(h, t):
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def stroboscopic_fidelity(fh: FloquetHamiltonian, n: int, target: int = 1, order: int = 1) -> float:
    """|<target| exp(-i n H_F T) |target>|^2."""
    if n < 0:
        raise ValueError("n must be >= 0")
    w, v = np.linalg.eigh(fh.truncated(order))
    amp = np.sum(np.abs(v[target]) ** 2 * np.exp(-1j * w * n * fh.period))
    return float(abs(amp) ** 2)


def magnus_error(chain: KrylovChain, schedule: DetuningSchedule, cache: PropagatorCache | None = None):
    """Operator-norm distance of zeroth/first-order truncations from the exact period map.

    The exact propagator is taken into the phi-frame (photon phase exp(i phi(T)))
    for finite detuning; in the dispersive limit the frames coincide.
    """
    fh = floquet_hamiltonian(chain, schedule)
    T = fh.period
    U = period_propagator(chain, schedule, 0.0, cache)
    if not schedule.is_dispersive_limit:
        phi_T = math.fsum(d * x for d, x in schedule.segments)
        U = U.copy()
        U[0, :] *= np.exp(1j * phi_T)
    err0 = float(np.linalg.norm(U - _expm_herm(fh.h0, T), 2))
    err1 = float(np.linalg.norm(U - _expm_herm(fh.h_eff, T), 2))
    return err0, err1
