"""Time evolution in the {|G>, Phi_0, ..., Phi_{m-1}} sector.

Three routes, all driven by a ``DetuningSchedule``:

* ``propagate_unitary``: exact segment exponentials (gamma = 0).
* ``propagate_lindblad``: density matrix under cavity decay, integrated
  step by step from ``lindblad_rhs``.
* ``propagate_reduced``: pure-state shortcut for the same master equation.
  Decay only moves population Phi_0 -> |G>, so the excited block follows
  the non-Hermitian H - i(gamma/2)|Phi_0><Phi_0| and |G> collects the lost
  norm.

The cavity detuning sits on the Phi_0 diagonal; an infinite detuning
switches the photon-bright coupling off for that segment.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal, expm

from .errors import NumericalFailure, StepTooLarge, UnsupportedState
from .krylov import KrylovChain
from .protocol import DetuningSchedule

# index of |G>, Phi_0 (photon) and Phi_1 (bright) in the density matrix
G, PHOTON, BRIGHT = 0, 1, 2


@dataclass
class SectorState:
    g_amp: complex
    ex_amps: np.ndarray

    def __post_init__(self):
        self.g_amp = complex(self.g_amp)
        self.ex_amps = np.asarray(self.ex_amps, dtype=complex)

    @classmethod
    def basis(cls, m, index):
        """Single-excitation basis state Phi_index."""
        ex = np.zeros(m, complex)
        ex[index] = 1.0
        return cls(0.0, ex)

    @classmethod
    def bright(cls, m):
        return cls.basis(m, 1)

    @classmethod
    def ground(cls, m):
        return cls(1.0, np.zeros(m, complex))

    @property
    def m(self):
        return self.ex_amps.size

    def norm2(self):
        return abs(self.g_amp) ** 2 + float(np.vdot(self.ex_amps, self.ex_amps).real)

    def vector(self):
        return np.concatenate([[self.g_amp], self.ex_amps])

    def to_density(self):
        v = self.vector()
        return np.outer(v, v.conj())


@dataclass
class ReducedState:
    """Excited amplitudes, ground population and <Phi_j|rho|G> coherences."""

    ex_amps: np.ndarray
    p_G: float
    coherence: np.ndarray

    def to_density(self):
        m = self.ex_amps.size
        rho = np.empty((m + 1, m + 1), complex)
        rho[0, 0] = self.p_G
        rho[1:, 0] = self.coherence
        rho[0, 1:] = self.coherence.conj()
        rho[1:, 1:] = np.outer(self.ex_amps, self.ex_amps.conj())
        return rho


@dataclass
class FidelityTrace:
    times: np.ndarray
    values: np.ndarray
    period: float | None = None
    meta: dict = field(default_factory=dict)

    def stroboscopic(self):
        """Samples at integer multiples of the period."""
        if self.period is None:
            raise ValueError("trace has no period")
        n = self.times / self.period
        keep = np.abs(n - np.round(n)) < 1e-9
        return FidelityTrace(self.times[keep], self.values[keep], self.period, dict(self.meta))

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no sample at t={t}")
        return float(self.values[i])


def _tridiag(chain: KrylovChain, delta: float):
    d = np.array(chain.alpha, dtype=float)
    e = np.array(chain.beta, dtype=float)
    if math.isinf(delta):
        d[0] = 0.0
        e[0] = 0.0
    else:
        d[0] = delta
    return d, e


def segment_hamiltonian(chain: KrylovChain, delta: float) -> np.ndarray:
    """Real symmetric tridiagonal H with the cavity detuning on Phi_0."""
    d, e = _tridiag(chain, delta)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def spectral_bound(chain: KrylovChain, delta: float) -> float:
    """Gershgorin bound on the spectral radius of the segment Hamiltonian."""
    d, e = _tridiag(chain, delta)
    rad = np.abs(d).copy()
    rad[:-1] += e
    rad[1:] += e
    return float(rad.max())


class PropagatorCache:
    """Segment propagators keyed on (delta, duration, gamma).

    Safe for concurrent readers; a racing insert keeps the first value.
    """

    def __init__(self, chain: KrylovChain):
        self.chain = chain
        self._eig = {}
        self._mats = {}
        self._lock = threading.Lock()

    def _eigh(self, delta):
        got = self._eig.get(delta)
        if got is None:
            d, e = _tridiag(self.chain, delta)
            got = eigh_tridiagonal(d, e)
            with self._lock:
                got = self._eig.setdefault(delta, got)
        return got

    def get(self, delta, duration, gamma=0.0):
        key = (float(delta), float(duration), float(gamma))
        got = self._mats.get(key)
        if got is None:
            if gamma == 0.0:
                w, v = self._eigh(key[0])
                got = (v * np.exp(-1j * w * duration)) @ v.T
            else:
                h = segment_hamiltonian(self.chain, delta).astype(complex)
                h[0, 0] -= 0.5j * gamma
                got = expm(-1j * duration * h)
            with self._lock:
                got = self._mats.setdefault(key, got)
        return got


def _period_pieces(schedule: DetuningSchedule, samples_per_period: int):
    """Split one period at segment boundaries and sample instants.

    Returns ``[(delta, duration, sample_offset or None), ...]``.
    """
    T = schedule.period
    bounds = schedule.boundaries()
    bounds[-1] = T
    samples = T * np.arange(1, samples_per_period + 1) / samples_per_period
    samples[-1] = T
    cuts = np.union1d(bounds[1:], samples)
    keep = np.concatenate([[True], np.diff(cuts) > 1e-12 * T])
    cuts = cuts[keep]
    cuts[-1] = T
    sample_set = samples
    pieces = []
    start = 0.0
    for c in cuts:
        mid = 0.5 * (start + c)
        seg = min(int(np.searchsorted(bounds, mid, side="right")) - 1, len(schedule.segments) - 1)
        hit = np.abs(sample_set - c) <= 1e-12 * T
        offset = float(sample_set[hit][0]) if hit.any() else None
        pieces.append((schedule.segments[seg][1], c - start, offset))
        start = c
    return pieces


def _check_samples(samples_per_period):
    if samples_per_period < 1:
        raise ValueError("samples_per_period must be >= 1")


def period_propagator(chain: KrylovChain, schedule: DetuningSchedule, gamma=0.0,
                      cache: PropagatorCache | None = None) -> np.ndarray:
    """One-period propagator on the excited block (unitary when gamma = 0)."""
    cache = cache or PropagatorCache(chain)
    U = np.eye(chain.m, dtype=complex)
    for dur, delta in schedule.segments:
        U = cache.get(delta, dur, gamma) @ U
    return U


def propagate_unitary(chain, schedule, psi0: SectorState, n_periods, samples_per_period=1,
                      cache=None):
    """Exact Schroedinger evolution; returns ``[(t, SectorState), ...]``."""
    _check_samples(samples_per_period)
    cache = cache or PropagatorCache(chain)
    T = schedule.period
    pieces = _period_pieces(schedule, samples_per_period)
    ex = np.array(psi0.ex_amps, dtype=complex)
    out = [(0.0, SectorState(psi0.g_amp, ex.copy()))]
    for n in range(n_periods):
        for delta, dur, offset in pieces:
            ex = cache.get(delta, dur) @ ex
            if offset is not None:
                out.append((n * T + offset, SectorState(psi0.g_amp, ex.copy())))
    return out


def _as_pure(psi0):
    if isinstance(psi0, SectorState):
        return psi0
    rho = np.asarray(psi0)
    w, v = np.linalg.eigh(rho)
    if np.sum(w > 1e-10) > 1:
        raise UnsupportedState("reduced propagation needs a pure initial state")
    vec = v[:, -1] * math.sqrt(max(w[-1], 0.0))
    # fix the global phase so the |G> amplitude is real and non-negative
    if abs(vec[0]) > 0:
        vec = vec * (abs(vec[0]) / vec[0])
    return SectorState(vec[0], vec[1:])


def propagate_reduced(chain, schedule, gamma, psi0, n_periods, samples_per_period=1,
                      cache=None):
    """Master-equation evolution of a pure initial state without forming rho.

    Returns ``[(t, ReducedState), ...]``; ``ReducedState.to_density()`` gives
    the same density matrix the full Lindblad equation produces.
    """
    _check_samples(samples_per_period)
    psi0 = _as_pure(psi0)
    cache = cache or PropagatorCache(chain)
    T = schedule.period
    pieces = _period_pieces(schedule, samples_per_period)
    g0c = np.conj(psi0.g_amp)
    ex = np.array(psi0.ex_amps, dtype=complex)

    def snap(ex):
        p_ex = float(np.vdot(ex, ex).real)
        return ReducedState(ex.copy(), 1.0 - p_ex, ex * g0c)

    # the ground amplitude may carry less than full norm if psi0 is not normalized
    norm = psi0.norm2()
    if abs(norm - 1.0) > 1e-10:
        raise UnsupportedState(f"initial state norm {norm} != 1")
    out = [(0.0, snap(ex))]
    for n in range(n_periods):
        for delta, dur, offset in pieces:
            ex = cache.get(delta, dur, gamma) @ ex
            if offset is not None:
                out.append((n * T + offset, snap(ex)))
    return out


def lindblad_rhs(chain, delta, gamma, rho):
    """-i[H, rho] + gamma (A rho A^+ - {A^+A, rho}/2) with A = |G><Phi_0|."""
    d, e = _tridiag(chain, delta)
    d = np.concatenate([[0.0], d])
    e = np.concatenate([[0.0], e])
    rho = np.asarray(rho, dtype=complex)
    hr = _tri_mul(d, e, rho)
    rh = _tri_mul(d, e, rho.conj().T).conj().T
    out = -1j * (hr - rh)
    _add_decay(out, rho, gamma)
    return out


def _tri_mul(d, e, x):
    y = d[:, None] * x
    y[1:] += e[:, None] * x[:-1]
    y[:-1] += e[:, None] * x[1:]
    return y


def _add_decay(out, rho, gamma):
    if gamma:
        out[PHOTON, :] -= 0.5 * gamma * rho[PHOTON, :]
        out[:, PHOTON] -= 0.5 * gamma * rho[:, PHOTON]
        out[G, G] += gamma * rho[PHOTON, PHOTON]


def _hermitian_rhs(d, e, gamma):
    # for Hermitian rho, rho H = (H rho)^+
    def f(rho):
        x = _tri_mul(d, e, rho)
        out = -1j * (x - x.conj().T)
        _add_decay(out, rho, gamma)
        return out
    return f


@dataclass(frozen=True)
class IntegratorConfig:
    """``method``: "taylor" (default, order-12 fixed step), "rk4" or "adaptive".

    Both fixed-step methods only evaluate the right-hand side. RK4 with the
    classic step (shortest segment / 50) leaves eigenvalues near -1e-6 at
    M = 128, which trips the positivity check; the Taylor step keeps the
    local error at roundoff level.
    """

    method: str = "taylor"
    step: float | None = None
    rtol: float = 1e-10
    atol: float = 1e-12
    taylor_order: int = 12


def _rk4(f, rho, dur, nsteps):
    h = dur / nsteps
    for _ in range(nsteps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
    return rho


def _taylor(f, rho, dur, nsteps, order):
    h = dur / nsteps
    for _ in range(nsteps):
        term = rho
        acc = rho.copy()
        for k in range(1, order + 1):
            term = (h / k) * f(term)
            acc += term
        rho = 0.5 * (acc + acc.conj().T)
    return rho


def _adaptive(f, rho, dur, rtol, atol):
    shape = rho.shape
    sol = solve_ivp(lambda t, y: f(y.reshape(shape)).ravel(), (0.0, dur), rho.ravel(),
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalFailure(f"adaptive integrator failed: {sol.message}")
    rho = sol.y[:, -1].reshape(shape)
    return 0.5 * (rho + rho.conj().T)


def density_diagnostics(rho):
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return {
        "trace": complex(np.trace(rho)),
        "hermiticity": float(np.max(np.abs(rho - rho.conj().T))),
        "min_eigenvalue": float(w[0]),
    }


def propagate_lindblad(chain, schedule, gamma, rho0, n_periods, samples_per_period=1,
                       integrator: IntegratorConfig = IntegratorConfig()):
    """Integrate the master equation; returns ``[(t, rho), ...]``.

    Positivity is checked at every sample: an eigenvalue below -1e-8 raises
    ``NumericalFailure`` carrying the diagnostics.
    """
    _check_samples(samples_per_period)
    if isinstance(rho0, SectorState):
        rho0 = rho0.to_density()
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (chain.m + 1, chain.m + 1):
        raise ValueError(f"rho must be {(chain.m + 1,) * 2}, got {rho.shape}")
    T = schedule.period
    pieces = _period_pieces(schedule, samples_per_period)
    shortest = min(d for d, _ in schedule.segments)
    if integrator.step is not None and integrator.step > shortest / 10:
        raise StepTooLarge(f"step {integrator.step} exceeds shortest segment/10 = {shortest / 10}")

    rhs = {}
    steps = {}
    for delta, dur, _ in pieces:
        if delta not in rhs:
            d, e = _tridiag(chain, delta)
            rhs[delta] = _hermitian_rhs(np.concatenate([[0.0], d]), np.concatenate([[0.0], e]), gamma)
        lam = spectral_bound(chain, delta)
        if integrator.method == "rk4":
            h = integrator.step or min(shortest / 50, 0.1 / max(lam, 1e-300))
        elif integrator.method == "taylor":
            h = integrator.step or 0.5 / max(2 * lam + gamma, 1e-300)
        else:
            h = dur
        steps[(delta, dur)] = max(1, math.ceil(dur / h - 1e-9))

    def check(t, rho):
        w0 = np.linalg.eigvalsh(rho)[0]
        if w0 < -1e-8:
            diag = density_diagnostics(rho)
            diag["time"] = t
            raise NumericalFailure(f"density matrix lost positivity at t={t}", diag)

    out = [(0.0, rho.copy())]
    for n in range(n_periods):
        for delta, dur, offset in pieces:
            f = rhs[delta]
            if integrator.method == "rk4":
                rho = _rk4(f, rho, dur, steps[(delta, dur)])
            elif integrator.method == "taylor":
                rho = _taylor(f, rho, dur, steps[(delta, dur)], integrator.taylor_order)
            elif integrator.method == "adaptive":
                rho = _adaptive(f, rho, dur, integrator.rtol, integrator.atol)
            else:
                raise ValueError(f"unknown integrator {integrator.method!r}")
            if offset is not None:
                t = n * T + offset
                check(t, rho)
                out.append((t, rho.copy()))
    return out


def propagate_phase_frame(chain, schedule, psi0: SectorState, n_periods, samples_per_period=1,
                          rtol=1e-11, atol=1e-12):
    """Validation path: integrate the phi(t)-dressed interaction picture.

    H(t) = chain without the Phi_0 diagonal, with the photon-bright coupling
    multiplied by exp(+i phi(t)). Only meaningful for finite detunings.
    Returned states are in that frame; bright-state fidelities agree with
    ``propagate_unitary``.
    """
    from .protocol import phase_profile

    _check_samples(samples_per_period)
    prof = phase_profile(schedule)
    phi_T = float(prof.phases[-1])
    T = schedule.period
    d, e = _tridiag(chain, 0.0)
    g = e[0]
    e_rest = e.copy()
    e_rest[0] = 0.0
    pieces = _period_pieces(schedule, samples_per_period)

    def make_rhs(phi_start, delta):
        def f(t, y):
            phi = phi_start + delta * t
            out = d * y
            out[:-1] += e_rest * y[1:]
            out[1:] += e_rest * y[:-1]
            out[0] += g * np.exp(1j * phi) * y[1]
            out[1] += g * np.exp(-1j * phi) * y[0]
            return -1j * out
        return f

    psi = np.array(psi0.ex_amps, dtype=complex)
    out = [(0.0, SectorState(psi0.g_amp, psi.copy()))]
    for n in range(n_periods):
        start = 0.0
        for delta, dur, offset in pieces:
            phi_start = n * phi_T + float(prof(start))
            max_step = 0.1 / max(abs(delta), g, 1.0)
            sol = solve_ivp(make_rhs(phi_start, delta), (0.0, dur), psi, method="DOP853",
                            rtol=rtol, atol=atol, max_step=max_step)
            if not sol.success:
                raise NumericalFailure(sol.message)
            psi = sol.y[:, -1]
            start += dur
            if offset is not None:
                out.append((n * T + offset, SectorState(psi0.g_amp, psi.copy())))
    return out


def populations(rho):
    """(f_bright, p_G, p_photon, p_dark) from a sector density matrix."""
    diag = np.real(np.diag(rho))
    return float(diag[BRIGHT]), float(diag[G]), float(diag[PHOTON]), float(diag[BRIGHT + 1:].sum())


def bright_fidelity(state) -> float:
    if isinstance(state, SectorState):
        return float(abs(state.ex_amps[1]) ** 2)
    if isinstance(state, ReducedState):
        return float(abs(state.ex_amps[1]) ** 2)
    return float(np.real(state[BRIGHT, BRIGHT]))


def fidelity_trace(samples, period=None, meta=None) -> FidelityTrace:
    times = np.array([t for t, _ in samples])
    vals = np.array([bright_fidelity(s) for _, s in samples])
    return FidelityTrace(times, vals, period, dict(meta or {}))
