"""Periodic piecewise-constant cavity detuning schedules.

A schedule lists one period of ``(duration, delta)`` segments. ``delta``
may be ``math.inf``: the dispersive limit in which the cavity is
effectively decoupled from the ensemble for that segment.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPositiveDuration, OutOfRange, UnsupportedKind


class ScheduleKind(str, Enum):
    SYMMETRIC = "Symmetric"
    UNMODULATED = "Unmodulated"
    FREE_SPINS = "FreeSpins"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class DetuningSchedule:
    segments: tuple[tuple[float, float], ...]
    kind: ScheduleKind = ScheduleKind.CUSTOM

    def __post_init__(self):
        segs = tuple((float(d), float(x)) for d, x in self.segments)
        if not segs:
            raise NonPositiveDuration("schedule needs at least one segment")
        for dur, delta in segs:
            if not dur > 0 or not math.isfinite(dur):
                raise NonPositiveDuration(f"segment duration must be finite and > 0, got {dur}")
            if math.isnan(delta):
                raise ValueError("segment detuning is NaN")
        if self.kind == ScheduleKind.SYMMETRIC:
            ok = len(segs) == 3
            if ok:
                (d1, x1), (_, x2), (d3, x3) = segs
                ok = d1 == d3 and x1 == x3 and x2 == 0.0
            if not ok:
                raise ValueError("Symmetric needs [(t0/2, D), (t_on, 0), (t0/2, D)]")
        object.__setattr__(self, "segments", segs)

    @property
    def period(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    @property
    def durations(self):
        return np.array([d for d, _ in self.segments])

    @property
    def deltas(self):
        return np.array([x for _, x in self.segments])

    @property
    def t_on(self):
        """Resonant time per period (the middle segment for Symmetric)."""
        if self.kind == ScheduleKind.SYMMETRIC:
            return self.segments[1][0]
        return math.fsum(d for d, x in self.segments if x == 0.0)

    @property
    def t_0(self):
        if self.kind == ScheduleKind.SYMMETRIC:
            return 2 * self.segments[0][0]
        return math.fsum(d for d, x in self.segments if x != 0.0)

    @property
    def is_dispersive_limit(self):
        return any(math.isinf(x) for _, x in self.segments)

    def boundaries(self):
        """Segment start times within one period, plus the period itself."""
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def with_delta(self, delta):
        """Same timing, every off-resonant segment set to ``delta``."""
        segs = [(d, x if x == 0.0 else float(delta)) for d, x in self.segments]
        return DetuningSchedule(tuple(segs), self.kind)


def symmetric_protocol(t_0, t_on, delta=math.inf) -> DetuningSchedule:
    """Symmetric period: t_0/2 detuned, t_on resonant, t_0/2 detuned."""
    if not (t_0 > 0 and t_on > 0):
        raise NonPositiveDuration(f"t_0 and t_on must be > 0, got {t_0}, {t_on}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    half = 0.5 * t_0
    return DetuningSchedule(((half, delta), (t_on, 0.0), (half, delta)),
                            ScheduleKind.SYMMETRIC)


def unmodulated(period) -> DetuningSchedule:
    """Always-resonant cavity; ``period`` only fixes the sampling frame."""
    if not period > 0:
        raise NonPositiveDuration(f"period must be > 0, got {period}")
    return DetuningSchedule(((period, 0.0),), ScheduleKind.UNMODULATED)


def free_spins(period) -> DetuningSchedule:
    """No cavity coupling at any time."""
    if not period > 0:
        raise NonPositiveDuration(f"period must be > 0, got {period}")
    return DetuningSchedule(((period, math.inf),), ScheduleKind.FREE_SPINS)


@dataclass(frozen=True)
class PhaseProfile:
    times: np.ndarray
    phases: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.phases)


def _require_finite(schedule):
    if schedule.is_dispersive_limit:
        raise UnsupportedKind("accumulated phase is undefined for infinite detuning")


def phase_profile(schedule: DetuningSchedule) -> PhaseProfile:
    _require_finite(schedule)
    b = schedule.boundaries()
    phases = np.concatenate([[0.0], np.cumsum(schedule.durations * schedule.deltas)])
    return PhaseProfile(b, phases)


def phase_at(schedule: DetuningSchedule, t: float) -> float:
    """phi(t) = integral of delta over [0, t] within a single period."""
    _require_finite(schedule)
    T = schedule.period
    if t < 0 or t > T * (1 + 1e-14):
        raise OutOfRange(f"t={t} outside [0, {T}]")
    acc = 0.0
    start = 0.0
    for dur, delta in schedule.segments:
        if t <= start + dur:
            return acc + delta * (t - start)
        acc += delta * dur
        start += dur
    return acc


def phase_integral(schedule: DetuningSchedule) -> complex:
    """Integral of exp(i phi(t)) over one period.

    Closed form for the symmetric protocol; other schedules are summed
    segment by segment, each piece being an exact exponential integral. In
    the dispersive limit the oscillating part vanishes and the global phase
    is dropped, leaving t_on.
    """
    if schedule.kind == ScheduleKind.SYMMETRIC:
        t_0, t_on = schedule.t_0, schedule.t_on
        delta = schedule.segments[0][1]
        if math.isinf(delta):
            return complex(t_on)
        if delta == 0.0:
            return complex(t_0 + t_on)
        return ((2.0 / delta) * math.sin(delta * t_0 / 2) + t_on) * cmath.exp(0.5j * delta * t_0)
    _require_finite(schedule)
    total = 0j
    phi = 0.0
    for dur, delta in schedule.segments:
        if delta == 0.0:
            total += dur * cmath.exp(1j * phi)
        else:
            total += cmath.exp(1j * phi) * (cmath.exp(1j * delta * dur) - 1) / (1j * delta)
        phi += delta * dur
    return total
