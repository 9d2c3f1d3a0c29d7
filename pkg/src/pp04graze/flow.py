"""Trajectory propagation.

Two propagators share one :class:`Trajectory` interface:

* :func:`propagate_exact` advances the discontinuous system segment by segment
  with the closed-form solution of the linear flow, locating every crossing of
  the switching surface and every tangency (graze) on the way.
* :func:`propagate_smoothed` integrates the tanh-smoothed system with an
  adaptive Runge-Kutta 4(5) pair; :func:`propagate_ramped` does the same with
  one parameter drifting linearly in time.
"""
from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp

from .errors import (EventStorm, InvalidInitialState, NonConvergedRoot,
                     StepSizeUnderflow)
from .model import Forcing, ModelParams, Region, SystemReal, build_system

CHUNK = 128


class EventKind(enum.Enum):
    CROSS_PLUS_TO_MINUS = "cross+-"
    CROSS_MINUS_TO_PLUS = "cross-+"
    GRAZE = "graze"

    @property
    def is_cross(self) -> bool:
        return self is not EventKind.GRAZE


@dataclass(frozen=True)
class Event:
    """A crossing or tangency of the switching surface.

    ``f_ddot_jump`` is ``F''`` on the plus side minus ``F''`` on the minus
    side at the event state; it is the same positive constant at every
    point of the surface.
    """

    t: float
    state: np.ndarray
    kind: EventKind
    f_dot: float
    f_ddot_incoming: float
    f_ddot_jump: float = float("nan")
    f_value: float = 0.0


@dataclass(frozen=True)
class FlowOptions:
    """Tolerances of the event-driven exact propagator.

    Parameters
    ----------
    scan_step : float, optional
        Sampling step for F. Defaults to ``min(pi/(4 omega_max), 1/(4 lam3))``.
    scan_tol : float
        Local minima of ``|F|`` below this (or below the curvature bound of the
        sampling error, whichever is larger) are refined.
    graze_tol : float
        A refined minimum with ``|F| <= graze_tol`` is a graze; below
        ``-graze_tol`` it is a crossing.
    fdot_tol : float
        Tangency threshold on ``F'`` used for a start on the surface.
    root_tol : float
        Absolute tolerance in time for event refinement.
    max_events : int
        More events raise :class:`EventStorm`.
    output_step : float
        Default spacing of dense output samples.
    """

    scan_step: float | None = None
    scan_tol: float = 1e-3
    graze_tol: float = 1e-8
    fdot_tol: float = 1e-6
    root_tol: float = 1e-12
    f_tol: float = 1e-10
    max_events: int = 100_000
    output_step: float = 0.5


DEFAULT_OPTIONS = FlowOptions()


def scan_step_for(sys: SystemReal) -> float:
    h = 1.0 / (4.0 * sys.lam[2])
    if sys.forcing.terms:
        h = min(h, math.pi / (4.0 * sys.forcing.omega_max))
    return h


class Segment:
    """Closed-form solution of the linear flow in one region.

    ``X(t) = U diag(exp(-lam (t - t0))) w + f(t)`` where ``f`` is the region's
    attracting solution and ``w = U^-1 (x0 - f(t0))``.
    """

    __slots__ = ("sys", "t0", "x0", "region", "w", "aF", "const", "terms",
                 "lam", "t1", "_fd_bound")

    def __init__(self, sys: SystemReal, t0: float, x0, region: Region):
        self.sys = sys
        self.t0 = float(t0)
        self.x0 = np.asarray(x0, dtype=float)
        self.region = region
        self.w = sys.eigen.Uinv @ (self.x0 - sys.f_vec(self.t0, region))
        self.aF = tuple(float(v) for v in sys.cU * self.w)
        self.lam = tuple(float(v) for v in sys.lam)
        self.const = float(sys.c @ sys.r_vec(region) + sys.d)
        self.terms = tuple(
            (float(sys.c @ P), float(sys.c @ Q), term.omega, term.phase)
            for term, (P, Q) in zip(sys.forcing.terms, sys.particular))
        self.t1 = math.inf
        self._fd_bound = (sum(l * l * abs(a) for l, a in zip(self.lam, self.aF))
                          + sum(om * om * math.hypot(cp, cq) for cp, cq, om, _ in self.terms))

    # scalar evaluations in plain floats; they sit inside root finders
    def F(self, t: float) -> float:
        tau = t - self.t0
        aF, lam = self.aF, self.lam
        v = (aF[0] * math.exp(-lam[0] * tau) + aF[1] * math.exp(-lam[1] * tau)
             + aF[2] * math.exp(-lam[2] * tau) + self.const)
        for cp, cq, om, ph in self.terms:
            th = om * t + ph
            v += cp * math.cos(th) + cq * math.sin(th)
        return v

    def Fdot(self, t: float) -> float:
        tau = t - self.t0
        aF, lam = self.aF, self.lam
        v = -(lam[0] * aF[0] * math.exp(-lam[0] * tau) + lam[1] * aF[1] * math.exp(-lam[1] * tau)
              + lam[2] * aF[2] * math.exp(-lam[2] * tau))
        for cp, cq, om, ph in self.terms:
            th = om * t + ph
            v += om * (cq * math.cos(th) - cp * math.sin(th))
        return v

    def Fddot(self, t: float) -> float:
        tau = t - self.t0
        aF, lam = self.aF, self.lam
        v = sum(l * l * a * math.exp(-l * tau) for l, a in zip(lam, aF))
        for cp, cq, om, ph in self.terms:
            th = om * t + ph
            v -= om * om * (cp * math.cos(th) + cq * math.sin(th))
        return v

    def F_array(self, t: np.ndarray) -> np.ndarray:
        tau = t - self.t0
        v = np.full_like(t, self.const)
        for a, l in zip(self.aF, self.lam):
            v += a * np.exp(-l * tau)
        for cp, cq, om, ph in self.terms:
            th = om * t + ph
            v += cp * np.cos(th) + cq * np.sin(th)
        return v

    def states(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau = t - self.t0
        decay = np.exp(-np.outer(tau, self.sys.lam)) * self.w
        X = decay @ self.sys.eigen.U.T + self.sys.r_vec(self.region)
        for term, (P, Q) in zip(self.sys.forcing.terms, self.sys.particular):
            th = term.omega * t + term.phase
            X += np.outer(np.cos(th), P) + np.outer(np.sin(th), Q)
        return X

    def state(self, t: float) -> np.ndarray:
        return self.states(np.array([t]))[0]

    def dip_tol(self, h: float, scan_tol: float) -> float:
        # sampled value of a parabola exceeds its true minimum by at most F''max h^2/8
        return max(scan_tol, 0.25 * self._fd_bound * h * h)


def _brent(f, a, b, xtol):
    try:
        return optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError) as exc:
        raise NonConvergedRoot(f"event refinement failed on [{a}, {b}]: {exc}") from exc


def _refine_extremum(seg: Segment, s: int, a: float, b: float, xtol: float) -> float:
    """Location of the minimum of ``s*F`` on ``[a, b]``."""
    da, db = s * seg.Fdot(a), s * seg.Fdot(b)
    if da <= 0.0 <= db and da != db:
        if da == 0.0:
            return a
        if db == 0.0:
            return b
        return _brent(lambda t: s * seg.Fdot(t), a, b, xtol)
    res = optimize.minimize_scalar(lambda t: s * seg.F(t), bounds=(a, b), method="bounded",
                                   options={"xatol": xtol})
    return float(res.x)


def _make_event(seg: Segment, t: float, kind: EventKind) -> Event:
    sys = seg.sys
    x = seg.state(t)
    f_plus = sys.fddot(t, x, Region.PLUS)
    f_minus = sys.fddot(t, x, Region.MINUS)
    return Event(t=t, state=x, kind=kind, f_dot=seg.Fdot(t),
                 f_ddot_incoming=f_plus if seg.region == Region.PLUS else f_minus,
                 f_ddot_jump=f_plus - f_minus, f_value=seg.F(t))


def _cross_kind(region: Region) -> EventKind:
    return EventKind.CROSS_PLUS_TO_MINUS if region == Region.PLUS else EventKind.CROSS_MINUS_TO_PLUS


def scan_segment(seg: Segment, t_end: float, h: float, opts: FlowOptions,
                 fresh_start: bool = True) -> tuple[list[Event], Event | None]:
    """Scan a segment forward from its start until it leaves its region.

    Returns the grazes met on the way and the crossing that ends the segment
    (``None`` when the segment reaches ``t_end``).
    """
    s = int(seg.region)
    dip_tol = seg.dip_tol(h, opts.scan_tol)
    xtol = opts.root_tol
    grazes: list[Event] = []
    t_lo = seg.t0
    first = True
    last_graze = -math.inf

    def gfun(t):
        return s * seg.F(t)

    while t_lo < t_end:
        ts = t_lo + h * np.arange(CHUNK + 1)
        if ts[-1] >= t_end:
            ts = np.append(ts[ts < t_end], t_end)
        if len(ts) < 2:
            break
        g = s * seg.F_array(ts)
        if first and fresh_start:
            # the segment starts on the surface after a crossing
            g[0] = max(g[0], 0.0)

        candidates = []
        neg = np.nonzero(g[1:] < 0.0)[0]
        if len(neg):
            candidates.append((ts[neg[0] + 1], "cross", neg[0] + 1))
        inner = np.arange(1, len(g) - 1)
        if len(inner):
            mask = (g[inner] <= g[inner - 1]) & (g[inner] <= g[inner + 1]) & (g[inner] < dip_tol)
            for j in inner[mask]:
                if len(neg) and j >= neg[0] + 1:
                    break
                candidates.append((ts[j], "dip", j))
        candidates.sort(key=lambda c: c[0])

        for _, what, j in candidates:
            if what == "cross":
                a, b = ts[j - 1], ts[j]
                if j == 1 and first and fresh_start:
                    # quick re-entry: find the hump before diving
                    a = _refine_extremum(seg, -s, a, b, xtol)
                    if gfun(a) <= 0.0:
                        a = ts[0]
                if gfun(a) < 0.0:
                    # only possible when the first sample sits on the surface
                    tc = a
                else:
                    tc = _brent(gfun, a, b, xtol)
                return grazes, _make_event(seg, tc, _cross_kind(seg.region))
            tm = _refine_extremum(seg, s, ts[j - 1], ts[j + 1], xtol)
            if tm <= last_graze + 10 * xtol:
                continue
            gm = gfun(tm)
            if gm < -opts.graze_tol:
                a = ts[j - 1]
                if first and fresh_start and j == 1 and gfun(a) <= 0.0:
                    a = _refine_extremum(seg, -s, ts[0], tm, xtol)
                tc = _brent(gfun, a, tm, xtol)
                return grazes, _make_event(seg, tc, _cross_kind(seg.region))
            if gm <= opts.graze_tol and tm > seg.t0 + 10 * xtol:
                grazes.append(_make_event(seg, tm, EventKind.GRAZE))
                last_graze = tm
        first = False
        if ts[-1] >= t_end:
            break
        t_lo = ts[-2]
    return grazes, None


class Trajectory:
    """Common interface of exact and smoothed trajectories."""

    t0: float
    x0: np.ndarray
    t_end: float
    events: list[Event]

    def __init__(self, sys: SystemReal, t0, x0, t_end, events, output_step=0.5):
        self.sys = sys
        self.t0 = float(t0)
        self.x0 = np.asarray(x0, dtype=float)
        self.t_end = float(t_end)
        self.events = list(events)
        self.output_step = output_step

    def states(self, t) -> np.ndarray:
        raise NotImplementedError

    def F(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.states(t) @ self.sys.c + self.sys.d

    def state_at(self, t: float) -> np.ndarray:
        return self.states(np.array([t]))[0]

    @property
    def x_end(self) -> np.ndarray:
        return self.state_at(self.t_end)

    def crossings(self, kind: EventKind | None = None, t_from=-math.inf, t_to=math.inf):
        return [e for e in self.events
                if e.kind.is_cross and (kind is None or e.kind is kind) and t_from < e.t <= t_to]

    def grazes(self):
        return [e for e in self.events if e.kind is EventKind.GRAZE]

    def region_at(self, t) -> np.ndarray:
        """Region sign at each time, from the event history."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cross = [e for e in self.events if e.kind.is_cross]
        times = np.array([e.t for e in cross])
        start = int(self.initial_region)
        k = np.searchsorted(times, t, side="right")
        return np.where(k % 2 == 0, start, -start)

    @property
    def initial_region(self) -> Region:
        raise NotImplementedError

    def dense(self, step: float | None = None):
        """``(t, X, F, region)`` sampled every ``step`` kyr, endpoints included."""
        step = step or self.output_step
        n = max(int(math.floor((self.t_end - self.t0) / step + 1e-9)), 0)
        t = self.t0 + step * np.arange(n + 1)
        if t[-1] < self.t_end - 1e-9:
            t = np.append(t, self.t_end)
        X = self.states(t)
        return t, X, X @ self.sys.c + self.sys.d, self.region_at(t)

    def to_csv(self, path, step: float | None = None):
        t, X, F, reg = self.dense(step)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "V", "A", "C", "F", "region"])
            for i in range(len(t)):
                w.writerow([_fmt(t[i]), _fmt(X[i, 0]), _fmt(X[i, 1]), _fmt(X[i, 2]), _fmt(F[i]),
                            "plus" if reg[i] > 0 else "minus"])

    def events_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "kind", "V", "A", "C", "fdot"])
            for e in self.events:
                w.writerow([_fmt(e.t), e.kind.value, _fmt(e.state[0]), _fmt(e.state[1]),
                            _fmt(e.state[2]), _fmt(e.f_dot)])


def _fmt(v: float) -> str:
    return repr(float(v))


class ExactTrajectory(Trajectory):
    """Piecewise closed-form trajectory; evaluation at any time is exact."""

    def __init__(self, sys, segments: list[Segment], t_end, events, output_step=0.5):
        super().__init__(sys, segments[0].t0, segments[0].x0, t_end, events, output_step)
        self.segments = segments
        self._starts = [s.t0 for s in segments]

    @property
    def initial_region(self) -> Region:
        return self.segments[0].region

    def segment_at(self, t: float) -> Segment:
        k = bisect.bisect_right(self._starts, t) - 1
        return self.segments[max(k, 0)]

    def states(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), 3))
        k = np.searchsorted(np.array(self._starts), t, side="right") - 1
        k = np.clip(k, 0, len(self.segments) - 1)
        for idx in np.unique(k):
            sel = k == idx
            out[sel] = self.segments[idx].states(t[sel])
        return out

    def F(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(len(t))
        k = np.searchsorted(np.array(self._starts), t, side="right") - 1
        k = np.clip(k, 0, len(self.segments) - 1)
        for idx in np.unique(k):
            sel = k == idx
            out[sel] = self.segments[idx].F_array(t[sel])
        return out

    def f_extrema(self, t_from: float | None = None, t_to: float | None = None,
                  h: float | None = None) -> list[tuple[float, float, int]]:
        """Interior local extrema of F as ``(t, F, +1 for min / -1 for max)``.

        Crossing times are not extrema: F is continuously differentiable there
        with non-zero slope.
        """
        t_from = self.t0 if t_from is None else t_from
        t_to = self.t_end if t_to is None else t_to
        h = h or scan_step_for(self.sys)
        out = []
        for i, seg in enumerate(self.segments):
            a = max(seg.t0, t_from)
            b = min(self.segments[i + 1].t0 if i + 1 < len(self.segments) else self.t_end, t_to)
            if b <= a:
                continue
            n = max(int(math.ceil((b - a) / h)), 2)
            ts = np.linspace(a, b, n + 1)
            fd = np.array([seg.Fdot(t) for t in ts])
            for j in range(n):
                if fd[j] == 0.0 and 0 < j:
                    continue
                if fd[j] < 0.0 <= fd[j + 1] or fd[j] > 0.0 >= fd[j + 1]:
                    if fd[j + 1] == 0.0 and j + 1 == n:
                        continue
                    tm = _brent(seg.Fdot, ts[j], ts[j + 1], 1e-12) if fd[j + 1] != 0.0 else ts[j + 1]
                    out.append((tm, seg.F(tm), 1 if fd[j] < 0.0 else -1))
        return out


def initial_region(sys: SystemReal, t0: float, x0, opts: FlowOptions = DEFAULT_OPTIONS) -> Region:
    F0 = float(sys.c @ x0 + sys.d)
    if abs(F0) < opts.f_tol:
        fd = sys.fdot(t0, x0)
        if abs(fd) <= opts.fdot_tol:
            raise InvalidInitialState(
                f"initial state is tangent to the switching surface (F={F0:.2e}, F'={fd:.2e})")
        return Region.PLUS if fd > 0 else Region.MINUS
    return Region.PLUS if F0 > 0 else Region.MINUS


def propagate_exact(sys: SystemReal, t0: float, x0, t_end: float,
                    opts: FlowOptions | None = None, region: Region | None = None) -> ExactTrajectory:
    """Propagate the discontinuous system with the closed-form segment solution.

    Parameters
    ----------
    sys : SystemReal
    t0, t_end : float
        Time window in kyr, ``t_end > t0``.
    x0 : array_like
        Initial ``(V, A, C)``.
    opts : FlowOptions, optional
    region : Region, optional
        Force the initial region (used to take one-sided limits at a graze).

    Raises
    ------
    EventStorm, NonConvergedRoot, InvalidInitialState
    """
    opts = opts or DEFAULT_OPTIONS
    if not t_end > t0:
        raise ValueError(f"t_end ({t_end}) must exceed t0 ({t0})")
    x0 = np.asarray(x0, dtype=float)
    if region is None:
        region = initial_region(sys, t0, x0, opts)
    h = opts.scan_step or scan_step_for(sys)
    on_surface = abs(float(sys.c @ x0 + sys.d)) < opts.f_tol

    segments: list[Segment] = []
    events: list[Event] = []
    t, x, reg = float(t0), x0, region
    fresh = on_surface
    while True:
        seg = Segment(sys, t, x, reg)
        segments.append(seg)
        grazes, cross = scan_segment(seg, t_end, h, opts, fresh_start=fresh)
        events.extend(grazes)
        if cross is None:
            break
        events.append(cross)
        if len(events) > opts.max_events:
            raise EventStorm(f"more than {opts.max_events} events before t={cross.t:.3f}")
        seg.t1 = cross.t
        t, x, reg = cross.t, cross.state, reg.other
        fresh = True
    return ExactTrajectory(sys, segments, t_end, events, opts.output_step)


# --- smoothed system -------------------------------------------------------

@dataclass(frozen=True)
class RKOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    min_step: float = 1e-12
    max_step: float | None = None
    output_step: float = 0.5
    event_step: float = 0.05


@dataclass(frozen=True)
class ParamRamp:
    """One parameter drifting linearly in time: ``value(t) = start + slope*(t - t0)``.

    ``param`` is ``"omega"`` (of forcing term ``term``) or ``"d"``. For omega
    ramps ``phase_convention`` selects the forcing argument: ``"integrated"``
    uses the accumulated phase, ``"instantaneous"`` uses ``omega(t)*t``.
    """

    param: str
    start: float
    slope: float
    term: int = 0
    phase_convention: str = "integrated"

    def __post_init__(self):
        if self.param not in ("omega", "d"):
            raise ValueError(f"unsupported ramp parameter {self.param!r}")
        if self.phase_convention not in ("integrated", "instantaneous"):
            raise ValueError(f"unknown phase convention {self.phase_convention!r}")

    def value(self, t, t0: float = 0.0):
        return self.start + self.slope * (np.asarray(t, dtype=float) - t0)

    def effective_omega(self, t, t0: float = 0.0):
        """Rate of change of the forcing argument of an omega ramp.

        Equal to ``value(t)`` for the integrated convention; for the
        instantaneous one ``d/dt (omega(t) t) = omega(t) + slope t``.
        """
        w = self.value(t, t0)
        if self.phase_convention == "instantaneous":
            return w + self.slope * np.asarray(t, dtype=float)
        return w

    @classmethod
    def linear(cls, param, v_from, v_to, t0, t_end, **kw):
        return cls(param, v_from, (v_to - v_from) / (t_end - t0), **kw)


class SmoothedTrajectory(Trajectory):
    def __init__(self, sys, sol, t0, x0, t_end, events, output_step, d_of_t=None):
        super().__init__(sys, t0, x0, t_end, events, output_step)
        self.sol = sol
        self._d_of_t = d_of_t

    @property
    def initial_region(self) -> Region:
        return Region.PLUS if self.F(np.array([self.t0]))[0] > 0 else Region.MINUS

    def states(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.sol(t)).T.reshape(len(t), 3)

    def F(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d = self._d_of_t(t) if self._d_of_t is not None else self.sys.d
        return self.states(t) @ self.sys.c + d


def smooth_heaviside(x, eta):
    return 0.5 * (1.0 + np.tanh(eta * x))


def _integrate_smoothed(sys: SystemReal, eta: float, insolation: Callable[[float], float],
                        d_of_t: Callable | None, t0, x0, t_end, rk: RKOptions) -> SmoothedTrajectory:
    L, bm, db, e, c = sys.L, sys.b_minus, sys.b_plus - sys.b_minus, sys.e, sys.c
    d_const = sys.d

    def rhs(t, x):
        d = d_const if d_of_t is None else d_of_t(t)
        F = c[0] * x[0] + c[1] * x[1] + c[2] * x[2] + d
        H = 0.5 * (1.0 + math.tanh(eta * F))
        return L @ x + bm + H * db + insolation(t) * e

    max_step = rk.max_step or scan_step_for(sys)
    sol = solve_ivp(rhs, (t0, t_end), np.asarray(x0, float), method="RK45", rtol=rk.rtol,
                    atol=rk.atol, dense_output=True, max_step=max_step)
    if sol.status != 0:
        raise StepSizeUnderflow(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    steps = np.diff(sol.t)
    if len(steps) > 1 and np.min(steps[:-1]) < rk.min_step:
        raise StepSizeUnderflow(f"step size fell to {np.min(steps[:-1]):.3e} kyr")
    traj = SmoothedTrajectory(sys, sol.sol, t0, x0, t_end, [], rk.output_step, d_of_t)
    traj.events = _reconstruct_events(traj, rk.event_step)
    return traj


def _reconstruct_events(traj: SmoothedTrajectory, step: float) -> list[Event]:
    n = max(int(math.ceil((traj.t_end - traj.t0) / step)), 1)
    ts = np.linspace(traj.t0, traj.t_end, n + 1)
    F = traj.F(ts)
    events = []
    idx = np.nonzero(np.sign(F[:-1]) * np.sign(F[1:]) < 0)[0]
    for i in idx:
        tc = optimize.brentq(lambda t: traj.F(np.array([t]))[0], ts[i], ts[i + 1], xtol=1e-12)
        x = traj.state_at(tc)
        kind = EventKind.CROSS_PLUS_TO_MINUS if F[i] > 0 else EventKind.CROSS_MINUS_TO_PLUS
        eps = 1e-6
        fd = (traj.F(np.array([tc + eps]))[0] - traj.F(np.array([tc - eps]))[0]) / (2 * eps)
        events.append(Event(t=tc, state=x, kind=kind, f_dot=fd, f_ddot_incoming=float("nan")))
    return events


def propagate_smoothed(sys: SystemReal, params: ModelParams | None, t0: float, x0, t_end: float,
                       rk_opts: RKOptions | None = None) -> SmoothedTrajectory:
    """Integrate the tanh-smoothed system with an adaptive RK 4(5) pair.

    ``params.eta`` sets the steepness; ``params`` defaults to ``sys.params``.
    Events are reconstructed afterwards from sign changes of F.
    """
    rk = rk_opts or RKOptions()
    params = params or sys.params
    if params != sys.params:
        sys = build_system(params, sys.forcing)
    terms = [(t.mu, t.omega, t.phase) for t in sys.forcing.terms]

    def insolation(t):
        return sum(mu * math.sin(om * t + ph) for mu, om, ph in terms)

    return _integrate_smoothed(sys, params.eta, insolation, None, t0, x0, t_end, rk)


def propagate_ramped(sys: SystemReal, params: ModelParams | None, ramp: ParamRamp, t0: float, x0,
                     t_end: float, rk_opts: RKOptions | None = None) -> SmoothedTrajectory:
    """Smoothed propagation with one parameter varying linearly in time."""
    rk = rk_opts or RKOptions()
    params = params or sys.params
    if params != sys.params:
        sys = build_system(params, sys.forcing)
    terms = [(t.mu, t.omega, t.phase) for t in sys.forcing.terms]
    d_of_t = None

    if ramp.param == "omega":
        if not terms:
            raise ValueError("omega ramp needs a forcing term")
        k = ramp.term
        w0, slope = ramp.start, ramp.slope
        integrated = ramp.phase_convention == "integrated"

        def theta(t):
            s = t - t0
            if integrated:
                return w0 * t0 + w0 * s + 0.5 * slope * s * s
            return (w0 + slope * s) * t

        def insolation(t):
            v = 0.0
            for i, (mu, om, ph) in enumerate(terms):
                v += mu * math.sin((theta(t) if i == k else om * t) + ph)
            return v
    else:
        def insolation(t):
            return sum(mu * math.sin(om * t + ph) for mu, om, ph in terms)

        def d_of_t(t):
            return ramp.start + ramp.slope * (np.asarray(t) - t0) if np.ndim(t) else \
                ramp.start + ramp.slope * (t - t0)

    return _integrate_smoothed(sys, params.eta, insolation, d_of_t, t0, x0, t_end, rk)


def glacial_cycle_lengths(traj: Trajectory, forcing_period: Callable[[float], float] | float):
    """Times of minus-to-plus crossings and the gap to the next one in forcing periods."""
    ups = [e.t for e in traj.crossings(EventKind.CROSS_MINUS_TO_PLUS)]
    out = []
    for t_a, t_b in zip(ups[:-1], ups[1:]):
        T = forcing_period(0.5 * (t_a + t_b)) if callable(forcing_period) else forcing_period
        out.append((t_a, (t_b - t_a) / T))
    return out
