"""Stroboscopic map, attractor classification and periodic orbits.

An ``(m, n)`` orbit has period ``n`` forcing periods and ``m`` glacial cycles
(minus-to-plus crossings) per period. Classification uses recurrence of the
stroboscopic map rather than spectral peaks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DivergedTrajectory, NoConvergence, NotAGrazingPoint, PP04Error
from .flow import (DEFAULT_OPTIONS, EventKind, ExactTrajectory, FlowOptions, Segment,
                   propagate_exact, propagate_smoothed, RKOptions)
from .model import ModelParams, Region, SystemReal, switching_value

DIVERGENCE_BOUND = 1e3


@dataclass(frozen=True)
class OrbitClass:
    """Outcome of attractor classification.

    ``kind`` is ``"mn"``, ``"quasiperiodic"``, ``"unclassified"`` or
    ``"failed"`` (the last only inside sweeps, with ``error`` set).
    For ``"mn"`` orbits ``anchors`` holds the ``n`` stroboscopic states of
    the converged orbit starting at time ``anchor_time``.
    """

    kind: str
    m: int = 0
    n: int = 0
    residual: float = float("nan")
    crossings: int = 0
    rotation: float = float("nan")
    anchor_time: float = float("nan")
    anchors: tuple = ()
    error: str = ""

    @property
    def is_mn(self) -> bool:
        return self.kind == "mn"

    @property
    def label(self) -> str:
        if self.kind == "mn":
            return f"({self.m},{self.n})"
        return {"quasiperiodic": "QP", "unclassified": "U", "failed": "F"}[self.kind]

    def same_class(self, other: "OrbitClass") -> bool:
        return self.label == other.label

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class PeriodicOrbit:
    orbit_class: OrbitClass
    anchors: np.ndarray
    period: float
    grazing_margin: float
    t0: float = 0.0
    residual: float = float("nan")
    iterations: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "class": self.orbit_class.label,
            "m": self.orbit_class.m,
            "n": self.orbit_class.n,
            "period": self.period,
            "anchors": [list(map(float, a)) for a in self.anchors],
            "grazing_margin": self.grazing_margin,
            "t0": self.t0,
        }, indent=2)


def _require_period(sys: SystemReal) -> float:
    if not sys.forcing.terms:
        raise ValueError("the stroboscopic map needs a forcing term")
    return sys.period


def poincare_map(sys: SystemReal, x, t_alpha: float = 0.0, periods: int = 1,
                 opts: FlowOptions | None = None) -> np.ndarray:
    """State after ``periods`` forcing periods starting from ``x`` at ``t_alpha``."""
    T = _require_period(sys)
    tr = propagate_exact(sys, t_alpha, x, t_alpha + periods * T, opts)
    return tr.x_end


def strobe(sys: SystemReal, x, t0: float, periods: int, opts: FlowOptions | None = None):
    """Trajectory over ``periods`` forcing periods and its stroboscopic states."""
    T = _require_period(sys)
    tr = propagate_exact(sys, t0, x, t0 + periods * T, opts)
    S = tr.states(t0 + T * np.arange(periods + 1))
    S[-1] = tr.x_end
    return tr, S


def _smallest_recurrence(S: np.ndarray, n_max: int, tol: float):
    """Smallest n with the last states repeating twice over at lag n."""
    k = len(S) - 1
    for n in range(1, n_max + 1):
        if k - 2 * n < 0:
            break
        r1 = np.max(np.abs(S[k] - S[k - n]))
        r2 = np.max(np.abs(S[k - n] - S[k - 2 * n]))
        if r1 < tol and r2 < tol:
            return n, max(r1, r2)
    return None, None


def _rotation_number(tr, T: float) -> float:
    ups = [e.t for e in tr.crossings(EventKind.CROSS_MINUS_TO_PLUS)]
    if len(ups) < 3:
        return float("nan")
    return (len(ups) - 1) * T / (ups[-1] - ups[0])


def classify_attractor(sys: SystemReal, x0, t0: float = 0.0, settle: float = 3000.0,
                       n_max: int = 8, per_tol: float = 1e-5, early_exit: bool = True,
                       rotation_periods: int = 200, eta: float | None = None,
                       opts: FlowOptions | None = None) -> OrbitClass:
    """Classify the omega-limit set reached from ``x0``.

    Parameters
    ----------
    settle : float
        Transient (kyr) discarded before the recurrence test.
    n_max : int
        Largest period, in forcing periods, that is searched for.
    per_tol : float
        Recurrence tolerance of the stroboscopic map, infinity norm.
    early_exit : bool
        Stop before ``settle`` once the stroboscopic sequence repeats twice
        over at the same lag (after at least ``4 n_max`` periods).
    eta : float, optional
        Classify on the tanh-smoothed system with this steepness instead of
        the discontinuous one.
    """
    T = _require_period(sys)
    k_settle = int(math.ceil(settle / T))
    total = k_settle + 2 * n_max
    min_periods = min(4 * n_max, total) if early_exit else total
    block = max(2 * n_max, int(math.ceil(400.0 / T)))

    def advance(x, t, k):
        if eta is None:
            tr = propagate_exact(sys, t, x, t + k * T, opts)
        else:
            tr = propagate_smoothed(sys, sys.params.with_(eta=eta), t, x, t + k * T,
                                    RKOptions(event_step=0.05))
        S = tr.states(t + T * np.arange(1, k + 1))
        return tr, S

    S_all = [np.asarray(x0, dtype=float)]
    t = t0
    done = 0
    n_found = None
    while done < total:
        k = min(block, total - done)
        _, S = advance(S_all[-1], t, k)
        if not np.all(np.isfinite(S)) or np.max(np.abs(S)) > DIVERGENCE_BOUND:
            raise DivergedTrajectory(f"|X| exceeded {DIVERGENCE_BOUND:g} before t={t + k * T:.1f}")
        S_all.extend(S)
        t += k * T
        done += k
        if done >= min_periods:
            n_found, res = _smallest_recurrence(np.array(S_all), n_max, per_tol)
            if n_found is not None:
                break

    if n_found is not None:
        anchors_tr, A = advance(S_all[-1], t, n_found)
        m = len(anchors_tr.crossings(EventKind.CROSS_MINUS_TO_PLUS))
        anchors = tuple(tuple(float(v) for v in a) for a in [S_all[-1]] + list(A[:-1]))
        if m == 0:
            return OrbitClass("unclassified", n=n_found, residual=res, crossings=0,
                              anchor_time=t, anchors=anchors)
        return OrbitClass("mn", m=m, n=n_found, residual=res,
                          crossings=m, anchor_time=t, anchors=anchors)

    # no recurrence: estimate the rotation number on a long window
    if eta is None:
        tr = propagate_exact(sys, t, S_all[-1], t + rotation_periods * T, opts)
    else:
        tr, _ = advance(S_all[-1], t, rotation_periods)
    rho = _rotation_number(tr, T)
    if math.isfinite(rho):
        approx = Fraction(rho).limit_denominator(n_max)
        if abs(rho - float(approx)) > 2.0 / rotation_periods:
            return OrbitClass("quasiperiodic", rotation=rho,
                              crossings=len(tr.crossings(EventKind.CROSS_MINUS_TO_PLUS)))
    return OrbitClass("unclassified", rotation=rho)


def glacial_minima(tr: ExactTrajectory, t_from: float, t_to: float) -> list[tuple[float, float]]:
    """Local minima of F inside the glacial region."""
    return [(t, f) for t, f, kind in tr.f_extrema(t_from, t_to)
            if kind == 1 and tr.segment_at(t).region == Region.PLUS]


def grazing_margin(tr: ExactTrajectory, t_from: float, t_to: float) -> float:
    mins = glacial_minima(tr, t_from, t_to)
    return min((f for _, f in mins), default=math.inf)


def polish_periodic_orbit(sys: SystemReal, seed, n: int, t0: float = 0.0, tol: float = 1e-10,
                          max_iter: int = 500, fd_step: float = 1e-7,
                          opts: FlowOptions | None = None) -> PeriodicOrbit:
    """Refine a fixed point of the n-th iterate of the stroboscopic map.

    Fixed-point iteration, accelerated by Newton steps on ``P^n(x) - x`` with
    a finite-difference Jacobian whenever they reduce the residual.

    Raises
    ------
    NoConvergence
        When the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    T = _require_period(sys)
    x = np.asarray(seed, dtype=float)

    def G(z):
        return poincare_map(sys, z, t0, n, opts)

    y = G(x)
    res = float(np.max(np.abs(y - x)))
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        step_taken = False
        try:
            J = np.empty((3, 3))
            for j in range(3):
                dx = np.zeros(3)
                dx[j] = fd_step
                J[:, j] = (G(x + dx) - y) / fd_step
            delta = np.linalg.solve(J - np.eye(3), -(y - x))
            x_new = x + delta
            y_new = G(x_new)
            res_new = float(np.max(np.abs(y_new - x_new)))
            if res_new < 0.5 * res:
                x, y, res = x_new, y_new, res_new
                step_taken = True
        except (np.linalg.LinAlgError, PP04Error):
            pass
        if not step_taken:
            x = y
            y = G(x)
            res = float(np.max(np.abs(y - x)))
    if res >= tol:
        raise NoConvergence(f"residual {res:.3e} after {max_iter} iterations")

    tr, S = strobe(sys, x, t0, n, opts)
    m = len(tr.crossings(EventKind.CROSS_MINUS_TO_PLUS))
    cls = OrbitClass("mn" if m > 0 else "unclassified", m=m, n=n, residual=res, crossings=m,
                     anchor_time=t0, anchors=tuple(tuple(map(float, a)) for a in S[:-1]))
    return PeriodicOrbit(orbit_class=cls, anchors=S[:-1].copy(), period=n * T,
                         grazing_margin=grazing_margin(tr, t0, t0 + n * T), t0=t0,
                         residual=res, iterations=it)


def unforced_cycle(sys: SystemReal, x0=(0.5, 0.5, 0.2), settle: float = 3000.0,
                   tol: float = 1e-10, max_iter: int = 200):
    """Limit cycle of the unforced system as ``(anchor, period)``.

    The anchor is the minus-to-plus crossing state; the period is the
    return time to the switching surface, refined by fixed-point iteration of
    the crossing-to-crossing map.
    """
    tr = propagate_exact(sys, 0.0, x0, settle)
    ups = tr.crossings(EventKind.CROSS_MINUS_TO_PLUS)
    if len(ups) < 2:
        raise NoConvergence("no limit cycle: fewer than two glacial terminations")
    x = ups[-1].state
    period = ups[-1].t - ups[-2].t
    for _ in range(max_iter):
        tr = propagate_exact(sys, 0.0, x, 2.5 * period, region=Region.PLUS)
        nxt = tr.crossings(EventKind.CROSS_MINUS_TO_PLUS)
        if not nxt:
            raise NoConvergence("unforced orbit left the cycle")
        y, period = nxt[0].state, nxt[0].t
        if np.max(np.abs(y - x)) < tol:
            return y, period
        x = y
    raise NoConvergence("unforced cycle did not converge")


# --- square-root map near grazing -------------------------------------------

@dataclass
class ProbeReport:
    exponent: float
    exponent_stderr: float
    jump: float
    jump_vector: np.ndarray
    predicted_jump: float
    predicted_jump_vector: np.ndarray
    smooth_slope: np.ndarray
    impacting_sign: int
    t_alpha: float
    t_beta: float
    t_graze: float
    eps: np.ndarray
    images_impacting: np.ndarray
    images_smooth: np.ndarray
    limit_impacting: np.ndarray
    limit_smooth: np.ndarray
    max_variation: float
    details: dict = field(default_factory=dict)

    @property
    def jump_relative_error(self) -> float:
        return abs(self.jump - self.predicted_jump) / self.predicted_jump


def _unswitched_minimum(sys, t, x, region, t_lo, t_hi, t_target):
    seg = Segment(sys, t, x, region)
    s = int(region)
    ts = np.linspace(t_lo, t_hi, max(int((t_hi - t_lo) / 0.25), 8) + 1)
    g = s * seg.F_array(ts)
    idx = [j for j in range(1, len(g) - 1) if g[j] <= g[j - 1] and g[j] <= g[j + 1]]
    if not idx:
        return None
    j = min(idx, key=lambda j: abs(ts[j] - t_target))
    from .flow import _refine_extremum
    tm = _refine_extremum(seg, s, ts[j - 1], ts[j + 1], 1e-13)
    return tm, s * seg.F(tm)


def sqrt_discontinuity_probe(sys: SystemReal, x_graze, p, eps_grid=None, t0: float = 0.0,
                             t_alpha: float | None = None, t_graze: float | None = None) -> ProbeReport:
    """Measure the local form of the stroboscopic map around a grazing orbit.

    ``x_graze`` is a state at time ``t0`` whose orbit grazes the switching
    surface at ``t_graze`` (detected when omitted). The map window
    ``[t_alpha, t_alpha + T]`` defaults to the latest window that contains
    the graze and no other crossing of the two one-sided limit orbits.
    The grazing state at ``t_alpha`` is re-refined along ``p`` before the
    scan so that the grid can reach ``|eps| = 1e-8``.
    """
    T = _require_period(sys)
    p = np.asarray(p, dtype=float)
    x_graze = np.asarray(x_graze, dtype=float)
    eps_grid = np.logspace(-8, -3, 21) if eps_grid is None else np.asarray(eps_grid, float)

    base = propagate_exact(sys, t0, x_graze, t0 + 3 * T)
    if t_graze is None:
        cands = [(abs(f), t) for t, f in glacial_minima(base, t0, base.t_end)]
        cands += [(abs(e.f_value), e.t) for e in base.grazes()]
        if not cands or min(cands)[0] > 1e-6:
            raise NotAGrazingPoint("no tangency of the switching surface within three periods")
        t_graze = min(cands)[1]
    xg = base.state_at(t_graze)
    region = base.segment_at(t_graze).region

    # the two one-sided continuations from the graze
    smooth = propagate_exact(sys, t_graze, xg, t_graze + T, region=region)
    impact = propagate_exact(sys, t_graze, xg, t_graze + T, region=region.other)
    nxt = [e.t for e in smooth.crossings() + impact.crossings() if e.t > t_graze + 1e-9]
    t_stop = min(nxt, default=t_graze + T)
    if t_alpha is None:
        t_beta = t_stop - 0.05 * (t_stop - t_graze)
        t_alpha = max(t_beta - T, t0)
        t_beta = t_alpha + T
    t_beta = t_alpha + T
    if not t_alpha < t_graze < t_beta:
        raise NotAGrazingPoint(f"graze at {t_graze:.3f} is not inside ({t_alpha:.3f}, {t_beta:.3f})")

    x_alpha = base.state_at(t_alpha) if t_alpha < base.t_end else None
    reg_alpha = base.segment_at(t_alpha).region

    # re-refine the grazing state along p on the unswitched closed form
    def margin(eps):
        xa = x_alpha + eps * p
        tr = propagate_exact(sys, t_alpha, xa, t_graze - 2.0) if t_graze - 2.0 > t_alpha else None
        t_s, x_s, reg = (tr.t_end, tr.x_end, tr.segments[-1].region) if tr else (t_alpha, xa, reg_alpha)
        r = _unswitched_minimum(sys, t_s, x_s, reg, t_s, t_graze + 2.0, t_graze)
        if r is None:
            raise NotAGrazingPoint("tracked minimum disappeared")
        return r[1]

    from scipy.optimize import brentq
    m0 = margin(0.0)
    if abs(m0) > 1e-4:
        raise NotAGrazingPoint(f"grazing margin {m0:.2e} too large at the probe point")
    h = 1e-6
    slope = (margin(h) - margin(-h)) / (2 * h)
    if slope == 0:
        raise NotAGrazingPoint("direction p does not unfold the graze")
    guess = -m0 / slope
    lo, hi = guess - 10 * abs(guess) - 1e-9, guess + 10 * abs(guess) + 1e-9
    e0 = brentq(margin, lo, hi, xtol=1e-17, rtol=1e-15)
    x_star = x_alpha + e0 * p
    impacting_sign = -1 if slope > 0 else 1

    probe_opts = FlowOptions(graze_tol=0.0, scan_tol=1e-3)

    def image(eps):
        tr = propagate_exact(sys, t_alpha, x_star + eps * p, t_beta, probe_opts)
        return tr.x_end, len(tr.crossings())

    imp_imgs, smo_imgs = [], []
    counts_imp, counts_smo = set(), set()
    for eps in eps_grid:
        xi, ki = image(impacting_sign * eps)
        xs, ks = image(-impacting_sign * eps)
        imp_imgs.append(xi)
        smo_imgs.append(xs)
        counts_imp.add(ki)
        counts_smo.add(ks)
    if counts_imp == counts_smo:
        raise NotAGrazingPoint("both sides of the probe have the same crossing pattern")
    imp_imgs = np.array(imp_imgs)
    smo_imgs = np.array(smo_imgs)

    # one-sided limits
    g_state = propagate_exact(sys, t_alpha, x_star, t_graze).x_end
    lim_smooth = propagate_exact(sys, t_graze, g_state, t_beta, probe_opts, region=region).x_end
    lim_imp = propagate_exact(sys, t_graze, g_state, t_beta, probe_opts, region=region.other).x_end

    dist = np.linalg.norm(imp_imgs - lim_imp, axis=1)
    A = np.column_stack([np.ones(len(eps_grid)), np.log(eps_grid)])
    coef, resid, *_ = np.linalg.lstsq(A, np.log(dist), rcond=None)
    dof = max(len(eps_grid) - 2, 1)
    sigma2 = float(np.sum((A @ coef - np.log(dist)) ** 2)) / dof
    stderr = math.sqrt(sigma2 * np.linalg.inv(A.T @ A)[1, 1])

    # independent estimates of the two limits from the images alone
    s = np.sqrt(eps_grid)
    B = np.column_stack([np.ones_like(s), s, s * s])
    c_fit = np.linalg.lstsq(B, imp_imgs, rcond=None)[0][0]
    Bs = np.column_stack([np.ones_like(eps_grid), eps_grid])
    sol_s = np.linalg.lstsq(Bs, smo_imgs, rcond=None)[0]
    a_fit, b_fit = sol_s[0], sol_s[1] * (-impacting_sign)
    jump_vec = a_fit - c_fit

    dt = t_beta - t_graze
    from .linalg3 import expm, inv3
    E = expm(sys.L, dt, sys.eigen)
    jp = inv3(sys.L) @ (E - np.eye(3)) @ (sys.b(region) - sys.b(region.other))
    variation = max(float(np.max(np.linalg.norm(imp_imgs - lim_imp, axis=1))),
                    float(np.max(np.linalg.norm(smo_imgs - lim_smooth, axis=1))))
    return ProbeReport(
        exponent=float(coef[1]), exponent_stderr=stderr,
        jump=float(np.linalg.norm(jump_vec)), jump_vector=jump_vec,
        predicted_jump=float(np.linalg.norm(jp)), predicted_jump_vector=jp,
        smooth_slope=b_fit, impacting_sign=impacting_sign,
        t_alpha=t_alpha, t_beta=t_beta, t_graze=t_graze, eps=eps_grid,
        images_impacting=imp_imgs, images_smooth=smo_imgs,
        limit_impacting=lim_imp, limit_smooth=lim_smooth, max_variation=variation,
        details={"x_alpha": x_star, "refine_shift": e0, "limit_jump": float(np.linalg.norm(lim_smooth - lim_imp))},
    )
