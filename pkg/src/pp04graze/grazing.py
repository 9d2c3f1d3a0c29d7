"""Grazing times, grazing initial conditions and grazing leaves.

A grazing leaf is the set of initial conditions, on a stroboscopic section,
whose orbits touch the switching surface tangentially at (about) one time.
Leaves are traced on the plane ``A = A0`` of the section ``t = t0``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (BackwardEventAmbiguity, BracketInvalid, LeafLost, NotAGrazingPoint,
                     PP04Error, PushPastGraze)
from .flow import (FlowOptions, Segment, _brent, _refine_extremum, propagate_exact,
                   propagate_smoothed, scan_step_for, RKOptions)
from .model import Region, SystemReal

# half-width (kyr) of the window in which a tracked minimum is searched
TRACK_WINDOW = 10.0


@dataclass(frozen=True)
class GrazingTime:
    t: float
    region: Region
    residual: float


@dataclass
class GrazingTimeSet:
    region: Region
    window: tuple[float, float]
    times: list[GrazingTime]

    def __iter__(self):
        return iter(self.times)

    def __len__(self):
        return len(self.times)

    @property
    def values(self) -> np.ndarray:
        return np.array([g.t for g in self.times])


def _grazing_coefficients(sys: SystemReal, region: Region):
    """``(A, B, K)`` of ``A cos(theta) + B sin(theta) + K = 0``.

    This is the tangency condition restricted to the slowest eigendirection:
    the orbit sits on the region's attracting solution plus a multiple of the
    leading eigenvector and F reaches a critical point on the surface.
    """
    if len(sys.forcing) != 1:
        raise ValueError("analytic grazing times need a single forcing term")
    lam1 = float(sys.lam[0])
    omega = sys.forcing.terms[0].omega
    P, Q = sys.particular[0]
    c = sys.c
    A = float(c @ (lam1 * P + omega * Q))
    B = float(c @ (lam1 * Q - omega * P))
    K = lam1 * float(c @ sys.r_vec(region) + sys.d)
    return A, B, K


def solve_grazing_times(sys: SystemReal, region: Region = Region.PLUS,
                        window: tuple[float, float] | None = None) -> GrazingTimeSet:
    """All grazing times of the leading-eigendirection approximation in ``window``.

    Solved in closed form as ``R cos(theta - phi) = -K``. An empty set means
    the forcing is too weak for any grazing of this kind.
    """
    term = sys.forcing.terms[0] if len(sys.forcing) == 1 else None
    if term is None:
        raise ValueError("analytic grazing times need a single forcing term")
    if window is None:
        window = (0.0, sys.period)
    t_lo, t_hi = window
    A, B, K = _grazing_coefficients(sys, region)
    R = math.hypot(A, B)
    out: list[GrazingTime] = []
    if R > 0 and abs(K) <= R:
        phi = math.atan2(B, A)
        base = math.acos(max(-1.0, min(1.0, -K / R)))
        om, ph = term.omega, term.phase
        for root in {base, -base}:
            # theta = om*t + ph = phi + root + 2 pi k
            k_lo = math.floor((om * t_lo + ph - phi - root) / (2 * math.pi)) - 1
            k_hi = math.ceil((om * t_hi + ph - phi - root) / (2 * math.pi)) + 1
            for k in range(k_lo, k_hi + 1):
                t = (phi + root + 2 * math.pi * k - ph) / om
                if t_lo <= t <= t_hi:
                    th = om * t + ph
                    out.append(GrazingTime(t, region, A * math.cos(th) + B * math.sin(th) + K))
    out.sort(key=lambda g: g.t)
    # a double root (|K| = R) shows up twice
    dedup = []
    for g in out:
        if not dedup or g.t - dedup[-1].t > 1e-12:
            dedup.append(g)
    return GrazingTimeSet(region, (t_lo, t_hi), dedup)


# --- tracked minimum of F ----------------------------------------------------

@dataclass(frozen=True)
class TrackedMinimum:
    """Signed extremum of F nearest a target time.

    ``value`` is F at a glacial-side minimum, or minus F at an
    interglacial-side maximum; it is negative when the orbit crosses.
    """

    t: float
    value: float
    region: Region
    impacts_before: int


def tracked_minimum(sys: SystemReal, t0: float, x0, t_target: float,
                    window: float = TRACK_WINDOW, opts: FlowOptions | None = None) -> TrackedMinimum:
    """Extremum of F near ``t_target`` on the flow continued without switching.

    The orbit is propagated exactly up to ``t_target - window``; from there
    the closed-form solution of the current region is continued across the
    surface, so the returned value is a smooth function of ``x0`` and changes
    sign exactly on the grazing leaf.

    Raises
    ------
    LeafLost
        When there is no interior extremum of the right type in the window.
    """
    t_a = t_target - window
    if t_a > t0:
        tr = propagate_exact(sys, t0, x0, t_a, opts)
        x_a, region = tr.x_end, tr.segments[-1].region
        impacts = len(tr.crossings())
    else:
        t_a = t0
        x_a = np.asarray(x0, dtype=float)
        from .flow import initial_region
        region = initial_region(sys, t0, x_a)
        impacts = 0
    seg = Segment(sys, t_a, x_a, region)
    s = int(region)
    t_b = t_target + window
    h = min(0.25, scan_step_for(sys))
    ts = np.linspace(t_a, t_b, int(math.ceil((t_b - t_a) / h)) + 1)
    g = s * seg.F_array(ts)
    idx = [j for j in range(1, len(g) - 1) if g[j] <= g[j - 1] and g[j] <= g[j + 1]]
    if not idx:
        raise LeafLost(f"no tracked minimum of F within {window} kyr of t={t_target:.3f}")
    j = min(idx, key=lambda j: abs(ts[j] - t_target))
    tm = _refine_extremum(seg, s, ts[j - 1], ts[j + 1], 1e-12)
    return TrackedMinimum(t=tm, value=s * seg.F(tm), region=region, impacts_before=impacts)


def tracked_minimum_smoothed(sys: SystemReal, eta: float, t0: float, x0, t_target: float,
                             window: float = TRACK_WINDOW) -> TrackedMinimum:
    """Signed local minimum of F of the tanh-smoothed flow near ``t_target``.

    In the smoothed system an orbit approaching the surface from the glacial
    side either turns back or slides through; the sign of the minimum of F in
    the window separates the two.
    """
    tr = propagate_smoothed(sys, sys.params.with_(eta=eta), t0, x0, t_target + 3 * window,
                            RKOptions(rtol=1e-10, atol=1e-12, max_step=0.25))
    ts = np.arange(max(t0, t_target - window), t_target + 3 * window, 0.02)
    F = tr.F(ts)
    j = int(np.argmin(F))
    return TrackedMinimum(t=float(ts[j]), value=float(F[j]), region=Region.PLUS,
                          impacts_before=len(tr.crossings(t_to=ts[0])))


def grazing_distance(sys: SystemReal, t0: float, x0, t_end: float, fd_step: float = 1e-7) -> float:
    """First-order distance from ``x0`` to the grazing set over ``[t0, t_end]``.

    Every tangency candidate of the orbit (interior extrema of F and
    crossings) is tracked on the unswitched flow; the signed margin divided
    by the norm of its gradient in ``x0`` estimates the distance to that
    leaf. Returns the smallest such estimate (``inf`` if there is none).
    """
    x0 = np.asarray(x0, dtype=float)
    tr = propagate_exact(sys, t0, x0, t_end)
    times = [t for t, _, _ in tr.f_extrema()] + [e.t for e in tr.crossings()]
    best = math.inf
    for tc in times:
        try:
            m0 = tracked_minimum(sys, t0, x0, tc)
            if m0.t > t_end or abs(m0.t - tc) > TRACK_WINDOW:
                continue
            grad = np.empty(3)
            for j in range(3):
                dx = np.zeros(3)
                dx[j] = fd_step
                grad[j] = (tracked_minimum(sys, t0, x0 + dx, tc).value - m0.value) / fd_step
        except PP04Error:
            continue
        g = float(np.linalg.norm(grad))
        if g > 0:
            best = min(best, abs(m0.value) / g)
    return best


# --- grazing initial conditions ---------------------------------------------

@dataclass(frozen=True)
class GrazingIC:
    V: float
    A: float
    C: float
    t0: float
    t_g: float
    margin: float
    impacts_before: int
    eta: float | None = None

    @property
    def state(self) -> np.ndarray:
        return np.array([self.V, self.A, self.C])


def find_grazing_ic(sys: SystemReal, t0: float, A0: float, C0: float,
                    V_bracket: tuple[float, float], t_target: float, eta: float | None = None,
                    f_tol: float = 1e-10, v_tol: float = 1e-13, max_iter: int = 200) -> GrazingIC:
    """Initial V on the section whose orbit grazes near ``t_target``.

    Bisection on V of the signed tracked minimum of F, holding ``A0`` and
    ``C0``. ``t_target`` selects the leaf (usually an analytic grazing time).
    With ``eta`` the separatrix of the smoothed system is located instead.

    Raises
    ------
    BracketInvalid
        When the tracked minimum has the same sign at both ends.
    LeafLost
        When the tracked minimum jumps to another leaf inside the bracket.
    """
    def track(V):
        x = (V, A0, C0)
        if eta is None:
            return tracked_minimum(sys, t0, x, t_target)
        return tracked_minimum_smoothed(sys, eta, t0, x, t_target)

    lo, hi = float(V_bracket[0]), float(V_bracket[1])
    m_lo, m_hi = track(lo), track(hi)
    if (m_lo.value > 0) == (m_hi.value > 0):
        raise BracketInvalid(
            f"tracked minimum has one sign on V in [{lo}, {hi}] "
            f"({m_lo.value:.3e}, {m_hi.value:.3e})")
    best = min((m_lo, lo), (m_hi, hi), key=lambda p: abs(p[0].value))
    tol = v_tol if eta is None else 1e-9
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m = track(mid)
        if abs(m.value) < abs(best[0].value):
            best = (m, mid)
        if (m.value > 0) == (m_lo.value > 0):
            lo, m_lo = mid, m
        else:
            hi, m_hi = mid, m
        if hi - lo < tol or (eta is None and abs(m.value) < 1e-3 * f_tol):
            break
    m, V = best
    if eta is None and abs(m.value) > f_tol:
        raise LeafLost(f"tracked minimum is discontinuous at V={V:.12g} "
                       f"(|F_min|={abs(m.value):.2e}); leaves intersect here", (V, C0))
    return GrazingIC(V=V, A=A0, C=C0, t0=t0, t_g=m.t, margin=m.value,
                     impacts_before=m.impacts_before, eta=eta)


# --- leaves --------------------------------------------------------------------

@dataclass
class GrazingLeaf:
    """Sampled grazing leaf on a stroboscopic section.

    ``points`` is ``(N, 3)``; for traced leaves all points share ``A = A0``.
    ``tg_realized`` holds the realized grazing time of every point.
    """

    leaf_id: str
    t0: float
    points: np.ndarray
    tg_realized: np.ndarray
    impacts_before: np.ndarray
    tg_seed: float
    A0: float | None = None
    stopped: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def tg_spread(self) -> float:
        return float(np.max(self.tg_realized) - np.min(self.tg_realized))

    def line_fit(self):
        """Total least-squares line through the (V, C) projection.

        Returns ``(direction, centre, rms)`` with ``rms`` the root mean square
        orthogonal distance of the points to the line.
        """
        P = self.points[:, [0, 2]]
        centre = P.mean(axis=0)
        _, s, vt = np.linalg.svd(P - centre, full_matrices=False)
        rms = float(s[-1] / math.sqrt(len(P))) if len(P) > 1 else 0.0
        return vt[0], centre, rms

    def angle_to_normal(self, n) -> float:
        """Angle in degrees between the leaf direction and ``(n_V, n_C)``."""
        d, _, _ = self.line_fit()
        nv = np.array([n[0], n[2]], dtype=float)
        cosang = abs(float(d @ nv)) / float(np.linalg.norm(nv))
        return math.degrees(math.acos(min(1.0, cosang)))

    def to_csv(self, path, append: bool = False):
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if not append:
                w.writerow(["leaf_id", "tg", "V", "C", "tg_realized", "impacts_before"])
            for p, tr, k in zip(self.points, self.tg_realized, self.impacts_before):
                w.writerow([self.leaf_id, repr(float(self.tg_seed)), repr(float(p[0])),
                            repr(float(p[2])), repr(float(tr)), int(k)])

    def summary(self, n=None) -> dict:
        d, centre, rms = self.line_fit()
        out = {
            "leaf_id": self.leaf_id,
            "t0": self.t0,
            "tg": self.tg_seed,
            "points": len(self),
            "V_range": [float(self.points[:, 0].min()), float(self.points[:, 0].max())],
            "C_range": [float(self.points[:, 2].min()), float(self.points[:, 2].max())],
            "line_direction": [float(d[0]), float(d[1])],
            "line_rms": rms,
            "tg_spread": self.tg_spread,
            "stopped": self.stopped,
        }
        if n is not None:
            out["angle_to_normal_deg"] = self.angle_to_normal(n)
        return out


def trace_leaf(sys: SystemReal, seed: GrazingIC, C_range: tuple[float, float],
               n_samples: int = 41, leaf_id: str = "leaf", v_step: float = 0.01,
               max_expand: int = 6, split_on_impacts: bool = True) -> GrazingLeaf:
    """Continue a grazing initial condition along C with predictor-corrector.

    The predictor extrapolates V linearly from the last two points; the
    corrector is :func:`find_grazing_ic` on a bracket around the prediction,
    widened until the tracked minimum changes sign. Tracking stops in a
    direction when the leaf is lost, leaves ``C_range`` or (with
    ``split_on_impacts``) when the number of crossings before the graze
    changes, since past that point the curve belongs to another plane.
    """
    C_grid = np.linspace(C_range[0], C_range[1], n_samples)
    pts = {seed.C: seed}
    stopped = {}
    for direction in (+1, -1):
        ahead = C_grid[C_grid > seed.C + 1e-12] if direction > 0 else C_grid[C_grid < seed.C - 1e-12][::-1]
        prev = [seed]
        for C in ahead:
            if len(prev) >= 2:
                a, b = prev[-2], prev[-1]
                V_pred = b.V + (b.V - a.V) * (C - b.C) / (b.C - a.C)
            else:
                V_pred = prev[-1].V
            t_target = prev[-1].t_g
            got = None
            width = v_step
            reason = ""
            for _ in range(max_expand):
                try:
                    got = find_grazing_ic(sys, seed.t0, seed.A, C, (V_pred - width, V_pred + width),
                                          t_target)
                    break
                except BracketInvalid as exc:
                    reason = str(exc)
                    width *= 2.0
                except (LeafLost, PP04Error) as exc:
                    reason = str(exc)
                    break
            if got is not None and split_on_impacts and got.impacts_before != seed.impacts_before:
                # another leaf's graze cuts in before this one: a leaf intersection
                reason = (f"impact history changed from {seed.impacts_before} "
                          f"to {got.impacts_before} impacts before the graze")
                got = None
            if got is None or abs(got.t_g - t_target) > 0.5 * TRACK_WINDOW:
                stopped["+C" if direction > 0 else "-C"] = {
                    "C": float(C), "last": [prev[-1].V, prev[-1].C],
                    "reason": reason or "realized grazing time jumped"}
                break
            pts[C] = got
            prev.append(got)
    keys = sorted(pts)
    P = np.array([[pts[k].V, pts[k].A, pts[k].C] for k in keys])
    return GrazingLeaf(leaf_id=leaf_id, t0=seed.t0, points=P,
                       tg_realized=np.array([pts[k].t_g for k in keys]),
                       impacts_before=np.array([pts[k].impacts_before for k in keys]),
                       tg_seed=seed.t_g, A0=seed.A, stopped=stopped)


# --- moving leaves between sections ---------------------------------------------

def propagate_backward(sys: SystemReal, t_from: float, x, t_to: float,
                       scan_tol: float = 1e-3, graze_tol: float = 1e-8) -> np.ndarray:
    """State at ``t_to < t_from`` of the orbit passing through ``x`` at ``t_from``.

    Each region's closed form is run backward; sign changes of F on the
    backward grid switch the region.

    Raises
    ------
    BackwardEventAmbiguity
        When the backward orbit touches the surface tangentially.
    """
    if not t_to < t_from:
        raise ValueError("backward propagation needs t_to < t_from")
    h = scan_step_for(sys)
    x = np.asarray(x, dtype=float)
    F0 = float(sys.c @ x + sys.d)
    if F0 == 0.0:
        # just crossed forward, so backward we are on the side F' points away from
        region = Region.MINUS if sys.fdot(t_from, x) > 0 else Region.PLUS
    else:
        region = Region.PLUS if F0 > 0 else Region.MINUS
    t = t_from
    while True:
        seg = Segment(sys, t, x, region)
        s = int(region)
        n = max(int(math.ceil((t - t_to) / h)), 1)
        ts = np.linspace(t, t_to, n + 1)
        g = s * seg.F_array(ts)
        g[0] = max(g[0], 0.0)
        t_cross = None
        for j in range(1, n + 1):
            if g[j] < 0.0:
                t_cross = _brent(lambda u: s * seg.F(u), ts[j], ts[j - 1], 1e-12)
                break
            if j < n and g[j] <= g[j - 1] and g[j] <= g[j + 1] and g[j] < max(scan_tol, seg.dip_tol(h, scan_tol)):
                lo, hi = ts[j + 1], ts[j - 1]
                tm = _refine_extremum(seg, s, lo, hi, 1e-12)
                gm = s * seg.F(tm)
                if abs(gm) <= graze_tol:
                    raise BackwardEventAmbiguity(f"backward orbit grazes the surface at t={tm:.6f}")
                if gm < 0.0:
                    t_cross = _brent(lambda u: s * seg.F(u), tm, ts[j - 1], 1e-12)
                    break
        if t_cross is None:
            return seg.state(t_to)
        x = seg.state(t_cross)
        t = t_cross
        region = region.other


def push_pull_leaf(sys: SystemReal, leaf: GrazingLeaf, k: int, check: bool = True) -> GrazingLeaf:
    """Image of a leaf on the section ``t0 + k T`` under the stroboscopic flow.

    Positive ``k`` pushes forward, negative pulls back. The grazing time of
    each point is unchanged, which is verified when ``check`` is set.

    Raises
    ------
    PushPastGraze
        When ``t0 + k T`` is not earlier than the grazing times.
    """
    T = sys.period
    t1 = leaf.t0 + k * T
    if k > 0 and t1 >= float(np.min(leaf.tg_realized)) - 1e-9:
        raise PushPastGraze(f"section t={t1:.3f} is past the grazing time {leaf.tg_realized.min():.3f}")
    if k == 0:
        return leaf
    images = []
    for p in leaf.points:
        if k > 0:
            images.append(propagate_exact(sys, leaf.t0, p, t1).x_end)
        else:
            images.append(propagate_backward(sys, leaf.t0, p, t1))
    images = np.array(images)
    tg = leaf.tg_realized.copy()
    if check:
        for i, (p, t_g) in enumerate(zip(images, leaf.tg_realized)):
            m = tracked_minimum(sys, t1, p, t_g)
            tg[i] = m.t
    return GrazingLeaf(leaf_id=f"{leaf.leaf_id}@{k:+d}", t0=t1, points=images, tg_realized=tg,
                       impacts_before=leaf.impacts_before.copy(), tg_seed=leaf.tg_seed,
                       A0=None, stopped={})


def leaves_summary_json(leaves, n, path):
    with open(path, "w") as fh:
        json.dump([lf.summary(n) for lf in leaves], fh, indent=2)
