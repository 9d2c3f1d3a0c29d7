"""Parameter-space experiments.

Monte-Carlo bifurcation sweeps, (omega, mu) tongue maps, grazing curves,
domain-of-attraction grids and two-frequency forcing runs. Every task is a
pure function of its index, so results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoConvergence, OrbitLostBeforeGraze, PP04Error
from .flow import EventKind, propagate_exact
from .model import Forcing, ModelParams, SystemReal, build_system
from .orbits import (OrbitClass, classify_attractor, glacial_minima, polish_periodic_orbit)

DEFAULT_BOX = ((0.0, 1.2), (0.0, 1.2), (0.0, 1.0))
SWEEP_PARAMS = ("omega", "d", "mu", "eta")


def _fmt(v) -> str:
    return repr(float(v))


def run_tasks(fn, tasks, workers: int | None = None, chunksize: int = 4) -> list:
    """``[fn(t) for t in tasks]``, spread over ``workers`` processes.

    Results come back in task order. ``workers=1`` runs in-process.
    """
    tasks = list(tasks)
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunksize))


def sample_ic(seed: int, point: int, sample: int, box=DEFAULT_BOX) -> np.ndarray:
    """Initial state drawn from ``box``; the stream depends only on the three indices."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(point), int(sample)]))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random(3)


# --- attractor summary ---------------------------------------------------------

def attractor_summary(sys: SystemReal, cls: OrbitClass, window_periods: int = 10):
    """Local extrema of F and grazing margin on a classified attractor."""
    if not cls.anchors:
        return (), math.nan
    n = cls.n if cls.is_mn else window_periods
    T = sys.period
    t0 = cls.anchor_time
    tr = propagate_exact(sys, t0, cls.anchors[0], t0 + n * T)
    ext = tuple(f for _, f, _ in tr.f_extrema(t0, t0 + n * T))
    mins = glacial_minima(tr, t0, t0 + n * T)
    margin = min((f for _, f in mins), default=math.inf)
    return ext, margin


@dataclass(frozen=True)
class ClassifyOptions:
    settle: float = 3000.0
    n_max: int = 8
    per_tol: float = 1e-5


# --- Monte-Carlo sweeps ----------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """One-parameter Monte-Carlo sweep.

    ``param`` is ``"omega"``, ``"d"``, ``"mu"`` or ``"eta"``; sweeping ``eta``
    classifies on the smoothed system, the others on the exact one.
    """

    param: str
    start: float
    stop: float
    step: float
    params: ModelParams = field(default_factory=ModelParams)
    mu: float = 0.3
    omega: float = 0.115
    samples: int = 10
    seed: int = 0
    box: tuple = DEFAULT_BOX
    classify: ClassifyOptions = field(default_factory=ClassifyOptions)

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if not self.step > 0:
            raise ValueError("sweep step must be > 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.stop < self.start:
            raise ValueError("sweep stop must not be below start")

    @property
    def values(self) -> np.ndarray:
        k = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return np.round(self.start + self.step * np.arange(k + 1), 12)

    def system_at(self, value: float) -> tuple[SystemReal, float | None]:
        params, mu, omega, eta = self.params, self.mu, self.omega, None
        if self.param == "omega":
            omega = value
        elif self.param == "mu":
            mu = value
        elif self.param == "d":
            params = params.with_(d=value)
        else:
            eta = value
            params = params.with_(eta=value)
        return build_system(params, Forcing.single(mu, omega)), eta


@dataclass(frozen=True)
class SweepRecord:
    param: float
    point: int
    ic_index: int
    ic: tuple
    orbit: OrbitClass
    f_extrema: tuple = ()
    grazing_margin: float = math.nan

    @property
    def label(self) -> str:
        return self.orbit.label


def _sweep_task(args) -> SweepRecord:
    spec, point, value, sample = args
    x0 = sample_ic(spec.seed, point, sample, spec.box)
    try:
        sys, eta = spec.system_at(value)
        o = spec.classify
        cls = classify_attractor(sys, x0, settle=o.settle, n_max=o.n_max, per_tol=o.per_tol, eta=eta)
        ext, margin = attractor_summary(sys, cls) if eta is None else ((), math.nan)
    except PP04Error as exc:
        cls = OrbitClass("failed", error=f"{type(exc).__name__}: {exc}")
        ext, margin = (), math.nan
    return SweepRecord(float(value), point, sample, tuple(map(float, x0)), cls, ext, margin)


@dataclass
class SweepResult:
    spec: SweepSpec
    values: np.ndarray
    records: list[SweepRecord]

    def at(self, value: float) -> list[SweepRecord]:
        return [r for r in self.records if abs(r.param - value) < 1e-12]

    def classes_at(self, value: float) -> Counter:
        return Counter(r.label for r in self.at(value))

    def dominant(self, value: float) -> str:
        c = self.classes_at(value)
        # ties broken by label so the answer is deterministic
        return sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]

    def labels(self) -> list[str]:
        return sorted({r.label for r in self.records})

    def presence(self, label: str) -> np.ndarray:
        vals = sorted({r.param for r in self.records})
        return np.array(vals), np.array([label in self.classes_at(v) for v in vals])

    def existence_intervals(self, label: str) -> list[tuple[float, float]]:
        """Maximal runs of consecutive sweep values at which ``label`` was observed."""
        vals, present = self.presence(label)
        runs, start = [], None
        for v, p in zip(vals, present):
            if p and start is None:
                start = v
            if not p and start is not None:
                runs.append((start, prev))
                start = None
            prev = v
        if start is not None:
            runs.append((start, vals[-1]))
        return runs

    def merged(self, other: "SweepResult") -> "SweepResult":
        recs = sorted(self.records + other.records, key=lambda r: (r.param, r.ic_index))
        vals = np.array(sorted({r.param for r in recs}))
        return SweepResult(self.spec, vals, recs)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "ic_index", "class_m", "class_n", "grazing_margin", "f_extrema", "kind"])
            for r in sorted(self.records, key=lambda r: (r.param, r.ic_index)):
                o = r.orbit
                w.writerow([_fmt(r.param), r.ic_index, o.m if o.is_mn else "", o.n if o.is_mn else "",
                            "" if not math.isfinite(r.grazing_margin) else _fmt(r.grazing_margin),
                            ";".join(_fmt(v) for v in r.f_extrema), o.label])


def monte_carlo_sweep(spec: SweepSpec, workers: int | None = None,
                      values=None, point_offset: int = 0) -> SweepResult:
    """Classify ``spec.samples`` random initial states at every sweep value.

    Per-cell model errors are recorded as class ``F`` and never abort the sweep.
    """
    values = spec.values if values is None else np.asarray(values, dtype=float)
    tasks = [(spec, point_offset + i, float(v), s)
             for i, v in enumerate(values) for s in range(spec.samples)]
    records = run_tasks(_sweep_task, tasks, workers)
    return SweepResult(spec, values, records)


@dataclass(frozen=True)
class Transition:
    """Edge of the observed existence interval of one class.

    ``inside`` is the last parameter value where the class was seen,
    ``outside`` the neighbouring one where it was not.
    """

    label: str
    inside: float
    outside: float

    @property
    def estimate(self) -> float:
        return 0.5 * (self.inside + self.outside)

    @property
    def edge(self) -> str:
        return "lower" if self.outside < self.inside else "upper"


def class_edges(result: SweepResult, label: str) -> list[Transition]:
    vals, present = result.presence(label)
    out = []
    for i in range(len(vals) - 1):
        if present[i] != present[i + 1]:
            inside, outside = (vals[i], vals[i + 1]) if present[i] else (vals[i + 1], vals[i])
            out.append(Transition(label, float(inside), float(outside)))
    return out


def dominant_transitions(result: SweepResult) -> list[tuple[float, float, str, str]]:
    """``(value, next_value, dominant, next_dominant)`` wherever the dominant class changes."""
    vals = sorted({r.param for r in result.records})
    dom = [result.dominant(v) for v in vals]
    return [(vals[i], vals[i + 1], dom[i], dom[i + 1])
            for i in range(len(vals) - 1) if dom[i] != dom[i + 1]]


def refine_transition(result: SweepResult, tr: Transition, workers: int | None = None,
                      levels: int = 1) -> Transition:
    """Bisect between the two sweep values of a transition, reusing the sample count."""
    spec = result.spec
    offset = 1_000_000
    for k in range(levels):
        mid = round(0.5 * (tr.inside + tr.outside), 12)
        rec = monte_carlo_sweep(spec, workers, [mid], point_offset=offset + k)
        seen = any(r.label == tr.label for r in rec.records)
        tr = Transition(tr.label, mid, tr.outside) if seen else Transition(tr.label, tr.inside, mid)
    return tr


# --- tongue maps -------------------------------------------------------------------

@dataclass
class TongueMap:
    omegas: np.ndarray
    mus: np.ndarray
    classes: list  # [i_mu][i_omega] -> sorted tuple of labels
    grazes: np.ndarray  # graze events seen on converged attractors

    def cell(self, omega: float, mu: float) -> tuple:
        i = int(np.argmin(np.abs(self.mus - mu)))
        j = int(np.argmin(np.abs(self.omegas - omega)))
        return self.classes[i][j]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "mu", "classes"])
            for i, mu in enumerate(self.mus):
                for j, om in enumerate(self.omegas):
                    w.writerow([_fmt(om), _fmt(mu), ";".join(self.classes[i][j])])


def count_attractor_grazes(sys: SystemReal, cls: OrbitClass, window_periods: int = 10) -> int:
    if not cls.anchors:
        return 0
    n = cls.n if cls.is_mn else window_periods
    t0 = cls.anchor_time
    tr = propagate_exact(sys, t0, cls.anchors[0], t0 + n * sys.period)
    return len(tr.grazes())


def _tongue_task(args):
    params, omega, mu, point, sample, seed, box, copts = args
    x0 = sample_ic(seed, point, sample, box)
    try:
        sys = build_system(params, Forcing.single(mu, omega))
        cls = classify_attractor(sys, x0, settle=copts.settle, n_max=copts.n_max, per_tol=copts.per_tol)
        return cls.label, count_attractor_grazes(sys, cls)
    except PP04Error:
        return "F", 0


def tongue_map(omega_range, mu_range, resolution, samples: int = 5, seed: int = 0,
               params: ModelParams | None = None, box=DEFAULT_BOX, workers: int | None = None,
               classify: ClassifyOptions | None = None) -> TongueMap:
    """Set of observed classes on a regular ``(omega, mu)`` grid.

    ``resolution`` is ``(n_omega, n_mu)``. Cells with ``mu = 0`` are skipped
    (no stroboscopic map) and hold an empty set.
    """
    params = params or ModelParams()
    copts = classify or ClassifyOptions()
    n_om, n_mu = resolution
    omegas = np.linspace(omega_range[0], omega_range[1], n_om)
    mus = np.linspace(mu_range[0], mu_range[1], n_mu)
    tasks = []
    for i, mu in enumerate(mus):
        for j, om in enumerate(omegas):
            if mu == 0:
                continue
            for s in range(samples):
                tasks.append((params, float(om), float(mu), i * n_om + j, s, seed, box, copts))
    out = run_tasks(_tongue_task, tasks, workers, chunksize=16)
    classes = [[() for _ in omegas] for _ in mus]
    grazes = np.zeros((n_mu, n_om), dtype=int)
    acc: dict = {}
    for t, (label, g) in zip(tasks, out):
        key = divmod(t[3], n_om)
        acc.setdefault(key, set()).add(label)
        grazes[key] += g
    for (i, j), labels in acc.items():
        classes[i][j] = tuple(sorted(labels))
    return TongueMap(omegas, mus, classes, grazes)


# --- grazing curves -----------------------------------------------------------------

@dataclass
class GrazingCurve:
    n: int
    points: list = field(default_factory=list)  # (mu, omega_g, residual)
    lost: list = field(default_factory=list)  # (mu, reason)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mu", "omega_g", "residual"])
            for mu, om, res in self.points:
                w.writerow([_fmt(mu), _fmt(om), _fmt(res)])

    def mu_omega_fit(self):
        """Least-squares line ``omega = k mu + c0`` and its R^2."""
        P = np.array([(m, o) for m, o, _ in self.points])
        A = np.column_stack([P[:, 0], np.ones(len(P))])
        coef, *_ = np.linalg.lstsq(A, P[:, 1], rcond=None)
        pred = A @ coef
        ss_res = float(np.sum((P[:, 1] - pred) ** 2))
        ss_tot = float(np.sum((P[:, 1] - P[:, 1].mean()) ** 2))
        return coef, 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _is_1n(po, n) -> bool:
    c = po.orbit_class
    return c.is_mn and c.m == 1 and c.n == n


def find_orbit(sys: SystemReal, m: int, n: int, samples: int = 40, seed: int = 0,
               box=DEFAULT_BOX, hint=None):
    """Polished ``(m, n)`` orbit reached from ``hint`` or from random initial states."""
    starts = ([np.asarray(hint, float)] if hint is not None else []) + \
        [sample_ic(seed, 0, s, box) for s in range(samples)]
    for x0 in starts:
        try:
            cls = classify_attractor(sys, x0)
        except PP04Error:
            continue
        if cls.is_mn and cls.m == m and cls.n == n:
            k = int(round((cls.anchor_time) / sys.period))
            # move the anchor to a section time that is a multiple of n periods
            shift = (-k) % n
            x = np.asarray(cls.anchors[shift], float)
            return polish_periodic_orbit(sys, x, n)
    return None


def _polish_1n(params, mu, omega, n, x):
    sys = build_system(params, Forcing.single(mu, omega))
    try:
        po = polish_periodic_orbit(sys, x, n, max_iter=200)
    except PP04Error:
        return None
    if not _is_1n(po, n) or np.max(np.abs(po.anchors[0] - x)) > 0.05:
        return None
    return po


def locate_grazing_omega(params: ModelParams, mu: float, n: int, omega_hi: float, orbit,
                         step: float = 0.002, omega_min: float = 1e-3, width: float = 1e-9,
                         margin_tol: float = 1e-6):
    """Lowest omega, going down from ``omega_hi``, at which the (1, n) orbit survives.

    Returns ``(omega_g, margin)``. Raises :class:`OrbitLostBeforeGraze` when
    the orbit disappears with a clearly positive grazing margin.
    """
    hi, po_hi = omega_hi, orbit
    lo = None
    while hi - step > omega_min:
        cand = hi - step
        po = _polish_1n(params, mu, cand, n, po_hi.anchors[0])
        if po is None:
            lo = cand
            break
        hi, po_hi = cand, po
    if lo is None:
        raise OrbitLostBeforeGraze(f"(1,{n}) orbit persists down to omega={hi:.4f}")
    while hi - lo > width and po_hi.grazing_margin > 0.1 * margin_tol:
        mid = 0.5 * (lo + hi)
        po = _polish_1n(params, mu, mid, n, po_hi.anchors[0])
        if po is None:
            lo = mid
        else:
            hi, po_hi = mid, po
    if po_hi.grazing_margin >= margin_tol:
        raise OrbitLostBeforeGraze(
            f"(1,{n}) orbit lost at omega~{hi:.6f} with grazing margin {po_hi.grazing_margin:.3e}")
    return hi, po_hi.grazing_margin, po_hi


def trace_grazing_curve(n: int, mu_list, omega_seed: float, params: ModelParams | None = None,
                        step: float = 0.002, seed: int = 0, max_climb: int = 10) -> GrazingCurve:
    """Follow ``G_n(mu)``, where the (1, n) orbit picks up an extra grazing impact.

    For each ``mu`` the orbit is continued down in omega from a seed value
    and the grazing point is bisected. The previous ``omega_g`` seeds the
    next ``mu``; if no (1, n) orbit is found there the seed climbs by
    ``step`` up to ``max_climb`` times.
    """
    params = params or ModelParams()
    curve = GrazingCurve(n)
    omega_start = omega_seed
    anchor = None
    mus = [float(m) for m in mu_list]
    for i, mu in enumerate(mus):
        mu_next = mus[i + 1] if i + 1 < len(mus) else None
        po = None
        for _ in range(max_climb + 1):
            sys = build_system(params, Forcing.single(mu, omega_start))
            po = _polish_1n(params, mu, omega_start, n, anchor) if anchor is not None else None
            if po is None:
                po = find_orbit(sys, 1, n, seed=seed)
            if po is not None and _is_1n(po, n):
                break
            po = None
            # the seed fell below the window: climb in omega
            omega_start += step
        if po is None:
            curve.lost.append((mu, f"no (1,{n}) orbit up to omega={omega_start - step:.4f}"))
            omega_start -= (max_climb + 1) * step
            continue
        try:
            om_g, margin, po_g = locate_grazing_omega(params, mu, n, omega_start, po, step=step)
        except OrbitLostBeforeGraze as exc:
            curve.lost.append((mu, str(exc)))
            continue
        curve.points.append((mu, om_g, margin))
        anchor = po_g.anchors[0]
        omega_start = om_g + 3 * step
        if len(curve.points) >= 2 and mu_next is not None:
            (m0, o0, _), (m1, o1, _) = curve.points[-2:]
            # the curve moves with mu; extrapolate so the seed stays inside the window
            omega_start += max(0.0, (o1 - o0) / (m1 - m0) * (mu_next - mu))
    return curve


# --- domains of attraction ----------------------------------------------------------

@dataclass
class DOAGrid:
    t0: float
    A0: float
    V: np.ndarray
    C: np.ndarray
    m: np.ndarray  # (nC, nV); 0 for non-periodic cells
    n: np.ndarray
    phase: np.ndarray  # -1 when not resolved
    labels: np.ndarray  # object array of class labels

    def key(self, phase: bool = True) -> np.ndarray:
        """Integer code per cell; distinct codes for distinct class (and phase)."""
        codes = {}
        out = np.empty(self.labels.shape, dtype=int)
        for idx in np.ndindex(self.labels.shape):
            k = (self.labels[idx], int(self.phase[idx]) if phase else -1)
            out[idx] = codes.setdefault(k, len(codes))
        return out

    def boundary_points(self, phase: bool = True) -> np.ndarray:
        """Midpoints between horizontally or vertically adjacent cells of different class."""
        K = self.key(phase)
        pts = []
        dh = K[:, 1:] != K[:, :-1]
        for i, j in zip(*np.nonzero(dh)):
            pts.append((0.5 * (self.V[j] + self.V[j + 1]), self.C[i]))
        dv = K[1:, :] != K[:-1, :]
        for i, j in zip(*np.nonzero(dv)):
            pts.append((self.V[j], 0.5 * (self.C[i] + self.C[i + 1])))
        return np.array(pts).reshape(-1, 2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["V", "C", "class_m", "class_n", "phase"])
            for i, c in enumerate(self.C):
                for j, v in enumerate(self.V):
                    mn = self.n[i, j] > 0
                    w.writerow([_fmt(v), _fmt(c), int(self.m[i, j]) if mn else self.labels[i, j],
                                int(self.n[i, j]) if mn else "", int(self.phase[i, j])])


def phase_index(sys: SystemReal, cls: OrbitClass, t0: float = 0.0) -> int:
    """Which of the orbit's anchors is visited at times ``t0 + k n T``.

    Anchors are ranked by V, so the index names the same point for every
    initial state that converges to the same orbit.
    """
    if not cls.is_mn:
        return -1
    n = cls.n
    k = int(round((cls.anchor_time - t0) / sys.period))
    here = cls.anchors[(-k) % n]
    order = sorted(range(n), key=lambda i: (round(cls.anchors[i][0], 6), round(cls.anchors[i][2], 6)))
    return order.index(cls.anchors.index(here))


def _doa_task(args):
    params, forcing, t0, x0, phase_resolve, copts = args
    sys = build_system(params, forcing)
    try:
        cls = classify_attractor(sys, x0, t0=t0, settle=copts.settle, n_max=copts.n_max,
                                 per_tol=copts.per_tol)
    except PP04Error:
        return "F", 0, 0, -1
    ph = phase_index(sys, cls, t0) if phase_resolve else -1
    return cls.label, cls.m, cls.n if cls.is_mn else 0, ph


def doa_grid(sys: SystemReal, t0: float, A0: float, V_axis, C_axis, phase_resolve: bool = True,
             workers: int | None = None, classify: ClassifyOptions | None = None) -> DOAGrid:
    """Classify the attractor reached from every cell centre of a (V, C) grid."""
    copts = classify or ClassifyOptions()
    V = np.asarray(V_axis, dtype=float)
    C = np.asarray(C_axis, dtype=float)
    tasks = [(sys.params, sys.forcing, t0, (float(v), A0, float(c)), phase_resolve, copts)
             for c in C for v in V]
    out = run_tasks(_doa_task, tasks, workers, chunksize=32)
    shape = (len(C), len(V))
    labels = np.empty(shape, dtype=object)
    m = np.zeros(shape, dtype=int)
    nn = np.zeros(shape, dtype=int)
    ph = np.full(shape, -1, dtype=int)
    for k, (lab, mm, n_, p) in enumerate(out):
        i, j = divmod(k, len(V))
        labels[i, j], m[i, j], nn[i, j], ph[i, j] = lab, mm, n_, p
    return DOAGrid(t0, A0, V, C, m, nn, ph, labels)


def cell_centres(lo: float, hi: float, cells: int) -> np.ndarray:
    h = (hi - lo) / cells
    return lo + h * (np.arange(cells) + 0.5)


def distance_to_polylines(points: np.ndarray, polylines, scale=(1.0, 1.0)) -> np.ndarray:
    """Distance from each point to the nearest polyline, after scaling each axis."""
    s = np.asarray(scale, dtype=float)
    P = np.asarray(points, float) / s
    best = np.full(len(P), np.inf)
    for line in polylines:
        Q = np.asarray(line, float) / s
        for a, b in zip(Q[:-1], Q[1:]):
            ab = b - a
            L2 = float(ab @ ab)
            t = np.clip(((P - a) @ ab) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(P))
            d = np.linalg.norm(P - (a + np.outer(t, ab)), axis=1)
            best = np.minimum(best, d)
    return best


# --- two-frequency forcing ------------------------------------------------------------

@dataclass
class QuasiPeriodicReport:
    trajectory: object
    reference: object
    deviation: float
    grazes: list
    near_grazes: list
    reference_class: OrbitClass | None = None
    region_mismatch: float = math.nan


def quasi_periodic_experiment(sys: SystemReal, x0, horizon: float, settle: float = 1000.0,
                              near_tol: float = 0.01) -> QuasiPeriodicReport:
    """Run two-frequency forcing and compare with the first term alone.

    The reference is the orbit of the single-frequency system from the same
    initial state. ``deviation`` is the sup-norm distance between the two
    after ``settle`` kyr; it includes the direct response to the second
    term. ``region_mismatch`` is the fraction of that time the two runs sit on
    opposite sides of the switching surface, i.e. how far the glacial
    pattern departs from the periodic one. ``near_grazes`` are glacial
    minima of F below ``near_tol``.
    """
    if len(sys.forcing) < 1:
        raise ValueError("forcing must have at least one term")
    ref_sys = sys.with_forcing(Forcing((sys.forcing.terms[0],)))
    tr = propagate_exact(sys, 0.0, x0, horizon)
    ref = propagate_exact(ref_sys, 0.0, x0, horizon)
    ts = np.arange(settle, horizon, 0.25)
    dev, mismatch = 0.0, 0.0
    if len(ts):
        Sa, Sb = tr.states(ts), ref.states(ts)
        dev = float(np.max(np.abs(Sa - Sb)))
        mismatch = float(np.mean((Sa @ sys.c + sys.d > 0) != (Sb @ sys.c + sys.d > 0)))
    near = [(t, f) for t, f in glacial_minima(tr, settle, horizon) if f < near_tol]
    try:
        ref_cls = classify_attractor(ref_sys, x0)
    except PP04Error:
        ref_cls = None
    return QuasiPeriodicReport(tr, ref, dev, [e.t for e in tr.grazes()], near, ref_cls, mismatch)
