import numpy as np
import pytest

from pp04graze import Forcing, ModelParams, build_system
from pp04graze.orbits import classify_attractor, unforced_cycle
from pp04graze.scan import (ClassifyOptions, SweepSpec, cell_centres, class_edges,
                            distance_to_polylines, doa_grid, monte_carlo_sweep, phase_index,
                            quasi_periodic_experiment, refine_transition, sample_ic, tongue_map,
                            trace_grazing_curve)

X13 = np.array([0.36357, 0.20885, 0.23565])


def test_sample_ic_deterministic_and_in_box():
    a = sample_ic(42, 3, 7)
    np.testing.assert_array_equal(a, sample_ic(42, 3, 7))
    assert not np.array_equal(a, sample_ic(42, 3, 8))
    box = ((0.0, 1.0), (0.2, 0.3), (-1.0, 0.0))
    for s in range(50):
        x = sample_ic(0, 0, s, box)
        assert all(lo <= v <= hi for v, (lo, hi) in zip(x, box))


def test_sweep_csv_identical_across_worker_counts(tmp_path):
    spec = SweepSpec("omega", 0.112, 0.116, 0.001, samples=3, seed=42)
    a = monte_carlo_sweep(spec, workers=1)
    b = monte_carlo_sweep(spec, workers=2)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "param,ic_index,class_m,class_n,grazing_margin,f_extrema,kind"


def test_sweep_edges_and_refinement():
    spec = SweepSpec("omega", 0.112, 0.116, 0.001, samples=4, seed=1)
    res = monte_carlo_sweep(spec, workers=1)
    assert "(1,2)" in res.labels() and "(1,3)" in res.labels()
    edges = class_edges(res, "(1,3)")
    assert [e.edge for e in edges] == ["lower"]
    fine = refine_transition(res, edges[0], workers=1, levels=3)
    assert abs(fine.inside - fine.outside) == pytest.approx(0.001 / 8)
    assert abs(fine.estimate - 0.1135) < 0.001
    runs = res.existence_intervals("(1,3)")
    assert runs[-1][1] == pytest.approx(0.116)


def test_sweep_other_parameters():
    spec = SweepSpec("d", 0.26, 0.27, 0.01, samples=2, omega=0.115, mu=0.3)
    sys, _ = spec.system_at(0.26)
    assert sys.params.d == 0.26
    spec = SweepSpec("eta", 500, 500, 1, samples=1)
    _, eta = spec.system_at(500.0)
    assert eta == 500.0


def test_tongue_cell_coexistence():
    tm = tongue_map((0.115, 0.115), (0.3, 0.3), (1, 1), samples=12, seed=0, workers=1)
    assert {"(1,2)", "(1,3)"} <= set(tm.cell(0.115, 0.3))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("mu", [0.02, 0.05])
def test_small_forcing_tongues_root_at_multiples(unforced, n, mu):
    _, P = unforced_cycle(unforced)
    s = build_system(ModelParams(), Forcing.single(mu, n * 2 * np.pi / P))
    # locking is weak at small mu, so the transient is long
    cls = classify_attractor(s, np.array([0.5, 0.5, 0.2]), settle=20000.0)
    assert cls.label == f"(1,{n})"


def test_weak_forcing_has_no_grazes():
    tm = tongue_map((0.05, 0.25), (0.01, 0.05), (5, 3), samples=2, seed=3, workers=1)
    assert tm.grazes.sum() == 0


def test_doa_cross_section_phase_change(sys13):
    g = doa_grid(sys13, 0.0, 0.2089, np.linspace(1.0, 1.5, 51), [0.6], workers=1)
    seq = []
    for lab, ph in zip(g.labels[0], g.phase[0]):
        if not seq or seq[-1] != (lab, ph):
            seq.append((lab, ph))
    assert [s[0] for s in seq] == ["(1,3)", "(1,2)", "(1,3)"]
    assert seq[0][1] != seq[2][1]


def test_doa_csv_and_boundaries(sys13, tmp_path):
    g = doa_grid(sys13, 0.0, 0.2089, cell_centres(-1, 1.5, 6), cell_centres(0, 1, 4), workers=1)
    g.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "V,C,class_m,class_n,phase" and len(lines) == 25
    assert len(g.boundary_points()) >= len(g.boundary_points(phase=False))


def test_phase_index_consistent(sys13):
    # two states on the same orbit, a forcing period apart, have shifted phases
    cls = classify_attractor(sys13, X13)
    p0 = phase_index(sys13, cls, 0.0)
    p1 = phase_index(sys13, cls, sys13.period)
    assert p0 != p1 and {p0, p1} <= {0, 1, 2}


def test_cell_centres_and_distance():
    np.testing.assert_allclose(cell_centres(0, 1, 4), [0.125, 0.375, 0.625, 0.875])
    lines = [np.array([[0.0, 0.0], [1.0, 0.0]])]
    d = distance_to_polylines(np.array([[0.5, 0.2], [2.0, 0.0]]), lines, scale=(1.0, 0.1))
    np.testing.assert_allclose(d, [2.0, 1.0])


def test_grazing_curve_mu_03():
    curve = trace_grazing_curve(3, [0.3], 0.125)
    assert curve.points[0][1] == pytest.approx(0.114, abs=0.002)


@pytest.mark.slow
def test_grazing_curve_linear_at_large_forcing():
    curve = trace_grazing_curve(3, [0.7, 0.8, 0.9, 1.0], 0.14)
    assert len(curve.points) == 4
    assert curve.points[-1][1] == pytest.approx(0.148, abs=0.005)
    _, r2 = curve.mu_omega_fit()
    assert r2 > 0.95


def test_quasi_periodic_close_and_far():
    close = quasi_periodic_experiment(build_system(ModelParams(), Forcing.of((0.3, 0.13), (0.2, 0.146))),
                                      X13, 3000.0)
    far = quasi_periodic_experiment(build_system(ModelParams(), Forcing.of((0.3, 0.115), (0.25, 0.1476))),
                                    X13, 3000.0)
    assert close.region_mismatch < 0.05
    assert far.region_mismatch > 0.1
    assert far.deviation > 2 * close.deviation
    assert far.near_grazes


# --- A0 = 0.55 section at the physically relevant forcing --------------------

SYS_055 = build_system(ModelParams(), Forcing.single(0.467, 0.124))


def _key(V, C):
    c = classify_attractor(SYS_055, [V, 0.55, C])
    return c.label, phase_index(SYS_055, c, 0.0)


def _follow_boundary(V0, ka, kb, Cs, win=0.02):
    """Bisected (V, C) points of the boundary between classes ka | kb."""
    pts, V, slope = [], V0, 0.4
    for C in Cs:
        if len(pts) >= 2:
            slope = (pts[-1][0] - pts[-2][0]) / (pts[-1][1] - pts[-2][1])
        if pts:
            V = pts[-1][0] + slope * (C - pts[-1][1])
        Vg = np.linspace(V - win, V + win, 9)
        kk = [_key(v, C) for v in Vg]
        idx = [i for i in range(8) if kk[i] == ka and kk[i + 1] == kb]
        if len(idx) != 1:
            break
        a, b = Vg[idx[0]], Vg[idx[0] + 1]
        for _ in range(12):
            m = 0.5 * (a + b)
            a, b = (m, b) if _key(m, C) == ka else (a, m)
        pts.append((0.5 * (a + b), C))
    return np.array(pts)


def _line(P):
    Q = P - P.mean(axis=0)
    _, sv, vt = np.linalg.svd(Q)
    return vt[0], sv[1] / np.sqrt(len(P))


@pytest.mark.slow
def test_section_055_linear_boundaries_and_v_shape():
    nv = np.array([SYS_055.n[0], SYS_055.n[2]])
    nv /= np.linalg.norm(nv)
    Cs = np.linspace(0.05, 0.95, 10)
    Vs = np.linspace(0.45, 0.8, 36)
    ks = [_key(v, 0.05) for v in Vs]
    bounds = [(0.5 * (Vs[i] + Vs[i + 1]), ks[i], ks[i + 1]) for i in range(35) if ks[i] != ks[i + 1]]
    wedge = [b for b in bounds if ("(1,3)", 1) in (b[1], b[2])]
    assert len(wedge) == 2
    lines = []
    for V0, ka, kb in wedge:
        P = _follow_boundary(V0, ka, kb, Cs)
        assert len(P) == len(Cs)
        d, rms = _line(P)
        assert rms < 1e-2
        lines.append((P, d))
    angles = [np.degrees(np.arccos(abs(d @ nv))) for _, d in lines]
    # the left edge is orthogonal to n; the right edge is tilted, so the wedge closes
    assert abs(angles[0] - 90.0) < 2.0
    assert abs(angles[0] - angles[1]) > 5.0
    width = lines[1][0][:, 0] - lines[0][0][:, 0]
    assert width[-1] < 0.5 * width[0]
