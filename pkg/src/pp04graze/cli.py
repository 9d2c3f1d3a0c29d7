"""Command-line interface.

Every experiment is a subcommand. Settings are resolved in three layers:
built-in defaults, then a ``key = value`` file (``--config``), then flags.
Each run writes its outputs and a ``manifest.json`` with the resolved
configuration into ``--out``; the manifest is itself accepted by
``--config``.

Exit status: 0 on success, 1 on a model error, 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, OutOfRange, PP04Error, UnknownKey
from .model import Forcing, ForcingTerm, ModelParams, Region, build_system

MODEL_KEYS = {f.name: f.default for f in fields(ModelParams)}
FORCING_KEYS = {"mu": 0.3, "omega": 0.115, "phase": 0.0, "mu2": 0.0, "omega2": 0.146, "phase2": 0.0}
IC_KEYS = {"v0": 0.3636, "a0": 0.2089, "c0": 0.2356}
CLASSIFY_KEYS = {"settle": 3000.0, "n_max": 8, "per_tol": 1e-5}

TRAJ_SCHEMA = ("trajectory.csv: t,V,A,C,F,region\n"
               "events.csv: t,kind,V,A,C,fdot")

COMMANDS: dict[str, dict] = {
    "simulate": {
        "help": "propagate the discontinuous system exactly",
        "keys": {**IC_KEYS, "t0": 0.0, "t_end": 500.0, "output_step": 0.5},
        "schema": TRAJ_SCHEMA,
    },
    "simulate-smoothed": {
        "help": "integrate the tanh-smoothed system (steepness eta)",
        "keys": {**IC_KEYS, "t0": 0.0, "t_end": 500.0, "output_step": 0.5, "rtol": 1e-8, "atol": 1e-10},
        "schema": TRAJ_SCHEMA,
    },
    "ramp": {
        "help": "smoothed run with omega or d drifting linearly in time",
        "keys": {**IC_KEYS, "t0": 0.0, "t_end": 2000.0, "output_step": 0.5, "ramp_param": "omega",
                 "ramp_from": 0.2, "ramp_to": 0.1, "phase_convention": "integrated"},
        "schema": TRAJ_SCHEMA + "\ncycles.csv: t_start,length_periods",
    },
    "classify": {
        "help": "classify the attractor reached from an initial state",
        "keys": {**IC_KEYS, "t0": 0.0, **CLASSIFY_KEYS},
        "schema": "classification.json: {class, m, n, residual, rotation, anchor_time, anchors}",
    },
    "orbit": {
        "help": "polish a periodic orbit of the stroboscopic map",
        "keys": {**IC_KEYS, "n": 0, "tol": 1e-10},
        "schema": "orbit.json: {class, m, n, period, anchors[], grazing_margin, t0}",
    },
    "probe-sqrt": {
        "help": "measure the square-root map near a grazing orbit",
        "keys": {"v0": 0.385917830083, "a0": 0.2089, "c0": 0.2356, "p_v": 1.0, "p_a": 0.0, "p_c": 0.0,
                 "eps_min": 1e-8, "eps_max": 1e-3, "eps_count": 21, "t_alpha": math.nan},
        "schema": "probe.json: {exponent, exponent_stderr, jump, predicted_jump, t_alpha, t_beta, t_graze}\n"
                  "probe.csv: eps,side,V,A,C",
    },
    "grazing-times": {
        "help": "leading-order grazing times in a window",
        "keys": {"t0": 0.0, "t_max": 250.0, "region": "plus"},
        "schema": "grazing_times.csv: t,region,residual",
    },
    "grazing-ic": {
        "help": "initial V on a section whose orbit grazes near a target time",
        "keys": {"t0": 0.0, "a0": 0.2089, "c0": 0.2356, "v_lo": 0.36, "v_hi": 0.40, "t_target": 72.41,
                 "smoothed": False},
        "schema": "grazing_ic.json: {V, A, C, t0, t_g, margin, impacts_before, eta}",
    },
    "leaf": {
        "help": "trace one grazing leaf on the section A = a0",
        "keys": {"t0": 0.0, "a0": 0.2089, "c0": 0.2356, "v_lo": 0.36, "v_hi": 0.40, "t_target": 72.41,
                 "c_min": 0.0, "c_max": 1.0, "samples": 41, "leaf_id": "leaf", "split_on_impacts": True},
        "schema": "leaves.csv: leaf_id,tg,V,C,tg_realized,impacts_before\n"
                  "leaves.json: [{leaf_id, tg, line_direction, line_rms, tg_spread, angle_to_normal_deg, ...}]",
    },
    "sweep": {
        "help": "Monte-Carlo bifurcation sweep in omega, d, mu or eta",
        "keys": {"param": "omega", "from": 0.06, "to": 0.15, "step": 0.0005, "samples": 10,
                 "refine": True, **CLASSIFY_KEYS},
        "schema": "sweep.csv: param,ic_index,class_m,class_n,grazing_margin,f_extrema,kind\n"
                  "  (f_extrema is ';'-separated; kind is the class label, QP, U or F)\n"
                  "transitions.json: {edges: [{label, edge, inside, outside, estimate}],\n"
                  "                   dominant: [{from, to, dominant_before, dominant_after}]}",
    },
    "tongue": {
        "help": "observed classes on an (omega, mu) grid",
        "keys": {"omega_min": 0.03, "omega_max": 0.3, "mu_min": 0.01, "mu_max": 1.0, "n_omega": 60,
                 "n_mu": 30, "samples": 5, **CLASSIFY_KEYS},
        "schema": "tongue.csv: omega,mu,classes  (classes ';'-separated)",
    },
    "doa": {
        "help": "domain-of-attraction grid on the section A = a0",
        "keys": {"t0": 0.0, "a0": 0.2089, "v_min": -1.0, "v_max": 1.5, "c_min": 0.0, "c_max": 1.0,
                 "n_v": 100, "n_c": 100, "phase_resolve": True, **CLASSIFY_KEYS},
        "schema": "doa.csv: V,C,class_m,class_n,phase  (class_m holds QP/U/F for non-periodic cells)",
    },
    "grazing-curve": {
        "help": "trace G_n(mu), where the (1,n) orbit gains a grazing impact",
        "keys": {"n": 3, "mu_from": 0.3, "mu_to": 1.0, "mu_step": 0.1, "omega_seed": 0.125,
                 "omega_step": 0.002},
        "schema": "grazing_curve.csv: mu,omega_g,residual",
    },
    "quasi": {
        "help": "two-frequency forcing compared with the first term alone",
        "keys": {**IC_KEYS, "t_end": 3000.0, "settle": 1000.0, "output_step": 0.5},
        "schema": TRAJ_SCHEMA + "\nquasi.json: {deviation, region_mismatch, grazes, near_grazes, reference_class}",
    },
}


# --- configuration -------------------------------------------------------------

def _coerce(key: str, raw, default, line=None):
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        where = f" (line {line})" if line else ""
        raise OutOfRange(f"{key}: cannot parse {raw!r}{where}", key=key, line=line) from None


POSITIVE = ("tau_V", "tau_A", "tau_C", "eta", "omega", "omega2", "settle", "n_max", "per_tol",
            "output_step", "samples", "rtol", "atol", "tol")


def _check_range(key: str, value, line=None):
    if key in POSITIVE and not value > 0:
        where = f" (line {line})" if line else ""
        raise OutOfRange(f"{key} must be > 0, got {value}{where}", key=key, line=line)
    return value


def allowed_keys(command: str) -> dict:
    return {**MODEL_KEYS, **FORCING_KEYS, **COMMANDS[command]["keys"]}


def read_config_file(path, command: str) -> dict:
    """Parse a ``key = value`` file, or the ``config`` block of a manifest."""
    allowed = allowed_keys(command)
    text = Path(path).read_text()
    out = {}
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        for k, v in data.get("config", data).items():
            if k not in allowed:
                raise UnknownKey(f"unknown key {k!r} in {path}", key=k)
            out[k] = _check_range(k, _coerce(k, v, allowed[k]))
        return out
    for i, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {i}: expected 'key = value'", line=i)
        k, v = (p.strip() for p in s.split("=", 1))
        if k not in allowed:
            raise UnknownKey(f"unknown key {k!r} at line {i} of {path}", key=k, line=i)
        out[k] = _check_range(k, _coerce(k, v, allowed[k], line=i), line=i)
    return out


def validate_config(config, command: str = "simulate"):
    """Resolved ``(ModelParams, Forcing)``.

    Parameters
    ----------
    config : dict or path-like
        A resolved flat configuration, or a config file which is layered over
        the defaults of `command`.
    """
    if not isinstance(config, dict):
        config = resolve(command, read_config_file(config, command), {})
    params = ModelParams(**{k: config[k] for k in MODEL_KEYS if k in config})
    if config.get("omega", 1.0) <= 0:
        raise OutOfRange("omega must be > 0", key="omega")
    terms = [ForcingTerm(config["mu"], config["omega"], config["phase"])]
    if config.get("mu2", 0.0) != 0.0:
        if config["omega2"] <= 0:
            raise OutOfRange("omega2 must be > 0", key="omega2")
        terms.append(ForcingTerm(config["mu2"], config["omega2"], config["phase2"]))
    return params, Forcing(tuple(terms))


def resolve(command: str, file_values: dict, flag_values: dict) -> dict:
    allowed = allowed_keys(command)
    cfg = dict(allowed)
    cfg.update(file_values)
    for k, v in flag_values.items():
        cfg[k] = _check_range(k, _coerce(k, v, allowed[k]))
    return cfg


# --- argument parsing ---------------------------------------------------------------

def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pp04graze", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        sp = sub.add_parser(name, help=spec["help"], description=spec["help"],
                            epilog="outputs:\n" + spec["schema"],
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="key = value file or a previous manifest.json")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $GRZ_SEED, then 0)")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes for scans (default: all cores)")
        g = sp.add_argument_group("settings (flag wins over --config)")
        for k, v in allowed_keys(name).items():
            shown = "" if isinstance(v, float) and math.isnan(v) else f" (default {v})"
            g.add_argument(_flag(k), dest=k, default=argparse.SUPPRESS, metavar="X",
                           help=f"{k}{shown}")
    return p


# --- commands -----------------------------------------------------------------------

class Run:
    def __init__(self, command, cfg, out: Path, seed: int, workers: int | None):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.workers = workers
        self.outputs: list[str] = []
        self.result: dict = {}
        self.params, self.forcing = validate_config(cfg, command)
        self.sys = build_system(self.params, self.forcing)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def x0(self):
        c = self.cfg
        return np.array([c["v0"], c["a0"], c["c0"]])

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, default=_json_default)
            fh.write("\n")

    def classify_opts(self):
        from .scan import ClassifyOptions
        c = self.cfg
        return ClassifyOptions(settle=c["settle"], n_max=c["n_max"], per_tol=c["per_tol"])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _write_traj(run: Run, tr):
    tr.to_csv(run.path("trajectory.csv"), run.cfg["output_step"])
    tr.events_to_csv(run.path("events.csv"))


def cmd_simulate(run: Run):
    from .flow import FlowOptions, propagate_exact
    c = run.cfg
    tr = propagate_exact(run.sys, c["t0"], run.x0(), c["t_end"], FlowOptions(output_step=c["output_step"]))
    _write_traj(run, tr)
    run.result = {"events": len(tr.events), "crossings": len(tr.crossings()), "grazes": len(tr.grazes())}


def cmd_simulate_smoothed(run: Run):
    from .flow import RKOptions, propagate_smoothed
    c = run.cfg
    tr = propagate_smoothed(run.sys, None, c["t0"], run.x0(), c["t_end"],
                            RKOptions(rtol=c["rtol"], atol=c["atol"], output_step=c["output_step"]))
    _write_traj(run, tr)
    run.result = {"crossings": len(tr.crossings())}


def cmd_ramp(run: Run):
    import csv
    from .flow import ParamRamp, glacial_cycle_lengths, propagate_ramped
    c = run.cfg
    if c["ramp_param"] not in ("omega", "d"):
        raise OutOfRange("ramp_param must be omega or d", key="ramp_param")
    if c["phase_convention"] not in ("integrated", "instantaneous"):
        raise OutOfRange("phase_convention must be integrated or instantaneous", key="phase_convention")
    ramp = ParamRamp.linear(c["ramp_param"], c["ramp_from"], c["ramp_to"], c["t0"], c["t_end"],
                            phase_convention=c["phase_convention"])
    tr = propagate_ramped(run.sys, None, ramp, c["t0"], run.x0(), c["t_end"])
    _write_traj(run, tr)
    if ramp.param == "omega":
        def period(t):
            return 2 * math.pi / float(ramp.effective_omega(t, c["t0"]))
    else:
        period = run.sys.period
    cycles = glacial_cycle_lengths(tr, period)
    with open(run.path("cycles.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "length_periods"])
        for t, n in cycles:
            w.writerow([repr(float(t)), repr(float(n))])
    run.result = {"cycles": len(cycles)}


def _class_dict(cls):
    return {"class": cls.label, "m": cls.m, "n": cls.n, "residual": cls.residual,
            "rotation": cls.rotation, "anchor_time": cls.anchor_time,
            "anchors": [list(a) for a in cls.anchors]}


def cmd_classify(run: Run):
    from .orbits import classify_attractor
    c = run.cfg
    cls = classify_attractor(run.sys, run.x0(), t0=c["t0"], settle=c["settle"], n_max=c["n_max"],
                             per_tol=c["per_tol"])
    run.write_json("classification.json", _class_dict(cls))
    run.result = {"class": cls.label}


def cmd_orbit(run: Run):
    from .orbits import classify_attractor, polish_periodic_orbit
    c = run.cfg
    x, n = run.x0(), c["n"]
    if n <= 0:
        cls = classify_attractor(run.sys, x)
        if not cls.is_mn:
            raise PP04Error(f"attractor is {cls.label}, not periodic")
        n = cls.n
        k = int(round(cls.anchor_time / run.sys.period))
        x = np.array(cls.anchors[(-k) % n])
    po = polish_periodic_orbit(run.sys, x, n, tol=c["tol"])
    with open(run.path("orbit.json"), "w") as fh:
        fh.write(po.to_json() + "\n")
    run.result = {"class": po.orbit_class.label, "grazing_margin": po.grazing_margin}


def cmd_probe_sqrt(run: Run):
    import csv
    from .orbits import sqrt_discontinuity_probe
    c = run.cfg
    eps = np.logspace(math.log10(c["eps_min"]), math.log10(c["eps_max"]), c["eps_count"])
    t_alpha = None if math.isnan(c["t_alpha"]) else c["t_alpha"]
    rep = sqrt_discontinuity_probe(run.sys, run.x0(), (c["p_v"], c["p_a"], c["p_c"]), eps,
                                   t_alpha=t_alpha)
    run.write_json("probe.json", {
        "exponent": rep.exponent, "exponent_stderr": rep.exponent_stderr, "jump": rep.jump,
        "predicted_jump": rep.predicted_jump, "jump_relative_error": rep.jump_relative_error,
        "max_variation": rep.max_variation, "smooth_slope": rep.smooth_slope,
        "impacting_sign": rep.impacting_sign, "t_alpha": rep.t_alpha, "t_beta": rep.t_beta,
        "t_graze": rep.t_graze})
    with open(run.path("probe.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "side", "V", "A", "C"])
        for e, xi, xs in zip(rep.eps, rep.images_impacting, rep.images_smooth):
            w.writerow([repr(float(rep.impacting_sign * e)), "impacting", *map(repr, map(float, xi))])
            w.writerow([repr(float(-rep.impacting_sign * e)), "smooth", *map(repr, map(float, xs))])
    run.result = {"exponent": rep.exponent, "jump": rep.jump}


def cmd_grazing_times(run: Run):
    import csv
    from .grazing import solve_grazing_times
    c = run.cfg
    region = {"plus": Region.PLUS, "minus": Region.MINUS}.get(c["region"])
    if region is None:
        raise OutOfRange("region must be plus or minus", key="region")
    gts = solve_grazing_times(run.sys, region, (c["t0"], c["t0"] + c["t_max"]))
    with open(run.path("grazing_times.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "region", "residual"])
        for g in gts:
            w.writerow([repr(float(g.t)), c["region"], repr(float(g.residual))])
    run.result = {"count": len(gts)}


def cmd_grazing_ic(run: Run):
    from .grazing import find_grazing_ic
    c = run.cfg
    ic = find_grazing_ic(run.sys, c["t0"], c["a0"], c["c0"], (c["v_lo"], c["v_hi"]), c["t_target"],
                         eta=run.params.eta if c["smoothed"] else None)
    run.write_json("grazing_ic.json", {"V": ic.V, "A": ic.A, "C": ic.C, "t0": ic.t0, "t_g": ic.t_g,
                                       "margin": ic.margin, "impacts_before": ic.impacts_before,
                                       "eta": ic.eta})
    run.result = {"V": ic.V, "t_g": ic.t_g}


def cmd_leaf(run: Run):
    from .grazing import find_grazing_ic, trace_leaf
    c = run.cfg
    ic = find_grazing_ic(run.sys, c["t0"], c["a0"], c["c0"], (c["v_lo"], c["v_hi"]), c["t_target"])
    leaf = trace_leaf(run.sys, ic, (c["c_min"], c["c_max"]), c["samples"], c["leaf_id"],
                      split_on_impacts=c["split_on_impacts"])
    leaf.to_csv(run.path("leaves.csv"))
    run.write_json("leaves.json", [leaf.summary(run.sys.n)])
    run.result = {"points": len(leaf)}


def cmd_sweep(run: Run):
    from .scan import (SweepSpec, class_edges, dominant_transitions, monte_carlo_sweep,
                       refine_transition)
    c = run.cfg
    if c["param"] not in ("omega", "d", "mu", "eta"):
        raise OutOfRange("param must be one of omega, d, mu, eta", key="param")
    if not c["step"] > 0:
        raise OutOfRange("step must be > 0", key="step")
    if c["to"] < c["from"]:
        raise OutOfRange("'to' must not be below 'from'", key="to")
    term = run.forcing.terms[0]
    spec = SweepSpec(c["param"], c["from"], c["to"], c["step"], params=run.params, mu=term.mu,
                     omega=term.omega, samples=c["samples"], seed=run.seed, classify=run.classify_opts())
    res = monte_carlo_sweep(spec, run.workers)
    res.to_csv(run.path("sweep.csv"))
    trans = []
    for label in res.labels():
        if label in ("U", "QP", "F"):
            continue
        for tr in class_edges(res, label):
            if c["refine"]:
                tr = refine_transition(res, tr, run.workers)
            trans.append({"label": tr.label, "edge": tr.edge, "inside": tr.inside,
                          "outside": tr.outside, "estimate": tr.estimate})
    dominant = [{"from": a, "to": b, "dominant_before": da, "dominant_after": db}
                for a, b, da, db in dominant_transitions(res)]
    run.write_json("transitions.json", {"edges": trans, "dominant": dominant})
    run.result = {"points": len(res.values), "classes": res.labels()}


def cmd_tongue(run: Run):
    from .scan import tongue_map
    c = run.cfg
    tm = tongue_map((c["omega_min"], c["omega_max"]), (c["mu_min"], c["mu_max"]),
                    (c["n_omega"], c["n_mu"]), c["samples"], run.seed, run.params,
                    workers=run.workers, classify=run.classify_opts())
    tm.to_csv(run.path("tongue.csv"))
    run.result = {"cells": int(c["n_omega"] * c["n_mu"])}


def cmd_doa(run: Run):
    from .scan import cell_centres, doa_grid
    c = run.cfg
    g = doa_grid(run.sys, c["t0"], c["a0"], cell_centres(c["v_min"], c["v_max"], c["n_v"]),
                 cell_centres(c["c_min"], c["c_max"], c["n_c"]), c["phase_resolve"], run.workers,
                 run.classify_opts())
    g.to_csv(run.path("doa.csv"))
    run.result = {"classes": sorted(set(g.labels.ravel().tolist()))}


def cmd_grazing_curve(run: Run):
    from .scan import trace_grazing_curve
    c = run.cfg
    if not c["mu_step"] > 0:
        raise OutOfRange("mu_step must be > 0", key="mu_step")
    k = int(math.floor((c["mu_to"] - c["mu_from"]) / c["mu_step"] + 1e-9))
    mus = np.round(c["mu_from"] + c["mu_step"] * np.arange(k + 1), 12)
    curve = trace_grazing_curve(c["n"], mus, c["omega_seed"], run.params, step=c["omega_step"],
                                seed=run.seed)
    curve.to_csv(run.path("grazing_curve.csv"))
    run.result = {"points": len(curve.points), "lost": curve.lost}


def cmd_quasi(run: Run):
    from .scan import quasi_periodic_experiment
    c = run.cfg
    if len(run.forcing) < 2:
        raise OutOfRange("quasi needs a second forcing term (mu2 != 0)", key="mu2")
    rep = quasi_periodic_experiment(run.sys, run.x0(), c["t_end"], c["settle"])
    rep.trajectory.to_csv(run.path("trajectory.csv"), c["output_step"])
    rep.trajectory.events_to_csv(run.path("events.csv"))
    run.write_json("quasi.json", {
        "deviation": rep.deviation, "region_mismatch": rep.region_mismatch, "grazes": rep.grazes,
        "near_grazes": [list(p) for p in rep.near_grazes],
        "reference_class": rep.reference_class.label if rep.reference_class else None})
    run.result = {"deviation": rep.deviation}


HANDLERS = {
    "simulate": cmd_simulate, "simulate-smoothed": cmd_simulate_smoothed, "ramp": cmd_ramp,
    "classify": cmd_classify, "orbit": cmd_orbit, "probe-sqrt": cmd_probe_sqrt,
    "grazing-times": cmd_grazing_times, "grazing-ic": cmd_grazing_ic, "leaf": cmd_leaf,
    "sweep": cmd_sweep, "tongue": cmd_tongue, "doa": cmd_doa, "grazing-curve": cmd_grazing_curve,
    "quasi": cmd_quasi,
}


def _seed(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("GRZ_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise OutOfRange(f"GRZ_SEED must be an integer, got {env!r}", key="GRZ_SEED") from None
    return 0


def _manifest(out: Path, command, cfg, seed, outputs, status, error=None, result=None):
    data = {"tool": "pp04graze", "version": __version__, "command": command, "seed": seed,
            "config": cfg, "outputs": outputs, "status": status}
    if error:
        data["error"] = error
    if result is not None:
        data["result"] = result
    with open(out / "manifest.json", "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    keys = set(allowed_keys(command))
    flags = {k: v for k, v in vars(args).items() if k in keys}
    out = Path(args.out)
    cfg = None
    seed = None
    try:
        seed = _seed(args.seed)
        file_values = read_config_file(args.config, command) if args.config else {}
        cfg = resolve(command, file_values, flags)
        out.mkdir(parents=True, exist_ok=True)
        r = Run(command, cfg, out, seed, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        HANDLERS[command](r)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _manifest(out, command, cfg, seed, r.outputs, "config-error",
                  {"kind": type(exc).__name__, "message": str(exc), "key": exc.key})
        return 2
    except PP04Error as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        _manifest(out, command, cfg, seed, r.outputs, "error",
                  {"kind": type(exc).__name__, "message": str(exc)})
        return 1
    _manifest(out, command, cfg, seed, r.outputs, "ok", result=r.result)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
