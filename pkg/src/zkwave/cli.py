"""
Command-line experiment driver.

Subcommands ``simulate``, ``kinetic``, ``compare``, ``diagnose`` and
``noise-check`` read one YAML or JSON file with named blocks (see
:data:`DEFAULTS`; unspecified fields keep their defaults), validate all of it
before touching the output directory, run, and write CSV tables. Every CSV
gets a ``.meta.json`` sidecar with the resolved configuration, the seed and
the package version.

Exit status is 0 when every check of the command passes, 1 when a check
fails and 2 on configuration or runtime errors. A run that fails midway
keeps what it wrote and adds ``errors.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import minimize_scalar

from . import __version__
from . import diagnostics as dg
from . import kinetic as kin
from .dynamics import IntegratorConfig, run_ensemble, weighted_action
from .ensemble import CovarianceError, FieldSampler, build_covariance, make_profile
from .lattice import LatticeError, LatticeSpec
from .noise import build_noise, generator_action, noise_coefficient, random_monomial
from .wigner import (default_battery, estimate_wigner, exact_wigner_estimate, free_flow,
                     mean_and_stderr, sample_test_function, shift_labels,
                     trajectory_pairings, write_wigner_csv)

CONFIG_VERSION = 1

DEFAULTS = {
    "config_version": CONFIG_VERSION,
    "seed": 0,
    "strict": False,
    "lattice": {
        "d": 2, "D": 32, "lambda": 0.3, "theta_r": 0.2, "frak_c_r": 1.0,
        "box_constant": 1.0, "eps_override": None, "c_r_override": None,
    },
    "ensemble": {"profile": "gaussian_bump", "params": {}, "n_traj": 400},
    "dynamics": {
        "tau_final": 0.3, "snapshot_taus": [0.0], "t_final": None, "snapshot_times": None,
        "dt": None, "check_action": False, "action_tol": 0.01,
    },
    "wigner": {"J": None, "battery_center": [0.15, 0.0], "k_width": 0.05, "write_fields": True},
    "kinetic": {
        "initial": "wigner", "n_k": None, "n_omega": None, "L": None, "ell": 0.02,
        "dt": 0.03, "tau_final": 0.3, "transport": "spectral", "collide": True,
        "collision_scale": 1.0, "record_every": 1, "momentum_tol": 1e-8,
    },
    "compare": {
        "lambdas": [0.4, 0.3, 0.2], "tau": 0.3, "control_variate": True,
        "collision_scale": None, "fit_bounds": [0.0, 4.0], "fit_xtol": 0.05,
    },
    "diagnostics": {
        "plancherel": {"samples": 10, "d": 2, "t_max": 30.0, "tol": 1e-6},
        "cut": {"d": 3, "t0": [10.0, 30.0, 100.0, 300.0, 1000.0], "lam": 1e-3, "eth": 4.0,
                "eth1": 0.2, "eth2": 0.04, "slack": 0.05},
        "ker": {"d": 6, "n": 0, "t0": [4.0, 8.0, 16.0, 32.0], "slack": 0.05},
    },
    "noise_check": {
        "d": 2, "D": 6, "lambda": 0.5, "monomials": 500, "n_modes": 5,
        "damping": {"D": 6, "epsilon": 0.3, "c_r": 1.0, "mode": [2, 1], "t_final": 1.0,
                    "dt": 0.05, "n_traj": 2000, "sigmas": 3.0},
    },
}

# blocks whose contents are passed through without a schema
FREE_FORM = {"ensemble.params"}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# validation


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _int(lo=None):
    def check(v):
        if not _is_int(v):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
    return check


def _num(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if not _is_num(v) or not math.isfinite(v):
            return "must be a finite number"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
    return check


def _opt(inner):
    def check(v):
        return None if v is None else inner(v)
    return check


def _bool(v):
    if not isinstance(v, bool):
        return "must be true or false"


def _choice(*options):
    def check(v):
        if v not in options:
            return f"must be one of {list(options)}"
    return check


def _nums(min_len=1, length=None, each=None):
    each = each or _num()

    def check(v):
        if not isinstance(v, (list, tuple)):
            return "must be a list of numbers"
        if length is not None and len(v) != length:
            return f"must have {length} entries"
        if len(v) < min_len:
            return f"must have at least {min_len} entries"
        for x in v:
            msg = each(x)
            if msg:
                return f"entries {msg}"
    return check


def _ints(length=None):
    def check(v):
        if not isinstance(v, (list, tuple)) or not all(_is_int(x) for x in v):
            return "must be a list of integers"
        if length is not None and len(v) != length:
            return f"must have {length} entries"
    return check


CHECKS = {
    "config_version": lambda v: None if v == CONFIG_VERSION else f"must be {CONFIG_VERSION}",
    "seed": _int(0),
    "strict": _bool,
    "lattice.d": _int(2),
    "lattice.D": _int(1),
    "lattice.lambda": _num(0.0, 1.0, hi_open=True),
    "lattice.theta_r": _num(0.0, 1.0, lo_open=True),
    "lattice.frak_c_r": _num(0.0),
    "lattice.box_constant": _num(0.0, lo_open=True),
    "lattice.eps_override": _opt(_num(0.0, lo_open=True)),
    "lattice.c_r_override": _opt(_num(0.0)),
    "ensemble.profile": lambda v: None if isinstance(v, str) else "must be a profile name",
    "ensemble.params": lambda v: None if isinstance(v, dict) else "must be a mapping",
    "ensemble.n_traj": _int(2),
    "dynamics.tau_final": _opt(_num(0.0)),
    "dynamics.snapshot_taus": _opt(_nums(0, each=_num(0.0))),
    "dynamics.t_final": _opt(_num(0.0)),
    "dynamics.snapshot_times": _opt(_nums(0, each=_num(0.0))),
    "dynamics.dt": _opt(_num(0.0, lo_open=True)),
    "dynamics.check_action": _bool,
    "dynamics.action_tol": _num(0.0, lo_open=True),
    "wigner.J": _opt(_int(0)),
    "wigner.battery_center": _nums(1),
    "wigner.k_width": _num(0.0, lo_open=True),
    "wigner.write_fields": _bool,
    "kinetic.initial": _choice("wigner", "density", "zero"),
    "kinetic.n_k": _opt(_int(3)),
    "kinetic.n_omega": _opt(_int(1)),
    "kinetic.L": _opt(_num(0.0, lo_open=True)),
    "kinetic.ell": _num(0.0, lo_open=True),
    "kinetic.dt": _num(0.0, lo_open=True),
    "kinetic.tau_final": _num(0.0),
    "kinetic.transport": _choice("spectral", "cubic", "off"),
    "kinetic.collide": _bool,
    "kinetic.collision_scale": _num(0.0),
    "kinetic.record_every": _int(1),
    "kinetic.momentum_tol": _num(0.0, lo_open=True),
    "compare.lambdas": _nums(1, each=_num(0.0, 1.0, lo_open=True, hi_open=True)),
    "compare.tau": _num(0.0),
    "compare.control_variate": _bool,
    "compare.collision_scale": _opt(_num(0.0)),
    "compare.fit_bounds": _nums(length=2, each=_num(0.0)),
    "compare.fit_xtol": _num(0.0, lo_open=True),
    "diagnostics.plancherel.samples": _int(0),
    "diagnostics.plancherel.d": _int(1),
    "diagnostics.plancherel.t_max": _num(0.0),
    "diagnostics.plancherel.tol": _num(0.0, lo_open=True),
    "diagnostics.cut.d": _int(1),
    "diagnostics.cut.t0": _nums(0, each=_num(0.0, lo_open=True)),
    "diagnostics.cut.lam": _num(0.0, 1.0, lo_open=True, hi_open=True),
    "diagnostics.cut.eth": _num(0.0, lo_open=True),
    "diagnostics.cut.eth1": _num(0.0, lo_open=True),
    "diagnostics.cut.eth2": _num(0.0, lo_open=True),
    "diagnostics.cut.slack": _num(0.0),
    "diagnostics.ker.d": _int(2),
    "diagnostics.ker.n": _int(0),
    "diagnostics.ker.t0": _nums(0, each=_num(0.0, lo_open=True)),
    "diagnostics.ker.slack": _num(0.0),
    "noise_check.d": _int(2),
    "noise_check.D": _int(1),
    "noise_check.lambda": _num(0.0, 1.0, lo_open=True, hi_open=True),
    "noise_check.monomials": _int(0),
    "noise_check.n_modes": _int(1),
    "noise_check.damping.D": _int(1),
    "noise_check.damping.epsilon": _num(0.0, lo_open=True),
    "noise_check.damping.c_r": _num(0.0),
    "noise_check.damping.mode": _ints(),
    "noise_check.damping.t_final": _num(0.0, lo_open=True),
    "noise_check.damping.dt": _num(0.0, lo_open=True),
    "noise_check.damping.n_traj": _int(2),
    "noise_check.damping.sigmas": _num(0.0, lo_open=True),
}


def _merge(defaults, user, prefix, errors):
    out = copy.deepcopy(defaults)
    if not isinstance(user, dict):
        errors.append(f"{prefix or 'config'}: must be a mapping")
        return out
    for key, val in user.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            errors.append(f"{path}: unknown field")
        elif isinstance(defaults[key], dict) and path not in FREE_FORM:
            out[key] = _merge(defaults[key], val, path, errors)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _leaves(cfg, prefix=""):
    for key, val in cfg.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(val, dict) and path not in FREE_FORM:
            yield from _leaves(val, path)
        else:
            yield path, val


def default_J(spec: LatticeSpec) -> int:
    """Smallest shift radius whose Wigner grid covers ``|mho_i| < 1``."""
    return int(math.ceil(spec.epsilon / (2.0 * spec.h) - 1e-12))


def lattice_spec(block: dict, lam: float | None = None) -> LatticeSpec:
    return LatticeSpec(d=block["d"], D=block["D"],
                       lam=block["lambda"] if lam is None else lam,
                       box_constant=block["box_constant"], frak_c_r=block["frak_c_r"],
                       theta_r=block["theta_r"], eps_override=block["eps_override"],
                       c_r_override=block["c_r_override"])


def _commensurate(spec: LatticeSpec) -> bool:
    r = spec.epsilon / (2.0 * spec.h)
    return abs(r - round(r)) < 1e-9


def validate(raw: dict, command: str) -> dict:
    """Merge ``raw`` into the defaults and check every field.

    Raises
    ------
    ConfigError
        With one message per offending field.
    """
    errors = []
    cfg = _merge(DEFAULTS, raw if raw is not None else {}, "", errors)
    if "config_version" not in (raw or {}):
        errors.append("config_version: required")
    for path, val in _leaves(cfg):
        check = CHECKS.get(path)
        msg = check(val) if check else None
        if msg:
            errors.append(f"{path}: {msg}")
    if errors:
        raise ConfigError(errors)

    lat = cfg["lattice"]
    strict = cfg["strict"]
    try:
        spec = lattice_spec(lat)
    except LatticeError as exc:
        errors.append(f"lattice: {exc}")
        spec = None
    if command in ("simulate", "kinetic", "compare"):
        try:
            make_profile(cfg["ensemble"]["profile"], lat["d"], **cfg["ensemble"]["params"])
        except (CovarianceError, TypeError) as exc:
            errors.append(f"ensemble.profile: {exc}")
        if len(cfg["wigner"]["battery_center"]) > lat["d"]:
            errors.append("wigner.battery_center: more entries than the dimension")

    if command == "simulate" and spec is not None:
        dyn = cfg["dynamics"]
        if dyn["t_final"] is None and dyn["tau_final"] is None:
            errors.append("dynamics: set tau_final or t_final")
        if dyn["t_final"] is not None and dyn["tau_final"] is not None:
            errors.append("dynamics: set only one of tau_final and t_final")
        if dyn["tau_final"] is not None and spec.lam == 0.0:
            errors.append("dynamics.tau_final: needs lambda > 0; use t_final for linear runs")
        if dyn["t_final"] is not None and dyn["snapshot_taus"]:
            if dyn["snapshot_times"] is None:
                errors.append("dynamics.snapshot_taus: use snapshot_times together with t_final")
        J = cfg["wigner"]["J"]
        J = default_J(spec) if J is None else J
        if J > spec.D:
            errors.append(f"wigner.J: {J} exceeds the lattice half-size {spec.D}")
        if strict and not _commensurate(spec):
            errors.append("lattice: eps/(2h) is not an integer (strict mode)")

    if command == "kinetic":
        k = cfg["kinetic"]
        if k["initial"] == "wigner":
            if spec is None:
                pass
            elif spec.lam == 0.0 and lat["eps_override"] is None:
                errors.append("kinetic.initial: wigner data needs a lattice epsilon")
            else:
                if k["n_k"] not in (None, spec.N):
                    errors.append(f"kinetic.n_k: must equal the lattice size {spec.N} for wigner data")
                J = cfg["wigner"]["J"]
                J = default_J(spec) if J is None else J
                if k["n_omega"] not in (None, 2 * J + 1):
                    errors.append(f"kinetic.n_omega: must equal 2J+1 = {2 * J + 1} for wigner data")
                if J > spec.D:
                    errors.append(f"wigner.J: {J} exceeds the lattice half-size {spec.D}")
        if k["n_k"] is not None and k["n_k"] % 2 == 0:
            errors.append("kinetic.n_k: must be odd")

    if command == "compare" and spec is not None:
        cmp_ = cfg["compare"]
        lams = cmp_["lambdas"]
        if list(lams) != sorted(lams, reverse=True) or len(set(lams)) != len(lams):
            errors.append("compare.lambdas: must be strictly decreasing")
        lo, hi = cmp_["fit_bounds"]
        if not lo < hi:
            errors.append("compare.fit_bounds: lower bound must be below the upper bound")
        for lam in lams:
            try:
                s = lattice_spec(lat, lam)
            except LatticeError as exc:
                errors.append(f"compare.lambdas: {exc}")
                continue
            if default_J(s) > s.D:
                errors.append(f"compare.lambdas: lambda={lam} needs more shifts than the lattice holds")
            if strict and not _commensurate(s):
                errors.append(f"compare.lambdas: eps/(2h) is not an integer for lambda={lam} (strict mode)")

    if command == "diagnose":
        c = cfg["diagnostics"]["cut"]
        try:
            dg.CutoffParams(lam=c["lam"], d=c["d"], eth=c["eth"], eth1=c["eth1"], eth2=c["eth2"],
                            theta_r=lat["theta_r"], strict=strict)
        except dg.ParameterError as exc:
            errors.append(f"diagnostics.cut: {exc}")
        if len(c["t0"]) == 1 or len(cfg["diagnostics"]["ker"]["t0"]) == 1:
            errors.append("diagnostics: a decay fit needs at least two t0 values (or none)")

    if command == "noise-check":
        nc = cfg["noise_check"]
        dmp = nc["damping"]
        if len(dmp["mode"]) != nc["d"]:
            errors.append(f"noise_check.damping.mode: must have {nc['d']} entries")
        elif dmp["mode"][0] == 0 or any(abs(x) > dmp["D"] for x in dmp["mode"]):
            errors.append("noise_check.damping.mode: must be an active mode of the lattice")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> dict:
    """Read a YAML or JSON configuration file."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text) or {}
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError([f"{path}: cannot parse ({exc})"]) from None


# ---------------------------------------------------------------------------
# outputs


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


class Outputs:
    """Single writer for one command run; every table gets a JSON sidecar."""

    def __init__(self, root, command: str, cfg: dict):
        self.root = Path(root)
        self.command = command
        self.cfg = cfg
        self.files = []

    def meta(self, extra: dict | None = None) -> dict:
        m = {"command": self.command, "config": self.cfg, "seed": self.cfg["seed"],
             "version": __version__}
        if extra:
            m.update(extra)
        return m

    def _sidecar(self, path: Path, extra: dict | None):
        side = path.with_suffix(path.suffix + ".meta.json")
        side.write_text(json.dumps(self.meta(extra), indent=2, sort_keys=True, default=_jsonable))

    def table(self, name: str, header, rows, extra: dict | None = None) -> Path:
        path = self.root / name
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for r in rows:
                wr.writerow([_cell(x) for x in r])
        self._sidecar(path, extra)
        self.files.append(name)
        return path

    def wigner(self, name: str, est, extra: dict | None = None) -> Path:
        path = self.root / name
        write_wigner_csv(path, est, self.meta(extra))
        self.files.append(name)
        return path

    def document(self, name: str, obj) -> Path:
        path = self.root / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
        self.files.append(name)
        return path


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


# ---------------------------------------------------------------------------
# shared pieces


def _profile(cfg):
    return make_profile(cfg["ensemble"]["profile"], cfg["lattice"]["d"], **cfg["ensemble"]["params"])


def _battery(cfg, d):
    center = list(cfg["wigner"]["battery_center"]) + [0.0] * d
    return default_battery(tuple(center[:d]), cfg["wigner"]["k_width"])


def kinetic_grid_for(spec: LatticeSpec, J: int) -> kin.KineticGrid:
    """Kinetic grid whose k-grid is the lattice and whose dual Omega grid is the shift grid."""
    return kin.KineticGrid(spec.d, spec.N, 2 * J + 1, spec.epsilon / (2.0 * spec.h))


def _shift_rows(grid: kin.KineticGrid, labels: np.ndarray) -> np.ndarray:
    """Row of ``labels`` for every entry of ``grid.mho_labels``."""
    where = {tuple(int(x) for x in m): i for i, m in enumerate(labels)}
    return np.array([where[tuple(int(x) for x in p)] for p in grid.mho_labels])


def wigner_to_kinetic(est, grid: kin.KineticGrid) -> np.ndarray:
    """Kinetic phase-space density whose Omega transform is the Wigner estimate.

    The lattice and the kinetic k-grid share FFT order, so a lattice array
    flattens directly onto the kinetic k index.
    """
    rows = _shift_rows(grid, est.labels)
    fo = np.where(est.valid, est.mean, 0.0)[rows].reshape(grid.nomega_total, grid.nk_total)
    return kin.inverse_fourier_in_omega(fo, grid).real.copy()


def kinetic_pairings(fo: np.ndarray, est, grid: kin.KineticGrid, sampled_tests) -> np.ndarray:
    """Pair an Omega-transformed kinetic state with tests sampled on the Wigner grid."""
    rows = _shift_rows(grid, est.labels)
    arr = np.zeros(est.mean.shape, dtype=complex)
    arr[rows] = fo.reshape((len(rows),) + est.spec.shape)
    return np.array([est.weight * np.sum(np.where(est.valid, arr * np.conj(g), 0.0))
                     for g in sampled_tests])


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict, out: Outputs, threads: int = 1) -> list:
    spec = lattice_spec(cfg["lattice"])
    model = build_noise(spec)
    cov = build_covariance(_profile(cfg), spec, model)
    dyn = cfg["dynamics"]
    if dyn["tau_final"] is not None:
        scale = spec.lam ** -2
        t_final = dyn["tau_final"] * scale
        snaps = [x * scale for x in dyn["snapshot_taus"] or []]
    else:
        scale = None
        t_final = dyn["t_final"]
        snaps = list(dyn["snapshot_times"] or [])
    config = IntegratorConfig(t_final=t_final, dt=dyn["dt"], snapshot_times=[0.0] + snaps)
    n = cfg["ensemble"]["n_traj"]
    res = run_ensemble(FieldSampler(cov), config, spec, model, seed=cfg["seed"], n_traj=n,
                       threads=threads)
    times = sorted(res)
    J = cfg["wigner"]["J"]
    J = default_J(spec) if J is None else J
    labels = shift_labels(spec, J)
    tests = _battery(cfg, spec.d)
    sampled = [sample_test_function(G, spec, labels) for G in tests]

    act0 = weighted_action(res[0.0], spec)
    act_rows, bat_rows, spec_rows = [], [], []
    checks = []
    worst = 0.0
    for i, t in enumerate(times):
        a = res[t]
        tau = t / scale if scale else None
        act = weighted_action(a, spec)
        diff = act - act0
        m0 = float(act0.mean())
        dm, dse = float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n))
        rel = abs(dm) / m0 if m0 > 0 else 0.0
        act_rows.append([i, tau, t, float(act.mean()), float(act.std(ddof=1) / math.sqrt(n)), dm, dse, rel])
        if abs(dm) > max(dyn["action_tol"] * m0, 3.0 * dse):
            worst = max(worst, rel)
        mean, err = mean_and_stderr(trajectory_pairings(a, spec, labels, sampled))
        for j, (mv, ev) in enumerate(zip(mean, err)):
            bat_rows.append([i, tau, t, j, mv.real, mv.imag, ev])
        p2 = np.abs(a) ** 2
        pm = p2.mean(axis=0).reshape(-1)
        ps = (p2.std(axis=0, ddof=1) / math.sqrt(n)).reshape(-1)
        for lab, v, e in zip(spec.j_grid.reshape(-1, spec.d), pm, ps):
            spec_rows.append([i, t, *map(int, lab), v, e])
        if cfg["wigner"]["write_fields"]:
            out.wigner(f"wigner_{i:03d}.csv", estimate_wigner(a, spec, labels, t),
                       {"snapshot": i, "t": t, "tau": tau})
    out.table("action.csv", ["snapshot", "tau", "t", "mean", "stderr", "drift", "drift_stderr",
                             "relative_drift"], act_rows,
              {"weight": "abs_k1", "note": "drift is the paired mean difference to t = 0"})
    out.table("battery.csv", ["snapshot", "tau", "t", "test", "re", "im", "stderr"], bat_rows,
              {"tests": [vars(G) for G in tests]})
    d = spec.d
    out.table("spectrum.csv", ["snapshot", "t"] + [f"j{i + 1}" for i in range(d)]
              + ["mean_abs2", "stderr"], spec_rows)
    if dyn["check_action"]:
        ok = worst == 0.0
        last = act_rows[-1]
        checks.append(Check("weighted action conserved", ok,
                            f"final relative drift {last[7]:.3e} (stderr {last[6]:.3e}), "
                            f"tolerance max({dyn['action_tol']:g}, 3 SE)"))
    return checks


def _kinetic_initial(cfg: dict, spec: LatticeSpec | None):
    k = cfg["kinetic"]
    if k["initial"] == "wigner":
        J = cfg["wigner"]["J"]
        J = default_J(spec) if J is None else J
        cov = build_covariance(_profile(cfg), spec)
        est = exact_wigner_estimate(cov, shift_labels(spec, J))
        grid = kinetic_grid_for(spec, J)
        return grid, wigner_to_kinetic(est, grid)
    d = cfg["lattice"]["d"]
    n_k = k["n_k"] if k["n_k"] is not None else (spec.N if spec is not None else 33)
    n_om = k["n_omega"] or 1
    L = k["L"] if k["L"] is not None else (1.0 if n_om == 1 else spec.epsilon / (2.0 * spec.h))
    grid = kin.KineticGrid(d, n_k, n_om, L)
    if k["initial"] == "zero":
        return grid, np.zeros((grid.nomega_total, grid.nk_total))
    F = _profile(cfg).density
    s = np.sign(grid.k_labels[:, 0])[:, None]
    fk = np.where(s[:, 0] != 0, 2.0 ** -d * F(s * grid.k), 0.0)
    return grid, np.tile(fk, (grid.nomega_total, 1))


def cmd_kinetic(cfg: dict, out: Outputs, threads: int = 1) -> list:
    k = cfg["kinetic"]
    try:
        spec = lattice_spec(cfg["lattice"])
    except LatticeError:
        spec = None
    grid, f0 = _kinetic_initial(cfg, spec)
    even = bool(np.array_equal(f0, f0[:, grid.negate_k()]))
    table = kin.build_resonance_table(grid, k["ell"], half=even)
    steps = int(math.ceil(k["tau_final"] / k["dt"] - 1e-12)) if k["tau_final"] > 0 else 0
    dt = k["tau_final"] / steps if steps else 0.0
    state = kin.KineticState(grid, f0, 0.0, k["ell"])
    final, hist = kin.evolve(state, table, dt, steps, collision_scale=k["collision_scale"],
                             transport=k["transport"] != "off", collide=k["collide"],
                             method=k["transport"] if k["transport"] != "off" else "spectral",
                             record_every=k["record_every"])
    if not hist:
        hist = [state]
    rep = kin.conservation_report(hist)
    d = grid.d
    rows = [[t, m, *p, e] for t, m, p, e in zip(rep.tau, rep.mass, rep.momentum, rep.energy)]
    drifts = rep.drifts()
    out.table("conservation.csv", ["tau", "mass"] + [f"momentum{i + 1}" for i in range(d)] + ["energy"],
              rows, {"drifts": drifts, "table_entries": table.nnz, "half_table": even})
    Om = grid.omega_points
    lab = grid.k_labels
    srows = []
    for a in range(grid.nomega_total):
        for b in range(grid.nk_total):
            srows.append([*Om[a], *map(int, lab[b]), final.f[a, b]])
    out.table("kinetic_final.csv", [f"Omega{i + 1}" for i in range(d)] + [f"j{i + 1}" for i in range(d)]
              + ["f"], srows, {"tau": final.tau, "n_k": grid.n_k, "n_omega": grid.n_omega, "L": grid.L})
    checks = [Check("kinetic state finite", bool(np.all(np.isfinite(final.f))), f"tau = {final.tau:g}")]
    rate = drifts["momentum"] / final.tau if final.tau > 0 else drifts["momentum"]
    checks.append(Check("momentum conserved", rate <= k["momentum_tol"],
                        f"relative drift per unit tau {rate:.3e} (tolerance {k['momentum_tol']:g})"))
    return checks


@dataclass
class _CompareCase:
    lam: float
    estimate: np.ndarray
    stderr: np.ndarray
    kinetic: callable


def _compare_case(cfg: dict, lam: float, threads: int) -> _CompareCase:
    cmp_ = cfg["compare"]
    k = cfg["kinetic"]
    spec = lattice_spec(cfg["lattice"], lam)
    model = build_noise(spec)
    cov = build_covariance(_profile(cfg), spec, model)
    J = default_J(spec)
    labels = shift_labels(spec, J)
    ex = exact_wigner_estimate(cov, labels)
    grid = kinetic_grid_for(spec, J)
    table = kin.build_resonance_table(grid, k["ell"], half=True)
    state = kin.KineticState(grid, wigner_to_kinetic(ex, grid), 0.0, k["ell"])
    sampled = [sample_test_function(G, spec, labels) for G in _battery(cfg, spec.d)]

    tau = cmp_["tau"]
    t = tau / lam**2
    n = cfg["ensemble"]["n_traj"]
    dyn_dt = cfg["dynamics"]["dt"]
    config = IntegratorConfig(t_final=t, dt=dyn_dt if dyn_dt is not None else IntegratorConfig(t).resolved_dt(spec))
    sampler = FieldSampler(cov)
    at = run_ensemble(sampler, config, spec, model, seed=cfg["seed"], n_traj=n, threads=threads)[t]
    per = trajectory_pairings(at, spec, labels, sampled)
    if cmp_["control_variate"]:
        # same initial fields and Brownian paths without the nonlinearity; its
        # mean is the exact free flow, so subtracting it leaves the estimator unbiased
        lin = LatticeSpec(d=spec.d, D=spec.D, lam=0.0, box_constant=spec.box_constant,
                          eps_override=spec.epsilon, c_r_override=spec.c_r)
        al = run_ensemble(sampler, config, lin, build_noise(lin), seed=cfg["seed"], n_traj=n,
                          threads=threads)[t]
        per = per - trajectory_pairings(al, spec, labels, sampled)
        free = free_flow(ex, t)
        offset = np.array([free.weight * np.sum(np.where(free.valid, free.mean * np.conj(g), 0.0))
                           for g in sampled])
    else:
        offset = 0.0
    mean, err = mean_and_stderr(per)
    steps = int(math.ceil(tau / k["dt"] - 1e-12)) if tau > 0 else 0
    dt = tau / steps if steps else 0.0
    method = k["transport"] if k["transport"] != "off" else "spectral"
    cache = {}

    def kinetic_at(scale: float) -> np.ndarray:
        if scale not in cache:
            fin = kin.evolve(state, table, dt, steps, collision_scale=scale,
                             transport=k["transport"] != "off", method=method)
            cache[scale] = kinetic_pairings(kin.fourier_in_omega(fin), ex, grid, sampled)
        return cache[scale]

    return _CompareCase(lam, mean + offset, err, kinetic_at)


def cmd_compare(cfg: dict, out: Outputs, threads: int = 1) -> list:
    cmp_ = cfg["compare"]
    rows, disc_rows = [], []
    fit = {"collision_scale": cmp_["collision_scale"], "fitted": cmp_["collision_scale"] is None}
    scale = cmp_["collision_scale"]
    discs = []
    for lam in cmp_["lambdas"]:
        case = _compare_case(cfg, lam, threads)
        if scale is None:
            lo, hi = cmp_["fit_bounds"]

            def loss(s):
                return float(np.sum(np.abs(case.estimate - case.kinetic(round(float(s), 6)))))

            r = minimize_scalar(loss, bounds=(lo, hi), method="bounded",
                                options={"xatol": cmp_["fit_xtol"]})
            scale = round(float(r.x), 6)
            fit.update(collision_scale=scale, fit_lambda=lam, evaluations=int(r.nfev), loss=float(r.fun))
        kp = case.kinetic(scale)
        gap = np.abs(case.estimate - kp)
        disc = float(gap.sum())
        discs.append(disc)
        se_sum = float(case.stderr.sum())
        disc_rows.append([lam, disc, se_sum, disc / float(np.abs(kp).sum())])
        for j in range(len(kp)):
            rows.append([lam, j, case.estimate[j].real, case.estimate[j].imag, case.stderr[j],
                         kp[j].real, kp[j].imag, gap[j]])
    out.table("compare.csv", ["lambda", "test", "mc_re", "mc_im", "mc_stderr", "kinetic_re", "kinetic_im",
                              "abs_diff"], rows, {"collision_scale": scale})
    out.table("discrepancy.csv", ["lambda", "discrepancy", "stderr_sum", "relative"], disc_rows,
              {"collision_scale": scale})
    out.document("fit.json", fit)
    ok = all(b <= a for a, b in zip(discs, discs[1:]))
    detail = ", ".join(f"lambda={lam:g}: {v:.3e}" for lam, v in zip(cmp_["lambdas"], discs))
    return [Check("discrepancy non-increasing as lambda decreases", ok, detail)]


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_diagnose(cfg: dict, out: Outputs, threads: int = 1) -> list:
    dcfg = cfg["diagnostics"]
    checks = []
    fits = {}

    pl = dcfg["plancherel"]
    rng = np.random.default_rng(cfg["seed"])
    d = pl["d"]
    target = (2 * np.pi) ** (d / 2.0)
    prow, worst = [], 0.0
    for i in range(pl["samples"]):
        t = rng.uniform(-pl["t_max"], pl["t_max"], 3)
        V, W = rng.uniform(-np.pi, np.pi, (2, d))
        tab = dg.oscillatory_table(*t, V=V, W=W, d=d)
        orth = dg.lp_norm(dg.orthonormal_coefficients(tab.values, d), 2)
        raw = dg.truncated_lp(tab, 2)
        worst = max(worst, abs(orth - target))
        prow.append([i, *t, *V, *W, orth, raw, dg.l2_tail(tab, (2 * np.pi) ** (2 * d)),
                     tab.doubling_change, tab.radius])
    if pl["samples"]:
        out.table("plancherel.csv", ["sample", "t0", "t1", "t2"] + [f"V{i + 1}" for i in range(d)]
                  + [f"W{i + 1}" for i in range(d)] + ["l2_orthonormal", "l2_raw", "raw_tail",
                                                       "doubling_change", "radius"], prow,
                  {"target_orthonormal": target, "target_raw": (2 * np.pi) ** d})
        checks.append(Check("l2 norm of the dispersive functional", worst <= pl["tol"],
                            f"largest deviation from (2 pi)^(d/2): {worst:.3e} (tolerance {pl['tol']:g})"))

    c = dcfg["cut"]
    params = dg.CutoffParams(lam=c["lam"], d=c["d"], eth=c["eth"], eth1=c["eth1"], eth2=c["eth2"],
                             theta_r=cfg["lattice"]["theta_r"], strict=cfg["strict"])
    weight = dg.xi1_cutoff(params)
    norm_fn = dg.separable_lp_norm if c["d"] <= 3 else dg.quartic_l4_norm
    if c["t0"]:
        res = _map(lambda t0: norm_fn(t0, c["d"], weight), list(c["t0"]), threads)
        out.table("cut_norms.csv", ["t0", "p", "norm", "resolution", "n_max"],
                  [[r.t0, r.p, r.norm, r.resolution, r.n_max] for r in res],
                  {"d": c["d"], "n_big": params.n_big, "threshold": params.threshold_a,
                   "cutoff_violations": params.violations()})
        fit = dg.fit_decay([r.t0 for r in res], [r.norm for r in res], dg.cut_l4_exponent(c["d"]), c["slack"])
        fits["cut"] = _fit_record(fit, {"d": c["d"], "cutoff_violations": params.violations()})
        checks.append(Check("l4 decay of the cut functional", fit.passed, _fit_detail(fit)))

    kcfg = dcfg["ker"]
    if kcfg["t0"]:
        kw = dg.sin_power_kernel(kcfg["n"])
        res = _map(lambda t0: dg.quartic_l4_norm(t0, kcfg["d"], kw), list(kcfg["t0"]), threads)
        out.table("ker_norms.csv", ["t0", "p", "norm", "resolution", "n_max"],
                  [[r.t0, r.p, r.norm, r.resolution, r.n_max] for r in res],
                  {"d": kcfg["d"], "n": kcfg["n"]})
        fit = dg.fit_decay([r.t0 for r in res], [r.norm for r in res], dg.ker_l4_exponent(kcfg["n"]),
                           kcfg["slack"])
        admissible = dg.kernel_admissible(kcfg["n"], kcfg["d"])
        fits["ker"] = _fit_record(fit, {"d": kcfg["d"], "n": kcfg["n"], "admissible": admissible})
        if admissible:
            checks.append(Check("l4 decay of the kernel functional", fit.passed, _fit_detail(fit)))
    out.document("fits.json", fits)
    return checks


def _fit_record(fit: dg.DecayFit, extra: dict) -> dict:
    lo, hi = fit.confidence_interval()
    rec = {"t0": fit.t0, "norms": fit.norms, "slope": fit.slope, "intercept": fit.intercept,
           "slope_stderr": fit.slope_stderr, "ci95": [lo, hi], "target": fit.target,
           "slack": fit.slack, "passed": fit.passed}
    rec.update(extra)
    return rec


def _fit_detail(fit: dg.DecayFit) -> str:
    lo, hi = fit.confidence_interval()
    return (f"slope {fit.slope:.3f} (95% CI {lo:.3f} to {hi:.3f}), "
            f"bound {fit.target:.3f} + {fit.slack:g}")


def cmd_noise_check(cfg: dict, out: Outputs, threads: int = 1) -> list:
    nc = cfg["noise_check"]
    spec = LatticeSpec(d=nc["d"], D=nc["D"], lam=nc["lambda"], theta_r=cfg["lattice"]["theta_r"],
                       frak_c_r=cfg["lattice"]["frak_c_r"], box_constant=cfg["lattice"]["box_constant"])
    model = build_noise(spec)
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    agree = sign_ok = True
    for i in range(nc["monomials"]):
        paired = bool(rng.random() < 0.25)
        V1, V2 = random_monomial(model, rng, nc["n_modes"], paired)
        ch = model.charges(V1, V2)
        coef = noise_coefficient(ch)
        gen = generator_action(V1, V2, model)
        agree &= gen == coef
        sign_ok &= (coef == 0.0) == ch.is_paired() and (coef == 0.0 or coef <= -2.0)
        rows.append([i, int(paired), int(V1.sum()), int(V2.sum()), int(np.count_nonzero(ch.charges)),
                     coef, gen, int(gen == coef)])
    out.table("monomials.csv", ["monomial", "paired", "degree_plain", "degree_conj", "charged_boxes",
                                "coefficient", "generator", "agree"], rows)
    checks = [Check("generator matches box charges", bool(agree), f"{len(rows)} monomials"),
              Check("coefficient sign structure", bool(sign_ok), "zero iff all charges vanish, else <= -2")]

    dm = nc["damping"]
    lin = LatticeSpec(d=nc["d"], D=dm["D"], lam=0.0, eps_override=dm["epsilon"], c_r_override=dm["c_r"],
                      box_constant=cfg["lattice"]["box_constant"])
    lmodel = build_noise(lin)
    idx = lin.index_of(dm["mode"])
    nidx = lin.index_of([-x for x in dm["mode"]])
    a0 = np.zeros(lin.shape, dtype=complex)
    a0[idx] = 1.0
    a0[nidx] = 1.0
    T = dm["t_final"]
    res = run_ensemble(lambda _i: a0, IntegratorConfig(t_final=T, dt=dm["dt"]), lin, lmodel,
                       seed=cfg["seed"], n_traj=dm["n_traj"], threads=threads)[T]
    z = (res[(slice(None),) + idx] * np.exp(-1j * lin.omega[idx] * T)).real
    m = float(z.mean())
    se = float(z.std(ddof=1) / math.sqrt(len(z)))
    V1 = np.zeros(lin.shape, dtype=np.int64)
    V1[idx] = 1
    C = noise_coefficient(lmodel.charges(V1, np.zeros_like(V1)))
    predicted = dm["c_r"] * abs(C) / 2.0
    if m > 0:
        rate = -math.log(m) / T
        rate_se = se / (m * T)
        ok = abs(rate - predicted) <= dm["sigmas"] * rate_se
    else:
        rate, rate_se, ok = math.inf, math.inf, False
    out.table("damping.csv", ["t", "mean_re", "stderr", "rate", "rate_stderr", "predicted", "generator"],
              [[T, m, se, rate, rate_se, predicted, C]], {"mode": dm["mode"], "n_traj": dm["n_traj"]})
    checks.append(Check("single-mode damping rate", ok,
                        f"measured {rate:.4f} +- {rate_se:.4f}, predicted {predicted:.4f}"))
    return checks


COMMANDS = {
    "simulate": cmd_simulate,
    "kinetic": cmd_kinetic,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
    "noise-check": cmd_noise_check,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zkwave", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "Monte-Carlo ensemble of the stochastic lattice equation with Wigner estimates",
        "kinetic": "solve the resonance-broadened kinetic equation and track conservation",
        "compare": "pair Monte-Carlo Wigner estimates and kinetic solutions across lambda",
        "diagnose": "dispersive-functional norms and decay fits",
        "noise-check": "noise generator cross-check and single-mode damping rate",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="YAML or JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default ./zkwave-<command>)")
    return parser


def run(command: str, raw: dict, out_dir, threads: int = 1, seed: int | None = None,
        stream=None) -> int:
    """Validate, execute and report one command; returns the exit status."""
    stream = sys.stdout if stream is None else stream
    raw = copy.deepcopy(raw) if raw is not None else {}
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = validate(raw, command)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = Outputs(out_dir, command, cfg)
    try:
        checks = COMMANDS[command](cfg, out, max(1, int(threads)))
    except Exception as exc:  # noqa: BLE001 - reported through the manifest
        manifest = {"command": command, "error": f"{type(exc).__name__}: {exc}",
                    "files_written": list(out.files)}
        (out_dir / "errors.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        print(f"error: {manifest['error']}", file=sys.stderr)
        return 2
    out.table("checks.csv", ["check", "passed", "detail"], [[c.name, c.passed, c.detail] for c in checks])
    for c in checks:
        print(c.line(), file=stream)
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = {"config_version": CONFIG_VERSION}
    if args.config is not None:
        try:
            raw = load_config(args.config)
        except FileNotFoundError:
            print(f"config error: {args.config}: no such file", file=sys.stderr)
            return 2
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    out_dir = args.out if args.out is not None else Path(f"zkwave-{args.command}")
    return run(args.command, raw, out_dir, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
