import csv
import json

import numpy as np
import pytest
import yaml

from zkwave import cli
from zkwave.lattice import LatticeSpec, dispersion


def small_sim(**dyn):
    cfg = {
        "config_version": 1, "seed": 5,
        "lattice": {"d": 2, "D": 6, "lambda": 0.5},
        "ensemble": {"n_traj": 12},
        "dynamics": {"tau_final": 0.04, "snapshot_taus": [0.02]},
    }
    cfg["dynamics"].update(dyn)
    return cfg


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_rerun_is_bit_identical(tmp_path):
    cfg = small_sim()
    assert cli.run("simulate", cfg, tmp_path / "a") == 0
    assert cli.run("simulate", cfg, tmp_path / "b") == 0
    assert cli.run("simulate", cfg, tmp_path / "c", threads=2) == 0
    a, b, c = (tree_bytes(tmp_path / x) for x in "abc")
    assert a == b == c
    assert "wigner_002.csv" in a and "action.csv.meta.json" in a


def test_seed_override_changes_outputs(tmp_path):
    cfg = small_sim()
    cli.run("simulate", cfg, tmp_path / "a")
    cli.run("simulate", cfg, tmp_path / "b", seed=6)
    assert (tmp_path / "a/battery.csv").read_bytes() != (tmp_path / "b/battery.csv").read_bytes()
    meta = json.loads((tmp_path / "b/battery.csv.meta.json").read_text())
    assert meta["seed"] == 6 and meta["config"]["seed"] == 6
    assert meta["version"] == cli.__version__ and meta["command"] == "simulate"


@pytest.mark.parametrize("patch, field", [
    ({"lattice": {"lambda": 1.5}}, "lattice.lambda"),
    ({"lattice": {"colour": 1}}, "lattice.colour"),
    ({"ensemble": {"n_traj": "many"}}, "ensemble.n_traj"),
    ({"ensemble": {"profile": "nope"}}, "ensemble.profile"),
    ({"dynamics": {"t_final": 2.0}}, "dynamics"),
    ({"wigner": {"J": 40}}, "wigner.J"),
    ({"config_version": 7}, "config_version"),
])
def test_rejected_config_writes_nothing(tmp_path, capsys, patch, field):
    cfg = small_sim()
    for key, val in patch.items():
        if isinstance(val, dict):
            cfg.setdefault(key, {}).update(val)
        else:
            cfg[key] = val
    out = tmp_path / "never"
    assert cli.run("simulate", cfg, out) == 2
    assert not out.exists()
    assert f"config error: {field}" in capsys.readouterr().err


def test_validation_reports_every_field():
    with pytest.raises(cli.ConfigError) as info:
        cli.validate({"config_version": 1, "seed": -1, "lattice": {"D": 0, "x": 1}}, "simulate")
    fields = {e.split(":")[0] for e in info.value.errors}
    assert {"seed", "lattice.D", "lattice.x"} <= fields


def test_strict_mode_enforces_commensurability():
    cfg = small_sim()
    cli.validate(cfg, "simulate")
    cfg["strict"] = True
    with pytest.raises(cli.ConfigError, match="not an integer"):
        cli.validate(cfg, "simulate")
    # D=6 gives N=13; lambda^2 = 2*2/13 makes eps/(2h) = 2
    cfg["lattice"]["lambda"] = float(np.sqrt(4.0 / 13.0))
    cli.validate(cfg, "simulate")


def test_strict_mode_enforces_cutoff_constraints():
    cfg = {"config_version": 1, "strict": True}
    with pytest.raises(cli.ConfigError, match="diagnostics.cut"):
        cli.validate(cfg, "diagnose")


def test_yaml_and_json_configs_agree(tmp_path):
    cfg = small_sim()
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(cfg))
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert cli.load_config(tmp_path / "c.yaml") == cli.load_config(tmp_path / "c.json") == cfg
    (tmp_path / "bad.yaml").write_text("lattice: [unclosed")
    with pytest.raises(cli.ConfigError):
        cli.load_config(tmp_path / "bad.yaml")


def test_main_entry_point(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(small_sim()))
    code = cli.main(["simulate", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o/checks.csv").exists()
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_kinetic_zero_state(tmp_path):
    cfg = {"config_version": 1, "lattice": {"d": 2, "D": 4, "lambda": 0.5},
           "kinetic": {"initial": "zero", "n_k": 9, "n_omega": 3, "L": 2.0, "dt": 0.05,
                       "tau_final": 0.2}}
    assert cli.run("kinetic", cfg, tmp_path) == 0
    rows = read_csv(tmp_path / "conservation.csv")
    assert len(rows) == 1 + 5
    assert all(float(x) == 0.0 for r in rows[1:] for x in r[1:])
    assert all(float(r[-1]) == 0.0 for r in read_csv(tmp_path / "kinetic_final.csv")[1:])
    meta = json.loads((tmp_path / "conservation.csv.meta.json").read_text())
    assert meta["drifts"] == {"mass": 0.0, "momentum": 0.0, "energy": 0.0}


def test_kinetic_wigner_initialisation_round_trips(tmp_path):
    from zkwave import kinetic as kin
    from zkwave.ensemble import build_covariance, make_profile
    from zkwave.wigner import exact_wigner_estimate, shift_labels

    spec = LatticeSpec(d=2, D=6, lam=0.5)
    J = cli.default_J(spec)
    labels = shift_labels(spec, J)
    est = exact_wigner_estimate(build_covariance(make_profile("gaussian_bump", 2), spec), labels)
    grid = cli.kinetic_grid_for(spec, J)
    f = cli.wigner_to_kinetic(est, grid)
    back = kin.fourier_in_omega(f, grid)
    rows = cli._shift_rows(grid, labels)
    want = np.where(est.valid, est.mean, 0.0)[rows].reshape(back.shape)
    # the exact Wigner data are Hermitian in the shift, so f is real
    assert np.allclose(back, want, rtol=0, atol=1e-12 * np.abs(want).max())


def test_linear_simulation_matches_free_flow(tmp_path):
    T = 3.0
    cfg = {"config_version": 1, "seed": 2,
           "lattice": {"d": 2, "D": 6, "lambda": 0.0, "eps_override": 0.3, "c_r_override": 0.0},
           "ensemble": {"n_traj": 4},
           "wigner": {"J": 1},
           "dynamics": {"tau_final": None, "snapshot_taus": None, "t_final": T, "snapshot_times": []}}
    assert cli.run("simulate", cfg, tmp_path) == 0
    spec = LatticeSpec(d=2, D=6, lam=0.0, eps_override=0.3)
    w0 = read_csv(tmp_path / "wigner_000.csv")[1:]
    w1 = read_csv(tmp_path / "wigner_001.csv")[1:]
    assert len(w0) == len(w1) > 0
    for r0, r1 in zip(w0, w1):
        m = np.array(r0[:2], dtype=int)
        j = np.array(r0[2:4], dtype=int)
        assert r1[:4] == r0[:4]
        ph = (dispersion((j - m) * spec.h) - dispersion((j + m) * spec.h)) * T
        z0 = complex(float(r0[4]), float(r0[5]))
        z1 = complex(float(r1[4]), float(r1[5]))
        assert abs(z1 - z0 * np.exp(1j * ph)) <= 1e-12 * max(abs(z0), 1e-300) + 1e-300


def small_compare(n_traj, tau=0.0):
    return {"config_version": 1, "seed": 1,
            "lattice": {"d": 2, "D": 6},
            "ensemble": {"n_traj": n_traj},
            "kinetic": {"ell": 0.05},
            "compare": {"lambdas": [0.5], "tau": tau, "control_variate": False,
                        "collision_scale": 1.0}}


def test_compare_at_time_zero_is_sampling_error(tmp_path):
    out = {}
    for n in (50, 800):
        assert cli.run("compare", small_compare(n), tmp_path / str(n)) == 0
        rows = read_csv(tmp_path / str(n) / "compare.csv")[1:]
        gap = np.array([float(r[7]) for r in rows])
        se = np.array([float(r[4]) for r in rows])
        assert np.all(gap <= 5 * se)
        out[n] = float(se.sum())
    assert out[800] / out[50] == pytest.approx(0.25, rel=0.25)


def test_compare_control_variate_is_exact_at_time_zero(tmp_path):
    cfg = small_compare(20)
    cfg["compare"]["control_variate"] = True
    assert cli.run("compare", cfg, tmp_path) == 0
    rows = read_csv(tmp_path / "discrepancy.csv")[1:]
    disc, se = float(rows[0][1]), float(rows[0][2])
    assert se == 0.0
    assert disc < 1e-12 * sum(abs(float(r[5])) for r in read_csv(tmp_path / "compare.csv")[1:])


def test_noise_check_passes_and_failed_check_sets_exit_one(tmp_path, capsys):
    cfg = {"config_version": 1, "noise_check": {"monomials": 50, "damping": {"n_traj": 200}}}
    assert cli.run("noise-check", cfg, tmp_path / "ok") == 0
    assert "PASS single-mode damping rate" in capsys.readouterr().out
    cfg["noise_check"]["damping"]["sigmas"] = 1e-9
    assert cli.run("noise-check", cfg, tmp_path / "bad") == 1
    rows = read_csv(tmp_path / "bad/checks.csv")
    assert rows[0] == ["check", "passed", "detail"]
    assert [r[1] for r in rows[1:]] == ["1", "1", "0"]


def test_runtime_failure_leaves_manifest(tmp_path, monkeypatch):
    def broken(cfg, out, threads=1):
        out.table("partial.csv", ["x"], [[1]])
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.COMMANDS, "kinetic", broken)
    assert cli.run("kinetic", {"config_version": 1}, tmp_path) == 2
    manifest = json.loads((tmp_path / "errors.json").read_text())
    assert manifest["error"] == "RuntimeError: boom"
    assert manifest["files_written"] == ["partial.csv"]
    assert (tmp_path / "partial.csv.meta.json").exists()
