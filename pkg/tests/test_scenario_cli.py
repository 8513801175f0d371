"""Config validation, CLI exit codes, bundle/report format contracts."""
import copy
import json
import os

import numpy as np
import pytest

from bohmsim.cli import main
from bohmsim.errors import ConfigurationError
from bohmsim.scenario import parse_scenario

BASE = {
    "grid": {"sites": 32, "spacing": 0.5, "origin": -8.0, "boundary": "periodic"},
    "potential": {"form": "constant", "value": 0.2},
    "initial": {"kind": "gaussian", "center": 0.5, "width": 1.0, "momentum": 0.3},
    "functional": {"half_width": 7.0, "points": 64, "center": [[0.5, 0.0]],
                   "width": 1.0, "convention": "exact", "frozen": True},
    "stepping": {"mode": "modified", "dt": 0.01, "t_end": 0.1, "output_stride": 5},
    "trajectories": {"count": 50, "seed": 7},
    "output": {"directory": "unused"},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def variant(**changes):
    doc = copy.deepcopy(BASE)
    for dotted, value in changes.items():
        section, key = dotted.split(".")
        if value is ...:
            doc[section].pop(key, None)
        else:
            doc[section][key] = value
    return doc


# ------------------------------------------------------------------ validation

def test_valid_config_parses():
    cfg = parse_scenario(copy.deepcopy(BASE))
    assert cfg.mode == "modified"
    assert cfg.n_steps == 10
    assert cfg.functional.qbar_mode == "anticommutator"


@pytest.mark.parametrize("doc,needle", [
    (variant(**{"grid.sites": 0}), "site"),
    (variant(**{"grid.spacing": -1.0}), "grid.spacing"),
    (variant(**{"grid.boundary": "open"}), "boundary"),
    (variant(**{"stepping.dt": 0.0}), "stepping.dt"),
    (variant(**{"stepping.mode": "psionic"}), "stepping.mode"),
    (variant(**{"stepping.output_stride": 0}), "output_stride"),
    (variant(**{"initial.kind": "soliton"}), "initial.kind"),
    (variant(**{"initial.width": -2.0}), "initial.width"),
    (variant(**{"functional.points": 7}), "even"),
    (variant(**{"functional.half_width": 0.5}), "half_width"),
    (variant(**{"functional.qbar_mode": "commutator"}), "qbar_mode"),
    (variant(**{"functional.convention": "mixed"}), "convention"),
    (variant(**{"trajectories.count": -3}), "count"),
    (variant(**{"trajectories.interpolation": "quintic"}), "interpolation"),
    (variant(**{"output.formats": ["parquet"]}), "format"),
])
def test_invalid_configs_rejected_with_named_field(doc, needle):
    with pytest.raises(ConfigurationError, match=needle):
        parse_scenario(doc)


def test_unknown_keys_rejected():
    doc = copy.deepcopy(BASE)
    doc["grid"]["spacinng"] = 0.5
    with pytest.raises(ConfigurationError, match="spacinng"):
        parse_scenario(doc)
    doc = copy.deepcopy(BASE)
    doc["extra_section"] = {}
    with pytest.raises(ConfigurationError, match="extra_section"):
        parse_scenario(doc)


def test_modified_mode_requires_functional_section():
    doc = copy.deepcopy(BASE)
    del doc["functional"]
    with pytest.raises(ConfigurationError, match="functional"):
        parse_scenario(doc)


def test_point_cap_checked_before_compute():
    doc = variant(**{"functional.sites": 3, "functional.points": 64,
                     "functional.center": [[0.0, 0.0]] * 3})
    doc["grid"]["sites"] = 3
    with pytest.raises(ConfigurationError, match="cap"):
        parse_scenario(doc)


def test_dt_guidance_enforced_with_escape_hatch():
    doc = variant(**{"functional.frozen": False, "stepping.dt": 0.05,
                     "potential.value": 1.0})
    with pytest.raises(ConfigurationError, match="guidance"):
        parse_scenario(doc)
    doc["stepping"]["allow_loose_dt"] = True
    parse_scenario(doc)  # acknowledged


def test_seed_and_out_overrides():
    cfg = parse_scenario(copy.deepcopy(BASE), out_override="/tmp/elsewhere",
                         seed_override=99)
    assert cfg.out_dir == "/tmp/elsewhere"
    assert cfg.traj_seed == 99


# ------------------------------------------------------------------------- CLI

def test_cli_exit_code_on_bad_config(tmp_path):
    path = write_config(tmp_path, variant(**{"stepping.dt": -1.0}))
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_cli_exit_code_on_unparseable_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_cli_simulate_report_roundtrip(tmp_path, capsys):
    path = write_config(tmp_path, copy.deepcopy(BASE))
    out = str(tmp_path / "run")
    assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
    for name in ("config.json", "metadata.json", "series.csv", "snapshots.csv",
                 "trajectories.csv"):
        assert os.path.exists(os.path.join(out, name))

    with open(os.path.join(out, "series.csv")) as fh:
        assert fh.readline().strip() == "t,norm,survival_norm,integrated_source"
    with open(os.path.join(out, "snapshots.csv")) as fh:
        assert fh.readline().strip() == "t,x,R,S,Q_std,Q_modified,q_density,source"

    rep = str(tmp_path / "rep")
    assert main(["report", "--bundle", out, "--out", rep, "--quiet"]) == 0
    with open(os.path.join(rep, "norm_series.csv")) as fh:
        assert fh.readline().strip() == "t,norm,survival_norm,integrated_source"
    with open(os.path.join(rep, "trajectories.csv")) as fh:
        assert fh.readline().strip() == "particle_id,t,x"
    snaps = [f for f in os.listdir(rep) if f.startswith("snapshot_t")]
    assert len(snaps) == 3  # strides at t=0, 0.05, 0.1
    with open(os.path.join(rep, snaps[0])) as fh:
        assert fh.readline().strip() == "x,R,S,Q_std,Q_modified,q_density,source"
    # figures rendered alongside the delimited output
    assert os.path.exists(os.path.join(rep, "norm_series.png"))
    assert os.path.exists(os.path.join(rep, "snapshot_final.png"))
    assert os.path.exists(os.path.join(rep, "trajectories.png"))


def test_cli_report_rejects_missing_bundle(tmp_path):
    assert main(["report", "--bundle", str(tmp_path / "nope"), "--quiet"]) == 2


def test_reproducibility_byte_identical(tmp_path):
    path = write_config(tmp_path, copy.deepcopy(BASE))
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["simulate", "--config", path, "--out", out1, "--quiet"]) == 0
    assert main(["simulate", "--config", path, "--out", out2, "--quiet"]) == 0
    for name in ("series.csv", "snapshots.csv", "trajectories.csv"):
        with open(os.path.join(out1, name), "rb") as fa, \
             open(os.path.join(out2, name), "rb") as fb:
            assert fa.read() == fb.read()


def test_compare_modes_zero_potential(tmp_path):
    doc = variant(**{"potential.form": "free"})
    doc["potential"].pop("value")
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "cmp")
    assert main(["compare-modes", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "compare_summary.json")) as fh:
        summary = json.load(fh)
    assert summary["max_l2_distance"] < 1e-12
    assert summary["trajectory_displacement_max"] < 1e-12
    with open(os.path.join(out, "compare_psi.csv")) as fh:
        assert fh.readline().strip() == "t,l2_distance"


def test_compare_modes_flat_functional(tmp_path):
    doc = variant(**{"functional.width": 40.0, "functional.half_width": 8.0,
                     "functional.points": 64})
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "cmpflat")
    assert main(["compare-modes", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "compare_summary.json")) as fh:
        summary = json.load(fh)
    # nearly flat functional magnitude: correction below the truncation floor
    assert summary["max_l2_distance"] < 1e-4


def test_cli_exit_code_on_runtime_out_of_box(tmp_path):
    # validation passes (the initial packet fits), but the strongly amplified
    # field leaves the configuration box mid-run: numerical failure, exit 3
    doc = {
        "grid": {"sites": 32, "spacing": 0.5, "origin": -8.0, "boundary": "periodic"},
        "potential": {"form": "constant", "value": 60.0},
        "initial": {"kind": "gaussian", "center": 0.0, "width": 1.0, "momentum": 0.0},
        "functional": {"half_width": 1.2, "points": 16, "center": [[0.0, 0.0]],
                       "width": 0.25, "convention": "exact", "frozen": True},
        "stepping": {"mode": "modified", "dt": 0.05, "t_end": 5.0,
                     "output_stride": 10, "allow_loose_dt": True},
        "output": {"directory": str(tmp_path / "blow")},
    }
    path = write_config(tmp_path, doc)
    assert main(["simulate", "--config", path, "--quiet"]) == 3


def test_dirichlet_barrier_scenario_end_to_end(tmp_path):
    doc = {
        "grid": {"sites": 129, "spacing": 0.125, "origin": -8.0,
                 "boundary": "dirichlet"},
        "potential": {"form": "barrier", "height": 3.0, "left": 0.0, "right": 1.0},
        "initial": {"kind": "gaussian", "center": -3.0, "width": 0.8, "momentum": 2.0},
        "stepping": {"mode": "standard", "dt": 0.005, "t_end": 1.5,
                     "output_stride": 30},
        "trajectories": {"count": 300, "seed": 5, "interpolation": "cubic"},
        "output": {"directory": str(tmp_path / "barrier")},
    }
    path = write_config(tmp_path, doc)
    assert main(["simulate", "--config", path, "--quiet"]) == 0
    with open(tmp_path / "barrier" / "series.csv") as fh:
        fh.readline()
        norms = [float(line.split(",")[1]) for line in fh]
    assert max(abs(n - norms[0]) for n in norms) < 1e-8
    assert main(["report", "--bundle", str(tmp_path / "barrier"), "--quiet"]) == 0


def test_standard_mode_bundle_norm_flat(tmp_path):
    doc = variant(**{"stepping.mode": "standard"})
    del doc["functional"]
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "std")
    assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "series.csv")) as fh:
        fh.readline()
        norms = [float(line.split(",")[1]) for line in fh]
    assert max(abs(n - norms[0]) for n in norms) < 1e-8


def test_zero_potential_modes_agree_in_bundles(tmp_path):
    base = variant(**{"potential.form": "free"})
    base["potential"].pop("value")
    std = copy.deepcopy(base)
    std["stepping"]["mode"] = "standard"
    del std["functional"]
    p_mod = write_config(tmp_path, base, "mod.json")
    p_std = write_config(tmp_path, std, "std.json")
    assert main(["simulate", "--config", p_mod, "--out", str(tmp_path / "m"), "--quiet"]) == 0
    assert main(["simulate", "--config", p_std, "--out", str(tmp_path / "s"), "--quiet"]) == 0

    def read_rs(out):
        rows = []
        with open(os.path.join(out, "snapshots.csv")) as fh:
            fh.readline()
            for line in fh:
                cells = line.strip().split(",")
                rows.append((float(cells[2]), float(cells[3])))  # R, S
        return rows

    for (r1, s1), (r2, s2) in zip(read_rs(tmp_path / "m"), read_rs(tmp_path / "s")):
        assert abs(r1 - r2) < 1e-12 and abs(s1 - s2) < 1e-12


def test_compare_modes_regression_displacement(tmp_path):
    # frozen from a resolution study: the mean trajectory displacement of this
    # scenario changes by <1% when grid, functional grid and dt are all refined
    doc = variant(**{"potential.value": 0.2, "functional.points": 128,
                     "stepping.dt": 0.005, "stepping.t_end": 0.5})
    doc["grid"] = {"sites": 64, "spacing": 0.25, "origin": -8.0,
                   "boundary": "periodic"}
    doc["initial"]["center"] = 1.0
    doc["initial"]["momentum"] = 0.5
    doc["trajectories"] = {"count": 512, "seed": 11}
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "cmpreg")
    assert main(["compare-modes", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "compare_summary.json")) as fh:
        summary = json.load(fh)
    assert summary["trajectory_displacement_mean"] == pytest.approx(2.9785e-3,
                                                                    abs=5e-5)
    assert summary["max_l2_distance"] > 1e-3  # the coupling visibly acts


def test_crank_nicolson_and_local_coupling_scenario(tmp_path):
    doc = variant(**{"functional.frozen": False, "functional.coupling": "local",
                     "potential.value": 0.05})
    doc["functional"]["dt"] = 0.002
    doc["stepping"]["functional_scheme"] = "crank_nicolson"
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "cn")
    assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "metadata.json")) as fh:
        meta = json.load(fh)
    assert 0.9 < meta["final_norm"] < 1.1


def test_time_dependent_tabulated_potential_scenario(tmp_path):
    ramp = [[0.0] * 32, [0.5] * 32]
    doc = variant(**{"stepping.mode": "standard"})
    del doc["functional"]
    doc["potential"] = {"form": "tabulated", "values": ramp, "times": [0.0, 0.1]}
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "ramp")
    assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "series.csv")) as fh:
        fh.readline()
        norms = [float(line.split(",")[1]) for line in fh]
    # a spatially uniform ramp only adds a global phase: norm stays flat
    assert max(abs(n - norms[0]) for n in norms) < 1e-8


def test_plane_wave_initial_scenario(tmp_path):
    doc = variant(**{"stepping.mode": "standard"})
    del doc["functional"]
    doc["initial"] = {"kind": "plane_wave", "mode_index": 2}
    doc["potential"] = {"form": "free"}
    path = write_config(tmp_path, doc)
    out = str(tmp_path / "pw")
    assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "snapshots.csv")) as fh:
        fh.readline()
        first = fh.readline().split(",")
    # plane wave amplitude is uniform: R = 1/sqrt(extent)
    assert abs(float(first[2]) - 1.0 / np.sqrt(16.0)) < 1e-12


def test_check_identities_cli(capsys):
    assert main(["check-identities"]) == 0
    out = capsys.readouterr().out
    assert "chain_rule" in out and "PASS" in out

    assert main(["check-identities", "--convention", "as-printed"]) == 0
    out = capsys.readouterr().out
    assert "INFO" in out and "factor ~2" in out

    assert main(["check-identities", "--qbar-mode", "direct"]) == 0
    out = capsys.readouterr().out
    assert "postulate is inactive" in out
