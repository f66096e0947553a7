import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from scatterlab import cli
from scatterlab.config import ConfigError, build_config, load_config

SMALL = {
    "couplings": {"g_x": 1.25, "g_z": 0.15},
    "lattice": {"L": 66},
    "wavepackets": {"left": {"k_i_over_pi": 0.36, "n0": 11}},
    "evolution": {"dt": 0.0625, "t_end": 2, "stages": [{"t_from": 0, "max_bond": 24, "cutoff": 1e-9}]},
    "ed": {"L_list": [8, 9, 10]},
}


def write(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def run(tmp_path, *args, data=SMALL):
    cfg = write(tmp_path, data)
    return cli.main([args[0], cfg, "--output-dir", str(tmp_path / "out"), *args[1:]])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_defaults_fill_in():
    cfg = build_config({"couplings": {"g_x": 1.25, "g_z": 0.15}, "lattice": {"L": 20}})
    assert cfg.left is None and cfg.schedule is None
    assert cfg.ed_L_list == list(range(10, 19))


def test_packets_and_schedule():
    cfg = build_config(SMALL)
    assert cfg.left.k_i == pytest.approx(0.36 * np.pi)
    assert cfg.right.n0 == 66 - 1 - 11 and cfg.right.k_i < 0
    assert cfg.schedule.snapshot_times == [0.0, 1.0, 2.0]
    assert cfg.schedule.policy_at(1.0).max_bond == 24


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"couplings": None}, "couplings"),
        ({"lattice": {}}, "lattice.L"),
        ({"lattice": {"L": 2}}, "lattice.L"),
        ({"evolution": {"dt": 0.1, "t_end": 0.25}}, "evolution"),
        ({"evolution": {"t_end": 1, "dt": -1}}, "evolution.dt"),
        ({"wavepackets": {"left": {"k_i_over_pi": 0.36, "n0": 3}}}, "wavepackets.left.n0"),
        ({"wavepackets": {"left": {"k_i_over_pi": 0.36, "n0": 25}}}, "wavepackets"),
        ({"ed": {"L_list": [10, 22]}}, "ed.L_list"),
        ({"isolation": {"n_l": 40, "n_r": 20}}, "isolation"),
        ({"isolation": {"n_l": 100}}, "isolation.n_l"),
        ({"bogus": 1}, ""),
    ],
)
def test_validation_names_the_field(patch, field):
    data = json.loads(json.dumps(SMALL))
    for key, value in patch.items():
        if value is None:
            data.pop(key)
        else:
            data[key] = value
    with pytest.raises(ConfigError) as info:
        build_config(data)
    assert info.value.path == field


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("couplings: [1, 2")
    with pytest.raises(ConfigError):
        load_config(bad)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def test_validate_command(tmp_path, capsys):
    assert run(tmp_path, "validate") == cli.EXIT_OK
    data = dict(SMALL)
    data.pop("couplings")
    assert run(tmp_path, "validate", data=data) == cli.EXIT_VALIDATION
    assert "couplings" in capsys.readouterr().err


def test_free_fermion_dispersion_command(tmp_path, capsys):
    data = {"couplings": {"g_x": 1.25, "g_z": 0.0}, "lattice": {"L": 20}, "ed": {"L_list": [10, 12], "bands": 1}}
    assert run(tmp_path, "dispersion", data=data) == cli.EXIT_OK
    assert "m1=0.5000" in capsys.readouterr().out
    summary = json.loads((tmp_path / "out" / "dispersion.json").read_text())["summary"]
    assert summary["m1"] == pytest.approx(0.5, abs=1e-8)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    codes = {}
    for cmd in ("vacuum", "scatter", "dispersion", "isolate"):
        codes[cmd] = run(tmp, cmd)
    return tmp, codes


def test_pipeline_exit_codes(pipeline_dir):
    _, codes = pipeline_dir
    assert codes["vacuum"] == codes["scatter"] == codes["dispersion"] == cli.EXIT_OK
    # before the collision every channel is elastic; classification of the
    # 11 component may still be rejected on the tiny ED table
    assert codes["isolate"] in (cli.EXIT_OK, cli.EXIT_HEURISTIC)


def test_pipeline_outputs_pass_the_checker(pipeline_dir):
    tmp, _ = pipeline_dir
    out = tmp / "out"
    for name in ("vacuum.mps", "final_state.mps", "energy_density.csv", "diagnostics.jsonl", "scatter.json", "channels.json"):
        assert (out / name).exists(), name
    assert cli.check_outputs(out) == []
    assert run(tmp, "validate", "--outputs", str(out)) == cli.EXIT_OK


def test_scatter_summary_is_mirror_symmetric(pipeline_dir):
    tmp, _ = pipeline_dir
    summary = json.loads((tmp / "out" / "scatter.json").read_text())
    assert summary["mirror_asymmetry"] < 1e-4
    assert summary["norm_sq"] > 0.999
    lines = (tmp / "out" / "energy_density.csv").read_text().splitlines()
    assert lines[0] == "t,n,E_n"
    assert len(lines) == 1 + 3 * 66


def test_isolation_report_has_an_elastic_channel(pipeline_dir):
    tmp, _ = pipeline_dir
    report = json.loads((tmp / "out" / "channels.json").read_text())
    labels = [c["label"] for c in report["channels"]]
    assert labels[0] == "11"
    total = sum(c["probability"] for c in report["channels"]) + report["residual_probability"]
    assert total == pytest.approx(report["norm_sq"], abs=1e-6)


def test_checker_flags_bad_files(tmp_path):
    (tmp_path / "channels.json").write_text(json.dumps({"channels": []}))
    (tmp_path / "energy_density.csv").write_text("a,b\n")
    (tmp_path / "x.mps").write_bytes(b"garbage!" * 4)
    problems = cli.check_outputs(tmp_path)
    assert len(problems) == 3
    assert run(tmp_path, "validate", "--outputs", str(tmp_path)) == cli.EXIT_VALIDATION


def test_norm_floor_breach_exits_numerical(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data["evolution"] = {
        "dt": 0.0625,
        "t_end": 2,
        "norm_floor": 0.99999,
        "stages": [{"t_from": 0, "max_bond": 2, "cutoff": 0.0}],
    }
    assert run(tmp_path, "scatter", data=data) == cli.EXIT_NUMERICAL
    failure = json.loads((tmp_path / "out" / "scatter_failure.json").read_text())
    assert failure["norm_sq"] < 0.99999


def test_isolate_without_snapshot_is_a_validation_error(tmp_path):
    assert run(tmp_path, "isolate") == cli.EXIT_VALIDATION


def test_classify_needs_a_table(tmp_path):
    assert run(tmp_path, "classify") == cli.EXIT_VALIDATION


def test_sweep_command(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data["evolution"]["t_end"] = 1
    data["sweep"] = {"k_i_over_pi": [0.2, 0.36]}
    assert run(tmp_path, "sweep", data=data) == cli.EXIT_OK
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[0].split(",") == cli.CSV_HEADERS["sweep.csv"]
    assert len(lines) == 3
    assert (tmp_path / "out" / "k_0.2000" / "scatter.json").exists()


def test_output_dir_from_environment(tmp_path):
    cfg = write(tmp_path, {"couplings": {"g_x": 1.25, "g_z": 0.15}, "lattice": {"L": 12}})
    env_dir = tmp_path / "envout"
    proc = subprocess.run(
        [sys.executable, "-m", "scatterlab", "vacuum", cfg],
        env={**__import__("os").environ, "SCATTERLAB_OUTPUT_DIR": str(env_dir), "SCATTERLAB_THREADS": "1"},
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (env_dir / "vacuum.json").exists()


def test_runs_are_reproducible(tmp_path):
    data = {"couplings": {"g_x": 1.25, "g_z": 0.15}, "lattice": {"L": 16}}
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = write(tmp_path, data)
    assert cli.main(["vacuum", cfg, "--output-dir", str(a)]) == 0
    assert cli.main(["vacuum", cfg, "--output-dir", str(b)]) == 0
    assert (a / "vacuum.mps").read_bytes() == (b / "vacuum.mps").read_bytes()
