"""Command-line surface: artifacts, config validation, exit codes."""

import json
import os

import numpy as np
import pytest

from evtrap.cli import main


def _cfg(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _load(out, name):
    with open(os.path.join(out, name)) as f:
        return json.load(f)


# ------------------------------------------------------------- potential

def test_potential_default_run(tmp_path):
    out = str(tmp_path / "out")
    assert main(["potential", "--out", out]) == 0
    for name in ("potential.csv", "metrics.json", "manifest.json"):
        assert os.path.exists(os.path.join(out, name))
    m = _load(out, "metrics.json")
    assert m["no_minimum"] is False
    assert m["x_min_nm"] == pytest.approx(180.0, abs=0.1)
    assert m["freq_x_hz"] == pytest.approx(650e3, rel=1e-3)


def test_potential_without_minimum_still_succeeds(tmp_path):
    cfg = _cfg(tmp_path, "[potential]\nr_refl = 0.0\ncalibrate = false\n")
    out = str(tmp_path / "out")
    assert main(["potential", "--config", cfg, "--out", out]) == 0
    m = _load(out, "metrics.json")
    assert m["no_minimum"] is True
    assert os.path.exists(os.path.join(out, "potential.csv"))


def test_potential_wavelength_sweep(tmp_path):
    cfg = _cfg(tmp_path,
               "[potential]\nwavelength_sweep_nm = [820, 835, 850]\n")
    out = str(tmp_path / "out")
    assert main(["potential", "--config", cfg, "--out", out]) == 0
    rows = np.loadtxt(os.path.join(out, "wavelength_sweep.csv"),
                      delimiter=",", skiprows=1, ndmin=2)
    assert rows.shape[0] == 3
    # first trap site tracks the standing-wave phase with wavelength
    x_min = rows[:, 1]
    assert np.all(np.diff(x_min) > 0)


def test_svg_emission(tmp_path):
    out = str(tmp_path / "out")
    assert main(["potential", "--out", out, "--svg"]) == 0
    svg = os.path.join(out, "potential.svg")
    assert os.path.exists(svg)
    with open(svg) as f:
        assert "<svg" in f.read(200)


# -------------------------------------------------------------- manifest

def test_manifest_reproducible_and_untimed(tmp_path):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["potential", "--out", out_a, "--seed", "99"]) == 0
    assert main(["potential", "--out", out_b, "--seed", "99"]) == 0
    with open(os.path.join(out_a, "manifest.json"), "rb") as f:
        raw_a = f.read()
    with open(os.path.join(out_b, "manifest.json"), "rb") as f:
        raw_b = f.read()
    assert raw_a == raw_b
    man = json.loads(raw_a)
    assert man["seed"] == 99
    assert man["command"] == "potential"
    assert "potential.csv" in man["outputs"]
    assert not any("time" in k or "date" in k for k in man)


# ---------------------------------------------------- config validation

@pytest.mark.parametrize("text", [
    "[potential]\nbogus_key = 1\n",
    "[bogus_section]\nx = 1\n",
    "[atom]\nmass_amu = \"heavy\"\n",
    "[scan]\ndetuning_mhz = [0, 400]\n",
    "[scan]\ndetuning_mhz = [0, 400, 0]\n",
    "[potential\nr_refl = 0.5\n",
])
def test_config_errors_exit_2(tmp_path, text, capsys):
    cfg = _cfg(tmp_path, text)
    code = main(["scan", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    code = main(["potential", "--config", str(tmp_path / "nope.toml"),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_missing_input_file_exits_4(tmp_path):
    code = main(["tags", "g2", str(tmp_path / "nope.bin"),
                 "--out", str(tmp_path / "out")])
    assert code == 4


def test_degenerate_fit_exits_3(tmp_path):
    flat = tmp_path / "flat.csv"
    with open(flat, "w") as f:
        f.write("delta_hz,transmission\n")
        for d in np.linspace(-5e9, 5e9, 200):
            f.write(f"{d},1.0\n")
    code = main(["resonator", "fit", str(flat),
                 "--out", str(tmp_path / "out")])
    assert code == 3


def test_malformed_spectrum_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("delta_hz,transmission\n1.0\n")
    code = main(["resonator", "fit", str(bad),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_short_spectrum_exits_2(tmp_path):
    # well-formed but too few rows for the five-parameter model
    short = tmp_path / "short.csv"
    short.write_text("delta_hz,transmission\n" +
                     "".join(f"{d},0.5\n" for d in range(7)))
    code = main(["resonator", "fit", str(short),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_g2_on_empty_stream_exits_3(tmp_path):
    empty = tmp_path / "tags.bin"
    empty.write_bytes(b"")
    code = main(["tags", "g2", str(empty), "--out", str(tmp_path / "out")])
    assert code == 3


def test_g2_bad_bin_exits_2(tmp_path):
    cfg = _cfg(tmp_path, "[tags]\ntau_bin_ns = 7\n")
    tags = tmp_path / "tags.bin"
    tags.write_bytes(b"")
    code = main(["tags", "g2", str(tags), "--config", cfg,
                 "--out", str(tmp_path / "out")])
    assert code == 2


# ------------------------------------------------------------------ scan

SCAN_CFG = """
[scan]
detuning_mhz = [0, 400, 3]
saturation = [1e4, 1e6, 3]
n_traj = 20
pulse_ms = 0.1
"""


def test_scan_artifacts_and_thread_determinism(tmp_path):
    cfg = _cfg(tmp_path, SCAN_CFG)
    out1 = str(tmp_path / "t1")
    out8 = str(tmp_path / "t8")
    assert main(["scan", "--config", cfg, "--out", out1,
                 "--threads", "1"]) == 0
    assert main(["scan", "--config", cfg, "--out", out8,
                 "--threads", "8"]) == 0
    with open(os.path.join(out1, "phase.csv"), "rb") as f:
        csv1 = f.read()
    with open(os.path.join(out8, "phase.csv"), "rb") as f:
        csv8 = f.read()
    assert csv1 == csv8
    s = _load(out1, "summary.json")
    assert {"best_cell", "destroyed_cells", "refined_cells"} <= set(s)
    rows = np.loadtxt(os.path.join(out1, "phase.csv"), delimiter=",",
                      skiprows=1, ndmin=2)
    assert rows.shape[0] == 9


def test_scan_seed_changes_output(tmp_path):
    cfg = _cfg(tmp_path, SCAN_CFG)
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["scan", "--config", cfg, "--out", out_a,
                 "--seed", "1"]) == 0
    assert main(["scan", "--config", cfg, "--out", out_b,
                 "--seed", "2"]) == 0
    with open(os.path.join(out_a, "phase.csv"), "rb") as f:
        a = f.read()
    with open(os.path.join(out_b, "phase.csv"), "rb") as f:
        b = f.read()
    assert a != b


# ------------------------------------------------------------- tunneling

def test_tunneling_artifacts(tmp_path):
    cfg = _cfg(tmp_path, "[tunneling]\ndelta_e_mhz = [-5, -1, 25]\n")
    out = str(tmp_path / "out")
    assert main(["tunneling", "--config", cfg, "--out", out]) == 0
    rows = np.loadtxt(os.path.join(out, "wkb.csv"), delimiter=",",
                      skiprows=1, ndmin=2)
    assert rows.shape[0] == 25
    times = rows[:, 2]
    assert np.all(np.diff(times) < 0)  # deeper energies live longer
    t = _load(out, "tunneling.json")
    budget = t["recoil_budget"]
    assert len(budget) == 25
    assert all(b["n_photons"] > 0 for b in budget)
    assert os.path.exists(os.path.join(out, "survival.csv"))


# ------------------------------------------------------------------ tags

TAGS_CFG = """
[tags]
synth_kind = "emitter"
synth_n_cycles = 6
"""


def test_tags_synth_analyze_g2_chain(tmp_path):
    cfg = _cfg(tmp_path, TAGS_CFG)
    out = str(tmp_path / "synth")
    assert main(["tags", "synth", "--config", cfg, "--out", out,
                 "--seed", "4"]) == 0
    bin_path = os.path.join(out, "tags.bin")
    assert os.path.exists(bin_path)

    out2 = str(tmp_path / "an")
    assert main(["tags", "analyze", bin_path, "--config", cfg,
                 "--out", out2]) == 0
    ev = _load(out2, "events.json")
    assert ev["n_cycles"] >= 1
    assert 0.0 <= ev["trapping_probability"] <= 1.0

    out3 = str(tmp_path / "g2")
    assert main(["tags", "g2", bin_path, "--config", cfg,
                 "--out", out3]) == 0
    g2 = _load(out3, "g2.json")
    assert g2["n_conditioned_windows"] >= 1
    rows = np.loadtxt(os.path.join(out3, "g2.csv"), delimiter=",",
                      skiprows=1, ndmin=2)
    assert rows.shape[1] == 3


def test_tags_analyze_empty_stream(tmp_path):
    empty = tmp_path / "tags.bin"
    empty.write_bytes(b"")
    out = str(tmp_path / "out")
    assert main(["tags", "analyze", str(empty), "--out", out]) == 0
    ev = _load(out, "events.json")
    assert ev["n_cycles"] == 0
    assert ev["n_events"] == 0
    assert ev["trapping_probability"] is None
