import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from rydecho.cli import COLUMNS, ConfigError, RunConfig, main, parse_config, run_command


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.json"
    f.write_text("")
    cfg = parse_config(f)
    assert cfg == RunConfig()
    assert cfg.gate.L == 8.0 and cfg.gate.eta == 18.0 and cfg.gate.omega_c == 10.0
    assert cfg.gate.c6_rc_r0 == 56.2 and cfg.gate.c6_rc_r1 == -25.6
    assert cfg.gate.phi == pytest.approx(np.pi)


def test_config_roundtrip(tmp_path):
    cfg = parse_config(None, ["gate.L=9.5", "thermal.Ta_uK=42", "sweep.Ta_uK=[1, 2, 3]", "protocol=traditional"])
    f = tmp_path / "cfg.json"
    f.write_text(cfg.dumps())
    assert parse_config(f) == cfg
    assert cfg.protocol == "traditional"
    assert cfg.sweep.Ta_uK == [1.0, 2.0, 3.0]


def test_override_rescales_interaction(capsys):
    _, base, _ = run_cli(capsys, "derive")
    _, far, _ = run_cli(capsys, "derive", "--set", "gate.L=16")
    h, a = read_csv(base)
    _, b = read_csv(far)
    k = h.index("V0_MHz")
    # CSV keeps 12 significant digits
    np.testing.assert_allclose(b[0, k], a[0, k] / 64, rtol=1e-10)


def test_bare_keys_resolve_when_unique():
    assert parse_config(None, ["eta=20"]).gate.eta == 20.0
    with pytest.raises(ConfigError, match="ambiguous"):
        parse_config(None, ["Ta_uK=5"])
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config(None, ["nonsense=1"])


@pytest.mark.parametrize(
    "override, field",
    [
        ("gate.eta=-1", "eta"),
        ("gate.L=0", "L"),
        ("gate.eta=\"big\"", "eta"),
        ("thermal.waist_um=0", "waist_um"),
        ("decay.lifetimes_us={\"rc\": -1}", "rc"),
        ("manybody.N=7", "N"),
        ("manybody.swap=\"slow\"", "swap"),
        ("sweep.samples=0", "samples"),
        ("sweep.Ta_uK=[]", "Ta_uK"),
        ("gate.unknown=1", "unknown"),
        ("protocol=\"fast\"", "protocol"),
    ],
)
def test_validation_names_field(override, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(None, [override])


def test_config_errors_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "derive", "--set", "gate.eta=-1")
    assert code == 2
    assert "eta" in err
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "gate": {"L": 8,}\n}')
    code, _, err = run_cli(capsys, "derive", "--config", str(bad))
    assert code == 2
    assert "bad.json:2:" in err
    code, _, err = run_cli(capsys, "derive", "--config", str(tmp_path / "missing.json"))
    assert code == 2
    bad.write_text('{"extra": {}}')
    code, _, err = run_cli(capsys, "derive", "--config", str(bad))
    assert code == 2 and "extra" in err


def test_numeric_failure_exits_3(capsys):
    # a 1 K cloud puts sampled spacings below zero
    code, out, err = run_cli(capsys, "gate-error", "--set", "thermal.Ta_uK=1e6", "--samples", "200")
    assert code == 3
    assert out == ""
    assert "gate-error" in err


def test_derive_row(capsys):
    code, out, _ = run_cli(capsys, "derive")
    assert code == 0
    h, rows = read_csv(out)
    assert tuple(h) == COLUMNS["derive"]
    row = dict(zip(h, rows[0]))
    np.testing.assert_allclose(row["V0_MHz"], 214.4, atol=0.05)
    np.testing.assert_allclose(row["T_wait_ns"], 5.12, atol=0.005)
    np.testing.assert_allclose(row["eps1"], 2.3e-3, rtol=0.02)


def test_csv_number_format(capsys):
    _, out, _ = run_cli(capsys, "derive")
    line = out.splitlines()[1]
    for cell in line.split(","):
        mant, exp = cell.split("e")
        assert len(mant.lstrip("-").replace(".", "")) == 12
        assert exp[0] in "+-"


def test_trace_final_deficit(capsys):
    code, out, _ = run_cli(capsys, "trace")
    assert code == 0
    h, rows = read_csv(out)
    assert tuple(h) == COLUMNS["trace"]
    final = dict(zip(h, rows[-1]))
    assert 1 - final["pop_rc0"] <= 2e-5
    np.testing.assert_allclose(final["t_us"], 0.0974, atol=1e-4)
    np.testing.assert_allclose(final["arg_rc0"], -np.pi / 2, atol=1e-2)
    np.testing.assert_allclose(rows[:, h.index("pop_rc0")] + rows[:, h.index("pop_rcr0")] + rows[:, h.index("pop_rcr1")], 1.0, atol=1e-10)


def test_trace_traditional(capsys):
    code, out, _ = run_cli(capsys, "trace", "--protocol", "traditional")
    assert code == 0
    h, rows = read_csv(out)
    assert 1 - rows[-1, h.index("pop_rc0")] > 1e-3
    assert np.all(rows[:, h.index("pop_rcr1")] == 0)


@pytest.mark.parametrize("regime_name, column", [("dressing", "M"), ("near_resonant", "P")])
def test_manybody_command(capsys, regime_name, column):
    code, out, _ = run_cli(capsys, "manybody", "--regime", regime_name)
    assert code == 0
    h, rows = read_csv(out)
    assert tuple(h) == COLUMNS["manybody"]
    np.testing.assert_allclose(rows[-1, 0], 0.827, atol=1e-3)
    k = h.index(column)
    assert abs(rows[-1, k] - rows[0, k]) <= 1e-3


def test_sweep_is_byte_identical_and_matches_gate_error(tmp_path, capsys):
    args = ["--samples", "50", "--seed", "9", "--set", "sweep.Ta_uK=[0, 30]"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep-temp", *args, "--out", str(a)]) == 0
    assert main(["sweep-temp", *args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    h, rows = read_csv(a.read_text())
    assert tuple(h) == COLUMNS["sweep-temp"]
    assert rows.shape == (2, len(h))
    np.testing.assert_allclose(rows[:, h.index("E_total")], rows[:, h.index("E_de")] + rows[:, h.index("E_ro")], rtol=1e-10)
    code, out, _ = run_cli(capsys, "gate-error", "--samples", "50", "--set", "thermal.Ta_uK=30", "--seed", "9")
    assert code == 0
    row = read_csv(out)[1][0]
    # E_ro differs: sweep point i samples from its own stream
    same = [h.index(c) for c in ("Ta_uK", "E_de", "E_Do", "T_Ry_rc_us", "T_Ry_r0_us", "T_Ry_r1_us")]
    np.testing.assert_array_equal(row[same], rows[1][same])


def test_compare_command(capsys):
    code, out, _ = run_cli(capsys, "compare", "--samples", "20", "--set", "sweep.Ta_uK=[0, 50]")
    assert code == 0
    h, rows = read_csv(out)
    assert tuple(h) == COLUMNS["compare"]
    assert np.all(rows[:, h.index("E_total_spin_echo")] < rows[:, h.index("E_total_traditional")])


def test_output_path_from_config(tmp_path):
    dest = tmp_path / "derived.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"output": {"out": str(dest)}}))
    assert main(["derive", "--config", str(cfg)]) == 0
    assert dest.read_text().startswith("V0_MHz,")


def test_every_command_has_a_schema():
    for cmd in ("derive", "trace", "gate-error", "sweep-temp", "manybody", "compare"):
        assert cmd in COLUMNS
    with pytest.raises(ConfigError):
        run_command("plot", RunConfig())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rydecho", "derive"], capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("V0_MHz,")
