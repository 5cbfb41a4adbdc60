import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from trackmpc import artifact
from trackmpc.cli import EXIT_DOMAIN, EXIT_INPUT, EXIT_OK, csv_header, main

from conftest import fixture_path

TOY_NP = fixture_path("toy_nonperiodic")


def read_log(path):
    """Parse log.csv back into typed columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {name: [] for name in header}
    for row in body:
        assert len(row) == len(header)
        for name, val in zip(header, row):
            if name in ("t", "feasible"):
                cols[name].append(int(val))
            else:
                cols[name].append(float(val))
    return header, cols, len(body)


def check_svg(path):
    root = ET.parse(path).getroot()
    assert root.tag == "{http://www.w3.org/2000/svg}svg"
    w, h = float(root.get("width")), float(root.get("height"))
    assert w > 0 and h > 0
    assert root.get("viewBox").split() == ["0", "0", root.get("width"), root.get("height")]
    return root


@pytest.fixture(scope="module")
def toy_artifact(tmp_path_factory):
    path = tmp_path_factory.mktemp("toy") / "design.json"
    assert main(["synthesize", str(TOY_NP), "-o", str(path)]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def heli_artifact(tmp_path_factory, heli_design, heli_config):
    path = tmp_path_factory.mktemp("heli") / "design.json"
    artifact.save(path, heli_design, heli_config.design_hash)
    return path


def variant(tmp_path, old, new, source=TOY_NP):
    text = source.read_text()
    assert old in text
    p = tmp_path / "variant.yaml"
    p.write_text(text.replace(old, new))
    return p


class TestValidate:
    def test_corrected_ok(self, capsys):
        assert main(["validate", str(fixture_path("helicopter_corrected"))]) == EXIT_OK
        assert "all checks passed" in capsys.readouterr().out

    def test_verbatim_reports_periodicity(self, capsys):
        assert main(["validate", str(fixture_path("helicopter"))]) == EXIT_DOMAIN
        out = capsys.readouterr().out
        assert "[FAIL] periodic part S_p^k0 = I" in out

    def test_shrinking_block(self, tmp_path, capsys):
        cfg = variant(tmp_path, "generator: [[0, 1], [-1, 0]]\n      sampling_period: 1/40",
                      "matrix: [[0.9, 0], [0, 0.9]]")
        assert main(["validate", str(cfg)]) == EXIT_DOMAIN
        assert "[FAIL] A4 unit-circle spectrum" in capsys.readouterr().out

    def test_malformed(self, tmp_path, capsys):
        cfg = variant(tmp_path, "horizon: 5", "horizon: [5")
        assert main(["validate", str(cfg)]) == EXIT_INPUT
        assert "line" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_INPUT

    def test_usage_error(self):
        assert main(["frobnicate"]) == EXIT_INPUT


class TestSynthesize:
    def test_toy_summary(self, toy_artifact, capsys):
        design, stored = artifact.load(toy_artifact)
        assert design.terminal.variant == "mixed" and design.exo.k0 == 1
        assert stored

    def test_no_reference(self, tmp_path, capsys):
        out = tmp_path / "d.json"
        assert main(["synthesize", str(fixture_path("toy_scalar")), "-o", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "periodic" in text and "MOAS t0             1" in text

    def test_validation_failure(self, tmp_path):
        assert main(["synthesize", str(fixture_path("helicopter")), "-o", str(tmp_path / "d.json")]) \
            == EXIT_DOMAIN

    def test_cap_reached(self, tmp_path, capsys):
        out = tmp_path / "d.json"
        assert main(["synthesize", str(fixture_path("helicopter_corrected")), "-o", str(out),
                     "--cap", "3"]) == EXIT_DOMAIN
        assert "not finitely determined" in capsys.readouterr().err
        assert not out.exists()


class TestSimulate:
    def test_toy_run(self, toy_artifact, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["simulate", str(toy_artifact), str(TOY_NP), "-o", str(out)]) == EXIT_OK
        header, cols, rows = read_log(out / "log.csv")
        assert header == csv_header(2, 1, 2)
        assert rows == 200 and cols["t"] == list(range(200))
        assert all(f == 1 for f in cols["feasible"])
        assert max(cols["margin"]) <= 1e-7
        check_svg(out / "outputs.svg")
        check_svg(out / "diagnostics.svg")
        assert "constraint violations     0" in (out / "summary.txt").read_text()

    def test_csv_floats_round_trip(self, toy_artifact, tmp_path):
        from trackmpc import sim
        from trackmpc.config import load_config

        out = tmp_path / "run"
        main(["simulate", str(toy_artifact), str(TOY_NP), "-o", str(out), "--steps", "15"])
        design, _ = artifact.load(toy_artifact)
        cfg = load_config(TOY_NP)
        log = sim.run_closed_loop(design.plant, design, cfg.program, cfg.x0, 15)
        _, cols, _ = read_log(out / "log.csv")
        assert cols["x0"] == [float(x[0]) for x in log.x]
        assert cols["cost"] == list(log.cost)

    def test_zero_steps_header_only(self, toy_artifact, tmp_path):
        out = tmp_path / "run"
        assert main(["simulate", str(toy_artifact), str(TOY_NP), "-o", str(out), "--steps", "0"]) == EXIT_OK
        header, _, rows = read_log(out / "log.csv")
        assert rows == 0 and header[0] == "t"

    def test_negative_steps(self, toy_artifact, tmp_path):
        assert main(["simulate", str(toy_artifact), str(TOY_NP), "-o", str(tmp_path), "--steps", "-1"]) \
            == EXIT_INPUT

    def test_hash_mismatch(self, toy_artifact, tmp_path, capsys):
        cfg = variant(tmp_path, "horizon: 5", "horizon: 6")
        assert main(["simulate", str(toy_artifact), str(cfg), "-o", str(tmp_path / "r")]) == EXIT_INPUT
        assert "different configuration" in capsys.readouterr().err

    def test_initial_state_infeasible(self, toy_artifact, tmp_path, capsys):
        cfg = variant(tmp_path, "x0: [0, 0]", "x0: [6, 0]")
        out = tmp_path / "r"
        assert main(["simulate", str(toy_artifact), str(cfg), "-o", str(out)]) == EXIT_DOMAIN
        assert "QP infeasible at t = 0" in capsys.readouterr().out
        assert read_log(out / "log.csv")[2] == 0

    def test_pinned_reference_aborts_at_switch(self, heli_artifact, tmp_path, capsys):
        out = tmp_path / "pinned"
        code = main(["simulate", str(heli_artifact), str(fixture_path("helicopter_corrected")), "-o", str(out),
                     "--pin-reference", "--steps", "300"])
        assert code == EXIT_DOMAIN
        assert "QP infeasible at t = 251" in capsys.readouterr().out
        _, cols, rows = read_log(out / "log.csv")
        assert rows == 251 and all(cols["feasible"])
        check_svg(out / "outputs.svg")


class TestMoas:
    def test_scalar_toy(self, capsys):
        assert main(["moas", str(fixture_path("toy_scalar"))]) == EXIT_OK
        out = capsys.readouterr().out
        assert "t0 = 1" in out

    def test_nonperiodic_toy_full_system(self, capsys):
        assert main(["moas", str(TOY_NP), "--include-nonperiodic", "--cap", "20"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "no fixed point after 20 iterations" in out
        assert "not finitely determined" in out

    def test_cap_without_flag(self):
        assert main(["moas", str(fixture_path("helicopter_corrected")), "--cap", "2"]) == EXIT_DOMAIN

    def test_invalid_config(self):
        assert main(["moas", str(fixture_path("helicopter"))]) == EXIT_DOMAIN


class TestVerify:
    def test_seed_from_env(self, toy_artifact, monkeypatch, capsys):
        monkeypatch.setenv("TRACKMPC_SEED", "7")
        assert main(["verify", str(toy_artifact), str(TOY_NP), "--samples", "50"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("seed 7")
        assert out.count("[PASS]") == 5

    def test_bad_seed(self, toy_artifact, monkeypatch):
        monkeypatch.setenv("TRACKMPC_SEED", "seven")
        assert main(["verify", str(toy_artifact), str(TOY_NP)]) == EXIT_INPUT

    def test_same_seed_same_report(self, toy_artifact, monkeypatch, capsys):
        monkeypatch.delenv("TRACKMPC_SEED", raising=False)
        main(["verify", str(toy_artifact), str(TOY_NP), "--samples", "30", "--seed", "3"])
        a = capsys.readouterr().out
        main(["verify", str(toy_artifact), str(TOY_NP), "--samples", "30", "--seed", "3"])
        assert capsys.readouterr().out == a
