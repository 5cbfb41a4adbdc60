import math

import numpy as np
import pytest

from trackmpc.config import evaluate, load_config, parse_config
from trackmpc.errors import ConfigError

from conftest import fixture_path

TOY = fixture_path("toy_scalar").read_text()


def replace(text, old, new):
    assert old in text
    return text.replace(old, new)


class TestEvaluate:
    @pytest.mark.parametrize("expr,value", [
        ("1", 1.0), ("-pi/24", -math.pi / 24), ("cos(-0.45*pi)", math.cos(-0.45 * math.pi)),
        ("2**3", 8.0), ("sqrt(2)/2", math.sqrt(0.5)), ("1/40", 0.025),
    ])
    def test_values(self, expr, value):
        assert evaluate(expr) == pytest.approx(value, rel=1e-15)

    @pytest.mark.parametrize("expr", ["__import__('os')", "x + 1", "1/", "open('f')", "[1, 2]", "True"])
    def test_rejected(self, expr):
        with pytest.raises(ValueError):
            evaluate(expr)

    def test_nonfinite(self):
        with pytest.raises((ValueError, OverflowError)):
            evaluate("exp(1000)")


class TestParse:
    def test_toy(self):
        cfg = parse_config(TOY)
        assert cfg.name == "toy_scalar"
        assert cfg.exo.q == 0 and cfg.horizon == 3 and cfg.steps == 20
        assert np.allclose(cfg.x0, [0.8])

    def test_helicopter_generators(self, heli_config):
        S1 = heli_config.exo.blocks[1].M
        th = math.pi / 48
        assert np.allclose(S1, [[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]], atol=1e-15) or \
            np.allclose(S1, [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]], atol=1e-15)

    def test_helicopter_program(self, heli_config):
        prog = heli_config.program
        assert [s for s, _ in prog.switches] == [251]
        assert np.array_equal(prog.switches[0][1], [2, 6, 0, 2, 0, 0, 0, 2])
        assert heli_config.horizon == 10

    def test_missing_field_has_line(self):
        text = replace(TOY, "  K: [[0]]\n", "")
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.field == "plant.K"
        assert exc.value.line == 4  # first line of the 'plant' mapping

    def test_bad_expression_line(self):
        text = replace(TOY, "A: [[0.5]]", "A: [['0.5 +']]")
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.line == 4
        assert exc.value.field == "plant.A.0.0"
        assert "line 4" in str(exc.value)

    def test_yaml_syntax_line(self):
        text = replace(TOY, "horizon: 3", "horizon: [3")
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.line is not None

    def test_shape_mismatch(self):
        text = replace(TOY, "B: [[1]]", "B: [[1], [2]]")
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_horizon_positive(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(replace(TOY, "horizon: 3", "horizon: 0"))
        assert exc.value.field == "horizon"

    def test_top_level_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("- 1\n- 2\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_hash_ignores_run_settings(self):
        a = parse_config(TOY)
        b = parse_config(replace(TOY, "steps: 20", "steps: 30"))
        c = parse_config(replace(TOY, "horizon: 3", "horizon: 4"))
        assert a.design_hash == b.design_hash
        assert a.design_hash != c.design_hash

    def test_lambda_count(self):
        text = fixture_path("toy_nonperiodic").read_text()
        with pytest.raises(ConfigError):
            parse_config(replace(text, "Lambda: [1]", "Lambda: [1, 2]"))
