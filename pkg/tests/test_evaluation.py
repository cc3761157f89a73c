import json
import math

import numpy as np
import pytest

from doorpass_lab.analysis.evaluation import (GRID_HEADER, EvalProtocol, Rate, entropy,
                                              evaluate_grid, export_type_probs, grid_assertions,
                                              linear_separability, load_protocol, pca_2d,
                                              repeatability, resistance_sweep, summary_table,
                                              sweep_assertions, wilson_interval)
from doorpass_lab.core.exceptions import ConfigError
from doorpass_lab.learning.policies import ZeroPolicy
from doorpass_lab.sim.door_model import DOOR_TYPE_NAMES, flip_side


class TestWilson:
    def test_empty_sample_is_uninformative(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_zero_successes(self):
        z2 = 1.959963984540054 ** 2
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0
        assert hi == pytest.approx(z2 / (10 + z2))

    @pytest.mark.parametrize("successes,total", [(1, 3), (50, 100), (97, 100), (400, 400)])
    def test_contains_point_estimate(self, successes, total):
        lo, hi = wilson_interval(successes, total)
        assert 0.0 <= lo <= successes / total <= hi <= 1.0

    def test_symmetric_at_one_half(self):
        lo, hi = wilson_interval(50, 100)
        assert 0.5 - lo == pytest.approx(hi - 0.5)

    def test_rate(self):
        rate = Rate(3, 4)
        assert rate.value == 0.75
        assert rate.width == pytest.approx(rate.interval[1] - rate.interval[0])
        assert Rate(0, 0).value == 0.0


def row(label, open_rate, pass_rate, width=0.02):
    return {"label": label, "episodes": 100, "open_rate": open_rate, "open_lo": open_rate - 0.01,
            "open_hi": open_rate + 0.01, "pass_rate": pass_rate, "pass_lo": pass_rate - width / 2,
            "pass_hi": pass_rate + width / 2}


class TestSweepAssertions:
    def test_decreasing_sweep_passes(self):
        checks = sweep_assertions([row(60.0, 0.2, 0.05), row(0.0, 0.9, 0.8), row(30.0, 0.7, 0.5)])
        names = [c["name"] for c in checks]
        assert names[:2] == ["monotone_pass_0_30", "monotone_pass_30_60"]
        assert "high_resistance_pass_60" in names
        assert "high_resistance_pass_30" not in names
        assert all(c["passed"] for c in checks)

    def test_rise_beyond_interval_fails(self):
        checks = {c["name"]: c["passed"] for c in
                  sweep_assertions([row(0.0, 0.5, 0.1, 0.1), row(10.0, 0.9, 0.5, 0.1)])}
        assert checks["monotone_pass_0_10"] is False

    def test_rise_within_interval_tolerated(self):
        checks = {c["name"]: c["passed"] for c in
                  sweep_assertions([row(0.0, 0.5, 0.40, 0.1), row(10.0, 0.9, 0.45, 0.1)])}
        assert checks["monotone_pass_0_10"] is True

    def test_high_resistance_limit(self):
        checks = {c["name"]: c["passed"] for c in sweep_assertions([row(60.0, 0.5, 0.3)])}
        assert checks["high_resistance_pass_60"] is False

    def test_opened_must_cover_passed(self):
        checks = {c["name"]: c["passed"] for c in sweep_assertions([row(0.0, 0.3, 0.4)])}
        assert checks["open_ge_pass_0"] is False


class TestGridAssertions:
    def test_mirror_doors_agree(self):
        rows = [row("pull-right", 0.8, 0.6), row("pull-left", 0.8, 0.61), row("all", 0.8, 0.6)]
        checks = {c["name"]: c["passed"] for c in grid_assertions(rows)}
        assert checks["hinge_symmetry_pull"] is True
        assert "hinge_symmetry_push" not in checks

    def test_asymmetry_flagged(self):
        rows = [row("push-right", 0.9, 0.9), row("push-left", 0.9, 0.2)]
        checks = {c["name"]: c["passed"] for c in grid_assertions(rows)}
        assert checks["hinge_symmetry_push"] is False


class TestHiddenStateHelpers:
    def test_entropy(self):
        assert float(entropy(np.full(4, 0.25))) == pytest.approx(math.log(4.0))
        assert float(entropy(np.array([1.0, 0.0, 0.0, 0.0]))) == pytest.approx(0.0, abs=1e-9)

    def test_pca_recovers_dominant_direction(self):
        t = np.linspace(-1.0, 1.0, 21)
        points = np.stack([t, -2.0 * t, 0.01 * np.sin(7 * t)], axis=1)
        projection, components = pca_2d(points)
        np.testing.assert_allclose(np.abs(components[0]), [1 / math.sqrt(5), 2 / math.sqrt(5), 0.0],
                                   atol=1e-6)
        # знак выбран по наибольшей по модулю координате
        assert components[0, 1] > 0
        assert projection.shape == (21, 2)
        assert np.abs(projection[:, 1]).max() < 0.02

    def test_separable_clusters(self):
        rng = np.random.default_rng(0)
        points = np.vstack([rng.normal(-3.0, 0.3, size=(20, 2)), rng.normal(3.0, 0.3, size=(20, 2))])
        labels = np.array([False] * 20 + [True] * 20)
        assert linear_separability(points, labels) == 1.0
        assert linear_separability(points, np.ones(40, dtype=bool)) is None


def test_summary_table_formats_floats():
    text = summary_table(GRID_HEADER[:3], [["push-right", 10, 0.5]], title="Итоги")
    assert text.startswith("Итоги\n")
    assert "push-right" in text
    assert "0.500" in text
    assert "open_rate" in text


class TestProtocol:
    def test_from_config_offsets_seed(self, small_config):
        protocol = EvalProtocol.from_config(small_config)
        assert protocol.seed == small_config.seed + small_config.eval.seed_offset
        assert protocol.num_envs == 2
        assert protocol.episode_steps == 15

    def test_pinned_resistance(self, small_config):
        cfg = EvalProtocol.from_config(small_config, tau_hinge=20.0).experiment_config(small_config)
        assert cfg.randomization.tau_hinge == (20.0, 20.0)
        assert cfg.randomization.tau_hinge_zero_prob == 0.0
        assert cfg.env.episode_steps == 15

    def test_load_partial_file(self, tmp_path, small_config):
        path = tmp_path / "protocol.json"
        path.write_text(json.dumps({"episodes_per_env": 3, "door_types": [0, 1]}), encoding='utf-8')
        protocol = load_protocol(str(path), small_config)
        assert protocol.episodes_per_env == 3
        assert protocol.door_types == (0, 1)
        assert protocol.num_envs == small_config.eval.num_envs

    @pytest.mark.parametrize("data", [{"num_env": 3}, {"metrics": ["time_to_open"]}])
    def test_rejects_unknown_fields(self, tmp_path, small_config, data):
        path = tmp_path / "protocol.json"
        path.write_text(json.dumps(data), encoding='utf-8')
        with pytest.raises(ConfigError):
            load_protocol(str(path), small_config)


class TestProtocolsWithIdlePolicy:
    def test_grid(self, small_config):
        result = evaluate_grid(small_config, ZeroPolicy(), EvalProtocol.from_config(small_config))
        assert result.rows[-1]["label"] == "all"
        assert result.rows[-1]["episodes"] == 2
        assert sum(r["episodes"] for r in result.rows[:-1]) == 2
        assert all(r["pass_rate"] == 0.0 for r in result.rows)
        assert len(result.csv_rows()[0]) == len(GRID_HEADER)

    def test_sweep(self, small_config):
        rows = resistance_sweep(small_config, ZeroPolicy(), [0.0, 60.0],
                                EvalProtocol.from_config(small_config))
        assert [r["label"] for r in rows] == [0.0, 60.0]
        assert all(c["passed"] for c in sweep_assertions(rows))

    @pytest.mark.parametrize("levels", [[], [-1.0], [float('nan')]])
    def test_sweep_rejects_bad_levels(self, small_config, levels):
        with pytest.raises(ConfigError):
            resistance_sweep(small_config, ZeroPolicy(), levels,
                             EvalProtocol.from_config(small_config))

    def test_repeat_alternates_sides(self, small_config):
        report = repeatability(small_config, ZeroPolicy(), EvalProtocol.from_config(small_config),
                               n_per_side=1)
        assert report["trials"] == 2
        first, second = report["sides"]
        assert first["trials"] == second["trials"] == 1
        assert report["passed"] == 0 and report["rate"] == 0.0
        assert DOOR_TYPE_NAMES.index(second["door_type"]) == flip_side(
            DOOR_TYPE_NAMES.index(first["door_type"]))

    def test_export_requires_student(self, small_config):
        with pytest.raises(ConfigError):
            export_type_probs(small_config, ZeroPolicy(), EvalProtocol.from_config(small_config), 2)
