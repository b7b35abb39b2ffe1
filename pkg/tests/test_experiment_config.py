from pathlib import Path

import pytest

from tlma.experiment_config import DESK, TABLE1, ConfigError, ExperimentConfig, load_config, read_config_file


def write(tmp_path, text):
    path = tmp_path / "experiment.cfg"
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    def test_empty_config_is_table1_profile(self):
        config = load_config()
        assert config == TABLE1
        assert (config.num_antennas, config.num_users, config.num_paths) == (12, 3, 3)
        assert config.region_length == (24.0,)
        assert config.num_subarrays == (4,)
        assert config.alpha == (0.375,)
        assert config.penalty_coefficient == 1e6
        assert (config.num_particles, config.num_iterations) == (300, 200)
        assert (config.antenna_particles, config.antenna_iterations) == (300, 200)
        assert (config.inertia, config.cognitive, config.social) == (0.9, 2.0, 2.0)
        assert config.carrier_frequency_ghz == 10.0

    def test_snr_bookkeeping(self):
        assert TABLE1.snr_linear == pytest.approx(10 ** 0.978)

    def test_desk_profile(self):
        config = load_config(profile="desk")
        assert config == DESK
        assert (config.num_particles, config.num_iterations, config.num_trials) == (60, 60, 50)
        assert config.ao_config().antenna_swarm.num_particles == 60


class TestFile:
    def test_values_comments_and_fractions(self, tmp_path):
        path = write(
            tmp_path,
            "# sweep over subarray counts\n"
            "num_subarrays = 1, 2, 4\n"
            "alpha = 3/8, 1/2   # two curves\n"
            "\n"
            "schemes = tl-ma, fpa\n"
            "out = results/subarrays.csv\n",
        )
        config = load_config(path)
        assert config.num_subarrays == (1, 2, 4)
        assert config.alpha == (0.375, 0.5)
        assert config.schemes == ("tl-ma", "fpa")
        assert config.out == Path("results/subarrays.csv")

    def test_unknown_key_names_line(self, tmp_path):
        path = write(tmp_path, "num_trials = 3\nparticles = 4\n")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.source == f"{path}:2"

    def test_unparsable_value_names_line(self, tmp_path):
        path = write(tmp_path, "\n\nnum_trials = many\n")
        with pytest.raises(ConfigError, match=":3"):
            read_config_file(path)

    def test_missing_equals(self, tmp_path):
        with pytest.raises(ConfigError, match="key = value"):
            load_config(write(tmp_path, "alpha 0.5\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")


class TestOverrides:
    def test_flag_beats_file(self, tmp_path):
        path = write(tmp_path, "alpha = 3/8\nnum_trials = 7\n")
        config = load_config(path, {"alpha": "0.5"})
        assert config.alpha == (0.5,)
        assert config.num_trials == 7

    def test_alpha_below_array_wise_bound_is_rejected(self):
        with pytest.raises(ConfigError) as excinfo:
            load_config(overrides={"alpha": "1/8"})
        assert excinfo.value.source == "--alpha"
        assert "0.25" in str(excinfo.value)

    def test_array_wise_alpha_itself_is_rejected(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"alpha": "1/4"})

    def test_file_value_error_names_line(self, tmp_path):
        path = write(tmp_path, "num_trials = 2\nalpha = 1/8\n")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.source == f"{path}:2"

    def test_subarrays_must_divide_antennas(self):
        with pytest.raises(ConfigError, match="divide"):
            load_config(overrides={"num_subarrays": "5"})

    def test_alpha_above_one_is_rejected(self):
        with pytest.raises(ConfigError, match="outside"):
            load_config(overrides={"alpha": "3/2"})

    def test_typed_overrides_pass_through(self):
        config = load_config(overrides={"num_trials": 3, "schemes": ["fpa"], "seed": None})
        assert config.num_trials == 3
        assert config.schemes == ("fpa",)
        assert config.seed == TABLE1.seed

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError) as excinfo:
            load_config(overrides={"schemes": "tl-ma,grid"})
        assert excinfo.value.source == "--schemes"

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            load_config(profile="huge")


class TestSweepPoints:
    def test_num_subarrays_axis(self):
        config = ExperimentConfig(num_subarrays=(1, 2, 4), alpha=(0.375, 0.5))
        points = config.sweep_points()
        assert [p.value for p in points] == [1.0, 2.0, 4.0]
        assert all(p.alphas == (0.375, 0.5) for p in points)

    def test_region_length_axis(self):
        config = ExperimentConfig(region_length=(16.0, 20.0, 24.0), sweep_axis="region_length", alpha=(0.5,))
        assert [p.region_length for p in config.sweep_points()] == [16.0, 20.0, 24.0]

    def test_alpha_axis(self):
        config = ExperimentConfig(alpha=(0.375, 0.5), sweep_axis="alpha")
        assert [p.alphas for p in config.sweep_points()] == [(0.375,), (0.5,)]
