import math

import pytest

from cpof.errors import ParameterError
from cpof.harness.config import ConfigError, ExperimentConfig, format_config, load_config, parse_config
from cpof.xforms import BasisKind


def test_defaults():
    c = ExperimentConfig()
    assert c.side == 128 and c.basis is BasisKind.WALSH_HADAMARD and c.mode == "pof"
    assert c.rho_grid == (1.0, 4.0, 16.0, 64.0)
    assert math.isinf(c.snr_db) and c.radius == 5.0 and c.trials_per_point == 1000


def test_parse_basic():
    text = """
    # comment line
    side = 64            # trailing comment
    rho_grid = 1, 8
    basis = noiselet
    snr_db = 0
    random_count = 1-5
    dictionary = target, decoy
    tau = auto
    count_known = no
    """
    c = parse_config(text)
    assert c.side == 64 and c.rho_grid == (1.0, 8.0) and c.basis is BasisKind.NOISELET
    assert c.snr_db == 0.0 and c.random_count == (1, 5) and c.dictionary == ("target", "decoy")
    assert c.tau is None and c.count_known is False


def test_single_random_count():
    assert parse_config("random_count = 3").random_count == (3, 3)


def test_round_trip_through_text():
    c = ExperimentConfig(side=32, rho_grid=(1, 2.5), snr_db=-3.0, random_count=(2, 4),
                         sigma=0.5, basis="dft")
    assert parse_config(format_config(c)) == c
    assert parse_config(format_config(ExperimentConfig())) == ExperimentConfig()


def test_base_config_is_kept():
    base = ExperimentConfig(side=32, trials_per_point=7)
    c = parse_config("rho_grid = 2", base)
    assert (c.side, c.trials_per_point, c.rho_grid) == (32, 7, (2.0,))


def test_overrides_skip_none():
    c = ExperimentConfig().with_overrides(trials_per_point=10, tau=None, basis="noiselet")
    assert c.trials_per_point == 10 and c.tau is None and c.basis is BasisKind.NOISELET


@pytest.mark.parametrize("text, line", [
    ("side = 64\nbogus = 1\n", 2),
    ("side = 64\nside = 32\n", 2),
    ("\n\nside = sixty\n", 3),
    ("side = 64\njust words\n", 2),
    ("side = 64\nbasis = wavelet\n", 2),
    ("rho_grid = 1,,2\n", 1),
    ("count_known = maybe\n", 1),
    ("side = 64\n\nmode = xyz\n", 3),
    ("side = 100\n", 1),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


@pytest.mark.parametrize("kwargs", [
    dict(side=100), dict(background="stripes"), dict(mode="xyz"), dict(dictionary=()),
    dict(dictionary=("a", "a")), dict(objects=("decoy",), dictionary=("target",)),
    dict(random_count=(3, 1)), dict(rho_grid=(0.5,)), dict(rho_grid=(1e9,)),
    dict(trials_per_point=0), dict(workers=0), dict(radius=-1), dict(tau=-1.0), dict(sigma=-1.0),
    dict(binary_differential=True, basis="noiselet"), dict(binary_differential=True, mode="ppc"),
])
def test_validation(kwargs):
    with pytest.raises(ParameterError):
        ExperimentConfig(**kwargs)


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("side = 32\ntrials_per_point = 3\n")
    c = load_config(path)
    assert c.side == 32 and c.trials_per_point == 3
