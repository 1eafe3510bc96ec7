from decimal import Decimal
from pathlib import Path

import pytest

from nftwash.config import EPSILON_ABS, EPSILON_REL, REPORT_NAME, RunConfig, build_config, read_config_file
from nftwash.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("TRANSFERS=data/transfers.jsonl\n"
                    "# comment\n"
                    "epsilon-rel=0.01\n"
                    "JOBS=3\n"
                    "REQUIRE_COMPLIANCE=yes\n")
    return path


def test_defaults():
    config = build_config({"transfers": "t.jsonl"})
    assert config.transfers == Path("t.jsonl")
    assert config.epsilon_abs == EPSILON_ABS and config.epsilon_rel == EPSILON_REL
    assert config.out == Path(REPORT_NAME)
    assert config.jobs >= 1
    assert config.require_compliance is False
    assert config.labels is None


def test_file_values(config_file):
    config = build_config({}, config_file)
    assert config.transfers == Path("data/transfers.jsonl")
    assert config.epsilon_rel == Decimal("0.01")
    assert config.jobs == 3
    assert config.require_compliance is True


def test_flags_override_file(config_file):
    config = build_config({"jobs": 8, "transfers": "other.jsonl", "labels": None}, config_file)
    assert config.jobs == 8
    assert config.transfers == Path("other.jsonl")
    assert config.epsilon_rel == Decimal("0.01")


def test_unknown_key(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("TRANSFERS=t.jsonl\nEPSILON=1\n")
    with pytest.raises(ConfigError, match="EPSILON"):
        read_config_file(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        build_config({"transfers": "t.jsonl"}, tmp_path / "nope.env")


def test_config_file_not_utf8(tmp_path):
    path = tmp_path / "bad.env"
    path.write_bytes(b"TRANSFERS=t.jsonl\nLABELS=\xff\xfe.csv\n")
    with pytest.raises(ConfigError, match="UTF-8"):
        read_config_file(path)


def test_transfers_required():
    with pytest.raises(ConfigError):
        build_config({"labels": "labels.csv"})


@pytest.mark.parametrize("overrides", [
    {"require_compliance": "maybe"},
    {"epsilon_abs": "lots"},
    {"epsilon_rel": "-0.5"},
    {"epsilon_abs": "nan"},
    {"epsilon_rel": "Infinity"},
    {"jobs": "many"},
    {"jobs": "0"},
])
def test_bad_values(overrides):
    with pytest.raises(ConfigError):
        build_config({"transfers": "t.jsonl", **overrides})


def test_non_finite_epsilon_in_constructor():
    with pytest.raises(ConfigError, match="finite"):
        RunConfig(transfers=Path("t.jsonl"), epsilon_abs=Decimal("NaN"))


def test_check_files(tmp_path):
    transfers = tmp_path / "t.jsonl"
    transfers.write_text("")
    RunConfig(transfers=transfers).check_files()
    with pytest.raises(ConfigError, match="labels"):
        RunConfig(transfers=transfers, labels=tmp_path / "labels.csv").check_files()
