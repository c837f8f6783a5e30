"""Pipeline configuration parsing and validation."""

import pytest

from rsforge.config import (
    default_config,
    load_config,
    serialize_config,
    snapshot_config,
)
from rsforge.errors import ConfigError

MINIMAL = """\
[paths]
output = out
"""

FULL = """\
[segmentation]
k = 150.0
min_size = 30
sigma = 0.5
min_side = 24

[sampling]
threshold = 0.4
pad = 0.15
sample_side = 48
osm_min_side = 12

[resampling]
seed = 9

[training]
tau = 0.4
batch_size = 16
base_lr = 0.002
epochs = 3
schedule = constant
seed = 2
optimizer = sgd
workers = 2
channels = 8 16
d_h = 24
d_hidden = 24
d_z = 12
freeze_spec = 1

[augmentation]
out_side = 24
crop_scale = 0.3 1.0
hflip_prob = 0.4
vflip_prob = 0.0
color_jitter = 0.2 0.2 0.2
blur_prob = 0.1
blur_sigma = 0.2 1.5

[paths]
rasters = r
landcover = lc
osm = map.osm
corpus = tex
output = out
"""


def write(tmp_path, text, name="p.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_full_config_parses(tmp_path):
    cfg = load_config(write(tmp_path, FULL))
    assert cfg.segmentation.k == 150.0
    assert cfg.segmentation.min_size == 30
    assert cfg.segmentation.min_side == 24
    assert cfg.threshold == 0.4
    assert cfg.pad == 0.15
    assert cfg.sample_side == 48
    assert cfg.osm_min_side == 12
    assert cfg.resample_seed == 9
    assert cfg.train.batch_size == 16
    assert cfg.train.schedule == "constant"
    assert cfg.train.optimizer == "sgd"
    assert cfg.train.channels == (8, 16)
    assert cfg.freeze_spec == 1
    assert cfg.augment.out_side == 24
    assert cfg.augment.crop_scale == (0.3, 1.0)
    # relative paths resolve against the config file directory
    assert cfg.rasters == tmp_path / "r"
    assert cfg.output == tmp_path / "out"
    assert cfg.osm == tmp_path / "map.osm"


def test_minimal_config_uses_defaults(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL))
    assert cfg.segmentation.k == 300.0
    assert cfg.threshold == 0.2
    assert cfg.train.tau == 0.5
    assert cfg.train.channels == (16, 32, 64)
    assert cfg.freeze_spec == "default"
    assert cfg.rasters is None
    assert cfg.train.workers >= 1


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, MINIMAL + "\n[extras]\nfoo = 1\n"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[training]\nlearning_rate = 1\n" + MINIMAL))


def test_malformed_and_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "not an ini file at all ["))


def test_type_and_range_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[training]\nbatch_size = many\n" + MINIMAL))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[training]\nbatch_size = 1\n" + MINIMAL))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[training]\ntau = -1\n" + MINIMAL))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[augmentation]\ncrop_scale = 0.5\n" + MINIMAL))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[training]\nfreeze_spec = most\n" + MINIMAL))


def test_freeze_spec_values(tmp_path):
    for raw, want in [("none", "none"), ("all", "all"),
                      ("default", "default"), ("2", 2)]:
        cfg = load_config(write(tmp_path, f"[training]\nfreeze_spec = {raw}\n"
                                + MINIMAL))
        assert cfg.freeze_spec == want


def test_overrides_win(tmp_path):
    p = write(tmp_path, FULL)
    cfg = load_config(p, {"training.epochs": "7", "sampling.threshold": "0.9"})
    assert cfg.train.epochs == 7
    assert cfg.threshold == 0.9
    with pytest.raises(ConfigError):
        load_config(p, {"training.no_such": "1"})
    with pytest.raises(ConfigError):
        load_config(p, {"nosection": "1"})


def test_serialize_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, FULL))
    text = serialize_config(cfg)
    back = load_config(write(tmp_path, text, "rt.ini"))
    assert back == cfg
    # serialization is stable
    assert serialize_config(back) == text


def test_snapshot_written(tmp_path):
    cfg = default_config(tmp_path / "out")
    (tmp_path / "out").mkdir()
    target = snapshot_config(cfg, tmp_path / "out")
    assert target.name == "config.used.ini"
    assert target.read_text() == serialize_config(cfg)


def test_default_config_valid_roundtrip(tmp_path):
    cfg = default_config(tmp_path / "out")
    text = serialize_config(cfg)
    back = load_config(write(tmp_path, text))
    assert back.train == cfg.train
    assert back.augment == cfg.augment
