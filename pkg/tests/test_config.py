import pytest

from mmode_ef.errors import ArgumentError
from mmode_ef.train_eval.config import PUBLISHED_LR_CL, TrainConfig, dump_config, load_config, parse_config_text


def test_defaults():
    c = TrainConfig()
    assert (c.epochs_sup, c.epochs_cl, c.warmup_epochs) == (100, 300, 30)
    assert (c.lr_sup, c.lr_cl, c.bsz_sup, c.bsz_cl) == (1e-3, 1e-3, 64, 256)
    assert (c.tau, c.alpha, c.enc_dim, c.proj_hidden, c.proj_out, c.lstm_dim) == (0.01, 0.8, 512, 2048, 128, 256)
    assert TrainConfig.published().lr_cl == PUBLISHED_LR_CL == 1.0


def test_parse_text_types_and_comments():
    values = parse_config_text("M = 5\nfusion = lstm  # late\naugment_sup = false\n"
                               "stage_widths = [8, 16]\nlr_cl = 1e-4\n")
    assert values == {"M": 5, "fusion": "lstm", "augment_sup": False, "stage_widths": [8, 16], "lr_cl": 1e-4}


def test_file_round_trip_and_overrides(tmp_path):
    cfg = TrainConfig.desk(M=4, clip="short", seed=3)
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, seed=7, M=None).seed == 7


def test_presets_and_unknown_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("preset = desk\nepochs_sup = 3\n")
    cfg = load_config(path)
    assert cfg.encoder == "desk" and cfg.epochs_sup == 3
    path.write_text("nonsense = 1\n")
    with pytest.raises(ArgumentError):
        load_config(path)


@pytest.mark.parametrize("bad", [dict(label_fraction=0), dict(label_fraction=1.5), dict(M=0),
                                 dict(lr_sup=0), dict(alpha=2), dict(tau=-1), dict(encoder="vit")])
def test_validation(bad):
    with pytest.raises((ArgumentError, ValueError)):
        TrainConfig(**bad)


def test_model_config_follows_fusion():
    early = TrainConfig.desk(fusion="early", M=6).model_config()
    assert early.encoder.in_channels == 6
    assert TrainConfig.desk(M=6).model_config().encoder.in_channels == 1
    assert TrainConfig(M=10).model_config().fusion.joint_dim == 5120
