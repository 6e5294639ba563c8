import numpy as np
import pytest

from bicross.losses import LossConfig
from bicross.scenes import DatasetConfig, SceneConfig, make_dataset
from bicross.training import TrainConfig

TINY_SCENE = SceneConfig(height=16, width=16, t_lum=8, n_objects_range=(1, 3), theta=0.02)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small train + test dataset pair shared across trainer tests."""
    root = tmp_path_factory.mktemp("tinydata")
    train_cfg = DatasetConfig(
        scene=TINY_SCENE, n_source=12, n_target=12, shift_kind="fog", shift_strength=0.7, seed=100
    )
    test_cfg = DatasetConfig(
        scene=TINY_SCENE, n_source=4, n_target=4, shift_kind="fog", shift_strength=0.7, seed=900
    )
    make_dataset(train_cfg, root / "train")
    make_dataset(test_cfg, root / "test")
    return root


def tiny_train_config(data_root, out_dir, **overrides) -> TrainConfig:
    base = dict(
        seed=0,
        batch_size=4,
        lr_backbone=1e-3,
        lr_decoder=1e-3,
        epochs_pretrain=2,
        epochs_modality=2,
        epochs_glfa=1,
        epochs_ugds=1,
        alpha_ema=0.95,
        warmup_steps=3,
        t_model=8,
        base_channels=4,
        encoder_depth=2,
        fusion_levels=2,
        global_width=8,
        token_width=16,
        data_dir=str(data_root / "train"),
        eval_data_dir=str(data_root / "test"),
        out_dir=str(out_dir),
        loss=LossConfig(),
    )
    base.update(overrides)
    return TrainConfig(**base)
