"""Miniature end-to-end training run.

Generates a small paired dataset, trains the source-only spike baseline and
the full three-stage pipeline (RGB pretrain, cross-modality distillation,
cross-domain adaptation), then compares both on the shifted target split.

This uses a reduced geometry so it finishes in a couple of minutes; the
full desk profile lives in the acceptance suite.

Run:  python3 demos/04_desk_training.py
"""

import os
import tempfile
import time

from bicross.scenes import DatasetConfig, SceneConfig, make_dataset
from bicross.training import TrainConfig, run_pipeline

t0 = time.time()
root = tempfile.mkdtemp(prefix="bicross_demo_")
scene = SceneConfig(height=32, width=32, t_lum=16, n_objects_range=(2, 4), theta=0.05)

print("generating datasets ...")
make_dataset(DatasetConfig(scene=scene, n_source=48, n_target=48, shift_kind="fog",
                           shift_strength=0.7, seed=0), os.path.join(root, "train"))
make_dataset(DatasetConfig(scene=scene, n_source=16, n_target=16, shift_kind="fog",
                           shift_strength=0.7, seed=777), os.path.join(root, "test"))

cfg = TrainConfig(
    seed=0,
    batch_size=8,
    lr_backbone=1e-3,
    lr_decoder=1e-3,
    epochs_pretrain=6,
    epochs_modality=3,
    epochs_glfa=2,
    epochs_ugds=2,
    alpha_ema=0.99,
    warmup_steps=60,
    t_model=16,
    base_channels=8,
    encoder_depth=2,
    fusion_levels=2,
    global_width=16,
    token_width=32,
    data_dir=os.path.join(root, "train"),
    eval_data_dir=os.path.join(root, "test"),
    out_dir=os.path.join(root, "run"),
)

print("running baseline + three-stage pipeline ...")
result = run_pipeline(cfg)

print()
print(result["report"])
print(f"relative AbsRel improvement over source-only: {result['abs_rel_improvement']:+.1%}")
print(f"total {time.time() - t0:.0f}s; artifacts in {root}")
