"""Desk-scale unsupervised spike-camera depth estimation.

Spike-stream simulation and a bit-exact binary container, procedural paired
scene generation with controllable domain shift, a small dual-branch depth
network with cross-modality distillation, and uncertainty-guided
teacher-student cross-domain adaptation with adversarial global alignment.
"""

from .errors import (
    BicrossError,
    CheckpointError,
    DegenerateInputError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
    NonFiniteLoss,
    SkipSample,
)
from .evalkit import Metrics, compute_metrics, gradcheck, rank_correlation, render_map, report
from .losses import (
    LossConfig,
    UncertaintyMask,
    build_mask,
    ckd_loss,
    ckd_pair_prob,
    dom_loss,
    fkd_loss,
    glfa_loss,
    mod_loss,
    sig_loss,
    ugts_loss,
    uncertainty_loss,
    uncertainty_target,
)
from .network import (
    DepthNet,
    Discriminator,
    NetworkConfig,
    NetworkOutputs,
    ema_update,
    init_params,
)
from .scenes import (
    DatasetConfig,
    DatasetManifest,
    Scene,
    SceneConfig,
    apply_domain_shift,
    generate_scene,
    load_manifest,
    make_dataset,
)
from .spike import (
    LuminanceSequence,
    SpikeInputVolume,
    SpikeStream,
    bin_stream,
    interpolate_frames,
    rate_image,
    read_spk,
    simulate_spikes,
    write_spk,
)
from .training import (
    RunState,
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    evaluate_checkpoint,
    pretrain_rgb,
    run_pipeline,
    train_cross_domain,
    train_cross_modality,
    train_source_spike,
    warmup_teacher,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
