from src.preference.losses import (
    DEFAULT_BETA,
    METHODS,
    LossConfig,
    PrefBatchStep,
    StepResult,
    bt_reward_loss,
    bt_reward_loss_node,
    delta_ell,
    delta_ell_node,
    diffusion_dpo_logit,
    diffusion_dpo_loss,
    diffusion_dpo_loss_node,
    dpo_cm_loss,
    dpo_cm_loss_node,
    preference_step,
    reverse_log_density_node,
    sdpo_diffusion_logit,
    sdpo_diffusion_loss,
    sdpo_diffusion_loss_node,
    sdpo_scale_factor,
    sdpo_sequence_loss,
    sdpo_sequence_loss_node,
)
from src.preference.target import TargetCheck, target_distribution_check
from src.preference.weights import (
    ClipConfig,
    StepWeight,
    WeightReport,
    clip_weight,
    clip_weights,
    importance_weight,
    importance_weights,
    is_identity_check,
    pair_inverse_weight,
    pair_inverse_weights,
)

__all__ = [
    "DEFAULT_BETA",
    "METHODS",
    "ClipConfig",
    "LossConfig",
    "PrefBatchStep",
    "StepResult",
    "StepWeight",
    "TargetCheck",
    "WeightReport",
    "bt_reward_loss",
    "bt_reward_loss_node",
    "clip_weight",
    "clip_weights",
    "delta_ell",
    "delta_ell_node",
    "diffusion_dpo_logit",
    "diffusion_dpo_loss",
    "diffusion_dpo_loss_node",
    "dpo_cm_loss",
    "dpo_cm_loss_node",
    "importance_weight",
    "importance_weights",
    "is_identity_check",
    "pair_inverse_weight",
    "pair_inverse_weights",
    "preference_step",
    "reverse_log_density_node",
    "sdpo_diffusion_logit",
    "sdpo_diffusion_loss",
    "sdpo_diffusion_loss_node",
    "sdpo_scale_factor",
    "sdpo_sequence_loss",
    "sdpo_sequence_loss_node",
    "target_distribution_check",
]
