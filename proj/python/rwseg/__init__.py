"""Random-walk refinement of coarse segmentation probabilities."""

from ._rwseg import (
    RwsegError,
    argmax_mask,
    cross_attention_g,
    exact_walk_dense,
    exact_walk_woodbury,
    g_from_probabilities,
    global_affinity,
    head_entropy,
    head_weights,
    local_affinity,
    refine,
    residual_l1,
    row_normalize,
    steps_for_tolerance,
    synth,
    truncated_walk,
    verify,
)

__all__ = [
    "RwsegError",
    "argmax_mask",
    "cross_attention_g",
    "exact_walk_dense",
    "exact_walk_woodbury",
    "g_from_probabilities",
    "global_affinity",
    "head_entropy",
    "head_weights",
    "local_affinity",
    "refine",
    "residual_l1",
    "row_normalize",
    "steps_for_tolerance",
    "synth",
    "truncated_walk",
    "verify",
]
