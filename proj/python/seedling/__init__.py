"""Python bindings for the seedling learner/actor library."""

from ._seedling import (
    ActionResponse,
    Environment,
    EnvSpec,
    ErrorMsg,
    Hello,
    PrioritizedBuffer,
    StepRequest,
    Trajectory,
    cost_per_billion,
    decode,
    encode,
    epsilon_for_actor,
    make_env,
    oracle_q,
    rescale,
    rescale_inverse,
    sequence_priority,
    vtrace_targets,
)

__all__ = [
    "ActionResponse",
    "Environment",
    "EnvSpec",
    "ErrorMsg",
    "Hello",
    "PrioritizedBuffer",
    "StepRequest",
    "Trajectory",
    "cost_per_billion",
    "decode",
    "encode",
    "epsilon_for_actor",
    "make_env",
    "oracle_q",
    "rescale",
    "rescale_inverse",
    "sequence_priority",
    "vtrace_targets",
]
