"""Projected-light adversarial attacks on monocular depth estimators.

The package couples a separable CMA-ES optimizer with a simulated
projector/camera loop and pluggable victim depth estimators. See the
README for the CLI and the external victim protocol.
"""

__version__ = "0.1.0"

from .attack import AttackAborted, AttackConfig, AttackResult, resume_attack, run_attack
from .metrics import objective, presence_rate
from .optimizer import OptimizerState, RankedCandidate, StrategyParams, default_lambda
from .scene import (
    CapturedImage,
    DegenerateSceneError,
    DepthMap,
    PerturbationPattern,
    RegionMask,
    SceneModel,
    compose_projection,
    pattern_to_light,
)
from .victim import (
    BrightnessBiasedVictim,
    ConstantVictim,
    ExternalVictim,
    PatchLinearVictim,
    ProtocolError,
    VictimDescriptor,
    VictimError,
    build_victim,
    check_protocol_conformance,
    estimate_depth,
    external_handshake,
)

__all__ = [
    "__version__",
    "AttackAborted",
    "AttackConfig",
    "AttackResult",
    "run_attack",
    "resume_attack",
    "objective",
    "presence_rate",
    "OptimizerState",
    "RankedCandidate",
    "StrategyParams",
    "default_lambda",
    "CapturedImage",
    "DegenerateSceneError",
    "DepthMap",
    "PerturbationPattern",
    "RegionMask",
    "SceneModel",
    "compose_projection",
    "pattern_to_light",
    "BrightnessBiasedVictim",
    "ConstantVictim",
    "ExternalVictim",
    "PatchLinearVictim",
    "ProtocolError",
    "VictimDescriptor",
    "VictimError",
    "build_victim",
    "check_protocol_conformance",
    "estimate_depth",
    "external_handshake",
]
