"""Desk-scale experiments on expansivity-type properties of smooth flows."""

__version__ = "0.1.0"

from .errors import DomainError, NearFixedPointError, OracleSizeError, PipelineUnavailableError  # noqa: E402
from .flow import OrbitSegment, integrate_orbit, sample_orbit  # noqa: E402
from .matcher import (  # noqa: E402
    MatchResult,
    brute_force_oracle,
    min_match_delta_rescaled,
    min_match_delta_two_sided,
    min_match_delta_uniform,
)
from .properties import PropertyVerdict  # noqa: E402

__all__ = [
    "__version__",
    "DomainError",
    "NearFixedPointError",
    "OracleSizeError",
    "PipelineUnavailableError",
    "OrbitSegment",
    "integrate_orbit",
    "sample_orbit",
    "MatchResult",
    "brute_force_oracle",
    "min_match_delta_rescaled",
    "min_match_delta_two_sided",
    "min_match_delta_uniform",
    "PropertyVerdict",
]
