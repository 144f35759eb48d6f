from .cost_model import AccessCause, CacheCapacity, CostModel, MemoryTier, capacity_from_config
from .errors import (
    CacheValidationError,
    NoVictimError,
    SimConfigError,
    SweepRunError,
    TopologyError,
    WorkloadError,
)

__all__ = [
    "AccessCause",
    "CacheCapacity",
    "CostModel",
    "MemoryTier",
    "capacity_from_config",
    "CacheValidationError",
    "NoVictimError",
    "SimConfigError",
    "SweepRunError",
    "TopologyError",
    "WorkloadError",
]
