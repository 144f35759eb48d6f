from .schemas import (
    AllocatorMode,
    CacheScheme,
    CacheSizing,
    CacheStateLog,
    MemoryConfig,
    MetricsReport,
    NewObjectPlacement,
    ObjectPolicy,
    OpcOptions,
    PlacementPolicy,
    SimConfig,
    SizeDistribution,
    SweepSpec,
    TopologyConfig,
    TrafficClass,
    TrafficClassParams,
    WorkloadConfig,
)

__all__ = [
    "AllocatorMode",
    "CacheScheme",
    "CacheSizing",
    "CacheStateLog",
    "MemoryConfig",
    "MetricsReport",
    "NewObjectPlacement",
    "ObjectPolicy",
    "OpcOptions",
    "PlacementPolicy",
    "SimConfig",
    "SizeDistribution",
    "SweepSpec",
    "TopologyConfig",
    "TrafficClass",
    "TrafficClassParams",
    "WorkloadConfig",
]
