"""Achievable NDT, converse bounds and a ZF delivery simulator for cache-aided
edge networks with cache-enabled receivers and fronthaul links."""
from .model import (
    CacheDofError,
    DegenerateAllCached,
    DemandVector,
    Infeasible,
    InfeasibleDelivery,
    InfeasibleFronthaul,
    InvalidMultiplicity,
    InvalidParams,
    NdtBreakdown,
    NonIntegerRegime,
    SystemParams,
    validate,
    worst_case_demand,
)
from .ndt import delta_up, delta_up_memshare, m_max, m_opt, r_threshold
from .converse import bounds_report, delta_lb_prime, f_min, gap_ratio

__version__ = "0.1.0"

__all__ = [
    "CacheDofError",
    "DegenerateAllCached",
    "DemandVector",
    "Infeasible",
    "InfeasibleDelivery",
    "InfeasibleFronthaul",
    "InvalidMultiplicity",
    "InvalidParams",
    "NdtBreakdown",
    "NonIntegerRegime",
    "SystemParams",
    "bounds_report",
    "delta_lb_prime",
    "delta_up",
    "delta_up_memshare",
    "f_min",
    "gap_ratio",
    "m_max",
    "m_opt",
    "r_threshold",
    "validate",
    "worst_case_demand",
]
