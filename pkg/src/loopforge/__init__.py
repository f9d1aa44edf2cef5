"""loopforge: loop-erased walks, lattice loop soups, and Brownian coupling."""

from .lattice import (
    DiscreteLoop,
    LatticePath,
    Site,
    ball_sites,
    boundary,
    cut_points,
    enlargement,
    loop_erase,
)
from .walks import (
    BoundaryConvention,
    WalkConfig,
    return_probability,
    sample_bridge,
    sample_bridge_1d,
    sample_lerw,
    sample_srw_stopped,
    visit_probability_exact,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryConvention",
    "DiscreteLoop",
    "LatticePath",
    "Site",
    "WalkConfig",
    "ball_sites",
    "boundary",
    "cut_points",
    "enlargement",
    "loop_erase",
    "return_probability",
    "sample_bridge",
    "sample_bridge_1d",
    "sample_lerw",
    "sample_srw_stopped",
    "visit_probability_exact",
]
