"""Pathwise synchronization of coupled systems driven by fractional Brownian motion.

Modules: ``paths`` (grids, fBm sampling, level-2 lifts), ``variation``
(p-variation and greedy partitions), ``integrate`` (Young and rough
integrals), ``flows`` (pure-noise flows and their Jacobians), ``model``
(drifts and structural checks), ``sync`` (coupled and averaged systems),
``config``/``cli`` (experiments from INI files) and ``acceptance``.
"""

from .config import ExperimentConfig, load_config
from .flows import (VectorFieldSpec, linear_field, sine_field, solve_backward_flow,
                    solve_forward_flow, zero_field)
from .model import DriftSpec, double_well, linear_drift
from .paths import GridPath, HurstParam, RoughLift, TimeGrid, lift_geometric, sample_fbm
from .sync import (kappa_sweep, solve_coupled, solve_synchronized, solve_uncoupled)
from .variation import greedy_times, p_variation

__all__ = [
    "ExperimentConfig", "load_config", "VectorFieldSpec", "linear_field", "sine_field",
    "zero_field", "solve_forward_flow", "solve_backward_flow", "DriftSpec", "double_well",
    "linear_drift", "GridPath", "HurstParam", "RoughLift", "TimeGrid", "lift_geometric",
    "sample_fbm", "kappa_sweep", "solve_coupled", "solve_synchronized", "solve_uncoupled",
    "greedy_times", "p_variation",
]
