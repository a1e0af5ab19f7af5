"""frontlab: spreading speeds for cooperative nonlocal-dispersal systems.

The package predicts the spreading speed selected by exponentially
decaying initial data from the dispersion matrix of the linearized
system, integrates the full nonlinear system with a monotone explicit
scheme, tracks fronts to measure the realized speeds, and certifies the
runs against explicit analytic super- and sub-solutions.
"""

from .errors import FrontlabError
from .kernels import DiscreteKernel, Kernel, discretize, make_kernel, mgf
from .reactions import (AssumptionReport, ReactionModel, builtin_model,
                        check_growth_lower_bound, check_linear_dominance,
                        check_structure, default_growth_params)
from .spectral import (ComponentOrder, DispersionCurve, PerronPair,
                       SpeedMatrix, build_speed_matrix, check_irreducible,
                       laplacian_speed_matrix, minimize_speed,
                       perron_eigenpair, reorder_components, scalar_speed,
                       wave_speed)
from .simulate import (Compact, ExponentialDecay, FieldState, Grid,
                       HypothesisH, RunSetup, SimulationOutput, convolve,
                       dt_bound, init_state, make_grid, run, step)
from .fronts import (FrontTrace, SpeedEstimate, UniformSpeedVerdict,
                     estimate_speed, front_position, uniform_speed_verdict)
from .bounds import (AnalyticProfile, CascadeProfile, G_value, build_cascade,
                     build_lower, build_upper, fit_cascade_margin,
                     fit_lower_envelope, fit_seed_amplitude, residual,
                     sandwich_test)
from .config import ExperimentConfig, parse_config, resolve

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
