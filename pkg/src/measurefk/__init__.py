"""Monte Carlo solver and a-priori estimate checker for semilinear elliptic
equations with measure data, -Lu = f(x, u) + mu, via killed-process sampling
and Picard iteration."""

from .backend import HAVE_COMPILED, active_backend_name
from .domains import Ball, Box, FullSpace, Interval
from .fields import SolutionField, field_from_function
from .kernels import (GridGreenOracle, IntervalLaplacian, StableExitMoment,
                      copotential, exact_kernel_for, green_interval,
                      potential_Rmu, stable_exit_moment)
from .measures import (MeasureData, Nonlinearity, check_monotone, is_class_R,
                       mollify, total_variation, truncate)
from .operators import (DivergenceForm, FractionalLaplacian,
                        OrnsteinUhlenbeck, ValidationReport, dirichlet_energy,
                        generator_apply, validate)
from .paths import (PathSample, SimConfig, additive_functional,
                    mean_exit_time, sample_path)
from .solver import (PicardConfig, SolveReport, feynman_kac_map, picard_solve,
                     residual_report)

__version__ = "0.1.0"
