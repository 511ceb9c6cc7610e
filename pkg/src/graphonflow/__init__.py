"""Gradient flows of invariant functionals on step graphons."""
from .errors import (ComplexityError, ConfigError, DomainError, GraphonError, KernelFormatError,
                     NonConvergenceError, SizeLimitError)
from .flow import (FlowConfig, FlowTrajectory, InnerConfig, convergence_study, evi_residual,
                   forward_step, implicit_step, run_flow)
from .functionals import (BoundaryMask, DerivativeKernel, Entropy, FunctionalSpec, Hom, Interaction,
                          Term, boundary_mask, derivative, entropy_derivative, entropy_value, evaluate,
                          hom_density, hom_derivative, interaction_derivative, interaction_value,
                          local_slope, semiconvexity, semiconvexity_constant)
from .kernel import (Permutation, SimpleGraph, StepKernel, blow_up, disjoint_union, edge_deleted,
                     permute, random_kernel, resample)
from .metrics import (Alignment, MetricEstimate, SearchConfig, cut_norm_exact, cut_norm_heuristic,
                      delta2_bruteforce, delta2_heuristic, delta_cut_bruteforce, delta_cut_heuristic,
                      geodesic)
from .sampling import SampledGraph, VelocityEstimate, estimate_velocity, mc_hom_density, sample_graph

__version__ = "0.1.0"
