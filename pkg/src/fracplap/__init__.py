"""Discrete nonlocal parabolic p-Laplacian: meshes, kernels, operator, implicit solver and estimates."""
from .geometry import Cylinder, CutoffSpec, Mesh, build_cutoff, build_mesh, scale_cylinder
from .kernel import KernelSpec, eval_kernel, kernel_block, validate_ellipticity
from .operator import (OperatorApplyPlan, apply_L, apply_L_dense, benchmark_apply, build_plan,
                       energy, pairing, seminorm, sobolev_ratio, truncate)
from .solver import (ConvergenceError, ProblemSpec, StepConfig, Trajectory, l2_contraction_check,
                     solve, step_implicit, subsolution_residual)
from .estimates import (boundedness_check, caccioppoli_report, inequality_suite, moser_ladder,
                        tail, tail_finiteness_audit)

__version__ = "0.1.0"
