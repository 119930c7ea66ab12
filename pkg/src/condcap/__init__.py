"""Capacities of discretized signed condensers by constrained energy minimization."""
__version__ = "0.1.0"

from .kernels import KernelError, KernelMatrix, KernelSpec, assemble_matrix, eval_kernel, kernel_block, pd_certificate
from .condenser import (BallVolume, Constant, CondenserError, DiscreteCondenser, ExplicitPoints, PlateSpec,
                        RadialPolynomial, Segment, SphereShell, discretize, exhaustion_sequence, is_nested,
                        shell_row_family, truncate_family, validate)
from .measures import CondenserMeasure, energy, mutual_energy, plate_masses, potentials
from .solver import SolveOptions, SolveResult, SolverError, brute_force_oracle, project_scaled_simplex, solve_min_energy
from .capacity import (CapacityReport, build_report, exhaustion_study, family_positivity_study, solve_capacity,
                       verify_characterization, verify_duality, verify_frostman)
