"""Multirate implicit Euler for two coupled subproblems.

Coupled ODEs, Nitsche-coupled heat equations and Nitsche-coupled
Taylor-Hood Stokes flow, each advancing on its own micro time partition
inside shared macro steps, plus the tooling to measure convergence.
"""
from .config import StudyConfig, parse_config
from .errors import (CannotPromote, ConfigError, ConstraintViolation, InvalidMesh,
                     IterationDiverged, MeshMismatch, MeshSizeError, MissingExact,
                     MultirateError, SingularMatrix)
from .heat import (HeatDiscretization, HeatProblem, ManufacturedSolution, assemble_heat_macro_step,
                   fast_slow_heat_1d, manufactured_heat_1d, solve_heat_transient)
from .linalg import Block, BlockSystem, DirectSolver, SparseMatrix, solve_direct
from .macrostep import MacroStepper, TransientTrajectory
from .ode import (CoupledODEProblem, fast_slow_problem, linear_test_problem,
                  ode_convergence_study, solve_multirate)
from .spacefem import (CoupledMesh, FEFunction, FESpace, build_coupled_mesh_1d,
                       build_two_pipe_mesh, norms, ritz_projection)
from .stokes import (StokesDiscretization, StokesProblem, StokesState, assemble_stokes_macro_step,
                     solve_stokes_transient, two_pipe_benchmark)
from .study import (ErrorRecord, RateTable, error_norms, observed_rates, reference_solution,
                    run_study)
from .timegrid import (MultirateMesh, PiecewiseConstantTimeFn, build_mesh, discrete_time_derivative,
                       endpoint_projection, macro_average, refine_micro, transfer_average,
                       uniform_mesh)

__version__ = "0.1.0"
