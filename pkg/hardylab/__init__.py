from hardylab.errors import (
    ConfigurationError,
    DomainError,
    HardylabError,
    HypothesisViolation,
    ResolutionError,
    UsageError,
)
from hardylab.geometry import Geometry, SubsetMask, build_geometry, exhaustion, set_family
from hardylab.energy import CoefficientA, Problem, ScalarField, energy_Q, energy_gradient, picone_lagrangian
from hardylab.solvers import SolverOptions
from hardylab.capacity import VariationalResult, capacity, capacity_decay
from hardylab.hardy import HardyReport, best_constant, mazya_norm, sandwich_check
from hardylab.spectral import (
    SpectralProfile,
    attainment_run,
    constant_at_infinity,
    criticality_test,
    ground_state,
    local_constant,
    spectral_profile,
)
from hardylab.scenario import Scenario, build_problem, load_scenario
from hardylab.runner import ScenarioRunner
