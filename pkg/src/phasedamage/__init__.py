"""Phase separation coupled to elasticity and unidirectional damage on 2-D grids.

The package discretizes a multicomponent Cahn-Hilliard system with
concentration-dependent elasticity and an irreversible damage variable by
bilinear finite elements and a staggered, energy-stable time stepper.
"""

__version__ = "0.1.0"

from .exceptions import (ConfigError, ConstraintViolationError, IrreversibilityError,
                         MassDriftError, NonConvergenceError, PhaseDamageError,
                         SimulationError, SingularSystemError, SnapshotFormatError)
from .mesh import Grid2D, State
from .energy import (ChemicalEnergy, DamageInterpolation, ElasticLawW1, ElasticLawW2,
                     EnergyBreakdown, MaterialParams, calibrated_w2, default_eigenstrains,
                     minimal_w2_offset, total_energy)
from .elasticity import ElasticSolveConfig, balance_residual, solve_displacement
from .damage import DamageStepConfig, damage_step, vi_residual
from .cahn_hilliard import CHStepConfig, ch_step
from .timeloop import (BoundaryProgram, DiagnosticsRecord, ForceProgram, GridSpec,
                       InitialData, Ramp, SimulationConfig, Tolerances, Trajectory,
                       energy_ledger_check, epsilon_sweep, run_simulation)
from .verify import audit_assumptions, audit_weak_solution, fd_gradient_check
from .io import (RunManifest, config_hash, parse_config, read_snapshot, read_trajectory,
                 write_snapshot, write_trajectory)

__all__ = [
    "__version__", "ConfigError", "ConstraintViolationError", "IrreversibilityError",
    "MassDriftError", "NonConvergenceError", "PhaseDamageError", "SimulationError",
    "SingularSystemError", "SnapshotFormatError", "Grid2D", "State", "ChemicalEnergy",
    "DamageInterpolation", "ElasticLawW1", "ElasticLawW2", "EnergyBreakdown",
    "MaterialParams", "calibrated_w2", "default_eigenstrains", "minimal_w2_offset",
    "total_energy", "ElasticSolveConfig", "balance_residual", "solve_displacement",
    "DamageStepConfig", "damage_step", "vi_residual", "CHStepConfig", "ch_step",
    "BoundaryProgram", "DiagnosticsRecord", "ForceProgram", "GridSpec", "InitialData",
    "Ramp", "SimulationConfig", "Tolerances", "Trajectory", "energy_ledger_check",
    "epsilon_sweep", "run_simulation", "audit_assumptions", "audit_weak_solution",
    "fd_gradient_check", "RunManifest", "config_hash", "parse_config", "read_snapshot",
    "read_trajectory", "write_snapshot", "write_trajectory",
]
