"""Von Karman plates with growth strain: 2D solver, Airy checks and 3D probes."""
from .airy import (airy_reconstruct, best_affine, boundary_residuals, build_stress,
                   el_residuals, lemma51_check)
from .energy2d import Displacement2D, EnergyEvaluator, energy_Ig, grad_energy_Ig
from .expr import FieldExpr, eval_expr, parse_expr
from .fields import Grid2, dist_SO3, read_csv, write_csv
from .growth import (GrowthField, assemble_ah, check_co1, check_co2, flatness_test, h_max,
                     lambda_g, make_compatible, omega_g, scaling_probe)
from .material import Material, q2, q2_via_min, q3, w_density
from .plate3d import (Deformation3D, Grid3, energy_Ih0, energy_IhW, gamma_limit_probe,
                      minimize3d, recovery_sequence, scaled_displacement, scaling_sweep)
from .solver2d import SolverConfig, gauge_fix, minimize, multistart

__version__ = "0.1.0"
