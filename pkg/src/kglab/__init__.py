"""Numerical laboratory for the focusing nonlinear Klein-Gordon equation in radial symmetry."""

from .classifier import (EnergyMomentum, Verdict, bdK_probe, classify, k2_lower_bound_probe,
                         lorentz_boost, sign_independence_audit, zero_momentum_reduce)
from .errors import (BracketError, ConfigurationError, ConvergenceError, DomainError,
                     InconsistencyError, InputError, InstabilityError, InvariantViolation,
                     KGLabError, SaturationError)
from .evolution import EvolveConfig, evolve, free_evolve, mean_kinetic_split, step
from .functionals import (K0, KINF, ScalingPair, canonical_pairs, evaluate, k2_pair, K,
                          concentration_radius, exterior_energy, H_p)
from .grid import RadialGrid, RadialState, make_grid, sample, zero_state
from .ground_state import (GroundStateResult, certified_exp2d, check_ground_state, closed_form_W,
                           compute_m, minimax_check, shoot, tm_constant)
from .nonlinearity import CriticalPower, Exp2D, SubcriticalPower, assumption_audit, make_model

__version__ = "0.1.0"
