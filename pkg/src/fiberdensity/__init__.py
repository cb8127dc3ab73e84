"""Finite-model toolkit for fiberwise approximation, envelope topologies and dyadic covers."""
from .errors import (BudgetUnreachable, ConfigurationError, FiberDensityError, HypothesisViolation,
                     LevelTooCoarse, PreconditionViolation, ResolutionError)
from .spaces import FiberedMap, FiberedSystem, FiniteSpace, WeightedMeasure, make_system
from .functions import BaseAlgebra, PullbackModule, SampledFunction, pullback, sup_norm
from .cheb import cheb_best_approx, envelope_feasible
from .localization import construct_approximant, localize_distance, preflight
from .envelope import (RiemannIntegrableDescriptor, check_certificate, closure_membership,
                       closure_threshold, main_theorem_pipeline, membership_U_eps)
from .boxcover import CompactRegion, NeighborhoodFamily, TorusQuotient, build_cover, verify_cover
from .density import MeasureSequence, transfer_convergence, verify_bad_set_estimates
from .obstruction import build_fixture, contradiction_replay, infeasibility_threshold
from .avoidance import AvoidanceInstance, find_regular_vector

__version__ = "0.1.0"
