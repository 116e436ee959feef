"""Set-valued modelling of simultaneous inelastic frictional impacts.

Scenes are described by contact Jacobians and a mass matrix at a frozen
configuration.  Impacts are resolved by integrating a differential
inclusion under explicit impulse-sequencing strategies, and the spread of
reachable post-impact velocities is sampled.
"""
from .analysis import (DegenerateAt, DissipationReport, LikelyNonDegenerate, MinNormResult,
                       ReductionResult, check_dissipation, check_nondegenerate, kinetic_energy,
                       min_norm_in_force_set, reduce_to_minimal)
from .core import (DEFAULT_TOL, Classification, Contact, ContactProblem, ContactStatus, Disc,
                   ForceSetDescriptor, GlobalStatus, NormalizedProblem, Point, as_normalized,
                   classify, derivative_set, euler_inclusion, force_single, net_force_set,
                   normalize, unit_set)
from .errors import (DimensionMismatch, EmptyActiveSet, ImpactSetError, InternalError,
                     NoActiveContact, NonTermination, NotPenetrating, NotSPD, SchemaError)
from .inclusion import (DirichletRandom, FixedWeights, HoldIfFeasible, OutcomePoint, OutcomeSet,
                        RandomInDisc, Selection, SelectionStrategy, Sequential, Simultaneous,
                        StrategyFamily, Switched, Trajectory, VertexRandom, integrate,
                        parse_strategy, safeguard_horizon, sample_outcomes, select)
from .routh import (Phase, SingleImpactResult, norm_equivalence_constant, resolve_single,
                    resolve_single_planar, termination_bound_single)
from .scenarios import (Scene, box_push_strategies, build_box_push, build_opposing_normals,
                        build_rimless_wheel, load_scene, parse_scene, random_scene,
                        serialize_scene, write_fixtures)

__version__ = "0.1.0"
