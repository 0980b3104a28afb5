"""Finite embeddings of countable-state average-cost MDPs.

A countable model is cut at a finite interior set Z; every excursion outside
Z is replaced by a single surrogate state per boundary state whose geometric
holding time and per-step cost reproduce the excursion's expected length and
cost.  The resulting finite MDP has the same optimal average cost.
"""

from .core import (CountableModel, Distribution, FiniteMdp, StationaryPolicy,
                   average_cost_of_policy, expected_hitting, hitting_solve, recurrent_classes,
                   stationary_distribution)
from .embedding import (EmbeddedMdp, OmegaAction, build_embedding, eliminate_dominated,
                        embedded_counterpart, extend_constrained, lift_policy, perturb_omega,
                        suggest_Z)
from .errors import *  # noqa: F401,F403
from .excursion import (ExcursionEstimate, ExcursionSummary, Truncation, analyze_excursion,
                        exterior_statistics, monte_carlo_excursion, skipfree_closed_form,
                        summarize_exits)
from .models import controlled_queue, explicit_table, random_unichain_mdp, reservoir
from .sim import SimEstimate, compare_embedded, simulate_average_cost
from .solver import (OccupationSolution, SolveResult, cycle_statistics, evaluate_cycle_ratio,
                     evaluate_policy, optimality_residual, policy_iteration,
                     relative_value_iteration, solve_constrained)
from .spec import ModelSpec, demo_spec, load_finite, load_spec
