"""Interpretable fuzzy control policies from batch trajectory data.

Two learners share one model-based Monte Carlo fitness function: FPSRL
(particle swarm tuning of a fixed fuzzy rule structure, with a
mutual-information feature-selection front end) and FGPRL (strongly-typed
genetic programming over fuzzy policy trees, yielding a complexity/fitness
Pareto front with optional terminal tuning afterwards).
"""

from .data import StateNormalizer, TransitionDataset, generate_dataset
from .envs import (CartPoleSwingUp, DistractorEnvironment, DomainError,
                   Environment, make_env, with_distractors)
from .evolve import ArchiveEntry, EvolveResult, GpConfig, ParetoArchive, evolve
from .features import (FeatureRanking, OptimalPairSet, collect_optimal_pairs,
                       psop_action, rank_features)
from .fitness import (EvaluationError, FitnessConfig, FitnessEvaluator,
                      rollout_return, sample_start_states)
from .fuzzy import (DEFAULT_BOXES, FpsrlStructure, FuzzyPolicy, FuzzyRule,
                    MembershipClause, ParameterVector, PolicyBatch,
                    PolicyBoxes, StructureError, complexity_of_policy, decode,
                    encode, membership, policy_from_json, policy_output,
                    policy_to_json, rule_activation)
from .gp import (PolicyTree, TypeViolation, crossover, from_policy,
                 gaussian_mutate, interpret_tree, random_tree, structure_key,
                 to_policy, tree_correction, validate_tree)
from .models import ExactModel, KnnModel, SystemModel, holdout_rmse
from .pso import FpsrlResult, PsoResult, SwarmConfig, fpsrl_train, pso_maximize
from .tuning import TuneResult, tune_front, tune_terminals

__version__ = "0.1.0"
