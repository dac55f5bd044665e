import pytest

from fuzzyrl import (CartPoleSwingUp, ExactModel, FitnessConfig,
                     FitnessEvaluator, generate_dataset, sample_start_states)


@pytest.fixture(scope="session")
def cp_env():
    return CartPoleSwingUp()


@pytest.fixture(scope="session")
def cp_dataset(cp_env):
    return generate_dataset(cp_env, n_traj=20, traj_len=50, seed=101)


@pytest.fixture(scope="session")
def cp_normalizer(cp_dataset):
    return cp_dataset.normalizer()


@pytest.fixture()
def small_evaluator(cp_env, cp_normalizer):
    """Exact-model evaluator with a light rollout budget for engine tests."""
    starts = sample_start_states(cp_env, 6, seed=7)
    config = FitnessConfig(horizon=60, gamma=0.99, start_states=starts)
    return FitnessEvaluator(ExactModel(cp_env), config, cp_normalizer)


def random_policy_batch(rng, structure, action_low, action_high, n):
    from fuzzyrl import PolicyBatch
    lo, hi = structure.search_box()
    x = lo + rng.uniform(size=(n, len(lo))) * (hi - lo)
    return PolicyBatch.from_param_matrix(x, structure, action_low, action_high)
