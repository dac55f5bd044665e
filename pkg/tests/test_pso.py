import numpy as np
import pytest

from fuzzyrl import (FpsrlStructure, PolicyBatch, SwarmConfig, fpsrl_train,
                     pso_maximize)


def sphere(x):
    return -(x ** 2).sum(axis=1)


class RecordingObjective:
    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def __call__(self, x):
        self.calls.append(x.copy())
        return self.fn(x)


class TestPsoMaximize:
    def test_sphere_converges(self):
        cfg = SwarmConfig(swarm_size=50, iterations=200, seed=0)
        result = pso_maximize(sphere, -np.ones(5), np.ones(5), cfg)
        assert result.best_fitness >= -1e-3
        assert result.evaluations == 50 * 200

    def test_single_iteration_keeps_initial_positions(self):
        cfg = SwarmConfig(swarm_size=20, iterations=1, seed=1)
        objective = RecordingObjective(sphere)
        result = pso_maximize(objective, -np.ones(3), np.ones(3), cfg)
        assert len(objective.calls) == 1
        initial = objective.calls[0]
        best_row = int(np.argmax(sphere(initial)))
        assert np.array_equal(result.best_position, initial[best_row])
        assert np.array_equal(result.history[0].personal_best, sphere(initial))

    def test_constant_objective_never_replaces_bests(self):
        cfg = SwarmConfig(swarm_size=15, iterations=30, seed=2)
        objective = RecordingObjective(lambda x: np.zeros(len(x)))
        result = pso_maximize(objective, -np.ones(4), np.ones(4), cfg)
        initial = objective.calls[0]
        # strict improvement required: personal bests stay at initialization
        assert any(np.array_equal(result.best_position, row) for row in initial)
        for stats in result.history:
            assert np.array_equal(stats.personal_best, np.zeros(15))

    def test_monotone_personal_and_global_bests(self):
        cfg = SwarmConfig(swarm_size=30, iterations=80, seed=3)
        result = pso_maximize(sphere, -2 * np.ones(4), 2 * np.ones(4), cfg)
        prev = result.history[0]
        for stats in result.history[1:]:
            assert np.all(stats.personal_best >= prev.personal_best)
            assert stats.global_best >= prev.global_best
            prev = stats
        assert result.best_fitness == result.history[-1].global_best

    def test_positions_stay_bounded(self):
        lo = np.array([-1.0, 0.5, -3.0])
        hi = np.array([2.0, 1.5, -1.0])
        objective = RecordingObjective(lambda x: x.sum(axis=1))
        cfg = SwarmConfig(swarm_size=25, iterations=40, seed=4)
        result = pso_maximize(objective, lo, hi, cfg)
        for call in objective.calls:
            assert np.all(call >= lo) and np.all(call <= hi)
        assert np.all(result.best_position >= lo)
        assert np.all(result.best_position <= hi)

    def test_deterministic_trajectories(self):
        cfg = SwarmConfig(swarm_size=20, iterations=50, seed=5)
        a = pso_maximize(sphere, -np.ones(6), np.ones(6), cfg)
        b = pso_maximize(sphere, -np.ones(6), np.ones(6), cfg)
        assert np.array_equal(a.best_position, b.best_position)
        assert [s.global_best for s in a.history] == [s.global_best for s in b.history]

    def test_nonfinite_candidates_never_win(self):
        def partial_nan(x):
            out = sphere(x)
            return np.where(x[:, 0] > 0.4, np.nan, out)

        cfg = SwarmConfig(swarm_size=30, iterations=60, seed=6)
        result = pso_maximize(partial_nan, -np.ones(2), np.ones(2), cfg)
        assert np.isfinite(result.best_fitness)
        assert result.best_position[0] <= 0.4

    def test_init_positions_seed_the_swarm(self):
        cfg = SwarmConfig(swarm_size=10, iterations=1, seed=7)
        objective = RecordingObjective(sphere)
        seed_row = np.array([0.0, 0.0, 0.0])
        result = pso_maximize(objective, -np.ones(3), np.ones(3), cfg,
                              init_positions=seed_row[None, :])
        assert np.array_equal(objective.calls[0][0], seed_row)
        assert result.best_fitness == 0.0

    def test_global_topology(self):
        cfg = SwarmConfig(swarm_size=30, iterations=100, seed=8, topology="global")
        result = pso_maximize(sphere, -np.ones(4), np.ones(4), cfg)
        assert result.best_fitness >= -1e-2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SwarmConfig(swarm_size=1)
        with pytest.raises(ValueError):
            SwarmConfig(iterations=0)
        with pytest.raises(ValueError):
            SwarmConfig(topology="mesh")
        cfg = SwarmConfig()
        with pytest.raises(ValueError):
            pso_maximize(sphere, np.array([0.0, 1.0]), np.array([1.0, 1.0]), cfg)


class TestFpsrlTrain:
    def test_search_dimension_examples(self):
        assert FpsrlStructure(((0, 1, 2, 3),), (2,)).vector_length == 19
        three_action = FpsrlStructure(((0,), (1,), (2,)), (2, 2, 2))
        assert three_action.complexity == 99

    def test_feature_indices_validated(self, small_evaluator, cp_env):
        structure = FpsrlStructure(((0, 9),), (2,))
        with pytest.raises(ValueError):
            fpsrl_train(structure, small_evaluator, cp_env.action_low,
                        cp_env.action_high, SwarmConfig(swarm_size=4, iterations=2))

    def test_beats_random_baseline(self, small_evaluator, cp_env):
        structure = FpsrlStructure(((0, 1, 2, 3),), (2,))
        lo, hi = structure.search_box()
        rng = np.random.default_rng(9)
        x = lo + rng.uniform(size=(100, len(lo))) * (hi - lo)
        batch = PolicyBatch.from_param_matrix(x, structure, cp_env.action_low,
                                              cp_env.action_high)
        baseline = float(np.mean(small_evaluator.fitness_batch(batch)))
        result = fpsrl_train(structure, small_evaluator, cp_env.action_low,
                             cp_env.action_high,
                             SwarmConfig(swarm_size=25, iterations=40, seed=10))
        assert result.fitness > baseline

    def test_budget_and_history(self, small_evaluator, cp_env):
        before = small_evaluator.evaluations
        structure = FpsrlStructure(((0, 1),), (2,))
        result = fpsrl_train(structure, small_evaluator, cp_env.action_low,
                             cp_env.action_high,
                             SwarmConfig(swarm_size=10, iterations=15, seed=11))
        assert result.evaluations == 150
        assert small_evaluator.evaluations - before == 150
        assert [s.evaluations for s in result.history] == \
            [10 * (i + 1) for i in range(15)]

    def test_decoded_policy_matches_best_vector(self, small_evaluator, cp_env):
        from fuzzyrl import decode
        structure = FpsrlStructure(((0, 1, 2),), (2,))
        result = fpsrl_train(structure, small_evaluator, cp_env.action_low,
                             cp_env.action_high,
                             SwarmConfig(swarm_size=8, iterations=10, seed=12))
        rebuilt = decode(result.best_vector if hasattr(result, "best_vector")
                         else result.vector, structure,
                         cp_env.action_low, cp_env.action_high)
        assert rebuilt == result.policy
