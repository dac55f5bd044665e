import numpy as np
import pytest

from fuzzyrl import (GpConfig, evolve, random_tree, structure_key,
                     tune_front, tune_terminals)
from fuzzyrl.gp import Node, PolicyTree, RULE_END, VAR, POLICY, to_policy


def small_archive(evaluator, cp_env, seed):
    cfg = GpConfig(population=20, generations=2, max_rules=2, seed=seed)
    result = evolve(evaluator, 4, cp_env.action_low, cp_env.action_high, cfg)
    return result.archive.front()


class TestTuneTerminals:
    def test_zero_iterations_identity(self, small_evaluator, cp_env):
        rng = np.random.default_rng(0)
        tree = random_tree(rng, 4, cp_env.action_low, cp_env.action_high)
        tree.fitness = -12.5
        before = small_evaluator.evaluations
        result = tune_terminals(tree, small_evaluator, iterations=0)
        assert result.evaluations == 0
        assert small_evaluator.evaluations == before
        assert result.fitness == -12.5
        assert structure_key(result.tree) == structure_key(tree)
        from fuzzyrl.gp import terminal_values
        assert np.array_equal(terminal_values(result.tree)[0],
                              terminal_values(tree)[0])

    def test_no_terminals_identity(self, small_evaluator):
        degenerate = PolicyTree([Node(POLICY, [Node(RULE_END), Node(VAR, value=0)])],
                                (-30.0,), (30.0,))
        result = tune_terminals(degenerate, small_evaluator, iterations=5)
        assert result.evaluations == 0 and not result.improved

    def test_never_decreases_fitness(self, small_evaluator, cp_env):
        rng = np.random.default_rng(1)
        for k in range(10):
            tree = random_tree(rng, 4, cp_env.action_low, cp_env.action_high)
            base = small_evaluator.fitness(to_policy(tree))
            tree.fitness = base
            result = tune_terminals(tree, small_evaluator, swarm_size=8,
                                    iterations=6, seed=k)
            assert result.fitness >= base

    def test_structure_preserved(self, small_evaluator, cp_env):
        rng = np.random.default_rng(2)
        for k in range(100):
            tree = random_tree(rng, 4, cp_env.action_low, cp_env.action_high)
            tree.fitness = -50.0  # pessimistic cache so tuning accepts swaps
            result = tune_terminals(tree, small_evaluator, swarm_size=6,
                                    iterations=4, seed=k)
            assert structure_key(result.tree) == structure_key(tree)
            assert result.tree.complexity == tree.complexity

    def test_uses_cached_fitness_for_baseline(self, small_evaluator, cp_env):
        rng = np.random.default_rng(3)
        tree = random_tree(rng, 4, cp_env.action_low, cp_env.action_high)
        tree.fitness = 1.0  # unbeatable: rewards are never positive
        result = tune_terminals(tree, small_evaluator, swarm_size=6,
                                iterations=4, seed=0)
        assert not result.improved
        assert result.fitness == 1.0


class TestTuneFront:
    def test_contracts_across_seeded_archives(self, cp_env, cp_normalizer):
        from fuzzyrl import ExactModel, FitnessConfig, FitnessEvaluator, sample_start_states
        for seed in range(4):
            starts = sample_start_states(cp_env, 4, seed=seed)
            cfg = FitnessConfig(horizon=40, gamma=0.99, start_states=starts)
            evaluator = FitnessEvaluator(ExactModel(cp_env), cfg, cp_normalizer)
            front = small_archive(evaluator, cp_env, seed)
            before = {e.complexity: e.fitness for e in front}
            tuned = tune_front(front, evaluator, swarm_size=8, iterations=6,
                               seed=seed)
            assert len(tuned) <= len(front)
            comps = [e.complexity for e in tuned]
            fits = [e.fitness for e in tuned]
            assert comps == sorted(comps)
            assert fits == sorted(fits)
            for entry in tuned:
                assert entry.complexity in before
                assert entry.fitness >= before[entry.complexity] - 1e-15

    def test_empty_front_rejected(self, small_evaluator):
        with pytest.raises(ValueError):
            tune_front([], small_evaluator)

    def test_budget_counted(self, small_evaluator, cp_env):
        front = small_archive(small_evaluator, cp_env, 11)
        before = small_evaluator.evaluations
        tune_front(front, small_evaluator, swarm_size=5, iterations=4, seed=1)
        used = small_evaluator.evaluations - before
        assert used == len(front) * 5 * 4  # cached baselines: swarm evals only

    def test_worker_count_invariance(self, cp_env, cp_normalizer):
        from fuzzyrl import ExactModel, FitnessConfig, FitnessEvaluator, sample_start_states
        starts = sample_start_states(cp_env, 3, seed=21)
        cfg = FitnessConfig(horizon=25, gamma=0.99, start_states=starts)
        ev1 = FitnessEvaluator(ExactModel(cp_env), cfg, cp_normalizer)
        ev2 = FitnessEvaluator(ExactModel(cp_env), cfg, cp_normalizer)
        front1 = small_archive(ev1, cp_env, 22)
        front2 = small_archive(ev2, cp_env, 22)
        tuned1 = tune_front(front1, ev1, swarm_size=5, iterations=4, seed=2, workers=1)
        tuned2 = tune_front(front2, ev2, swarm_size=5, iterations=4, seed=2, workers=2)
        assert [(e.complexity, e.fitness) for e in tuned1] == \
            [(e.complexity, e.fitness) for e in tuned2]
        assert ev1.evaluations == ev2.evaluations
