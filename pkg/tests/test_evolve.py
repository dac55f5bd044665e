import numpy as np
import pytest

from fuzzyrl import GpConfig, ParetoArchive, evolve, random_tree


class TestGpConfig:
    def test_paper_ratio_counts(self):
        cfg = GpConfig(population=1000)
        assert cfg.counts() == (450, 50, 100, 400)

    def test_desk_ratio_counts(self):
        cfg = GpConfig(population=200)
        assert cfg.counts() == (90, 10, 20, 80)

    def test_odd_crossover_rounded_even(self):
        cfg = GpConfig(population=30)
        n_cross, n_rep, n_mut, n_rand = cfg.counts()
        assert n_cross % 2 == 0
        assert n_cross + n_rep + n_mut + n_rand == 30

    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GpConfig(crossover_frac=0.5, reproduction_frac=0.5,
                     mutation_frac=0.5, random_frac=0.5)

    def test_population_covers_tournament(self):
        with pytest.raises(ValueError):
            GpConfig(population=3, tournament_size=4)


class TestParetoArchive:
    def entry(self, complexity, fitness):
        rng = np.random.default_rng(complexity)
        tree = random_tree(rng, 4, [-30.0], [30.0], max_rules=1, max_dims=0)
        tree.fitness = fitness
        tree._complexity = complexity  # force the level for archive tests
        return tree

    def test_update_requires_strict_improvement(self):
        archive = ParetoArchive()
        assert archive.update(self.entry(12, -5.0), -5.0, 0)
        assert not archive.update(self.entry(12, -5.0), -5.0, 1)
        assert not archive.update(self.entry(12, -6.0), -6.0, 1)
        assert archive.update(self.entry(12, -4.0), -4.0, 2)
        assert archive.levels[12].generation_found == 2

    def test_front_is_strict_staircase(self):
        archive = ParetoArchive()
        for complexity, fitness in ((10, -8.0), (20, -8.0), (30, -3.0),
                                    (40, -5.0), (50, -2.0)):
            archive.update(self.entry(complexity, fitness), fitness, 0)
        front = archive.front()
        # equal fitness at higher complexity and dominated points are gone
        assert [(e.complexity, e.fitness) for e in front] == \
            [(10, -8.0), (30, -3.0), (50, -2.0)]
        comps = [e.complexity for e in front]
        fits = [e.fitness for e in front]
        assert comps == sorted(comps) and len(set(comps)) == len(comps)
        assert fits == sorted(fits) and len(set(fits)) == len(fits)

    def test_best_fitness_and_snapshot(self):
        archive = ParetoArchive()
        archive.update(self.entry(10, -9.0), -9.0, 0)
        archive.update(self.entry(25, -4.0), -4.0, 1)
        assert archive.best_fitness() == -4.0
        assert archive.snapshot() == {10: -9.0, 25: -4.0}


class TestEvolve:
    def run_small(self, evaluator, cp_env, generations=4, seed=0, population=30):
        cfg = GpConfig(population=population, generations=generations,
                       max_rules=3, seed=seed)
        return evolve(evaluator, 4, cp_env.action_low, cp_env.action_high, cfg)

    def test_zero_generations_base_case(self, small_evaluator, cp_env):
        result = self.run_small(small_evaluator, cp_env, generations=0)
        assert len(result.history) == 1
        assert result.evaluations == 30
        assert small_evaluator.evaluations == 30
        for entry in result.archive.levels.values():
            assert entry.generation_found == 0

    def test_audited_evaluations_match_counter(self, small_evaluator, cp_env):
        result = self.run_small(small_evaluator, cp_env)
        assert result.evaluations == small_evaluator.evaluations

    def test_evaluation_arithmetic(self, small_evaluator, cp_env):
        cfg = GpConfig(population=30, generations=3, max_rules=3, seed=1,
                       elite_copies=5)
        result = evolve(small_evaluator, 4, cp_env.action_low, cp_env.action_high, cfg)
        n_cross, n_rep, n_mut, n_rand = cfg.counts()
        new_per_gen = n_cross + n_mut + n_rand
        extra = result.evaluations - 30 - 3 * new_per_gen
        assert extra >= 0
        assert extra % cfg.elite_copies == 0  # elite copies come in fives

    def test_archive_levels_monotone_across_generations(self, small_evaluator, cp_env):
        result = self.run_small(small_evaluator, cp_env, generations=6)
        previous: dict = {}
        for stats in result.history:
            for level, fitness in stats.archive_levels.items():
                assert fitness >= previous.get(level, -np.inf) - 1e-15
            previous.update(stats.archive_levels)

    def test_front_nondominated(self, small_evaluator, cp_env):
        result = self.run_small(small_evaluator, cp_env)
        front = result.archive.front()
        assert front
        for a, b in zip(front, front[1:]):
            assert b.complexity > a.complexity
            assert b.fitness > a.fitness

    def test_deterministic_given_seed(self, cp_env, cp_normalizer):
        from fuzzyrl import ExactModel, FitnessConfig, FitnessEvaluator, sample_start_states
        outS = []
        for _ in range(2):
            starts = sample_start_states(cp_env, 4, seed=3)
            cfg = FitnessConfig(horizon=30, gamma=0.99, start_states=starts)
            evaluator = FitnessEvaluator(ExactModel(cp_env), cfg, cp_normalizer)
            result = self.run_small(evaluator, cp_env, seed=5)
            outS.append(result)
        a, b = outS
        assert a.archive.snapshot() == b.archive.snapshot()
        assert [s.best_fitness for s in a.history] == [s.best_fitness for s in b.history]
        assert a.evaluations == b.evaluations

    def test_all_population_corrected_and_capped(self, small_evaluator, cp_env):
        from fuzzyrl.gp import duplicate_variable_rules
        cfg = GpConfig(population=24, generations=3, max_rules=3,
                       complexity_cap=120, seed=7)
        result = evolve(small_evaluator, 4, cp_env.action_low,
                        cp_env.action_high, cfg)
        for tree in result.population:
            assert duplicate_variable_rules(tree) == 0
            assert tree.complexity <= 120
            assert tree.fitness is not None

    def test_best_fitness_nondecreasing(self, small_evaluator, cp_env):
        result = self.run_small(small_evaluator, cp_env, generations=6, seed=9)
        bests = [s.best_fitness for s in result.history]
        assert bests == sorted(bests)
