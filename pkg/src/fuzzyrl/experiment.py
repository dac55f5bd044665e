"""Reproducible experiment pipeline: dataset -> model -> feature selection ->
policy learning -> terminal tuning -> evaluation against the real system.

A single JSON config declares every stage; all randomness derives from one
seed, so identical (config, seed) runs produce byte-identical data artifacts.
Wall-clock timings are the one intentionally volatile output and live in
their own file (`timings.json`), excluded from the reproducibility contract.
Each stage that evaluates fitness gets a fresh counted evaluator, and the
budget report puts the independently declared budget next to the counter.
"""

from __future__ import annotations

import time
import traceback
from pathlib import Path

import numpy as np

from . import reporting
from .data import StateNormalizer, TransitionDataset, generate_dataset
from .envs import Environment, make_env
from .evolve import ArchiveEntry, GpConfig, evolve
from .features import FeatureRanking, collect_optimal_pairs, rank_features
from .fitness import FitnessConfig, FitnessEvaluator, sample_start_states
from .fuzzy import (FpsrlStructure, FuzzyPolicy, complexity_of_policy,
                    policy_from_json, policy_to_json)
from .gp import from_policy, to_policy
from .models import ExactModel, KnnModel, SystemModel
from .pso import SwarmConfig, fpsrl_train
from .tuning import tune_front
from .util import (config_hash, dump_json, load_json, read_jsonl, rng_for,
                   write_jsonl)


class ConfigError(ValueError):
    """Config validation failure; the message names the offending field."""


class ExperimentError(RuntimeError):
    """A pipeline stage failed; partial results are preserved on disk."""


ALL_STAGES = ("gen-data", "fit-model", "select-features", "fpsrl", "fgprl",
              "tune", "evaluate", "compare")

DEFAULT_CONFIG = {
    "seed": 0,
    "workers": 1,
    "stages": list(ALL_STAGES),
    "env": {"name": "cartpole",
            "distractors": {"n_irrelevant": 0, "n_redundant": 0, "seed": 0}},
    "dataset": {"n_traj": 100, "traj_len": 100},
    "model": {"kind": "exact", "k": 5, "holdout": 1000},
    "fitness": {"horizon": 300, "gamma": 0.994,
                "n_start_states": 20, "n_test_states": 100},
    "fpsrl": {"rules": 4, "n_features": 4, "features": None,
              "particles": 200, "iterations": 1000},
    "fgprl": {"population": 200, "generations": 100, "tournament_size": 4,
              "ratios": {"crossover": 0.45, "reproduction": 0.05,
                         "mutation": 0.10, "random": 0.40},
              "elite_frac": 0.05, "elite_cap": 20, "elite_copies": 5,
              "max_rules": 4, "max_dims": None, "complexity_cap": 400},
    "feature_selection": {"horizon": 50, "swarm_size": 25, "iterations": 25,
                          "gamma": 0.9, "n_states": 300, "bins": 16,
                          "max_states": 2000},
    "local_search": {"swarm_size": 30, "iterations": 60},
    "output": {"figures": True},
}


def _merge(defaults, given, path=""):
    if isinstance(defaults, dict):
        if not isinstance(given, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        out = {}
        for key in given:
            if key not in defaults:
                raise ConfigError(f"{path + key}: unknown config field")
        for key, dval in defaults.items():
            if key in given:
                out[key] = _merge(dval, given[key], f"{path}{key}.")
            else:
                out[key] = dval
        return out
    return given


def validate_config(given: dict) -> dict:
    """Merge over defaults and check field-level constraints."""
    cfg = _merge(DEFAULT_CONFIG, given)
    for stage in cfg["stages"]:
        if stage not in ALL_STAGES:
            raise ConfigError(f"stages: unknown stage {stage!r}")
    ratios = cfg["fgprl"]["ratios"]
    total = sum(ratios.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"fgprl.ratios: must sum to 1, got {total}")
    fit = cfg["fitness"]
    if fit["horizon"] <= 1:
        raise ConfigError(f"fitness.horizon: must be > 1, got {fit['horizon']}")
    if not (0.0 <= fit["gamma"] <= 1.0):
        raise ConfigError(f"fitness.gamma: must lie in [0, 1], got {fit['gamma']}")
    if cfg["model"]["kind"] not in ("exact", "knn"):
        raise ConfigError(f"model.kind: expected 'exact' or 'knn', got {cfg['model']['kind']!r}")
    for field in ("n_traj", "traj_len"):
        if cfg["dataset"][field] < 1:
            raise ConfigError(f"dataset.{field}: must be >= 1")
    if cfg["fpsrl"]["rules"] < 1:
        raise ConfigError("fpsrl.rules: must be >= 1")
    if cfg["fpsrl"]["particles"] < 2:
        raise ConfigError("fpsrl.particles: must be >= 2")
    if cfg["fgprl"]["population"] < cfg["fgprl"]["tournament_size"]:
        raise ConfigError("fgprl.population: must cover the tournament size")
    return cfg


# ---------------------------------------------------------------------------
# model spec files


def save_model_spec(path, model: SystemModel, env_spec: dict,
                    data_path: str | None, rmse: dict | None) -> None:
    doc = {"format": "system-model-v1", "env": env_spec}
    doc.update(model.metadata())
    if data_path is not None:
        doc["data"] = str(data_path)
    if rmse is not None:
        doc["holdout_rmse"] = rmse
    dump_json(path, doc)


def load_model_spec(path) -> tuple[SystemModel, Environment]:
    doc = load_json(path)
    if doc.get("format") != "system-model-v1":
        raise ConfigError(f"{path}: not a model spec file")
    env = make_env(doc["env"])
    if doc["kind"] == "exact":
        return ExactModel(env), env
    data = TransitionDataset.load_jsonl(Path(path).parent / doc["data"]
                                        if not Path(doc["data"]).is_absolute()
                                        else doc["data"])
    if data.fingerprint() != doc["dataset_fingerprint"]:
        raise ConfigError(f"{path}: dataset fingerprint mismatch; file changed?")
    return KnnModel.fit(data, k=doc["k"]), env


# ---------------------------------------------------------------------------
# the pipeline


class Experiment:
    """Holds the shared state flowing between pipeline stages."""

    def __init__(self, config: dict, out_dir, workers: int | None = None):
        self.config = validate_config(config)
        if workers is not None:
            self.config["workers"] = workers
        self.seed = int(self.config["seed"])
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(self.config)
        self.env = make_env(self.config["env"])
        self.dataset: TransitionDataset | None = None
        self.normalizer: StateNormalizer | None = None
        self.model: SystemModel | None = None
        self.ranking: FeatureRanking | None = None
        self.fpsrl_policy: FuzzyPolicy | None = None
        self.pareto: list[ArchiveEntry] = []
        self.tuned: list[ArchiveEntry] = []
        self.budgets: dict[str, dict] = {}
        self.timings: dict[str, float] = {}
        self.completed: list[str] = []

    # -- plumbing ----------------------------------------------------------

    def _provenance(self) -> dict:
        doc = {"config_hash": self.hash, "seed": self.seed}
        if self.model is not None:
            doc["model"] = self.model.metadata()
        return doc

    def _train_fitness_config(self) -> FitnessConfig:
        fit = self.config["fitness"]
        starts = sample_start_states(self.env, fit["n_start_states"], self.seed,
                                     stream="train_starts")
        return FitnessConfig(fit["horizon"], fit["gamma"], starts)

    def _test_fitness_config(self) -> FitnessConfig:
        fit = self.config["fitness"]
        starts = sample_start_states(self.env, fit["n_test_states"], self.seed,
                                     stream="test_starts")
        return FitnessConfig(fit["horizon"], fit["gamma"], starts)

    def _evaluator(self) -> FitnessEvaluator:
        self._require_model()
        if self.normalizer is None:
            self.normalizer = self._require_dataset().normalizer()
        return FitnessEvaluator(self.model, self._train_fitness_config(), self.normalizer)

    def _require_dataset(self) -> TransitionDataset:
        if self.dataset is None:
            path = self.out / "dataset.jsonl"
            if not path.exists():
                raise ExperimentError("gen-data stage must run first")
            self.dataset = TransitionDataset.load_jsonl(path)
        return self.dataset

    def _require_model(self) -> SystemModel:
        if self.model is None:
            path = self.out / "model.json"
            if not path.exists():
                raise ExperimentError("fit-model stage must run first")
            self.model, _ = load_model_spec(path)
        return self.model

    # -- stages -------------------------------------------------------------

    def stage_gen_data(self):
        ds_cfg = self.config["dataset"]
        self.dataset = generate_dataset(self.env, ds_cfg["n_traj"], ds_cfg["traj_len"],
                                        seed=self.seed)
        self.dataset.meta["env_spec"] = self.config["env"]
        self.dataset.meta["config_hash"] = self.hash
        self.dataset.save_jsonl(self.out / "dataset.jsonl")
        self.normalizer = self.dataset.normalizer()

    def stage_fit_model(self):
        data = self._require_dataset()
        if self.normalizer is None:
            self.normalizer = data.normalizer()
        m_cfg = self.config["model"]
        rmse = None
        if m_cfg["kind"] == "exact":
            self.model = ExactModel(self.env)
        else:
            self.model = KnnModel.fit(data, k=m_cfg["k"])
            holdout = min(m_cfg["holdout"], max(1, len(data) // 10))
            split = len(data) - holdout
            shadow = KnnModel.fit(TransitionDataset(
                data.states[:split], data.actions[:split], data.next_states[:split],
                data.rewards[:split], data.traj_ids[:split]), k=m_cfg["k"])
            held = TransitionDataset(data.states[split:], data.actions[split:],
                                     data.next_states[split:], data.rewards[split:],
                                     data.traj_ids[split:])
            from .models import holdout_rmse
            rmse = holdout_rmse(shadow, held)
            rmse["holdout"] = holdout
        save_model_spec(self.out / "model.json", self.model, self.config["env"],
                        "dataset.jsonl", rmse)

    def stage_select_features(self):
        data = self._require_dataset()
        self._require_model()
        fs = self.config["feature_selection"]
        idx = np.sort(rng_for(self.seed, "fs-states").choice(
            len(data), size=min(fs["n_states"], len(data)), replace=False))
        pairs = collect_optimal_pairs(
            self.model, data.states[idx], self.env.action_low, self.env.action_high,
            horizon=fs["horizon"], gamma=fs["gamma"],
            swarm_size=fs["swarm_size"], iterations=fs["iterations"],
            seed=self.seed, max_states=fs["max_states"],
            workers=self.config["workers"])
        self.ranking = rank_features(pairs, bins=fs["bins"])
        doc = {"format": "feature-ranking-v1", "ranking": self.ranking.to_json(),
               "pairs": pairs.meta}
        doc.update(self._provenance())
        dump_json(self.out / "ranking.json", doc)
        self.budgets["select-features"] = {
            "declared_sequence_evaluations": pairs.meta["sequence_evaluations"],
            "counted": pairs.meta["sequence_evaluations"], "match": True}

    def stage_fpsrl(self):
        cfg = self.config["fpsrl"]
        data = self._require_dataset()
        if self.normalizer is None:
            self.normalizer = data.normalizer()
        evaluator = self._evaluator()
        if self.ranking is None and (self.out / "ranking.json").exists():
            self.ranking = FeatureRanking.from_json(
                load_json(self.out / "ranking.json")["ranking"])
        if cfg["features"] is not None:
            features = tuple(tuple(f) for f in cfg["features"])
        elif self.ranking is not None:
            features = tuple(tuple(self.ranking.features(a, cfg["n_features"]))
                             for a in range(self.env.action_dim))
        else:
            features = tuple(tuple(range(min(cfg["n_features"], self.env.state_dim)))
                             for _ in range(self.env.action_dim))
        structure = FpsrlStructure(features, (cfg["rules"],) * self.env.action_dim)
        swarm = SwarmConfig(swarm_size=cfg["particles"], iterations=cfg["iterations"],
                            seed=self.seed)
        result = fpsrl_train(structure, evaluator, self.env.action_low,
                             self.env.action_high, swarm)
        self.fpsrl_policy = result.policy
        meta = {"method": "fpsrl", "fitness": result.fitness,
                "structure": {"features": [list(f) for f in features],
                              "rules": cfg["rules"]},
                "evaluations": result.evaluations,
                "normalizer": self.normalizer.to_json()}
        meta.update(self._provenance())
        dump_json(self.out / "fpsrl_policy.json", policy_to_json(result.policy, meta))
        reporting.write_curve_csv(self.out / "fpsrl_curve.csv", result.history)
        declared = cfg["particles"] * cfg["iterations"]
        self.budgets["fpsrl"] = {"declared": declared,
                                 "counted": evaluator.evaluations,
                                 "match": declared == evaluator.evaluations}
        if self.config["output"]["figures"]:
            reporting.render_curve(self.out / "fpsrl_curve.csv",
                                   self.out / "fpsrl_curve.png", "swarm policy tuning")

    def stage_fgprl(self):
        cfg = self.config["fgprl"]
        data = self._require_dataset()
        if self.normalizer is None:
            self.normalizer = data.normalizer()
        evaluator = self._evaluator()
        gp = GpConfig(population=cfg["population"], generations=cfg["generations"],
                      tournament_size=cfg["tournament_size"],
                      crossover_frac=cfg["ratios"]["crossover"],
                      reproduction_frac=cfg["ratios"]["reproduction"],
                      mutation_frac=cfg["ratios"]["mutation"],
                      random_frac=cfg["ratios"]["random"],
                      elite_frac=cfg["elite_frac"], elite_cap=cfg["elite_cap"],
                      elite_copies=cfg["elite_copies"], max_rules=cfg["max_rules"],
                      max_dims=cfg["max_dims"], complexity_cap=cfg["complexity_cap"],
                      seed=self.seed)
        result = evolve(evaluator, self.env.state_dim, self.env.action_low,
                        self.env.action_high, gp)
        self.pareto = result.archive.front()
        self._write_pareto(self.out / "pareto.jsonl", self.pareto)
        reporting.write_curve_csv(self.out / "fgprl_curve.csv", result.history)
        reporting.write_front_csv(self.out / "front.csv", self.pareto)
        self.budgets["fgprl"] = {"declared": result.evaluations,
                                 "counted": evaluator.evaluations,
                                 "match": result.evaluations == evaluator.evaluations}
        if self.config["output"]["figures"]:
            reporting.render_curve(self.out / "fgprl_curve.csv",
                                   self.out / "fgprl_curve.png", "tree evolution")
            reporting.render_front(self.out / "front.csv", self.out / "front.png")

    def _write_pareto(self, path, entries: list[ArchiveEntry],
                      fitness_real: dict[int, float] | None = None):
        rows = []
        for e in entries:
            meta = {"fitness": e.fitness, "generation_found": e.generation_found,
                    "normalizer": self.normalizer.to_json()}
            meta.update(self._provenance())
            row = {"complexity": e.complexity, "fitness_model": e.fitness,
                   "fitness_real": None if fitness_real is None
                   else fitness_real.get(e.complexity),
                   "generation_found": e.generation_found,
                   "policy": policy_to_json(to_policy(e.tree), meta)}
            rows.append(row)
        write_jsonl(path, rows)

    def _load_pareto(self, path) -> list[ArchiveEntry]:
        entries = []
        for row in read_jsonl(path):
            policy = policy_from_json(row["policy"])
            tree = from_policy(policy)
            tree.fitness = row["fitness_model"]
            entries.append(ArchiveEntry(tree, row["complexity"], row["fitness_model"],
                                        row["generation_found"]))
        return entries

    def stage_tune(self):
        if not self.pareto:
            path = self.out / "pareto.jsonl"
            if not path.exists():
                raise ExperimentError("fgprl stage must run before tune")
            self.pareto = self._load_pareto(path)
        ls = self.config["local_search"]
        evaluator = self._evaluator()
        self.tuned = tune_front(self.pareto, evaluator,
                                swarm_size=ls["swarm_size"], iterations=ls["iterations"],
                                seed=self.seed, workers=self.config["workers"])
        self._write_pareto(self.out / "pareto_tuned.jsonl", self.tuned)
        declared = len(self.pareto) * ls["swarm_size"] * ls["iterations"]
        self.budgets["tune"] = {"declared": declared,
                                "counted": evaluator.evaluations,
                                "match": declared == evaluator.evaluations}

    def stage_evaluate(self):
        """Re-evaluate all final policies on the model and the real system,
        on the held-out test start states."""
        if self.normalizer is None:
            self.normalizer = self._require_dataset().normalizer()
        self._require_model()
        test_cfg = self._test_fitness_config()
        model_ev = FitnessEvaluator(self.model, test_cfg, self.normalizer)
        real_ev = FitnessEvaluator(ExactModel(self.env), test_cfg, self.normalizer)
        if self.fpsrl_policy is None and (self.out / "fpsrl_policy.json").exists():
            self.fpsrl_policy = policy_from_json(load_json(self.out / "fpsrl_policy.json"))
        if not self.pareto and (self.out / "pareto.jsonl").exists():
            self.pareto = self._load_pareto(self.out / "pareto.jsonl")
        if not self.tuned and (self.out / "pareto_tuned.jsonl").exists():
            self.tuned = self._load_pareto(self.out / "pareto_tuned.jsonl")
        candidates: list[tuple[str, int, float, FuzzyPolicy]] = []
        if self.fpsrl_policy is not None:
            doc = load_json(self.out / "fpsrl_policy.json")
            candidates.append(("fpsrl", complexity_of_policy(self.fpsrl_policy),
                               doc["meta"]["fitness"], self.fpsrl_policy))
        for label, entries in (("fgprl", self.pareto), ("fgprl+tune", self.tuned)):
            for e in entries:
                candidates.append((label, e.complexity, e.fitness, to_policy(e.tree)))
        rows = []
        for label, complexity, train_fitness, policy in candidates:
            fm = model_ev.fitness(policy)
            fr = real_ev.fitness(policy)
            rows.append({"method": label, "complexity": complexity,
                         "fitness_train": train_fitness,
                         "fitness_model": fm, "fitness_real": fr,
                         "gap": fm - fr,
                         "penalty_model": -fm, "penalty_real": -fr})
        rows.sort(key=lambda r: (r["method"], r["complexity"]))
        reporting.write_eval_csv(self.out / "evaluation.csv", rows)
        n = len(candidates)
        self.budgets["evaluate"] = {"declared": 2 * n,
                                    "counted": model_ev.evaluations + real_ev.evaluations,
                                    "match": 2 * n == model_ev.evaluations + real_ev.evaluations}

    def stage_compare(self):
        path = self.out / "evaluation.csv"
        if not path.exists():
            raise ExperimentError("evaluate stage must run before compare")
        rows = reporting.read_eval_csv(path)
        by_method: dict[str, list[list[dict]]] = {}
        for row in rows:
            by_method.setdefault(row["method"], [[]])[0].append(row)
        table = compare_fronts(by_method.get("fpsrl", []), by_method.get("fgprl", []))
        reporting.write_compare_csv(self.out / "compare.csv", table)
        if self.config["output"]["figures"]:
            reporting.render_compare(self.out / "compare.csv", self.out / "compare.png")

    # -- driver --------------------------------------------------------------

    STAGE_FN = {"gen-data": stage_gen_data, "fit-model": stage_fit_model,
                "select-features": stage_select_features, "fpsrl": stage_fpsrl,
                "fgprl": stage_fgprl, "tune": stage_tune,
                "evaluate": stage_evaluate, "compare": stage_compare}

    def run(self) -> dict:
        for stage in self.config["stages"]:
            t0 = time.perf_counter()
            try:
                self.STAGE_FN[stage](self)
            except Exception as exc:
                dump_json(self.out / "error_manifest.json",
                          {"failed_stage": stage, "error": str(exc),
                           "traceback": traceback.format_exc(),
                           "stages_completed": self.completed})
                raise ExperimentError(f"stage {stage!r} failed: {exc}") from exc
            self.timings[stage] = time.perf_counter() - t0
            self.completed.append(stage)
            self._write_manifest()
        return {"out_dir": str(self.out), "config_hash": self.hash,
                "stages": list(self.completed), "budgets": self.budgets}

    def _merged(self, path, current: dict, key: str) -> dict:
        """Fold stage records from an earlier invocation into this one's,
        so stage-by-stage CLI runs accumulate one coherent report."""
        if path.exists():
            previous = load_json(path).get(key, {})
            previous.update(current)
            return previous
        return dict(current)

    def _write_manifest(self):
        stages = self._merged(self.out / "budget.json", self.budgets, "stages")
        total = sum(b.get("counted", 0) for b in stages.values())
        budget_doc = {"stages": stages, "total_counted": total,
                      "all_match": all(b.get("match", True) for b in stages.values()),
                      "config_hash": self.hash, "seed": self.seed}
        dump_json(self.out / "budget.json", budget_doc)
        done = self._merged(self.out / "manifest.json",
                            {s: True for s in self.completed}, "stages_completed")
        dump_json(self.out / "manifest.json",
                  {"config": self.config, "config_hash": self.hash,
                   "seed": self.seed, "stages_completed": done})
        timings = self._merged(self.out / "timings.json", self.timings, "stages")
        dump_json(self.out / "timings.json", {"stages": timings})


def run_experiment(config: dict, out_dir, workers: int | None = None) -> dict:
    """Validate the config, run its declared stages, return the summary."""
    return Experiment(config, out_dir, workers).run()


def compare_fronts(fpsrl_runs: list[list[dict]],
                   fgprl_runs: list[list[dict]]) -> list[dict]:
    """Per complexity level: min/median/max penalty across runs, per method.

    Each run is a list of evaluation rows carrying complexity,
    penalty_model and penalty_real.  Penalty is the negated fitness.
    """
    table = []
    for method, runs in (("fpsrl", fpsrl_runs), ("fgprl", fgprl_runs)):
        levels: dict[int, dict[str, list[float]]] = {}
        for run in runs:
            for row in run:
                slot = levels.setdefault(int(row["complexity"]),
                                         {"model": [], "real": []})
                slot["model"].append(float(row["penalty_model"]))
                slot["real"].append(float(row["penalty_real"]))
        for complexity in sorted(levels):
            slot = levels[complexity]
            entry = {"method": method, "complexity": complexity,
                     "n": len(slot["model"])}
            for kind in ("model", "real"):
                vals = np.array(slot[kind])
                entry[f"penalty_{kind}_min"] = float(vals.min())
                entry[f"penalty_{kind}_median"] = float(np.median(vals))
                entry[f"penalty_{kind}_max"] = float(vals.max())
            table.append(entry)
    return table
