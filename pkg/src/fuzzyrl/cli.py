"""Command-line pipeline runner.

Every subcommand executes one pipeline stage against an output directory;
stages communicate through the files they leave there (dataset.jsonl,
model.json, ranking.json, policy and Pareto documents, CSV reports), so a
full experiment can be driven stage by stage or all at once with `run`.
Flags overlay the optional --config file, which overlays the documented
defaults.
"""

from __future__ import annotations

import json
import sys

import click

from .experiment import Experiment, run_experiment
from .util import load_json


def _base_config(config_path) -> dict:
    return load_json(config_path) if config_path else {}


def _overlay(cfg: dict, section: str, **values) -> dict:
    given = {k: v for k, v in values.items() if v is not None}
    if given:
        cfg.setdefault(section, {}).update(given)
    return cfg


def _run_stage(stage: str, config: dict, out_dir, seed, workers):
    if seed is not None:
        config["seed"] = seed
    if workers is not None:
        config["workers"] = workers
    config["stages"] = [stage]
    summary = Experiment(config, out_dir).run()
    click.echo(json.dumps({"stage": stage, **summary}, default=str))


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="Base config JSON (flags override it).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed.")(fn)
    fn = click.option("--workers", type=int, default=None,
                      help="Parallel workers for per-item loops.")(fn)
    fn = click.option("--out-dir", required=True, type=click.Path(),
                      help="Run directory holding all artifacts.")(fn)
    return fn


@click.group()
def main():
    """Learn interpretable fuzzy control policies from batch trajectory data."""


@main.command("gen-data")
@common_options
@click.option("--n-traj", type=int, default=None, help="Number of trajectories.")
@click.option("--traj-len", type=int, default=None, help="Steps per trajectory.")
@click.option("--n-irrelevant", type=int, default=None,
              help="Irrelevant distractor channels appended to the state.")
@click.option("--n-redundant", type=int, default=None,
              help="Redundant (noisy-copy) channels appended to the state.")
def gen_data(config_path, seed, workers, out_dir, n_traj, traj_len,
             n_irrelevant, n_redundant):
    """Generate a random-exploration transition dataset (JSON lines)."""
    cfg = _base_config(config_path)
    _overlay(cfg, "dataset", n_traj=n_traj, traj_len=traj_len)
    if n_irrelevant is not None or n_redundant is not None:
        env = cfg.setdefault("env", {"name": "cartpole"})
        dis = env.setdefault("distractors", {})
        if n_irrelevant is not None:
            dis["n_irrelevant"] = n_irrelevant
        if n_redundant is not None:
            dis["n_redundant"] = n_redundant
    _run_stage("gen-data", cfg, out_dir, seed, workers)


@main.command("fit-model")
@common_options
@click.option("--kind", type=click.Choice(["exact", "knn"]), default=None)
@click.option("--k", type=int, default=None, help="Neighbor count for the knn model.")
def fit_model(config_path, seed, workers, out_dir, kind, k):
    """Fit the surrogate system model and write its spec + quality report."""
    cfg = _base_config(config_path)
    _overlay(cfg, "model", kind=kind, k=k)
    _run_stage("fit-model", cfg, out_dir, seed, workers)


@main.command("select-features")
@common_options
@click.option("--horizon", type=int, default=None, help="Receding-horizon length.")
@click.option("--swarm-size", type=int, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--n-states", type=int, default=None, help="Dataset states to solve.")
@click.option("--bins", type=int, default=None, help="Histogram bins for MI.")
@click.option("--full-states", is_flag=True, default=False,
              help="Solve every dataset state (no subsampling cap).")
def select_features(config_path, seed, workers, out_dir, horizon, swarm_size,
                    iterations, n_states, bins, full_states):
    """Rank state features per action dimension (mutual information)."""
    cfg = _base_config(config_path)
    _overlay(cfg, "feature_selection", horizon=horizon, swarm_size=swarm_size,
             iterations=iterations, n_states=n_states, bins=bins)
    if full_states:
        cfg.setdefault("feature_selection", {})["max_states"] = None
        cfg["feature_selection"].setdefault("n_states", 10 ** 9)
    _run_stage("select-features", cfg, out_dir, seed, workers)


def _parse_features(text: str | None):
    if text is None:
        return None
    return [[int(tok) for tok in part.split(",") if tok.strip() != ""]
            for part in text.split(";")]


@main.command("fpsrl")
@common_options
@click.option("--rules", type=int, default=None, help="Rules per action dimension.")
@click.option("--n-features", type=int, default=None,
              help="Features per rule, taken from the ranking file.")
@click.option("--features", type=str, default=None,
              help="Explicit feature indices, e.g. '0,1,2,3' ( ';' between actions).")
@click.option("--particles", type=int, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--horizon", type=int, default=None, help="Rollout horizon T.")
@click.option("--gamma", type=float, default=None, help="Discount factor.")
@click.option("--n-starts", type=int, default=None, help="Training start states.")
def fpsrl(config_path, seed, workers, out_dir, rules, n_features, features,
          particles, iterations, horizon, gamma, n_starts):
    """Swarm-tune a fixed fuzzy rule structure; emits policy JSON + curve CSV."""
    cfg = _base_config(config_path)
    _overlay(cfg, "fpsrl", rules=rules, n_features=n_features,
             features=_parse_features(features), particles=particles,
             iterations=iterations)
    _overlay(cfg, "fitness", horizon=horizon, gamma=gamma, n_start_states=n_starts)
    _run_stage("fpsrl", cfg, out_dir, seed, workers)


@main.command("fgprl")
@common_options
@click.option("--population", type=int, default=None)
@click.option("--generations", type=int, default=None)
@click.option("--max-rules", type=int, default=None)
@click.option("--complexity-cap", type=int, default=None)
@click.option("--horizon", type=int, default=None, help="Rollout horizon T.")
@click.option("--gamma", type=float, default=None, help="Discount factor.")
@click.option("--n-starts", type=int, default=None, help="Training start states.")
def fgprl(config_path, seed, workers, out_dir, population, generations,
          max_rules, complexity_cap, horizon, gamma, n_starts):
    """Evolve fuzzy policy trees; emits a Pareto archive + front/curve CSVs."""
    cfg = _base_config(config_path)
    _overlay(cfg, "fgprl", population=population, generations=generations,
             max_rules=max_rules, complexity_cap=complexity_cap)
    _overlay(cfg, "fitness", horizon=horizon, gamma=gamma, n_start_states=n_starts)
    _run_stage("fgprl", cfg, out_dir, seed, workers)


@main.command("tune")
@common_options
@click.option("--swarm-size", type=int, default=None)
@click.option("--iterations", type=int, default=None)
def tune(config_path, seed, workers, out_dir, swarm_size, iterations):
    """Swarm-tune the terminals of every Pareto-front policy (keep-best)."""
    cfg = _base_config(config_path)
    _overlay(cfg, "local_search", swarm_size=swarm_size, iterations=iterations)
    _run_stage("tune", cfg, out_dir, seed, workers)


@main.command("evaluate")
@common_options
def evaluate(config_path, seed, workers, out_dir):
    """Re-evaluate all learned policies on the model and the real system."""
    _run_stage("evaluate", _base_config(config_path), out_dir, seed, workers)


@main.command("compare")
@common_options
def compare(config_path, seed, workers, out_dir):
    """Aggregate evaluation rows into per-complexity penalty statistics."""
    _run_stage("compare", _base_config(config_path), out_dir, seed, workers)


@main.command("run")
@common_options
def run(config_path, seed, workers, out_dir):
    """Run every stage declared in the config, in order."""
    cfg = _base_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    summary = run_experiment(cfg, out_dir, workers)
    click.echo(json.dumps(summary, default=str))


if __name__ == "__main__":
    sys.exit(main())
