"""Command-line interface: bank building/validation, planning, benchmarks,
and scene generation."""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .arm import load_arm
from .config import PlannerConfig, load_config
from .harness import (
    BenchSpec,
    build_bank_for,
    run_benchmark,
    run_trial,
    write_trajectory_csv,
)
from .jrs import load_bank, save_bank, validate_containment
from .scenes import generate_random_scene, load_scene, save_scene


@click.group()
def main():
    """Reachability-based safe trajectory planning."""


@main.group()
def jrs():
    """Offline joint reachable-set banks."""


@jrs.command("build")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def jrs_build(config_path, out_path):
    """Build a bank from the planner config and write it as JSON."""
    config = load_config(config_path) if config_path else PlannerConfig()
    bank = build_bank_for(config)
    save_bank(bank, out_path)
    click.echo(f"wrote bank with {bank.n_jrs} sequences to {out_path}")


@jrs.command("validate")
@click.option("--bank", "bank_path", required=True, type=click.Path(exists=True))
@click.option("--samples", default=100_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def jrs_validate(bank_path, samples, seed):
    """Monte Carlo containment check of every sequence in a bank."""
    bank = load_bank(bank_path)
    worst = -np.inf
    bad = 0
    for j, seq in enumerate(bank.sequences):
        report = validate_containment(seq, samples, seed + j)
        worst = max(worst, report.max_margin)
        bad += report.violations
        if report.violations:
            click.echo(f"sequence {j}: {report.violations} violations")
    click.echo(f"violations: {bad}, worst margin: {worst:.3e}")
    sys.exit(1 if bad else 0)


@main.command("plan")
@click.option("--arm", "arm_source", required=True)
@click.option("--scene", "scene_source", required=True)
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def plan(arm_source, scene_source, bank_path, config_path, out_path):
    """Run one trial and write the executed trajectory as CSV."""
    arm = load_arm(arm_source)
    scene = load_scene(scene_source)
    config = load_config(config_path) if config_path else PlannerConfig()
    bank = load_bank(bank_path) if bank_path else build_bank_for(config)
    result = run_trial(arm, scene, config, bank, trial_seed=scene.seed or 0)
    write_trajectory_csv(result, out_path)
    m = result.metrics
    outcome = "crashed" if m.crashed else ("goal" if m.goal_reached else "stopped")
    click.echo(
        f"outcome: {outcome}, iterations: {m.iterations}, "
        f"mean solve time: {m.mean_solve_time * 1e3:.1f} ms"
    )
    sys.exit(1 if m.crashed else 0)


@main.command("bench")
@click.option("--config", "bench_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
def bench(bench_path, out_dir, bank_path):
    """Run a benchmark matrix; nonzero exit if any trial crashed."""
    with open(bench_path) as f:
        spec = BenchSpec.from_json_dict(json.load(f))
    bank = load_bank(bank_path) if bank_path else None
    summary = run_benchmark(spec, out_dir, bank=bank)
    click.echo(json.dumps(summary, indent=2))
    sys.exit(1 if summary["crashes"] else 0)


@main.group()
def scene():
    """Scene files."""


@scene.command("gen")
@click.option("--arm", "arm_source", required=True)
@click.option("--n-obs", "n_obs", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", type=click.Path(), default=None)
def scene_gen(arm_source, n_obs, seed, out_path):
    """Generate a random collision-free scene."""
    arm = load_arm(arm_source)
    sc = generate_random_scene(arm, n_obs, seed)
    if out_path:
        save_scene(sc, out_path)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(json.dumps(sc.to_json_dict(), indent=2))


if __name__ == "__main__":
    main()
