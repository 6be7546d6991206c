"""Desk-scale studies behind the ``fromage-lab`` subcommands."""

from .depth_sweep import best_over_eta, depth_sweep
from .descent_check import descent_check
from .lr_grid import lr_grid, normalise_scores
from .norm_growth import norm_growth
from .perturb_sweep import perturb_sweep, sweep_network
from .pool import derive_seed, run_jobs
from .train import TrainingResult, build_network, load_dataset, train
from .verify_bounds import run_trial, verify_bounds, violations

__all__ = [
    "TrainingResult",
    "best_over_eta",
    "build_network",
    "depth_sweep",
    "derive_seed",
    "descent_check",
    "load_dataset",
    "lr_grid",
    "norm_growth",
    "normalise_scores",
    "perturb_sweep",
    "run_jobs",
    "run_trial",
    "sweep_network",
    "train",
    "verify_bounds",
    "violations",
]
