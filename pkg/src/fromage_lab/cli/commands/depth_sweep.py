from __future__ import annotations

import click

from ...experiments.depth_sweep import (
    BEST_COLUMNS,
    BEST_CSV,
    DEPTH_SWEEP_COLUMNS,
    DEPTH_SWEEP_CSV,
    depth_sweep as run_sweep,
)
from ...experiments.train import load_dataset
from ...records import RunStatus, write_csv, write_summary
from ..options import lab_errors, run_options, start_run


@click.command("depth-sweep")
@run_options
@click.option("--full-fidelity", is_flag=True, default=False, help="Width 784, 100 epochs, full data, depth up to 50.")
def depth_sweep(
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    full_fidelity: bool,
) -> None:
    """Train every depth x optimiser x eta cell and report best-over-eta accuracy.

    Diverged cells are marked and the sweep continues.
    """
    extra = ("depth_sweep.full_fidelity=true",) if full_fidelity else ()
    run = start_run("depth-sweep", config_path, output_dir, seed, (*overrides, *extra))
    cfg = run.config
    with lab_errors("Depth sweep"):
        dataset, _ = load_dataset(cfg.dataset, cfg.seed)
        rows, best = run_sweep(cfg, dataset)
    write_csv(run.run_dir / DEPTH_SWEEP_CSV, DEPTH_SWEEP_COLUMNS, rows)
    write_csv(run.run_dir / BEST_CSV, BEST_COLUMNS, best)
    for row in best:
        if row["status"] == RunStatus.DIVERGED:
            click.echo(f"[WARN] depth {row['depth']:>3} {row['optimizer']:<8} all learning rates diverged")
        else:
            click.echo(
                f"[SWEEP] depth {row['depth']:>3} {row['optimizer']:<8} "
                f"best eta {row['best_eta']:g} accuracy {row['best_accuracy']:.4f}"
            )
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.COMPLETED,
        cells=len(rows),
        diverged_cells=sum(1 for r in rows if r["status"] == RunStatus.DIVERGED),
        best=best,
    )
    click.echo(f"[SUCCESS] Wrote {run.run_dir / DEPTH_SWEEP_CSV}")
