from __future__ import annotations

import click

from ...experiments.lr_grid import LR_GRID_COLUMNS, LR_GRID_CSV, lr_grid as run_grid
from ...experiments.train import load_dataset
from ...records import RunStatus, write_csv, write_summary
from ..options import lab_errors, run_options, start_run


@click.command("lr-grid")
@run_options
def lr_grid(
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
) -> None:
    """Train one cell per (optimiser, eta) and score it against the best eta."""
    run = start_run("lr-grid", config_path, output_dir, seed, overrides)
    cfg = run.config
    with lab_errors("Learning-rate grid"):
        dataset, _ = load_dataset(cfg.dataset, cfg.seed)
        rows = run_grid(cfg, dataset)
    write_csv(run.run_dir / LR_GRID_CSV, LR_GRID_COLUMNS, rows)
    for row in rows:
        score = "diverged" if row["score"] is None else f"score {row['score']:.4f}"
        click.echo(f"[GRID] {row['optimizer']:<8} eta {row['eta']:g}: {score}")
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.COMPLETED,
        cells=len(rows),
        diverged_cells=sum(1 for r in rows if r["status"] == RunStatus.DIVERGED),
    )
    click.echo(f"[SUCCESS] Wrote {run.run_dir / LR_GRID_CSV}")
