from __future__ import annotations

import click

from ...experiments.perturb_sweep import PERTURB_COLUMNS, PERTURB_CSV, perturb_sweep as run_sweep
from ...experiments.train import load_dataset
from ...records import RunStatus, write_csv, write_summary
from ..options import lab_errors, run_options, start_run


@click.command("perturb-sweep")
@run_options
@click.option(
    "--checkpoint",
    "checkpoints",
    multiple=True,
    type=click.Path(exists=True, resolve_path=True),
    help="Checkpoint file or directory of checkpoints; repeatable (adds to perturb.checkpoints).",
)
def perturb_sweep(
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    checkpoints: tuple[str, ...],
) -> None:
    """Measure gradient breakdown when every layer takes a relative step of size eta.

    For each checkpoint and each ``perturb.etas`` value the network is moved
    along its full-batch relative-update direction and the relative change of
    layer ``perturb.layer``'s gradient is written to ``perturb_sweep.csv``.
    """
    run = start_run("perturb-sweep", config_path, output_dir, seed, overrides)
    cfg = run.config
    entries = [*cfg.perturb.checkpoints, *checkpoints]
    if not entries:
        raise click.ClickException("No checkpoints given; use --checkpoint or perturb.checkpoints")
    with lab_errors("Perturbation sweep"):
        dataset, _ = load_dataset(cfg.dataset, cfg.seed)
        rows = run_sweep(entries, dataset, cfg.perturb.etas, cfg.dataset.loss, layer=cfg.perturb.layer)
    write_csv(run.run_dir / PERTURB_CSV, PERTURB_COLUMNS, rows)
    for row in rows:
        click.echo(
            f"[SWEEP] {row['checkpoint']} eta {row['eta']:.4g}: "
            f"breakdown {row['gradient_breakdown']:.4g} (model {row['drt_model']:.4g})"
        )
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.COMPLETED,
        checkpoints=entries,
        rows=len(rows),
    )
    click.echo(f"[SUCCESS] Wrote {run.run_dir / PERTURB_CSV}")
