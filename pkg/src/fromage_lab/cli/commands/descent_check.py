from __future__ import annotations

import click

from ...checkpoint import load_checkpoint
from ...experiments.descent_check import DESCENT_COLUMNS, DESCENT_CSV, descent_check as run_check
from ...experiments.train import load_dataset
from ...records import RunStatus, write_csv, write_summary
from ..constants import EXIT_DESCENT_BELOW_THRESHOLD
from ..options import lab_errors, run_options, start_run


@click.command("descent-check")
@run_options
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False, resolve_path=True),
    default=None,
    help="Trained checkpoint (overrides descent_check.checkpoint).",
)
@click.pass_context
def descent_check(
    ctx: click.Context,
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    checkpoint: str | None,
) -> None:
    """Check that Fromage steps below the descent threshold decrease the loss.

    Exits with code 4 when the fraction of decreasing trials is below
    ``descent_check.required_fraction``.
    """
    run = start_run("descent-check", config_path, output_dir, seed, overrides)
    cfg = run.config
    section = cfg.descent_check
    path = checkpoint or section.checkpoint
    if path is None:
        raise click.ClickException("No checkpoint given; use --checkpoint or descent_check.checkpoint")
    with lab_errors("Descent check"):
        net = load_checkpoint(path)
        dataset, _ = load_dataset(cfg.dataset, cfg.seed)
        rows, fraction = run_check(net, dataset, section, cfg.dataset.loss, cfg.seed)
    write_csv(run.run_dir / DESCENT_CSV, DESCENT_COLUMNS, rows)
    passed = fraction >= section.required_fraction
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.COMPLETED if passed else RunStatus.BELOW_THRESHOLD,
        checkpoint=str(path),
        eta=rows[0]["eta"] if rows else None,
        fraction_decreased=fraction,
    )
    click.echo(f"[DESCENT] {fraction:.2%} of {len(rows)} trials decreased the loss")
    if not passed:
        click.echo(f"[ERROR] Below the required {section.required_fraction:.0%}", err=True)
        ctx.exit(EXIT_DESCENT_BELOW_THRESHOLD)
    click.echo("[SUCCESS] Descent check passed")
