from __future__ import annotations

import click

from ...experiments.verify_bounds import VERIFY_COLUMNS, VERIFY_CSV, verify_bounds as run_verification, violations
from ...records import RunStatus, write_csv, write_summary
from ..constants import EXIT_BOUND_VIOLATION
from ..options import lab_errors, run_options, start_run

MAX_REPORTED = 20


@click.command("verify-bounds")
@run_options
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Trials per configuration.")
@click.pass_context
def verify_bounds(
    ctx: click.Context,
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    trials: int | None,
) -> None:
    """Run the randomised bound suites and fail on any violation.

    Rows whose network breaks the transmission hypothesis (relu) are recorded
    but never counted as failures. Descent rows take their breakdown maximum
    from a finite grid and are marked grid_approximated. Exits with code 5 and
    prints the offending seeds when a bound is violated.
    """
    extra = (f"verify_bounds.trials={trials}",) if trials is not None else ()
    run = start_run("verify-bounds", config_path, output_dir, seed, (*overrides, *extra))
    cfg = run.config
    with lab_errors("Bound verification"):
        rows = run_verification(cfg.verify_bounds, cfg.seed)
    write_csv(run.run_dir / VERIFY_CSV, VERIFY_COLUMNS, rows)
    failed = violations(rows)
    flagged = sum(1 for r in rows if r["hypothesis_violated"])
    approximated = sum(1 for r in rows if r["grid_approximated"])
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.VIOLATED if failed else RunStatus.COMPLETED,
        comparisons=len(rows),
        violations=len(failed),
        hypothesis_violated=flagged,
        grid_approximated=approximated,
        offending_seeds=sorted({r["seed"] for r in failed}),
    )
    click.echo(f"[BOUNDS] {len(rows)} comparisons, {len(failed)} violations, {flagged} outside the hypotheses")
    if failed:
        for row in failed[:MAX_REPORTED]:
            click.echo(
                f"[ERROR] {row['suite']} trial {row['trial']} seed {row['seed']} "
                f"depth {row['depth']} layer {row['layer']}: measured {row['measured']!r} > bound {row['bound']!r}",
                err=True,
            )
        if len(failed) > MAX_REPORTED:
            click.echo(f"[ERROR] ... {len(failed) - MAX_REPORTED} more in {VERIFY_CSV}", err=True)
        ctx.exit(EXIT_BOUND_VIOLATION)
    click.echo("[SUCCESS] All bounds satisfied")
