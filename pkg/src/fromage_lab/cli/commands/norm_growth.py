from __future__ import annotations

import click

from ...experiments.norm_growth import NORM_GROWTH_COLUMNS, NORM_GROWTH_CSV, norm_growth as run_growth
from ...records import RunStatus, write_csv, write_summary
from ..options import lab_errors, run_options, start_run


@click.command("norm-growth")
@run_options
@click.option("--steps", type=click.IntRange(min=1), default=None, help="Number of steps.")
@click.option("--eta", type=click.FloatRange(min=0.0), default=None, help="Relative step size.")
@click.option(
    "--variant",
    type=click.Choice(["fromage", "lars"]),
    default=None,
    help="fromage keeps the 1/sqrt(1+eta^2) prefactor, lars drops it.",
)
def norm_growth(
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    steps: int | None,
    eta: float | None,
    variant: str | None,
) -> None:
    """Track the weight norm of a scale-invariant layer under Fromage or LARS."""
    extra = [
        f"norm_growth.{key}={value}"
        for key, value in (("steps", steps), ("eta", eta), ("with_prefactor", None if variant is None else variant == "fromage"))
        if value is not None
    ]
    run = start_run("norm-growth", config_path, output_dir, seed, (*overrides, *extra))
    cfg = run.config
    section = cfg.norm_growth
    with lab_errors("Norm growth"):
        rows = run_growth(
            section.steps, section.eta, section.with_prefactor, cfg.seed, rows=section.rows, cols=section.cols
        )
    write_csv(run.run_dir / NORM_GROWTH_CSV, NORM_GROWTH_COLUMNS, rows)
    final = rows[-1]
    label = "fromage" if section.with_prefactor else "lars"
    click.echo(
        f"[GROWTH] {label} after {final['step']} steps: norm ratio {final['norm_ratio']:.9f} "
        f"(predicted {final['predicted_ratio']:.9f})"
    )
    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=RunStatus.COMPLETED,
        final_norm_ratio=final["norm_ratio"],
        predicted_ratio=final["predicted_ratio"],
    )
    click.echo(f"[SUCCESS] Wrote {run.run_dir / NORM_GROWTH_CSV}")
