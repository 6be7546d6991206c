"""Builders shared by the test modules."""

from __future__ import annotations

from fromage_lab.net import Mlp, MlpConfig, Nonlinearity


def make_net(
    widths: tuple[int, ...],
    nonlinearity: Nonlinearity | None = None,
    *,
    seed: int = 0,
    init: str = "scaled_gaussian",
    final: bool = False,
) -> Mlp:
    """Seeded network; leaky relu(0.5) unless told otherwise."""
    config = MlpConfig(
        widths=widths,
        nonlinearity=nonlinearity or Nonlinearity.leaky_relu(0.5),
        use_final_nonlinearity=final,
        init=init,
        seed=seed,
    )
    return Mlp.initialize(config)
