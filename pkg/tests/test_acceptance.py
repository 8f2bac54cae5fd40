"""
Desk-scale cart-pole scenarios: swing-up, controller cost ordering and the K sweep.

Marked slow; run with `pytest -m slow`. One dataset and one denoiser are built per module.
"""
import numpy as np
import pytest

from src.datagen import generate_dataset
from src.diffusion import train
from src.evalcli import (
    AblationKind,
    Artifacts,
    build_config,
    controller_factories,
    run_ablation,
    run_comparison,
)

pytestmark = pytest.mark.slow

DESK_OVERRIDES = [
    "ocp.horizon=32",
    "datagen.n_s=8",
    "datagen.n_t=50",
    "datagen.n_p=4",
    "solver.max_iterations=150",
    "diffusion.epochs=200",
    "diffusion.batch_size=128",
    "diffusion.hidden_widths=128, 128, 128",
    "control.steps=50",
    "control.candidates=10",
    "control.restarts=5",
]


@pytest.fixture(scope="module")
def desk_cfg():
    return build_config({"system": {"kind": "cart_pole", "seed": "4"}}, DESK_OVERRIDES)


@pytest.fixture(scope="module")
def desk_artifacts(desk_cfg):
    solver_cfg = desk_cfg.solver.model_copy(update={"workers": 4})
    ds = generate_dataset(desk_cfg.system, desk_cfg.spec, desk_cfg.datagen, solver_cfg)
    return Artifacts(denoiser=train(ds, desk_cfg.spec, desk_cfg.diffusion).denoiser)


def test_diffusion_controller_swings_up(desk_cfg, desk_artifacts):
    factories = controller_factories(desk_cfg, desk_artifacts, ["diffusion"])
    report = run_comparison(desk_cfg, factories, episodes=10)
    row = report.row("diffusion")
    assert row.aborted == 0
    assert row.success_rate >= 0.7


def test_multistart_is_not_worse_than_local(desk_cfg, desk_artifacts):
    factories = controller_factories(desk_cfg, desk_artifacts, ["local_mpc", "multistart_mpc"])
    report = run_comparison(desk_cfg, factories, episodes=6)
    multistart = report.row("multistart_mpc").cost_median
    local = report.row("local_mpc").cost_median
    assert multistart <= 1.1 * local


def test_short_reverse_chains_cost_more(desk_cfg, desk_artifacts):
    report = run_ablation(desk_cfg, AblationKind.K, [5, 15, 25], lambda point: desk_artifacts,
                          episodes=6)
    medians = {k: report.row("diffusion", float(k)).cost_median for k in (5, 15, 25)}
    assert medians[5] >= medians[25]
    assert medians[15] <= 1.1 * medians[25]
    assert np.all(np.isfinite(list(medians.values())))
