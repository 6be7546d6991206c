"""Tests for the training loop and the desk-scale studies on synthetic data."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fromage_lab.bounds import gradient_breakdown_measured
from fromage_lab.checkpoint import load_checkpoint, save_checkpoint
from fromage_lab.exceptions import CheckpointError, ConfigError, ZeroGradientError
from fromage_lab.experiments import (
    best_over_eta,
    build_network,
    depth_sweep,
    derive_seed,
    descent_check,
    load_dataset,
    lr_grid,
    norm_growth,
    normalise_scores,
    perturb_sweep,
    run_jobs,
    run_trial,
    sweep_network,
    train,
    verify_bounds,
    violations,
)
from fromage_lab.experiments.depth_sweep import effective_section, sweep_cells
from fromage_lab.experiments.lr_grid import SCORE_ERROR_FLOOR
from fromage_lab.experiments.perturb_sweep import PERTURB_COLUMNS, relative_update_deltas, resolve_checkpoints
from fromage_lab.experiments.train import TRAIN_CSV, snapshot_steps, train_columns
from fromage_lab.experiments.verify_bounds import Trial, plan_trials
from fromage_lab.net import loss_and_gradients
from fromage_lab.records import RunStatus, read_csv
from fromage_lab.schema import RunConfig, build_config, to_run_config
from tests.helpers import make_net

BASE = (
    "model.width=8",
    "model.depth=2",
    "model.nonlinearity=leaky_relu(0.5)",
    "training.batch_size=16",
    "training.epochs=3",
)


def _config(*overrides: str) -> RunConfig:
    return to_run_config(build_config(overrides=(*BASE, *overrides)))


class TestPool:
    def test_run_jobs_keeps_job_order(self):
        jobs = list(range(20))
        assert run_jobs(lambda j: j * j, jobs, workers=4) == [j * j for j in jobs]
        assert run_jobs(lambda j: j, [], workers=4) == []

    def test_derive_seed_is_stable(self):
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert derive_seed(1, 2) != derive_seed(2, 1)
        assert 0 <= derive_seed(0) < 2**32


class TestTrain:
    def test_loss_decreases_and_outputs_are_written(self, blobs, tmp_path):
        config = _config("optimizer.eta=0.05")
        result = train(config, blobs, run_dir=tmp_path)
        assert result.status is RunStatus.COMPLETED
        assert result.epochs_completed == 3
        assert result.rows[-1]["train_loss"] < result.rows[0]["train_loss"]
        assert [p.name for p in result.checkpoints] == ["epoch-000.frmg", "epoch-003.frmg"]
        rows = read_csv(tmp_path / TRAIN_CSV)
        assert list(rows[0]) == train_columns(2)
        assert [r["epoch"] for r in rows] == ["1", "2", "3"]
        assert rows[0]["wall_time"] == ""
        assert rows[0]["test_loss"] == ""

    def test_zero_epochs_writes_header_and_initial_checkpoint(self, blobs, tmp_path):
        result = train(_config("training.epochs=0"), blobs, run_dir=tmp_path)
        assert result.status is RunStatus.COMPLETED
        assert result.rows == ()
        assert [p.name for p in result.checkpoints] == ["epoch-000.frmg"]
        assert (tmp_path / TRAIN_CSV).read_bytes() == (",".join(train_columns(2)) + "\r\n").encode()
        assert read_csv(tmp_path / TRAIN_CSV) == []
        assert load_checkpoint(tmp_path / "epoch-000.frmg").depth == 2

    def test_relative_update_tracks_eta_for_fromage(self, blobs):
        config = _config("training.batch_size=1000", "schedule.kind=constant", "optimizer.eta=0.01")
        result = train(config, blobs)
        # One full-batch step per epoch: the recorded relative change is eta up to the prefactor.
        for row in result.rows:
            for k in range(2):
                assert row[f"relative_update_{k}"] == pytest.approx(0.01, rel=1e-2)

    def test_runs_are_deterministic(self, blobs, tmp_path):
        config = _config("optimizer.kind=adam", "optimizer.eta=0.001")
        first = train(config, blobs, run_dir=tmp_path / "a")
        second = train(config, blobs, run_dir=tmp_path / "b")
        assert first.rows == second.rows
        assert (tmp_path / "a" / TRAIN_CSV).read_bytes() == (tmp_path / "b" / TRAIN_CSV).read_bytes()

    @pytest.mark.parametrize("kind", ["fromage", "lars", "sgd", "adam"])
    def test_every_optimiser_trains(self, blobs, kind):
        eta = {"fromage": 0.01, "lars": 0.01, "sgd": 0.1, "adam": 0.001}[kind]
        result = train(_config(f"optimizer.kind={kind}", f"optimizer.eta={eta}"), blobs)
        assert result.status is RunStatus.COMPLETED
        assert math.isfinite(result.final_loss)

    def test_accuracy_collapse_is_divergence(self, blobs, tmp_path):
        config = _config("training.divergence_accuracy=1.01", "training.divergence_patience=1")
        result = train(config, blobs, run_dir=tmp_path)
        assert result.diverged
        assert result.rows[-1]["status"] is RunStatus.DIVERGED
        assert [p.name for p in result.checkpoints] == ["epoch-000.frmg"]

    def test_clamp_keeps_norms_at_or_below_initial(self, blobs):
        config = _config("optimizer.kind=lars", "optimizer.eta=0.1", "optimizer.clamp=true")
        net = build_network(config, blobs)
        caps = net.weight_norms()
        result = train(config, blobs, net=net)
        for norm, cap in zip(result.net.weight_norms(), caps, strict=True):
            assert norm <= cap * (1.0 + 1e-12)

    def test_checkpoint_epochs_and_snapshots(self, blobs, tmp_path):
        config = _config("training.checkpoint_epochs=[1]", "training.snapshots=true")
        result = train(config, blobs, run_dir=tmp_path)
        names = [p.name for p in result.checkpoints]
        assert "epoch-001.frmg" in names
        assert sum(1 for n in names if n.startswith("step-")) == len(snapshot_steps(2, 3, 4))
        assert load_checkpoint(tmp_path / "epoch-003.frmg").depth == 2

    def test_snapshot_steps_front_load_shallow_networks(self):
        shallow = snapshot_steps(2, epochs=10, steps_per_epoch=100)
        deep = snapshot_steps(8, epochs=10, steps_per_epoch=100)
        assert sum(1 for s in shallow if s <= 100) == 5
        assert deep == list(range(100, 1001, 100))

    def test_deep_snapshots_follow_epochs_not_count(self):
        assert snapshot_steps(4, epochs=3, steps_per_epoch=7) == [7, 14, 21]
        assert len(snapshot_steps(4, epochs=25, steps_per_epoch=2)) == 25
        assert snapshot_steps(4, epochs=0, steps_per_epoch=7) == []

    def test_network_must_match_dataset(self, blobs):
        with pytest.raises(ConfigError, match="inputs"):
            train(_config(), blobs, net=make_net((5, 4, 3)))


class TestLoadDataset:
    def test_synthetic_with_test_split(self):
        config = _config("dataset.num_classes=4", "dataset.input_dim=5", "dataset.per_class=10",
                         "dataset.test_per_class=3", "dataset.subset=null")
        train_set, test_set = load_dataset(config.dataset, seed=2)
        assert (train_set.size, train_set.dim, train_set.num_classes) == (40, 5, 4)
        assert test_set is not None and test_set.size == 12

    def test_mnist_paths_are_required(self, tmp_path):
        config = _config("dataset.kind=mnist")
        with pytest.raises(ConfigError, match="images_path"):
            load_dataset(config.dataset, seed=0)
        config = _config("dataset.kind=mnist", f"dataset.images_path={tmp_path / 'missing'}",
                         f"dataset.labels_path={tmp_path / 'missing'}")
        with pytest.raises(ConfigError, match="not found"):
            load_dataset(config.dataset, seed=0)


class TestNormGrowth:
    def test_fromage_keeps_norm(self):
        rows = norm_growth(10_000, 0.01, True, seed=0)
        assert len(rows) == 10_001
        assert abs(rows[-1]["norm_ratio"] - 1.0) <= 1e-9

    def test_lars_grows_geometrically(self):
        rows = norm_growth(10_000, 0.01, False, seed=0)
        final = rows[-1]
        assert final["predicted_ratio"] == pytest.approx(1.0001**5000)
        assert abs(final["norm_ratio"] / final["predicted_ratio"] - 1.0) <= 1e-6

    def test_zero_eta_never_moves(self):
        rows = norm_growth(5, 0.0, False, seed=1)
        assert all(r["norm_ratio"] == 1.0 for r in rows)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            norm_growth(0, 0.01, True, seed=0)
        with pytest.raises(ValueError):
            norm_growth(5, -0.1, True, seed=0)


class TestPerturbSweep:
    def test_zero_eta_row(self, blobs):
        net = build_network(_config(), blobs)
        rows = sweep_network(net, blobs, [0.0, 0.01, 0.1], "softmax_cross_entropy")
        zero = rows[0]
        assert zero["gradient_breakdown"] == 0.0
        assert zero["perturbed_loss"] == pytest.approx(zero["baseline_loss"], rel=1e-12)
        assert zero["drt_model"] == 0.0
        assert rows[1]["drt_model"] == pytest.approx(1.01**2 - 1.0)
        assert rows[2]["gradient_breakdown"] > rows[1]["gradient_breakdown"] > 0.0

    def test_breakdown_matches_bound_module_and_records_final_layer(self, blobs):
        net = make_net((blobs.dim, 8, 3), final=True, seed=4)
        batch = blobs.full_batch()
        _, grads = loss_and_gradients(net, batch, "softmax_cross_entropy")
        row = sweep_network(net, blobs, [0.05], "softmax_cross_entropy", layer=1)[0]
        deltas = relative_update_deltas(net, grads.grads, 0.05)
        expected = gradient_breakdown_measured(net, deltas, batch, "softmax_cross_entropy", 1)
        assert row["gradient_breakdown"] == expected
        assert row["use_final_nonlinearity"] is True
        assert "use_final_nonlinearity" in PERTURB_COLUMNS

    def test_checkpoint_directory_is_expanded(self, blobs, tmp_path):
        net = build_network(_config(), blobs)
        save_checkpoint(net, tmp_path / "epoch-000.frmg")
        save_checkpoint(net, tmp_path / "epoch-001.frmg")
        assert [p.name for p in resolve_checkpoints([tmp_path])] == ["epoch-000.frmg", "epoch-001.frmg"]
        rows = perturb_sweep([tmp_path], blobs, [0.01], "softmax_cross_entropy")
        assert [r["checkpoint"] for r in rows] == ["epoch-000.frmg", "epoch-001.frmg"]
        with pytest.raises(CheckpointError):
            resolve_checkpoints([tmp_path / "nope.frmg"])

    def test_zero_gradient_layer(self, blobs):
        net = build_network(_config(), blobs)
        dead = net.with_weights([net.weights[0], np.zeros_like(net.weights[1])])
        with pytest.raises(ZeroGradientError):
            sweep_network(dead, blobs, [0.01], "softmax_cross_entropy", layer=0)


class TestDepthSweep:
    def test_best_over_eta(self):
        rows = [
            {"depth": 2, "optimizer": "fromage", "eta": 0.1, "final_train_accuracy": 0.8, "status": RunStatus.OK},
            {"depth": 2, "optimizer": "fromage", "eta": 0.01, "final_train_accuracy": 0.9, "status": RunStatus.OK},
            {"depth": 2, "optimizer": "sgd", "eta": 1.0, "final_train_accuracy": None, "status": RunStatus.DIVERGED},
        ]
        best = {r["optimizer"]: r for r in best_over_eta(rows)}
        assert best["fromage"]["best_eta"] == 0.01
        assert best["fromage"]["best_accuracy"] == 0.9
        assert best["sgd"]["status"] is RunStatus.DIVERGED
        assert best["sgd"]["best_eta"] is None

    def test_full_fidelity_protocol(self):
        section = _config("depth_sweep.full_fidelity=true").depth_sweep
        full = effective_section(section)
        assert (full.width, full.epochs, full.subset) == (784, 100, None)
        assert full.depths == [2, 10, 20, 30, 40, 50]

    def test_small_sweep_is_independent_of_worker_count(self, blobs):
        overrides = (
            "depth_sweep.depths=[1,2]",
            "depth_sweep.width=8",
            "depth_sweep.epochs=2",
            "depth_sweep.subset=null",
            "depth_sweep.grid.fromage=[0.1,0.01]",
            "depth_sweep.grid.sgd=[0.1]",
        )
        serial = _config(*overrides)
        parallel = _config(*overrides, "depth_sweep.workers=3")
        rows, best = depth_sweep(serial, blobs)
        assert len(rows) == len(sweep_cells(serial.depth_sweep)) == 6
        assert len(best) == 4
        assert depth_sweep(parallel, blobs)[0] == rows

    def test_grid_accepts_extra_optimisers(self):
        config = _config("depth_sweep.grid.lars=[0.01]")
        assert config.depth_sweep.grid["lars"] == [0.01]
        assert "fromage" in config.depth_sweep.grid


class TestLrGrid:
    def test_scores_are_normalised_per_optimiser(self):
        rows = [
            {"optimizer": "fromage", "eta": 0.1, "error": 0.2, "score": None},
            {"optimizer": "fromage", "eta": 0.01, "error": 0.1, "score": None},
            {"optimizer": "sgd", "eta": 1.0, "error": None, "score": None},
            {"optimizer": "sgd", "eta": 0.1, "error": 0.4, "score": None},
        ]
        scored = normalise_scores(rows)
        assert [r["score"] for r in scored] == [0.5, 1.0, None, 1.0]
        assert rows[0]["score"] is None

    def test_zero_best_error_keeps_scores_positive(self):
        rows = [
            {"optimizer": "adam", "eta": 0.1, "error": 0.0, "score": None},
            {"optimizer": "adam", "eta": 0.01, "error": 0.2, "score": None},
        ]
        scores = [r["score"] for r in normalise_scores(rows)]
        assert scores[0] == 1.0
        assert 0.0 < scores[1] <= 1.0
        assert scores[1] == pytest.approx(SCORE_ERROR_FLOOR / 0.2)

    def test_grid_run(self, blobs):
        config = _config("lr_grid.etas=[0.1,0.01]", "lr_grid.optimizers=[fromage,sgd]", "lr_grid.epochs=1")
        rows = lr_grid(config, blobs)
        assert [(r["optimizer"], r["eta"]) for r in rows] == [
            ("fromage", 0.1), ("fromage", 0.01), ("sgd", 0.1), ("sgd", 0.01)
        ]
        assert max(r["score"] for r in rows if r["optimizer"] == "fromage") == 1.0


class TestVerifyBounds:
    def _section(self, *overrides: str):
        return _config(
            "verify_bounds.trials=3",
            "verify_bounds.depths=[1,3]",
            "verify_bounds.relative_sizes=[0.01,0.1]",
            *overrides,
        ).verify_bounds

    def test_plan_numbers_trials_consecutively(self):
        section = self._section()
        trials = plan_trials(section, seed=100)
        assert [t.trial for t in trials] == list(range(len(trials)))
        assert all(t.seed == 100 + t.trial for t in trials)
        # scalar and conditioning: 2 sizes; three network suites: 2 depths x 3 slopes x 2 sizes
        assert len(trials) == 3 * (2 + 3 * 12 + 2)

    def test_no_violations(self):
        rows = verify_bounds(self._section(), seed=0)
        assert violations(rows) == []
        assert {r["suite"] for r in rows} == {"scalar", "functional", "jacobian", "conditioning", "descent"}
        assert all(r["grid_approximated"] == (r["suite"] == "descent") for r in rows)

    def test_trials_replay_individually(self):
        section = self._section("verify_bounds.suites=[functional]")
        rows = verify_bounds(section, seed=7)
        trial = plan_trials(section, seed=7)[4]
        assert run_trial(trial) == [rows[4]]

    def test_scaled_bound_injects_faults(self):
        rows = verify_bounds(self._section("verify_bounds.bound_scale=0.5", "verify_bounds.suites=[scalar]"), seed=0)
        failed = violations(rows)
        assert failed
        assert all(r["trial"] % 2 == 0 for r in failed)

    def test_relu_rows_are_not_failures(self):
        trial = Trial(trial=0, seed=3, suite="functional", depth=2, nonlinearity="relu", r=0.1, width=8)
        rows = run_trial(trial, bound_scale=1e-12)
        assert rows[0]["hypothesis_violated"]
        assert violations(rows) == []

    def test_descent_rows_follow_a_fromage_step(self):
        trial = Trial(trial=0, seed=5, suite="descent", depth=3, nonlinearity="leaky_relu(0.5)", r=0.01, width=8)
        rows = run_trial(trial)
        assert len(rows) == 1
        row = rows[0]
        assert row["grid_approximated"]
        assert row["satisfied"]
        assert row["measured"] <= row["bound"] < 0.0
        assert row["r_max"] == 0.01

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="unknown bound suites"):
            plan_trials(self._section("verify_bounds.suites=[tail]"), seed=0)

    @pytest.mark.slow
    def test_full_grid(self):
        section = _config("verify_bounds.workers=4").verify_bounds
        assert violations(verify_bounds(section, seed=0)) == []


class TestDescentCheck:
    def test_steps_below_threshold_descend(self, blobs):
        config = _config("model.depth=3", "training.epochs=5")
        net = train(config, blobs).net
        section = _config("descent_check.trials=20", "descent_check.batch_size=30").descent_check
        rows, fraction = descent_check(net, blobs, section, "softmax_cross_entropy", seed=1)
        assert len(rows) == 20
        assert rows[0]["eta"] == pytest.approx(0.5 * (2.0 ** (1.0 / 3.0) - 1.0))
        assert fraction == sum(r["decreased"] for r in rows) / 20
        assert fraction >= 0.5

    def test_no_step_for_orthogonal_threshold(self, blobs):
        net = build_network(_config(), blobs)
        section = _config("descent_check.cos_theta=0").descent_check
        with pytest.raises(ValueError, match="no positive step"):
            descent_check(net, blobs, section, "softmax_cross_entropy", seed=0)
