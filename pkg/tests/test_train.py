"""Optimizer, training loop, baselines, and sweep plumbing."""

import numpy as np
import pytest

from trafficgcn.data import make_windows, normalize, split_train_test, synth_traffic
from trafficgcn.errors import ContractError, TrainingDiverged
from trafficgcn.model import init_params
from trafficgcn.tensor import Tensor
from trafficgcn.train import (
    AdamState,
    TrainConfig,
    adam_step,
    baseline_ha,
    compare_models,
    perturb_sweep,
    train,
    write_perturb_csv,
)


def tiny_problem(seed=0, n_nodes=4, n_steps=160):
    graph, fm = synth_traffic(n_nodes, n_steps, seed=seed)
    fm = normalize(fm)
    ds = make_windows(fm, 3, 1)
    train_ds, test_ds = split_train_test(ds, 0.8)
    return graph, fm, train_ds, test_ds


def tiny_config(**over):
    base = dict(
        model_kind="a3tgcn", history_n=3, horizon_t=1, epochs=3,
        hidden_units=4, batch_size=16, seed=1, eval_every=2,
        learning_rate=0.01, lambda_reg=0.0, scorer_hidden=4,
    )
    base.update(over)
    return TrainConfig(**base)


class TestAdam:
    def _setup(self):
        params = init_params("gru", 3, 2, 4, 1, seed=0)
        state = AdamState.for_params(params)
        return params, state

    def test_zero_gradient_is_fixed_point(self):
        params, state = self._setup()
        grads = {k: np.zeros(v.shape) for k, v in params.tensors.items()}
        updated, _ = adam_step(params, grads, state, lr=0.1)
        for name in params.tensors:
            np.testing.assert_array_equal(
                updated.tensors[name].data, params.tensors[name].data
            )

    def test_first_step_moves_by_signed_learning_rate(self):
        params, state = self._setup()
        grads = {
            k: np.where(np.arange(v.data.size).reshape(v.shape) % 2 == 0, 3.0, -0.2)
            for k, v in params.tensors.items()
        }
        updated, new_state = adam_step(params, grads, state, lr=0.05)
        for name, g in grads.items():
            delta = updated.tensors[name].data - params.tensors[name].data
            np.testing.assert_allclose(delta, -0.05 * np.sign(g), rtol=1e-6)
        assert new_state.t == 1

    def test_deterministic_trajectories(self):
        results = []
        for _ in range(2):
            params, state = self._setup()
            rng = np.random.default_rng(42)
            for _ in range(5):
                grads = {k: rng.normal(0, 1, v.shape) for k, v in params.tensors.items()}
                params, state = adam_step(params, grads, state, lr=0.01)
            results.append(params)
        for name in results[0].tensors:
            np.testing.assert_array_equal(
                results[0].tensors[name].data, results[1].tensors[name].data
            )

    def test_shape_mismatch_rejected(self):
        params, state = self._setup()
        grads = {k: np.zeros(v.shape) for k, v in params.tensors.items()}
        grads["out_w"] = np.zeros((1, 1))
        with pytest.raises(ContractError):
            adam_step(params, grads, state, lr=0.1)


class TestBaselineHa:
    def test_constant_window(self):
        out = baseline_ha(Tensor(np.full((3, 4), 7.0)), horizon=2)
        np.testing.assert_array_equal(out.data, np.full((3, 2), 7.0))

    def test_window_mean(self):
        out = baseline_ha(Tensor([[2.0, 4.0], [10.0, 20.0]]), horizon=2)
        np.testing.assert_array_equal(out.data, [[3.0, 3.0], [15.0, 15.0]])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        w = rng.random((4, 5))
        base = baseline_ha(Tensor(w), horizon=1).data
        shuffled = baseline_ha(Tensor(w[:, ::-1].copy()), horizon=1).data
        np.testing.assert_allclose(base, shuffled)


class TestTrainLoop:
    def test_zero_epochs_returns_initial_params(self):
        graph, fm, train_ds, test_ds = tiny_problem()
        config = tiny_config(epochs=0)
        params, history = train(config, graph, train_ds, test_ds, fm.scale_max)
        reference = init_params(
            "a3tgcn", graph.n_nodes, 3, 4, 1, seed=1, scorer_hidden=4
        )
        for name in reference.tensors:
            np.testing.assert_array_equal(
                params.tensors[name].data, reference.tensors[name].data
            )
        assert history.rows == [] and history.epoch_losses == []

    def test_ha_skips_optimization(self):
        graph, fm, train_ds, test_ds = tiny_problem()
        params, history = train(
            tiny_config(model_kind="ha"), graph, train_ds, test_ds, fm.scale_max
        )
        assert params is None
        assert len(history.rows) == 1
        assert history.rows[0]["test_rmse"] > 0

    def test_bitwise_deterministic(self):
        graph, fm, train_ds, test_ds = tiny_problem()
        runs = [
            train(tiny_config(), graph, train_ds, test_ds, fm.scale_max)
            for _ in range(2)
        ]
        assert runs[0][1].rows == runs[1][1].rows
        assert runs[0][1].epoch_losses == runs[1][1].epoch_losses
        for name in runs[0][0].tensors:
            np.testing.assert_array_equal(
                runs[0][0].tensors[name].data, runs[1][0].tensors[name].data
            )

    def test_history_final_row_restates_best(self):
        graph, fm, train_ds, test_ds = tiny_problem()
        config = tiny_config(epochs=6, eval_every=2)
        params, history = train(config, graph, train_ds, test_ds, fm.scale_max)
        best = min(history.rows[:-1], key=lambda r: r["test_rmse"])
        assert history.rows[-1]["test_rmse"] == best["test_rmse"]

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_nan_loss_aborts_with_location(self):
        # Adam's first step is about +-lr per entry; an absurd rate drives
        # the squared error past float64 range on the next batch, and the
        # loop must abort naming the location
        graph, fm, train_ds, test_ds = tiny_problem()
        config = tiny_config(model_kind="gru", learning_rate=1e200, epochs=1)
        with pytest.raises(TrainingDiverged, match=r"epoch \d+, batch \d+"):
            train(config, graph, train_ds, test_ds, fm.scale_max)

    def test_loss_decreases_on_small_run(self):
        graph, fm, train_ds, test_ds = tiny_problem(n_steps=200)
        config = tiny_config(model_kind="gru", epochs=20, eval_every=20)
        _, history = train(config, graph, train_ds, test_ds, fm.scale_max)
        assert history.epoch_losses[-1] < history.epoch_losses[0]


class TestSweeps:
    def test_single_model_single_horizon_table(self):
        graph, fm0, _, _ = tiny_problem()
        _, fm = synth_traffic(4, 160, seed=0)
        rows = compare_models([tiny_config(model_kind="ha")], graph, fm)
        assert len(rows) == 1
        assert rows[0]["model"] == "ha" and rows[0]["horizon"] == 1

    def test_comparison_shares_windows_across_models(self):
        graph, _, _, _ = tiny_problem()
        _, fm = synth_traffic(4, 160, seed=0)
        configs = [tiny_config(model_kind="ha"), tiny_config(model_kind="gru", epochs=1)]
        rows = compare_models(configs, graph, fm)
        assert [r["model"] for r in rows] == ["ha", "gru"]

    def test_perturb_sweep_has_five_rows_per_kind(self, tmp_path):
        graph, fm, train_ds, test_ds = tiny_problem()
        config = tiny_config(epochs=1, eval_every=1)
        params, _ = train(config, graph, train_ds, test_ds, fm.scale_max)
        _, raw = synth_traffic(4, 160, seed=0)
        for kind in ("gaussian", "poisson"):
            rows = perturb_sweep(graph, params, raw, kind, seed=3,
                                 history_n=3, horizon_t=1)
            assert len(rows) == 5
            out = tmp_path / f"{kind}.csv"
            write_perturb_csv(rows, out)
            lines = out.read_text().strip().splitlines()
            assert len(lines) == 6  # header + 5 rows

    def test_perturb_sweep_deterministic(self):
        graph, fm, train_ds, test_ds = tiny_problem()
        params, _ = train(tiny_config(epochs=1, eval_every=1), graph,
                          train_ds, test_ds, fm.scale_max)
        _, raw = synth_traffic(4, 160, seed=0)
        a = perturb_sweep(graph, params, raw, "gaussian", 3, 3, 1)
        b = perturb_sweep(graph, params, raw, "gaussian", 3, 3, 1)
        assert a == b


class TestConfigValidation:
    def test_unknown_model_kind(self):
        with pytest.raises(ContractError):
            tiny_config(model_kind="transformer")

    def test_non_positive_fields(self):
        with pytest.raises(ContractError):
            tiny_config(history_n=0)
        with pytest.raises(ContractError):
            tiny_config(learning_rate=-1.0)
        with pytest.raises(ContractError):
            tiny_config(epochs=-1)
