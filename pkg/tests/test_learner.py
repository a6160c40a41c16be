import numpy as np
import pytest

from strfkit.errors import DivergedError, InvalidInput, NumericalError
from strfkit.defaults import SIGMA_MIN
from strfkit.gaborkit import GaborParams, KernelGrid
from strfkit.learner import (
    Readout,
    ToyTask,
    TrainConfig,
    loss_and_param_grads,
    pooled_features,
    train,
)
from strfkit.strfconv import OutputMode

from conftest import random_params

GRID = KernelGrid(11, 9)


def tiny_task(n_classes=2, T=9, M=12, scale=1.0):
    """Synthetic mel-domain task: class = sign pattern of a fixed template."""

    def sample(n, rng):
        labels = np.tile(np.arange(n_classes), -(-n // n_classes))[:n]
        labels = labels[rng.permutation(n)]
        templates = [
            np.cos(2 * np.pi * (0.08 * (c + 1)) * np.arange(T))[:, None]
            * np.ones((1, M))
            for c in range(n_classes)
        ]
        X = np.stack(
            [
                scale * (templates[lab] + 0.1 * rng.standard_normal((T, M)))
                for lab in labels
            ]
        )
        return X, labels

    return ToyTask(
        name="tiny",
        n_classes=n_classes,
        sample=sample,
        frame_rate=100.0,
        channels_per_octave=10.0,
        size=12,
    )


def fd_filter_grad(batch, bank, readout, cfg, k, idx, step=1e-4):
    hi, lo = bank[k].as_vector(), bank[k].as_vector()
    hi[idx] += step
    lo[idx] -= step
    bank_hi, bank_lo = list(bank), list(bank)
    bank_hi[k] = GaborParams.from_vector(hi)
    bank_lo[k] = GaborParams.from_vector(lo)
    f_hi, _, _ = loss_and_param_grads(batch, bank_hi, readout, cfg, GRID)
    f_lo, _, _ = loss_and_param_grads(batch, bank_lo, readout, cfg, GRID)
    return (f_hi - f_lo) / (2 * step)


class TestLossAndGrads:
    def test_zero_readout_gives_log_n_classes(self, rng):
        bank = random_params(rng, n=2)
        cfg = TrainConfig(n_filters=2)
        readout = Readout.zeros(3, 4)
        X = rng.standard_normal((5, 9, 12))
        y = rng.integers(0, 3, 5)
        loss, fgrads, (dW, db) = loss_and_param_grads((X, y), bank, readout, cfg, GRID)
        assert loss == pytest.approx(np.log(3), abs=1e-12)
        assert not fgrads.any()
        assert np.abs(dW).max() > 0

    def test_duplicated_batch_changes_nothing(self, rng):
        bank = random_params(rng, n=2)
        cfg = TrainConfig(n_filters=2, output_mode="magnitude")
        readout = Readout(rng.standard_normal((2, 2)), rng.standard_normal(2))
        X = rng.standard_normal((4, 9, 12))
        y = rng.integers(0, 2, 4)
        base = loss_and_param_grads((X, y), bank, readout, cfg, GRID)
        doubled = loss_and_param_grads(
            (np.concatenate([X, X]), np.concatenate([y, y])), bank, readout, cfg, GRID
        )
        assert doubled[0] == pytest.approx(base[0], abs=1e-12)
        assert doubled[1] == pytest.approx(base[1], abs=1e-12)

    @pytest.mark.parametrize("mode", list(OutputMode))
    def test_gradients_match_finite_differences(self, rng, mode):
        bank = random_params(rng, n=2)
        cfg = TrainConfig(n_filters=2, output_mode=mode)
        D = 2 * (2 if mode is OutputMode.CONCAT_RE_IM else 1)
        readout = Readout(rng.standard_normal((3, D)), rng.standard_normal(3))
        X = rng.standard_normal((3, 9, 12))
        y = rng.integers(0, 3, 3)
        batch = (X, y)
        _, fgrads, _ = loss_and_param_grads(batch, bank, readout, cfg, GRID)
        for k in range(2):
            for idx in range(4):
                fd = fd_filter_grad(batch, bank, readout, cfg, k, idx)
                denom = max(abs(fd), abs(fgrads[k, idx]), 1e-8)
                assert abs(fgrads[k, idx] - fd) / denom < 1e-3

    def test_readout_dimension_mismatch_rejected(self, rng):
        bank = random_params(rng, n=2)
        cfg = TrainConfig(n_filters=2)
        with pytest.raises(InvalidInput):
            loss_and_param_grads(
                (np.zeros((2, 9, 12)), np.zeros(2, dtype=int)),
                bank,
                Readout.zeros(2, 7),
                cfg,
                GRID,
            )

    def test_non_finite_input_raises_numerical_error(self, rng):
        bank = random_params(rng, n=2)
        cfg = TrainConfig(n_filters=2)
        X = np.zeros((2, 9, 12))
        X[0, 0, 0] = np.nan
        with pytest.raises(NumericalError):
            loss_and_param_grads(
                (X, np.zeros(2, dtype=int)), bank, Readout.zeros(2, 4), cfg, GRID
            )


class TestTrain:
    def test_zero_learning_rate_is_identity(self):
        task = tiny_task()
        cfg = TrainConfig(
            n_filters=3, learning_rate=0.0, n_epochs=2, batch_size=4, seed=9
        )
        report = train(task, cfg, GRID)
        for p0, p1 in zip(report.initial_bank.filters, report.bank.filters):
            assert p0 == p1  # bit-for-bit
        assert not report.readout.weights.any()

    def test_identical_seeds_identical_reports(self):
        task = tiny_task()
        cfg = TrainConfig(n_filters=2, n_epochs=2, batch_size=4, seed=3)
        r1 = train(task, cfg, GRID)
        r2 = train(task, cfg, GRID)
        assert r1.epoch_losses == r2.epoch_losses
        assert r1.epoch_accuracies == r2.epoch_accuracies
        assert r1.bank == r2.bank
        assert np.array_equal(r1.readout.weights, r2.readout.weights)

    def test_spreads_respect_sigma_floor(self):
        task = tiny_task(scale=5.0)
        cfg = TrainConfig(
            n_filters=2, learning_rate=0.5, n_epochs=3, batch_size=4, seed=1,
            output_mode="magnitude",
        )
        report = train(task, cfg, GRID)
        for p in report.bank.filters:
            assert p.sigma_t >= SIGMA_MIN
            assert p.sigma_f >= SIGMA_MIN

    def test_divergence_aborts_with_snapshot(self):
        task = tiny_task(scale=50.0)
        cfg = TrainConfig(
            n_filters=2,
            learning_rate=1e6,
            n_epochs=50,
            batch_size=4,
            optimizer="sgd",
            seed=2,
            output_mode="magnitude",
        )
        with pytest.raises(DivergedError) as err:
            train(task, cfg, GRID)
        bank, readout = err.value.snapshot
        assert len(bank) == 2
        assert np.isfinite(readout.weights).all()

    def test_loss_decreases_on_separable_task(self):
        task = tiny_task()
        cfg = TrainConfig(
            n_filters=3, n_epochs=4, batch_size=4, seed=0, output_mode="magnitude"
        )
        report = train(task, cfg, GRID)
        assert report.epoch_losses[-1] < report.epoch_losses[0]
        assert report.gradient_check["max_relative_error"] < 1e-3

    def test_bad_config_rejected(self):
        with pytest.raises(Exception):
            TrainConfig(n_filters=0)
        with pytest.raises(Exception):
            TrainConfig(n_filters=1, optimizer="lbfgs")


class TestPooledFeatures:
    def test_feature_layout_matches_modes(self, rng):
        bank = random_params(rng, n=3)
        X = rng.standard_normal((4, 9, 12))
        assert pooled_features(X, bank, GRID, OutputMode.MAGNITUDE).shape == (4, 3)
        assert pooled_features(X, bank, GRID, OutputMode.CONCAT_RE_IM).shape == (4, 6)

    def test_pooling_is_global_mean(self, rng):
        from strfkit.strfconv import apply_bank

        bank = random_params(rng, n=2)
        X = rng.standard_normal((2, 9, 12))
        feats = pooled_features(X, bank, GRID, OutputMode.MAGNITUDE)
        Z0 = apply_bank(X[0], bank, GRID).values
        assert feats[0] == pytest.approx(np.abs(Z0).mean(axis=(0, 1)), rel=1e-9)
