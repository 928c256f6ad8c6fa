import importlib

import numpy as np
import pandas as pd
import pytest

from naforest import callback
from naforest.callback import LossHistoryCallback, TrainingCallback


@pytest.mark.parametrize("update_n_epochs", [1, 3, 10])
def test_callback_loss_history(update_n_epochs, dir_save_location):
    call_back = LossHistoryCallback(
        loss_log_location=dir_save_location / "test.csv",
        update_n_epochs=update_n_epochs,
    )
    assert call_back.loss_log_location == dir_save_location / "test.csv"
    assert call_back.first_export
    losses = [1.0 / epoch for epoch in range(1, 8)]
    for epoch, loss in enumerate(losses, start=1):
        call_back.on_epoch_end(epoch, loss)
    call_back.on_training_end()
    loss_log = pd.read_csv(
        dir_save_location / "test.csv", float_precision="round_trip"
    )
    assert list(loss_log.columns) == ["epoch", "loss"]
    assert loss_log["epoch"].tolist() == list(range(1, 8))
    # written with 17 significant digits
    assert np.array_equal(loss_log["loss"].to_numpy(), np.asarray(losses))


def test_callback_loss_history_empty_run(dir_save_location):
    call_back = LossHistoryCallback(dir_save_location / "empty.csv")
    call_back.on_training_end()
    loss_log = pd.read_csv(dir_save_location / "empty.csv")
    assert loss_log.shape[0] == 0
    assert list(loss_log.columns) == ["epoch", "loss"]


def test_callback_interface_is_noop():
    call_back = TrainingCallback()
    call_back.on_epoch_end(1, 0.5)
    call_back.on_training_end()


def test_callback_tensorboard_without_tensorboard(
    hide_available_import, monkeypatch, dir_save_location
):
    module = importlib.reload(callback)
    try:
        with pytest.raises(ImportError) as excinfo:
            module.TensorBoardCallback(dir_save_location)
        assert "tensorboard" in str(excinfo.value)
    finally:
        monkeypatch.undo()
        importlib.reload(callback)


def test_callback_tensorboard(dir_save_location):
    pytest.importorskip("tensorboard")
    module = importlib.reload(callback)
    call_back = module.TensorBoardCallback(dir_save_location, "run")
    call_back.on_epoch_end(1, 0.5)
    call_back.on_training_end()
    assert any((dir_save_location / "run").iterdir())
