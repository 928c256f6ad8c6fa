"""Training callbacks.

Callbacks are informed at the end of every epoch and at the end of the
training. The loss history is exported to CSV, optionally also to
TensorBoard.
"""
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from naforest.util.module_import_raiser import ModuleImportRaiser

try:
    from torch.utils.tensorboard import SummaryWriter
except ImportError as err:  # pragma: no cover
    SummaryWriter = ModuleImportRaiser("tensorboard", str(err))


class TrainingCallback:
    """Interface of the training callbacks."""

    def on_epoch_end(self, epoch: int, loss: float) -> None:
        """Called after every epoch with the full training loss."""

    def on_training_end(self) -> None:
        """Called once after the last epoch."""


class LossHistoryCallback(TrainingCallback):
    """Writes ``epoch, loss`` rows to a CSV file."""

    def __init__(self, loss_log_location: Path, update_n_epochs: int = 1):
        """Constructor of the loss history callback.

        Args:
            loss_log_location (Path): Path to the CSV file.
            update_n_epochs (int, optional): Append to the file every n
                epochs. Defaults to 1.
        """
        self.loss_log_location = Path(loss_log_location)
        self.loss_log_location.parent.mkdir(parents=True, exist_ok=True)
        self.update_n_epochs = update_n_epochs
        self.first_export = True
        self.epochs: List[int] = []
        self.losses: List[float] = []

    def _export(self) -> None:
        """Append the buffered rows to the CSV file."""
        if not self.epochs and not self.first_export:
            return
        export_data_frame = pd.DataFrame(
            {"epoch": self.epochs, "loss": np.asarray(self.losses, float)}
        )
        export_data_frame.to_csv(
            self.loss_log_location,
            mode="w" if self.first_export else "a",
            header=self.first_export,
            index=False,
            float_format="%.17g",
        )
        self.first_export = False
        self.epochs = []
        self.losses = []

    def on_epoch_end(self, epoch: int, loss: float) -> None:
        """Buffer the loss, export every ``update_n_epochs`` epochs."""
        self.epochs.append(epoch)
        self.losses.append(loss)
        if epoch % self.update_n_epochs == 0:
            self._export()

    def on_training_end(self) -> None:
        """Export the remaining rows, writes the header for empty runs."""
        self._export()


class TensorBoardCallback(TrainingCallback):
    """Writes the loss as TensorBoard scalar ``train/loss``."""

    def __init__(self, log_dir: Path, run_name: Optional[str] = None):
        """Constructor of the TensorBoard callback.

        Args:
            log_dir (Path): TensorBoard log directory.
            run_name (Optional[str]): sub directory of this run.
        """
        path = Path(log_dir)
        if run_name:
            path = path / run_name
        self.writer = SummaryWriter(log_dir=str(path))

    def on_epoch_end(self, epoch: int, loss: float) -> None:
        """Add the scalar."""
        self.writer.add_scalar("train/loss", loss, epoch)

    def on_training_end(self) -> None:
        """Flush and close the writer."""
        self.writer.close()
