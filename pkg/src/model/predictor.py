from typing import Iterable, Tuple

import numpy as np

from src.data.windows import WindowBatch
from src.model.model import PESDTSF


class Predictor:
    def __init__(self, model: PESDTSF):
        self.model = model

    def predict(self, batch: WindowBatch) -> np.ndarray:
        # no tape is active here, so nothing is recorded
        return self.model.forward(batch).y_hat.data

    def predict_all(self, batches: Iterable[WindowBatch]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack (inputs, targets, predictions) over a batch stream."""
        xs, ys, preds = [], [], []
        for batch in batches:
            xs.append(batch.X_raw)
            ys.append(batch.Y_gt)
            preds.append(self.predict(batch))
        if not preds:
            raise ValueError("no batches to predict")
        return np.concatenate(xs), np.concatenate(ys), np.concatenate(preds)
