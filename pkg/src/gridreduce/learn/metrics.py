"""Accuracy metrics for trained or baseline parameters on a dataset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridreduce.learn.objective import Objective


@dataclass(frozen=True, eq=False)
class Metrics:
    sq_two_norm_loss: float  # summed over scenarios, divided by tie count
    sq_two_norm_loss_mean: float  # the same, averaged over scenarios
    inf_norm_loss: float  # pu
    per_tie_mae: np.ndarray  # MW
    mae_mw: float
    curve_errors: np.ndarray  # sorted absolute errors, pu
    curve_fraction: np.ndarray  # cumulative proportion at each error

    def to_dict(self) -> dict:
        return {
            "sq_two_norm_loss": self.sq_two_norm_loss,
            "sq_two_norm_loss_mean": self.sq_two_norm_loss_mean,
            "inf_norm_loss": self.inf_norm_loss,
            "mae_mw": self.mae_mw,
            "mae_mw_per_tie": self.per_tie_mae.tolist(),
        }


def evaluate(params, data) -> Metrics:
    """Score ``params`` on every scenario in ``data``."""
    obj = Objective(data.incidence, data.P_R, data.targets)
    r = obj.residuals(params)
    S, n_ties = r.shape
    absr = np.abs(r)
    sq = float(np.sum(r * r) / n_ties) if S else 0.0
    errors = np.sort(absr.ravel())
    return Metrics(
        sq_two_norm_loss=sq,
        sq_two_norm_loss_mean=sq / S if S else 0.0,
        inf_norm_loss=float(absr.max()) if absr.size else 0.0,
        per_tie_mae=absr.mean(axis=0) * data.base_mva if S else np.zeros(n_ties),
        mae_mw=float(absr.mean() * data.base_mva) if absr.size else 0.0,
        curve_errors=errors,
        curve_fraction=np.arange(1, errors.size + 1) / max(errors.size, 1),
    )
