"""Scenario generation, datasets, loss/gradient and optimizers."""

from gridreduce.learn.dataset import Dataset, build_dataset, dataset_from_arrays
from gridreduce.learn.metrics import Metrics, evaluate
from gridreduce.learn.objective import Objective, grad, loss
from gridreduce.learn.optimize import HyperParams, Method, TrainReport, optimize
from gridreduce.learn.scenarios import ScenarioSet, generate_scenarios

__all__ = [
    "Dataset",
    "HyperParams",
    "Method",
    "Metrics",
    "Objective",
    "ScenarioSet",
    "TrainReport",
    "build_dataset",
    "dataset_from_arrays",
    "evaluate",
    "generate_scenarios",
    "grad",
    "loss",
    "optimize",
]
