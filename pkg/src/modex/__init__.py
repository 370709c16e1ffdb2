"""Courtroom-mixture evidential classification in plain numpy.

A prediction is a structured mixture of Dirichlets: shared evidence
``alpha``, per-class advocacy strengths ``tau`` and advocate weights
``omega``.  Means, variances and the uncertainty split are closed form.
"""

from .simplex_dist import (
    CourtroomParams,
    DirichletDist,
    efd_mean,
    efd_var,
    reduction_params,
)
from .uncertainty import UncertaintyReport, aleatoric, epistemic, epistemic_decompose, report
from .nnet import Ablation, ModelState, forward, init_model, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, predict_batch, train

__version__ = "0.1.0"

__all__ = [
    "Ablation", "CourtroomParams", "DirichletDist", "ModelState", "TrainConfig",
    "UncertaintyReport", "aleatoric", "efd_mean", "efd_var", "epistemic",
    "epistemic_decompose", "forward", "init_model", "load_checkpoint",
    "predict_batch", "reduction_params", "report", "save_checkpoint", "train",
]
