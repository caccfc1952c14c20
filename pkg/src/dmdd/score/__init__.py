from .analytic import AnalyticGaussianScore, analytic_score
from .checkpoint import load_checkpoint, save_checkpoint
from .net import ConvScoreNet, ScoreNetSpec, net_forward
from .training import TrainConfig, TrainResult, dsm_loss, train

__all__ = [
    "AnalyticGaussianScore",
    "analytic_score",
    "ConvScoreNet",
    "ScoreNetSpec",
    "net_forward",
    "TrainConfig",
    "TrainResult",
    "dsm_loss",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]
