from .policies import PickPolicy, TreePolicy, load_checkpoint, save_checkpoint
from .training import TrainConfig, Trainer, evaluate, iterative_train

__all__ = [
    "PickPolicy",
    "TreePolicy",
    "TrainConfig",
    "Trainer",
    "evaluate",
    "iterative_train",
    "load_checkpoint",
    "save_checkpoint",
]
