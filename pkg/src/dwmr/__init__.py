"""Boolean latent world models trained with decorrelation and locality regularizers."""

from .config import ConfigError, default_config, load_config
from .estimator import DiscreteWorldModel
from .model import ArchConfig, WorldModel, binarize
from .probes import EvalReport, LinearProbe, evaluate
from .trainer import TrainConfig, run_training

__version__ = "0.1.0"

__all__ = ["ArchConfig", "ConfigError", "DiscreteWorldModel", "EvalReport", "LinearProbe", "TrainConfig",
           "WorldModel", "binarize", "default_config", "evaluate", "load_config", "run_training"]
