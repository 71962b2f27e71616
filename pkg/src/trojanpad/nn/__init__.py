from .checkpoint import CheckpointError, checkpoint_digest, load_checkpoint, save_checkpoint
from .classifier import ConvNetClassifier, TrainingDivergedError
from .layers import NonFiniteActivationError
from .network import ArchitectureError, Network, default_architecture
from .train import TrainConfig, save_history, split_arrays, train

__all__ = [
    "ArchitectureError",
    "CheckpointError",
    "ConvNetClassifier",
    "Network",
    "NonFiniteActivationError",
    "TrainConfig",
    "TrainingDivergedError",
    "checkpoint_digest",
    "default_architecture",
    "load_checkpoint",
    "save_checkpoint",
    "save_history",
    "split_arrays",
    "train",
]
