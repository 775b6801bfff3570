from .agent import Td3Agent, Td3Config, TrainingLog, save_training_log_csv, train
from .buffer import ReplayBuffer
from .networks import Adam, Mlp, TwinMlp
from .noise import OuNoise

__all__ = [
    "Adam",
    "Mlp",
    "TwinMlp",
    "OuNoise",
    "ReplayBuffer",
    "Td3Agent",
    "Td3Config",
    "TrainingLog",
    "save_training_log_csv",
    "train",
]
