"""Neural window decoder: a recurrent transformer trained on the
decoding engine's exported window datasets, scored back through its
prediction-file interface."""

from .config import ModelConfig
from .data import (WindowRecords, load_training_records, read_grouped,
                   read_labels, read_predictions, read_truncated,
                   read_window_shard, write_predictions)
from .losses import bce, soft_xor, softxor_loss
from .model import (Readout, RNNCore, StabilizerEmbedder, SyndromeTransformer,
                    WindowDecoder, count_parameters, sinusoidal_encoding)
from .training import (TrainLog, build_model, finetune_softxor,
                       load_checkpoint, predict, save_checkpoint,
                       train_recurrent, train_singular)

__all__ = [
    "ModelConfig", "WindowRecords", "load_training_records", "read_grouped",
    "read_labels", "read_predictions", "read_truncated", "read_window_shard",
    "write_predictions", "bce", "soft_xor", "softxor_loss", "Readout",
    "RNNCore", "StabilizerEmbedder", "SyndromeTransformer", "WindowDecoder",
    "count_parameters", "sinusoidal_encoding", "TrainLog", "build_model",
    "finetune_softxor", "load_checkpoint", "predict", "save_checkpoint",
    "train_recurrent", "train_singular",
]
