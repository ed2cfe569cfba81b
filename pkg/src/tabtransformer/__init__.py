"""TabTransformer: contextual embeddings for categorical columns, on a small numpy autodiff engine."""

from .data import EncodedDataset, Schema, encode, fit_schema, load_csv, split
from .evaluate import auc
from .model import ModelConfig, TabTransformer, baseline_mlp
from .train import PretrainConfig, TrainConfig, train_pretrain, train_supervised

__version__ = "0.1.0"

__all__ = [
    "EncodedDataset", "ModelConfig", "PretrainConfig", "Schema", "TabTransformer", "TrainConfig", "auc",
    "baseline_mlp", "encode", "fit_schema", "load_csv", "split", "train_pretrain", "train_supervised",
]
