"""Windowed-attention detection head over pre-extracted video embeddings.

Configs are plain dicts here; the extension takes them as JSON text.
"""

import json as _json

from . import _core
from ._core import (
    BadMagicError,
    BadVersionError,
    ConfigError,
    ContractError,
    CrcMismatchError,
    DataError,
    DimensionError,
    Error,
    Model as _Model,
    NumericError,
    TruncatedError,
    UndefinedMetricError,
    auc,
    config_keys,
    cosine_lr,
    decode_embedding_file,
    encode_embedding_file,
    predict,
    read_split,
    subsample_indices,
)

__all__ = [
    "BadMagicError", "BadVersionError", "ConfigError", "ContractError", "CrcMismatchError",
    "DataError", "DimensionError", "Error", "Model", "NumericError", "TruncatedError",
    "UndefinedMetricError", "auc", "bench", "config_keys", "cosine_lr", "decode_embedding_file",
    "default_config", "encode_embedding_file", "evaluate", "generate", "gradcheck",
    "normalize_config", "predict", "read_split", "spec_hash", "subsample_indices",
    "synthetic_preset", "train",
]


def _dump(obj):
    return _json.dumps(obj if obj is not None else {})


def default_config():
    return _json.loads(_core.default_config())


def normalize_config(config):
    return _json.loads(_core.normalize_config(_dump(config)))


def synthetic_preset(name="default"):
    return _json.loads(_core.synthetic_preset(name))


def spec_hash(spec=None):
    return _core.spec_hash(_dump(spec))


def generate(spec=None):
    """Returns (train, val) dicts with z, labels, valid_t and generator ids."""
    return _core.generate(_dump(spec))


def evaluate(probs, labels):
    return _json.loads(_core.evaluate(list(probs), list(labels)))


def train(config=None, run_dir=""):
    return _json.loads(_core.train(_dump(config), str(run_dir)))


def gradcheck(config=None):
    return _json.loads(_core.gradcheck(_dump(config)))


def bench(config=None):
    return _json.loads(_core.bench(_dump(config)))


class Model(_Model):
    def __init__(self, head=None, input_dim=64, seed=0):
        super().__init__(_dump(head), input_dim, seed)

    @property
    def head(self):
        return _json.loads(self.config())
