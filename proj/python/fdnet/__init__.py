"""FDNet precipitation nowcasting: thin wrappers over the C++ core."""

import json

import numpy as np

from . import _fdnet
from ._fdnet import (
    ConfigError,
    IoError,
    NumericError,
    ShapeError,
    balanced_errors,
    checkpoint_info,
    confusion,
    dbz_to_pixel,
    dbz_to_rainrate,
    pixel_to_dbz,
    predict,
    skill_scores,
    window_count,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "ShapeError",
    "balanced_errors",
    "checkpoint_info",
    "confusion",
    "dbz_to_pixel",
    "dbz_to_rainrate",
    "gen_synthetic",
    "pixel_to_dbz",
    "predict",
    "predict_random",
    "skill_scores",
    "window_count",
]


def gen_synthetic(**synth):
    """Synthetic blob sequences as {id: frames[T,1,H,W]}; keywords follow the `synth` config section."""
    return dict(_fdnet.gen_synthetic(json.dumps(synth)))


def predict_random(inputs, horizon, seed=0, **model):
    """Predict with freshly initialized weights; keywords follow the `model` config section."""
    return _fdnet.predict_random(json.dumps(model), seed, np.asarray(inputs, dtype=np.float64), horizon)
