"""Python front end for the mgnm C++ core."""

import json

from ._mgnm import (
    Error,
    average_precision,
    default_config,
    evaluate,
    focal_loss,
    iou,
    spatial_features,
    synthesize,
)
from ._mgnm import train as _train

__all__ = [
    "Error",
    "average_precision",
    "default_config",
    "evaluate",
    "focal_loss",
    "iou",
    "spatial_features",
    "synthesize",
    "train",
]


def train(config, dataset, out_dir=""):
    """Train on a dataset (JSON text or dict) and return the report as a dict."""
    if not isinstance(config, str):
        config = json.dumps(config)
    if not isinstance(dataset, str):
        dataset = json.dumps(dataset)
    return json.loads(_train(config, dataset, str(out_dir)))
