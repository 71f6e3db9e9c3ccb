"""Two-branch spatial and spectral slice classifier for brain MRI."""

import json

from ._core import (
    DataError,
    DimensionError,
    Error,
    FormatError,
    Model,
    NumericalError,
    fft2,
    ifft2,
    load_volume,
    majority_vote,
    metrics,
    write_phantom,
)
from . import _core


def make_folds(manifest, seed=0, k=5):
    """Subject-level fold plan for a manifest, as a dict."""
    return json.loads(_core.make_folds(str(manifest), seed, k))


def run_cv(manifest, preset="toy", **overrides):
    """Cross-validation report as a dict. Overrides use config keys with dots
    replaced by double underscores, e.g. train__epochs=2."""
    kv = {key.replace("__", "."): _format(value) for key, value in overrides.items()}
    return json.loads(_core.run_cv(str(manifest), preset, kv))


def _format(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


__all__ = [
    "DataError",
    "DimensionError",
    "Error",
    "FormatError",
    "Model",
    "NumericalError",
    "fft2",
    "ifft2",
    "load_volume",
    "majority_vote",
    "make_folds",
    "metrics",
    "run_cv",
    "write_phantom",
]
