"""Checkpoint archives: model parameters, optimizer state, step, config.

A checkpoint is a zip file holding manifest.json plus one binary tensor
blob per array. Blobs round-trip bitwise, so training can resume to the
exact trajectory it would have taken without the interruption.
"""

from __future__ import annotations

import json
import zipfile

from ..autodiff import tensor_from_bytes, tensor_to_bytes
from ..errors import FormatError
from .config import ModelConfig

FORMAT_VERSION = 1


def save_checkpoint(path, model, optimizer=None, step=None):
    """Write model (and optionally Adam state) to a zip archive."""
    params = model.param_arrays()
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "step": int(step if step is not None else getattr(optimizer, "step_count", 0) or 0),
        "params": sorted(params),
        "has_optimizer": optimizer is not None,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        for name in sorted(params):
            zf.writestr(f"params/{name}.bin", tensor_to_bytes(params[name]))
        if optimizer is not None:
            state = optimizer.state_arrays()
            for name in sorted(state):
                zf.writestr(f"optim/{name}.bin", tensor_to_bytes(state[name]))


def load_checkpoint(path):
    """Read a checkpoint archive.

    Returns (config, params dict, optimizer-state dict or None, step).
    """
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        raise FormatError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise FormatError(f"checkpoint {path} has no manifest.json") from exc
        if manifest.get("format_version") != FORMAT_VERSION:
            raise FormatError(
                f"checkpoint format version {manifest.get('format_version')!r} not supported"
            )
        config = ModelConfig.from_dict(manifest["config"])
        params = {}
        for name in manifest["params"]:
            blob = zf.read(f"params/{name}.bin")
            arr, _ = tensor_from_bytes(blob)
            params[name] = arr
        optim = None
        if manifest.get("has_optimizer"):
            optim = {}
            for info in zf.infolist():
                if info.filename.startswith("optim/") and info.filename.endswith(".bin"):
                    name = info.filename[len("optim/"):-len(".bin")]
                    arr, _ = tensor_from_bytes(zf.read(info.filename))
                    optim[name] = arr
        return config, params, optim, int(manifest["step"])


def load_model(path):
    """Build an EANet from a checkpoint, ignoring any optimizer state."""
    from .model import EANet

    config, params, _, _ = load_checkpoint(path)
    return EANet(config, params=params)
