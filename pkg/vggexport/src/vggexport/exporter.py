"""Export the conv1_1..conv5_1 prefix of VGG-19 into an NNWT container.

The container holds tensors named "convX_Y.weight" / "convX_Y.bias" as
32-bit little-endian floats, matching the consumer's weights interface.
Orientation note: both the source model and the consumer compute
cross-correlation, so kernels are copied as-is (no flip).

The consumer scales [0, 1] inputs to [0, 255], reorders to BGR, and
subtracts the channel means (103.939, 116.779, 123.68) before the first
convolution; those constants are repeated in the manifest so the two sides
stay in sync.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# (name, torchvision features index, canonical (C_out, C_in, 3, 3) shape)
VGG19_CONV_LAYERS = (
    ("conv1_1", 0, (64, 3, 3, 3)),
    ("conv1_2", 2, (64, 64, 3, 3)),
    ("conv2_1", 5, (128, 64, 3, 3)),
    ("conv2_2", 7, (128, 128, 3, 3)),
    ("conv3_1", 10, (256, 128, 3, 3)),
    ("conv3_2", 12, (256, 256, 3, 3)),
    ("conv3_3", 14, (256, 256, 3, 3)),
    ("conv3_4", 16, (256, 256, 3, 3)),
    ("conv4_1", 19, (512, 256, 3, 3)),
    ("conv4_2", 21, (512, 512, 3, 3)),
    ("conv4_3", 23, (512, 512, 3, 3)),
    ("conv4_4", 25, (512, 512, 3, 3)),
    ("conv5_1", 28, (512, 512, 3, 3)),
)

BGR_MEANS = (103.939, 116.779, 123.68)

NNWT_MAGIC = b"NNWT"
NNWT_VERSION = 1


class ExportError(Exception):
    pass


@dataclass
class ExportManifest:
    source: str
    layers: dict  # name -> weight shape tuple
    sha256: str
    output: str

    def text(self) -> str:
        lines = [
            f"source: {self.source}",
            f"output: {self.output}",
            f"sha256: {self.sha256}",
            f"input preprocessing: [0,1] -> [0,255], BGR order, mean subtraction {BGR_MEANS}",
            "kernel orientation: cross-correlation (copied without flipping)",
            "layers:",
        ]
        for name, shape in self.layers.items():
            lines.append(f"  {name}.weight  {shape}")
        return "\n".join(lines) + "\n"


def _write_nnwt_bytes(tensors: dict) -> bytes:
    parts = [NNWT_MAGIC, struct.pack("<II", NNWT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def _load_state_dict(source: str) -> dict:
    import torch

    if source == "torchvision":
        try:
            from torchvision.models import VGG19_Weights, vgg19

            model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:  # download or hub failure
            raise ExportError(f"could not obtain pretrained weights: {exc}") from None
        return model.state_dict()
    path = Path(source)
    if not path.exists():
        raise ExportError(f"{source}: weights file not found")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"{source}: failed to load state dict: {exc}") from None
    if not isinstance(state, dict):
        raise ExportError(f"{source}: expected a state dict, got {type(state).__name__}")
    return state


def export(output_path, source: str = "torchvision") -> ExportManifest:
    """Write the 13-layer conv prefix to ``output_path``; returns the manifest.

    ``source`` is "torchvision" (downloads the published pretrained weights)
    or a path to a saved VGG-19 state dict. On any validation failure no
    output file is produced.
    """
    state = _load_state_dict(source)
    tensors = {}
    layers = {}
    for name, idx, shape in VGG19_CONV_LAYERS:
        wkey, bkey = f"features.{idx}.weight", f"features.{idx}.bias"
        if wkey not in state or bkey not in state:
            raise ExportError(f"{source}: missing {wkey} / {bkey}")
        weight = state[wkey].detach().cpu().numpy().astype(np.float32)
        bias = state[bkey].detach().cpu().numpy().astype(np.float32)
        if weight.shape != shape or bias.shape != (shape[0],):
            raise ExportError(
                f"{name}: unexpected shape {weight.shape}/{bias.shape}, canonical is {shape}/({shape[0]},)"
            )
        tensors[f"{name}.weight"] = weight
        tensors[f"{name}.bias"] = bias
        layers[name] = shape
    payload = _write_nnwt_bytes(tensors)
    digest = hashlib.sha256(payload).hexdigest()
    output_path = Path(output_path)
    tmp = output_path.with_name(output_path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, output_path)
    return ExportManifest(source=source, layers=layers, sha256=digest, output=str(output_path))
