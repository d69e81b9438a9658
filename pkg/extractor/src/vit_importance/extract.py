"""Patch importance from vision-transformer attention.

Scores are the class token's attention to each patch, averaged over heads of
the configured layer(s). The output file follows the importance-profile
contract consumed by the transmission core:

    {"g": 196, "patch_grid": [14, 14], "scores": [...], "source": "..."}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from transformers import ViTModel

__all__ = ["ExtractionSpec", "extract_scores", "preprocess_image", "write_profile"]

LAYER_POLICIES = ("last", "mean")


@dataclass(frozen=True)
class ExtractionSpec:
    model_name: str
    image_path: str
    output_path: str
    layer_policy: str = "last"
    image_size: int = 224
    patch: int = 16

    def __post_init__(self):
        if self.layer_policy not in LAYER_POLICIES:
            raise ValueError(f"layer_policy must be one of {LAYER_POLICIES}")
        if self.image_size % self.patch:
            raise ValueError("patch must divide image_size")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch

    @property
    def g(self) -> int:
        return self.grid * self.grid


def preprocess_image(path: str, image_size: int = 224) -> torch.Tensor:
    """Resize and standardize to zero mean, unit variance over all pixels."""
    img = Image.open(path).convert("RGB").resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - arr.mean()) / max(float(arr.std()), 1e-8)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def extract_scores(spec: ExtractionSpec) -> dict:
    """Run the encoder and write the per-patch mean attention profile."""
    model = ViTModel.from_pretrained(spec.model_name, attn_implementation="eager")
    model.eval()
    expected = model.config.image_size // model.config.patch_size
    if expected != spec.grid:
        raise ValueError(
            f"model patch grid {expected}x{expected} does not match the requested {spec.grid}x{spec.grid}"
        )
    pixels = preprocess_image(spec.image_path, spec.image_size)
    with torch.no_grad():
        out = model(pixel_values=pixels, output_attentions=True)
    attentions = out.attentions  # tuple of (1, heads, tokens, tokens)
    if spec.layer_policy == "last":
        stack = attentions[-1:]
    else:
        stack = attentions
    cls_to_patches = torch.stack([a[0, :, 0, 1:] for a in stack])  # (layers, heads, g)
    scores = cls_to_patches.mean(dim=(0, 1)).double().numpy()
    if scores.size != spec.g or not np.all(np.isfinite(scores)):
        raise ValueError("extraction produced an invalid score vector")
    profile = {
        "g": int(spec.g),
        "patch_grid": [spec.grid, spec.grid],
        "scores": [float(s) for s in scores],
        "source": f"vit:{spec.model_name}:layer={spec.layer_policy}:image={spec.image_path}",
    }
    write_profile(spec.output_path, profile)
    return profile


def write_profile(path: str, profile: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile, fh)
