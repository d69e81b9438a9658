import numpy as np
import pytest
import torch
from PIL import Image


@pytest.fixture(scope="session")
def tiny_vit(tmp_path_factory):
    """A small randomly initialized encoder with the standard 14x14 patch grid,
    saved locally so extraction runs without any model hub."""
    from transformers import ViTConfig, ViTModel

    torch.manual_seed(0)
    config = ViTConfig(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        image_size=224,
        patch_size=16,
    )
    model = ViTModel(config)
    path = tmp_path_factory.mktemp("model") / "tiny-vit"
    model.save_pretrained(path)
    return str(path)


@pytest.fixture()
def gray_image(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.full((224, 224, 3), 128, dtype=np.uint8)).save(path)
    return str(path)


@pytest.fixture()
def textured_image(tmp_path):
    rng = np.random.default_rng(3)
    arr = (rng.uniform(0, 255, (224, 224, 3))).astype(np.uint8)
    arr[40:120, 60:180] = 255  # a bright structure
    path = tmp_path / "textured.png"
    Image.fromarray(arr).save(path)
    return str(path)
