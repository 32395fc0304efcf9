"""Feature models: CLIP ViT-B/32 vision tower and ResNet-50 trunk.

Both wrappers expose ``embed(batch)`` over uint8 RGB images (N, H, W, 3) and
carry their expected feature dimension. Weights come either from the standard
pretrained checkpoints (``pretrained``) or from a seeded random initialization
of the identical architecture (``random:<seed>``), which keeps every
downstream pipeline testable where checkpoint downloads are unavailable.
Inference runs on CPU in eval mode; outputs are deterministic for a fixed
weights spec.
"""

from __future__ import annotations

import numpy as np
import torch

CLIP_ID = "clip-vit-b32"
RESNET_ID = "resnet50"
MODEL_IDS = (CLIP_ID, RESNET_ID)

CLIP_DIM = 512
RESNET_DIM = 2048

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CLIP_CHECKPOINT = "openai/clip-vit-base-patch32"


class WeightsUnavailableError(RuntimeError):
    """Pretrained checkpoint could not be loaded (offline or uncached)."""


def _parse_weights_spec(spec):
    if spec == "pretrained":
        return "pretrained", None
    if spec.startswith("random:"):
        return "random", int(spec.split(":", 1)[1])
    raise ValueError(f"weights must be 'pretrained' or 'random:<seed>', got {spec!r}")


def _normalize(batch, mean, std):
    arr = np.asarray(batch)
    if arr.ndim != 4 or arr.shape[3] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 (n, h, w, 3) batch, got {arr.shape} {arr.dtype}")
    x = arr.astype(np.float32) / 255.0
    x = (x - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(x.transpose(0, 3, 1, 2))


class _ClipModel:
    model_id = CLIP_ID
    dim = CLIP_DIM

    def __init__(self, weights_spec):
        from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

        kind, seed = _parse_weights_spec(weights_spec)
        if kind == "pretrained":
            try:
                self.net = CLIPVisionModelWithProjection.from_pretrained(CLIP_CHECKPOINT)
            except Exception as err:
                raise WeightsUnavailableError(
                    f"cannot load {CLIP_CHECKPOINT}: {err}"
                ) from err
            self.weights = f"pretrained:{CLIP_CHECKPOINT}"
        else:
            torch.manual_seed(seed)
            # default CLIPVisionConfig is exactly the ViT-B/32 tower with a
            # 512-dim projection head
            self.net = CLIPVisionModelWithProjection(CLIPVisionConfig())
            self.weights = weights_spec
        self.net.eval()

    def embed(self, batch):
        pixels = _normalize(batch, CLIP_MEAN, CLIP_STD)
        with torch.no_grad():
            out = self.net(pixel_values=pixels).image_embeds
        return out.numpy().astype(np.float32)


class _ResnetModel:
    model_id = RESNET_ID
    dim = RESNET_DIM

    def __init__(self, weights_spec):
        from torchvision.models import ResNet50_Weights, resnet50

        kind, seed = _parse_weights_spec(weights_spec)
        if kind == "pretrained":
            try:
                self.net = resnet50(weights=ResNet50_Weights.IMAGENET1K_V2)
            except Exception as err:
                raise WeightsUnavailableError(f"cannot load resnet50 weights: {err}") from err
            self.weights = "pretrained:IMAGENET1K_V2"
        else:
            torch.manual_seed(seed)
            self.net = resnet50(weights=None)
            self.weights = weights_spec
        self.net.fc = torch.nn.Identity()  # pooled 2048-dim penultimate features
        self.net.eval()

    def embed(self, batch):
        pixels = _normalize(batch, IMAGENET_MEAN, IMAGENET_STD)
        with torch.no_grad():
            out = self.net(pixels)
        return out.numpy().astype(np.float32)


def load_feature_model(model_id, weights_spec="pretrained"):
    if model_id == CLIP_ID:
        return _ClipModel(weights_spec)
    if model_id == RESNET_ID:
        return _ResnetModel(weights_spec)
    raise ValueError(f"unknown model {model_id!r}; choose from {MODEL_IDS}")
