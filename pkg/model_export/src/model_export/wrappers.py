"""Thin modules that pin the traced graph interfaces.

The serialized graphs promise exactly this, no matter which checkpoint sits
underneath:

  image encoder: pixels float32 [1, 3, S, S] -> features [1, D]
  text encoder:  input_ids int64 [1, L]      -> features [1, D]
  detector:      (pixels [1, 3, Sd, Sd], input_ids int64 [1, Ld])
                 -> (query_logits [1, Q], boxes [1, Q, 4])

Detector boxes are center-x/center-y/width/height fractions of the image;
query logits are raw (consumers apply their own sigmoid).  The detector
builds its text attention mask internally from the pad id, so callers only
ever hand over padded id rows.
"""

from __future__ import annotations

import torch


def _features(output) -> torch.Tensor:
    # get_image_features/get_text_features return a bare tensor in some
    # library versions and a pooled-output container in others.
    if isinstance(output, torch.Tensor):
        return output
    return output.pooler_output


class ImageEncoderWrapper(torch.nn.Module):
    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        return _features(self.model.get_image_features(pixel_values=pixels))


class TextEncoderWrapper(torch.nn.Module):
    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        return _features(self.model.get_text_features(input_ids=input_ids))


class DetectorWrapper(torch.nn.Module):
    def __init__(self, model, pad_token_id: int):
        super().__init__()
        self.model = model
        self.pad_token_id = pad_token_id

    def forward(
        self, pixels: torch.Tensor, input_ids: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        mask = (input_ids != self.pad_token_id).to(torch.int64)
        out = self.model(
            input_ids=input_ids, pixel_values=pixels, attention_mask=mask
        )
        return out.logits[:, :, 0], out.pred_boxes
