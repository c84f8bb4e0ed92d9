"""Zero-shot image classification with detector-guided cropping.

The package scores images against text class prompts, asks an open-
vocabulary detector where the candidate objects are, and re-scores tight
crops around the best box, optionally averaging logits over a set of
augmented crops.  An analytic scene fixture makes the whole pipeline
testable without model weights; a graph runtime executes exported models.
"""

__version__ = "0.1.0"

from .boxgeom import Box, ImageDims
from .fusion import TextClassBank, build_class_bank
from .pipeline import GcConfig, PredictionRecord, classify_baseline, classify_gc, run_dataset

__all__ = [
    "__version__",
    "Box",
    "ImageDims",
    "TextClassBank",
    "build_class_bank",
    "GcConfig",
    "PredictionRecord",
    "classify_baseline",
    "classify_gc",
    "run_dataset",
]
