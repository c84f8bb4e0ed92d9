"""Shared fixtures: session-scoped exports so each backbone builds once."""

import pytest

from model_export.export import export_models
from model_export.probes import emit_reference_vectors


@pytest.fixture(scope="session")
def embedding_export(tmp_path_factory):
    """Export of the encoder-only offline backbone: (model_dir, manifest)."""
    model_dir = tmp_path_factory.mktemp("embedding") / "model"
    manifest = export_models("tiny-embedding", model_dir)
    return model_dir, manifest


@pytest.fixture(scope="session")
def detection_export(tmp_path_factory):
    """Export of the encoders-plus-detector offline backbone."""
    model_dir = tmp_path_factory.mktemp("detection") / "model"
    manifest = export_models("tiny-detection", model_dir)
    return model_dir, manifest


@pytest.fixture(scope="session")
def detection_probes(detection_export, tmp_path_factory):
    """Reference probes for the detection export: path to probes.jsonl."""
    model_dir, _ = detection_export
    out = tmp_path_factory.mktemp("probes")
    return emit_reference_vectors(model_dir, out)
