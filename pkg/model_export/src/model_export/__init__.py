"""Export image/text encoders and detectors to serialized model directories.

The directory layout this tool writes — TorchScript graphs, a fast-tokenizer
file, and a ``manifest.json`` — is a self-contained interchange format: any
runtime that understands the manifest can load the models without this
package or the source checkpoints.
"""

from .backbones import resolve_backbone, supported_backbones
from .errors import (
    CheckpointUnavailableError,
    ExportError,
    IntegrityError,
    MissingDependencyError,
    ModelDirError,
    ProbeError,
    UnsupportedBackboneError,
)
from .export import ExportManifest, export_models
from .probes import emit_reference_vectors, load_probe_rows
from .verify import (
    RoundTripReport,
    cosine_distance,
    verify_manifest_hashes,
    verify_roundtrip,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointUnavailableError",
    "ExportError",
    "ExportManifest",
    "IntegrityError",
    "MissingDependencyError",
    "ModelDirError",
    "ProbeError",
    "RoundTripReport",
    "UnsupportedBackboneError",
    "cosine_distance",
    "emit_reference_vectors",
    "export_models",
    "load_probe_rows",
    "resolve_backbone",
    "supported_backbones",
    "verify_manifest_hashes",
    "verify_roundtrip",
    "__version__",
]
